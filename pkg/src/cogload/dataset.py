"""Dataset plumbing: manifest parsing, signal container I/O, trial epoching.

A dataset is a directory holding one JSON manifest plus signal files. Signals
travel either as BSIG (a little-endian binary container: magic "BSIG", u32
version, u32 n_channels, u64 n_samples, f64 fs, then channel-major float32
samples) or as CSV with a header row of channel names and one row per time
step.

Recordings come in two flavours. A trial-scoped recording carries a `trial`
reference and holds exactly one trial's signal (event onsets are relative to
that file, normally 0). A continuous recording holds a whole session; every
event of its subject applies at its onset sample. Continuous recordings of
one subject must share a sampling rate, otherwise onset samples would be
ambiguous.
"""
from __future__ import annotations

import csv as _csv
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ChannelError,
    FormatError,
    InvalidArgumentError,
    ParseError,
    PayloadLengthError,
    ValidationError,
)
from .signal import SignalRecord, baseline_correct, resample

__all__ = [
    "CONDITIONS",
    "SUBCONDITIONS",
    "CLASS4_NAMES",
    "EEG_CHANNELS",
    "EEG_TARGET_FS",
    "ConditionLabel",
    "TrialRef",
    "TrialEvent",
    "RecordingInfo",
    "SubjectInfo",
    "Manifest",
    "TrialTensor",
    "load_manifest",
    "read_signal",
    "write_signal",
    "epoch_trials",
]

CONDITIONS = ("JustListen", "Memory")
SUBCONDITIONS = ("Five", "Nine", "Thirteen")
CLASS4_NAMES = ("JustListen", "Five", "Nine", "Thirteen")

EEG_CHANNELS = ("Fz", "Pz", "Cz", "P3", "P4")
EEG_TARGET_FS = 128.0

MODALITIES = ("ecg", "eeg")

_BSIG_MAGIC = b"BSIG"
_BSIG_VERSION = 1
_BSIG_HEADER = struct.Struct("<4sIIQd")


@dataclass(frozen=True)
class ConditionLabel:
    """Task condition; digit-span subcondition exists exactly for Memory."""

    condition: str
    subcondition: str | None = None

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise InvalidArgumentError(
                f"condition must be one of {CONDITIONS}, got {self.condition!r}"
            )
        if self.condition == "Memory":
            if self.subcondition not in SUBCONDITIONS:
                raise InvalidArgumentError(
                    f"Memory requires a subcondition from {SUBCONDITIONS}, "
                    f"got {self.subcondition!r}"
                )
        elif self.subcondition is not None:
            raise InvalidArgumentError(
                f"{self.condition} admits no subcondition, got {self.subcondition!r}"
            )

    @property
    def class4(self) -> str:
        """Four-way class name: JustListen or the digit-span level."""
        return self.subcondition if self.condition == "Memory" else self.condition

    @staticmethod
    def from_class4(name: str) -> "ConditionLabel":
        if name == "JustListen":
            return ConditionLabel("JustListen")
        if name in SUBCONDITIONS:
            return ConditionLabel("Memory", name)
        raise InvalidArgumentError(f"unknown class name {name!r}")


@dataclass(frozen=True)
class TrialRef:
    label: ConditionLabel
    trial_index: int

    def __post_init__(self):
        if self.trial_index < 0:
            raise InvalidArgumentError("trial_index must be non-negative")


@dataclass(frozen=True)
class TrialEvent:
    subject: str
    onset_sample: int
    label: ConditionLabel
    trial_index: int

    def __post_init__(self):
        if self.onset_sample < 0:
            raise InvalidArgumentError("onset_sample must be non-negative")
        if self.trial_index < 0:
            raise InvalidArgumentError("trial_index must be non-negative")


@dataclass(frozen=True)
class RecordingInfo:
    modality: str
    signal_path: str
    fs: float
    channel_names: tuple[str, ...]
    trial: TrialRef | None = None

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValidationError(
                f"modality must be one of {MODALITIES}, got {self.modality!r}"
            )
        if self.fs <= 0:
            raise ValidationError(f"fs must be positive, got {self.fs}")
        if self.modality == "eeg" and not self.channel_names:
            raise ValidationError("eeg recordings must name their channels")


@dataclass(frozen=True)
class SubjectInfo:
    id: str
    recordings: tuple[RecordingInfo, ...]


@dataclass(frozen=True)
class Manifest:
    subjects: tuple[SubjectInfo, ...]
    events: tuple[TrialEvent, ...]
    root: Path

    def subject(self, subject_id: str) -> SubjectInfo:
        for s in self.subjects:
            if s.id == subject_id:
                return s
        raise ValidationError(f"unknown subject {subject_id!r}")

    def events_for(self, subject_id: str) -> tuple[TrialEvent, ...]:
        return tuple(e for e in self.events if e.subject == subject_id)

    def resolve(self, rec: RecordingInfo) -> Path:
        return self.root / rec.signal_path


# ---------------------------------------------------------------------------
# signal container I/O


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("bsig", "csv"):
            raise InvalidArgumentError(f"unknown signal format {fmt!r}")
        return fmt
    suffix = path.suffix.lower().lstrip(".")
    if suffix in ("bsig", "csv"):
        return suffix
    raise InvalidArgumentError(f"cannot infer signal format from {path.name!r}")


def read_signal(path: str | Path, fmt: str | None = None, *,
                fs: float | None = None,
                channel_names: tuple[str, ...] | None = None) -> SignalRecord:
    """Read one signal file. CSV needs fs supplied; BSIG carries its own."""
    path = Path(path)
    kind = _infer_format(path, fmt)
    if kind == "bsig":
        return _read_bsig(path, channel_names)
    if fs is None:
        raise InvalidArgumentError("csv signals carry no rate; pass fs explicitly")
    return _read_csv(path, fs)


def write_signal(rec: SignalRecord, path: str | Path, fmt: str | None = None) -> None:
    path = Path(path)
    kind = _infer_format(path, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    if kind == "bsig":
        _write_bsig(rec, path)
    else:
        _write_csv(rec, path)


def _read_bsig(path: Path, channel_names: tuple[str, ...] | None) -> SignalRecord:
    raw = path.read_bytes()
    if len(raw) < _BSIG_HEADER.size:
        raise FormatError(f"{path.name}: shorter than the 28-byte header")
    magic, version, n_ch, n_samp, fs = _BSIG_HEADER.unpack_from(raw)
    if magic != _BSIG_MAGIC:
        raise FormatError(f"{path.name}: bad magic {magic!r}")
    if version != _BSIG_VERSION:
        raise FormatError(f"{path.name}: unsupported version {version}")
    expected = n_ch * n_samp * 4
    payload = raw[_BSIG_HEADER.size:]
    if len(payload) < expected:
        raise PayloadLengthError(
            f"{path.name}: payload holds {len(payload)} bytes, header promises {expected}"
        )
    data = np.frombuffer(payload[:expected], dtype="<f4").reshape(n_ch, n_samp)
    if channel_names is None:
        channel_names = tuple(f"ch{i}" for i in range(n_ch))
    return SignalRecord(samples=data, fs=fs, channel_names=channel_names)


def _write_bsig(rec: SignalRecord, path: Path) -> None:
    data = np.ascontiguousarray(rec.samples, dtype="<f4")
    header = _BSIG_HEADER.pack(_BSIG_MAGIC, _BSIG_VERSION,
                               rec.n_channels, rec.n_samples, float(rec.fs))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def _read_csv(path: Path, fs: float) -> SignalRecord:
    with open(path, newline="") as fh:
        reader = _csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path.name}: empty file") from None
        names = tuple(h.strip() for h in header)
        if not names or any(not n for n in names):
            raise ParseError(f"{path.name}:1: header must name every channel")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise ParseError(
                    f"{path.name}:{lineno}: expected {len(names)} values, got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ParseError(f"{path.name}:{lineno}: {exc}") from None
    if not rows:
        raise ParseError(f"{path.name}: no sample rows")
    return SignalRecord(samples=np.asarray(rows).T, fs=fs, channel_names=names)


def _write_csv(rec: SignalRecord, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(rec.channel_names)
        for row in rec.samples.T:
            writer.writerow([repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# manifest


def _parse_label(obj: dict, where: str) -> ConditionLabel:
    try:
        return ConditionLabel(obj.get("condition"), obj.get("subcondition"))
    except InvalidArgumentError as exc:
        raise ValidationError(f"{where}: {exc}") from None


def load_manifest(path: str | Path, epoch_seconds: float = 3.0,
                  check_signals: bool = True) -> Manifest:
    """Parse and validate a dataset manifest.

    Validation covers: structural schema, unique subjects, label consistency,
    unique trial identities, events resolving to at least one recording, and
    (when check_signals) epoch bounds against the actual signal headers.
    All dangling references are reported together.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{path.name}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path.name}: top level must be an object")

    subjects: list[SubjectInfo] = []
    seen_ids: set[str] = set()
    for s_i, s_obj in enumerate(doc.get("subjects", [])):
        sid = s_obj.get("id")
        if not isinstance(sid, str) or not sid:
            raise ValidationError(f"subjects[{s_i}]: missing id")
        if sid in seen_ids:
            raise ValidationError(f"duplicate subject id {sid!r}")
        seen_ids.add(sid)
        recs = []
        for r_i, r_obj in enumerate(s_obj.get("recordings", [])):
            where = f"subjects[{s_i}].recordings[{r_i}]"
            trial = None
            if "trial" in r_obj and r_obj["trial"] is not None:
                t_obj = r_obj["trial"]
                trial = TrialRef(label=_parse_label(t_obj, where),
                                 trial_index=int(t_obj.get("trial_index", -1)))
            try:
                rec = RecordingInfo(
                    modality=r_obj.get("modality", ""),
                    signal_path=r_obj.get("signal_path", ""),
                    fs=float(r_obj.get("fs", 0.0)),
                    channel_names=tuple(r_obj.get("channel_names", [])),
                    trial=trial,
                )
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"{where}: {exc}") from None
            if not rec.signal_path:
                raise ValidationError(f"{where}: missing signal_path")
            recs.append(rec)
        subjects.append(SubjectInfo(id=sid, recordings=tuple(recs)))

    events: list[TrialEvent] = []
    for e_i, e_obj in enumerate(doc.get("events", [])):
        where = f"events[{e_i}]"
        subj = e_obj.get("subject")
        if not isinstance(subj, str):
            raise ValidationError(f"{where}: missing subject")
        try:
            ev = TrialEvent(
                subject=subj,
                onset_sample=int(e_obj.get("onset_sample", -1)),
                label=_parse_label(e_obj, where),
                trial_index=int(e_obj.get("trial_index", -1)),
            )
        except (TypeError, ValueError, InvalidArgumentError) as exc:
            raise ValidationError(f"{where}: {exc}") from None
        events.append(ev)

    manifest = Manifest(subjects=tuple(subjects), events=tuple(events),
                        root=path.parent)
    _validate_manifest(manifest, epoch_seconds, check_signals)
    return manifest


def _signal_length(path: Path) -> int:
    if path.suffix.lower() == ".bsig":
        with open(path, "rb") as fh:
            raw = fh.read(_BSIG_HEADER.size)
        if len(raw) < _BSIG_HEADER.size:
            raise FormatError(f"{path.name}: shorter than the 28-byte header")
        magic, version, _, n_samp, _ = _BSIG_HEADER.unpack(raw)
        if magic != _BSIG_MAGIC:
            raise FormatError(f"{path.name}: bad magic {magic!r}")
        return int(n_samp)
    with open(path) as fh:
        return max(0, sum(1 for line in fh if line.strip()) - 1)


def _validate_manifest(m: Manifest, epoch_seconds: float, check_signals: bool) -> None:
    by_subject = {s.id: s for s in m.subjects}
    problems: list[str] = []

    # Unique trial identity per subject, and per recording scope.
    seen_events: set[tuple] = set()
    for ev in m.events:
        key = (ev.subject, ev.label.condition, ev.label.subcondition, ev.trial_index)
        if key in seen_events:
            problems.append(f"duplicate event for subject {ev.subject!r} trial {key[1:]}")
        seen_events.add(key)
    seen_recs: set[tuple] = set()
    for s in m.subjects:
        for rec in s.recordings:
            if rec.trial is None:
                continue
            key = (s.id, rec.modality, rec.trial.label.condition,
                   rec.trial.label.subcondition, rec.trial.trial_index)
            if key in seen_recs:
                problems.append(f"duplicate trial recording {key}")
            seen_recs.add(key)

    # Continuous recordings of one subject must agree on fs.
    for s in m.subjects:
        cont_fs = {r.fs for r in s.recordings if r.trial is None}
        if len(cont_fs) > 1:
            problems.append(
                f"subject {s.id!r}: continuous recordings disagree on fs {sorted(cont_fs)}"
            )

    # Every event must resolve to at least one recording.
    for ev in m.events:
        subj = by_subject.get(ev.subject)
        if subj is None:
            problems.append(f"event references unknown subject {ev.subject!r}")
            continue
        if not _recordings_for_event(subj, ev):
            problems.append(
                f"event (subject {ev.subject!r}, {ev.label.class4}, "
                f"trial {ev.trial_index}) matches no recording"
            )

    if check_signals:
        lengths: dict[Path, int] = {}
        for s in m.subjects:
            for rec in s.recordings:
                p = m.resolve(rec)
                if not p.exists():
                    problems.append(f"missing signal file {rec.signal_path!r}")
                    continue
                lengths[p] = _signal_length(p)
        for ev in m.events:
            subj = by_subject.get(ev.subject)
            if subj is None:
                continue
            for rec in _recordings_for_event(subj, ev):
                p = m.resolve(rec)
                if p not in lengths:
                    continue
                need = ev.onset_sample + int(round(epoch_seconds * rec.fs))
                if need > lengths[p]:
                    problems.append(
                        f"event (subject {ev.subject!r}, trial {ev.trial_index}) "
                        f"needs {need} samples but {rec.signal_path!r} has {lengths[p]}"
                    )

    if problems:
        raise ValidationError("; ".join(problems))


def _recordings_for_event(subj: SubjectInfo, ev: TrialEvent) -> list[RecordingInfo]:
    out = []
    for rec in subj.recordings:
        if rec.trial is None:
            out.append(rec)
        elif (rec.trial.label == ev.label and rec.trial.trial_index == ev.trial_index):
            out.append(rec)
    return out


# ---------------------------------------------------------------------------
# trial tensor


class TrialTensor:
    """Epochs indexed by (subject, condition, subcondition, trial, time).

    One tensor holds one modality: every epoch shares channel set, sampling
    rate and length. Samples are stored float32 so that a BSIG round trip is
    bit-exact.
    """

    def __init__(self, modality: str, fs: float, channel_names: tuple[str, ...],
                 epoch_len: int):
        if modality not in MODALITIES:
            raise InvalidArgumentError(f"modality must be one of {MODALITIES}")
        if fs <= 0 or epoch_len <= 0:
            raise InvalidArgumentError("fs and epoch_len must be positive")
        self.modality = modality
        self.fs = float(fs)
        self.channel_names = tuple(channel_names)
        self.epoch_len = int(epoch_len)
        self._cells: dict[tuple[str, str, str | None, int], np.ndarray] = {}

    def key_of(self, subject: str, label: ConditionLabel, trial_index: int):
        return (subject, label.condition, label.subcondition, trial_index)

    def put(self, subject: str, label: ConditionLabel, trial_index: int,
            epoch: np.ndarray) -> None:
        arr = np.asarray(epoch, dtype=np.float32)
        if arr.shape != (len(self.channel_names), self.epoch_len):
            raise InvalidArgumentError(
                f"epoch shape {arr.shape} != "
                f"({len(self.channel_names)}, {self.epoch_len})"
            )
        key = self.key_of(subject, label, trial_index)
        if key in self._cells:
            raise InvalidArgumentError(f"duplicate epoch for {key}")
        arr = arr.copy()
        arr.setflags(write=False)
        self._cells[key] = arr

    def get(self, subject: str, label: ConditionLabel, trial_index: int) -> np.ndarray:
        return self._cells[self.key_of(subject, label, trial_index)]

    def items(self):
        """Epochs in deterministic order (subject, condition, subcondition, trial)."""
        def sort_key(k):
            return (k[0], k[1], k[2] or "", k[3])
        for key in sorted(self._cells, key=sort_key):
            subject, condition, subcondition, trial_index = key
            yield (subject, ConditionLabel(condition, subcondition), trial_index,
                   self._cells[key])

    def __len__(self) -> int:
        return len(self._cells)

    @property
    def subjects(self) -> tuple[str, ...]:
        return tuple(sorted({k[0] for k in self._cells}))

    def merge(self, other: "TrialTensor") -> None:
        if (other.modality != self.modality or other.fs != self.fs
                or other.channel_names != self.channel_names
                or other.epoch_len != self.epoch_len):
            raise InvalidArgumentError("tensor shapes/metadata do not match")
        for key, arr in other._cells.items():
            if key in self._cells:
                raise InvalidArgumentError(f"duplicate epoch for {key}")
            self._cells[key] = arr

    def save(self, out_dir: str | Path) -> None:
        out_dir = Path(out_dir)
        (out_dir / "epochs").mkdir(parents=True, exist_ok=True)
        index = {
            "modality": self.modality,
            "fs": self.fs,
            "channel_names": list(self.channel_names),
            "epoch_len": self.epoch_len,
            "epochs": [],
        }
        for subject, label, trial_index, arr in self.items():
            name = (f"{subject}_{label.condition}_{label.subcondition or 'x'}"
                    f"_{trial_index:03d}.bsig")
            rec = SignalRecord(samples=arr, fs=self.fs,
                               channel_names=self.channel_names)
            write_signal(rec, out_dir / "epochs" / name, "bsig")
            index["epochs"].append({
                "subject": subject,
                "condition": label.condition,
                "subcondition": label.subcondition,
                "trial_index": trial_index,
                "path": f"epochs/{name}",
            })
        (out_dir / "index.json").write_text(json.dumps(index, indent=2) + "\n")

    @classmethod
    def load(cls, in_dir: str | Path) -> "TrialTensor":
        in_dir = Path(in_dir)
        try:
            index = json.loads((in_dir / "index.json").read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"index.json: line {exc.lineno}: {exc.msg}") from None
        tensor = cls(index["modality"], index["fs"],
                     tuple(index["channel_names"]), index["epoch_len"])
        for e in index["epochs"]:
            rec = read_signal(in_dir / e["path"], "bsig",
                              channel_names=tuple(index["channel_names"]))
            tensor.put(e["subject"],
                       ConditionLabel(e["condition"], e["subcondition"]),
                       e["trial_index"], rec.samples)
        return tensor


def epoch_trials(manifest: Manifest, rec: SignalRecord, epoch_seconds: float = 3.0,
                 *, subject: str, modality: str,
                 trial: TrialRef | None = None) -> TrialTensor:
    """Slice one recording into labelled trial epochs.

    For continuous recordings every event of `subject` is sliced at its onset;
    a trial-scoped recording contributes exactly its own trial. EEG epochs are
    restricted to the canonical channel set (in canonical order), resampled to
    128 Hz and baseline-corrected with the epoch mean; ECG epochs keep the
    native rate and content.
    """
    if modality not in MODALITIES:
        raise InvalidArgumentError(f"modality must be one of {MODALITIES}")
    if epoch_seconds <= 0:
        raise InvalidArgumentError("epoch_seconds must be positive")
    native_len = int(round(epoch_seconds * rec.fs))

    if modality == "eeg":
        missing = [ch for ch in EEG_CHANNELS if ch not in rec.channel_names]
        if missing:
            raise ChannelError(f"missing EEG channel {missing[0]!r}")
        out_fs = EEG_TARGET_FS
        out_len = int(round(epoch_seconds * EEG_TARGET_FS))
        out_channels = EEG_CHANNELS
    else:
        out_fs = rec.fs
        out_len = native_len
        out_channels = rec.channel_names

    tensor = TrialTensor(modality, out_fs, out_channels, out_len)

    if trial is not None:
        targets = [(trial.label, trial.trial_index, 0)]
        # a matching manifest event may carry a nonzero onset into the file
        for ev in manifest.events_for(subject):
            if ev.label == trial.label and ev.trial_index == trial.trial_index:
                targets = [(ev.label, ev.trial_index, ev.onset_sample)]
                break
    else:
        targets = [(ev.label, ev.trial_index, ev.onset_sample)
                   for ev in manifest.events_for(subject)]

    for label, trial_index, onset in targets:
        stop = onset + native_len
        if stop > rec.n_samples:
            raise ValidationError(
                f"epoch [{onset}, {stop}) escapes recording of {rec.n_samples} samples"
            )
        sliced = rec.samples[:, onset:stop]
        if modality == "eeg":
            order = [rec.channel_names.index(ch) for ch in EEG_CHANNELS]
            epoch = SignalRecord(samples=sliced[order], fs=rec.fs,
                                 channel_names=EEG_CHANNELS)
            epoch = resample(epoch, EEG_TARGET_FS)
            epoch = baseline_correct(epoch, (0.0, epoch_seconds))
            tensor.put(subject, label, trial_index, epoch.samples)
        else:
            tensor.put(subject, label, trial_index, sliced)
    return tensor
