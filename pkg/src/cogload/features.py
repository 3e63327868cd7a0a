"""Preprocessing chains and per-trial feature tables.

ECG records get a 0.5-40 Hz zero-phase bandpass; EEG records a 1-45 Hz
bandpass followed by a 50 Hz notch (Q 30). Filtering runs at the native
rate before epoching, so resampling never sees line noise.

The ECG table holds 5 interval features (mean_nn, sdnn, rmssd, sd1, sd2)
and the 22 distribution/autocorrelation features of the epoch waveform.
The EEG table holds the same 22 per channel, columns named "<ch>.f<k>"
with k the 1-based position in catch22.FEATURE_NAMES; any trial where a
whole channel is degenerate (flat or non-finite) is dropped with a logged
warning.
"""
from __future__ import annotations

import logging

import numpy as np

from . import catch22 as _c22
from .dataset import (
    CLASS4_NAMES,
    Manifest,
    MODALITIES,
    TrialTensor,
    epoch_trials,
    read_signal,
)
from .ecg import compute_rr, detect_r_peaks, mad_correct
from .errors import (
    AllArtifactError,
    InsufficientDataError,
    InsufficientPeaksError,
    InvalidArgumentError,
    NoPeaksError,
    TooShortError,
    ValidationError,
)
from .hrv import poincare, time_domain
from .ml import FeatureTable
from .signal import FilterSpec, SignalRecord, apply_filter, design_filter

__all__ = [
    "ECG_BANDPASS",
    "EEG_BANDPASS",
    "EEG_NOTCH",
    "HRV_FEATURES",
    "preprocess_record",
    "build_tensors",
    "build_ecg_feature_table",
    "build_eeg_feature_table",
    "eeg_column_names",
]

log = logging.getLogger("cogload.features")

ECG_BANDPASS = FilterSpec.bandpass(0.5, 40.0, order=2)
EEG_BANDPASS = FilterSpec.bandpass(1.0, 45.0, order=2)
EEG_NOTCH = FilterSpec.notch(50.0, q=30.0)

HRV_FEATURES = ("mean_nn", "sdnn", "rmssd", "sd1", "sd2")

_TRIAL_FAILURES = (NoPeaksError, InsufficientPeaksError, TooShortError,
                   AllArtifactError, InsufficientDataError)


def preprocess_record(rec: SignalRecord, modality: str) -> SignalRecord:
    """Apply the modality's filter chain at the record's native rate."""
    if modality not in MODALITIES:
        raise InvalidArgumentError(f"modality must be one of {MODALITIES}")
    if modality == "ecg":
        return apply_filter(rec, design_filter(ECG_BANDPASS, rec.fs))
    out = apply_filter(rec, design_filter(EEG_BANDPASS, rec.fs))
    return apply_filter(out, design_filter(EEG_NOTCH, rec.fs))


def build_tensors(manifest: Manifest, modalities=MODALITIES,
                  epoch_seconds: float = 3.0,
                  preprocess: bool = True) -> dict[str, TrialTensor]:
    """Read, filter and epoch every recording of the requested modalities."""
    tensors: dict[str, TrialTensor] = {}
    for subj in manifest.subjects:
        for info in subj.recordings:
            if info.modality not in modalities:
                continue
            rec = read_signal(manifest.resolve(info), fs=info.fs,
                              channel_names=info.channel_names or None)
            if rec.fs != info.fs:
                raise ValidationError(
                    f"{info.signal_path}: file rate {rec.fs} Hz disagrees "
                    f"with manifest rate {info.fs} Hz"
                )
            if preprocess:
                rec = preprocess_record(rec, info.modality)
            part = epoch_trials(manifest, rec, epoch_seconds,
                                subject=subj.id, modality=info.modality,
                                trial=info.trial)
            if info.modality in tensors:
                tensors[info.modality].merge(part)
            else:
                tensors[info.modality] = part
    return tensors


def _class4_id(label) -> int:
    return CLASS4_NAMES.index(label.class4)


def _hrv_row(x: np.ndarray, fs: float) -> tuple[list[float], int, int, bool]:
    """5 interval features for one epoch, with beat/correction counts."""
    rec = SignalRecord(x[None, :], fs, channel_names=("ecg",))
    try:
        peaks = detect_r_peaks(rec)
        rr = compute_rr(peaks)
        try:
            rr = mad_correct(rr)
        except InsufficientDataError:
            pass        # too few intervals for robust stats; use them raw
        td = time_domain(rr)
        pc = poincare(td.sdnn, td.rmssd)
        vals = [td.mean_nn, td.sdnn, td.rmssd, pc.sd1, pc.sd2]
        return vals, len(peaks), int(rr.corrected_mask.sum()), True
    except _TRIAL_FAILURES:
        return [float("nan")] * 5, 0, 0, False


def build_ecg_feature_table(tensor: TrialTensor,
                            feature_set: str = "both") -> FeatureTable:
    """One row per trial; NaN marks features that could not be computed.

    feature_set selects "hrv" (5 interval columns), "catch22" (22 waveform
    columns) or "both" (27).
    """
    if tensor.modality != "ecg":
        raise InvalidArgumentError(f"expected an ecg tensor, got {tensor.modality!r}")
    if feature_set not in ("hrv", "catch22", "both"):
        raise InvalidArgumentError(f"unknown feature_set {feature_set!r}")
    want_hrv = feature_set in ("hrv", "both")
    want_c22 = feature_set in ("catch22", "both")
    columns: tuple[str, ...] = ()
    if want_hrv:
        columns += HRV_FEATURES
    if want_c22:
        columns += _c22.FEATURE_NAMES

    rows, labels, groups, trials = [], [], [], []
    n_beats, n_corrected, hrv_valid = [], [], []
    for subject, label, trial_index, epoch in tensor.items():
        x = epoch[0].astype(np.float64)
        row: list[float] = []
        beats = corrected = 0
        valid = False
        if want_hrv:
            vals, beats, corrected, valid = _hrv_row(x, tensor.fs)
            row += vals
        if want_c22:
            row += list(_c22.compute_catch22(x).values)
        rows.append(row)
        labels.append(_class4_id(label))
        groups.append(subject)
        trials.append(trial_index)
        n_beats.append(float(beats))
        n_corrected.append(float(corrected))
        hrv_valid.append(1.0 if valid else 0.0)

    flags = {}
    if want_hrv:
        flags = {"n_beats": np.asarray(n_beats),
                 "rr_corrected": np.asarray(n_corrected),
                 "hrv_valid": np.asarray(hrv_valid)}
    return FeatureTable(columns, np.asarray(rows, dtype=np.float64), labels,
                        CLASS4_NAMES, groups, trials, flags)


def eeg_column_names(channel_names) -> tuple[str, ...]:
    """"<ch>.f<k>" grid, channel-major; f<k> = k-th canonical feature."""
    return tuple(f"{ch}.f{k}" for ch in channel_names
                 for k in range(1, len(_c22.FEATURE_NAMES) + 1))


def build_eeg_feature_table(tensor: TrialTensor) -> FeatureTable:
    """One row per trial: 22 waveform features for each channel.

    A trial is excluded (and logged) when any channel yields no valid
    features at all, which signals a flat or corrupted channel rather than
    an occasional undefined statistic.
    """
    if tensor.modality != "eeg":
        raise InvalidArgumentError(f"expected an eeg tensor, got {tensor.modality!r}")
    columns = eeg_column_names(tensor.channel_names)
    rows, labels, groups, trials = [], [], [], []
    for subject, label, trial_index, epoch in tensor.items():
        row: list[float] = []
        dead_channel = None
        for c, ch in enumerate(tensor.channel_names):
            vec = _c22.compute_catch22(epoch[c].astype(np.float64))
            if vec.nan_mask.all():
                dead_channel = ch
                break
            row += list(vec.values)
        if dead_channel is not None:
            log.warning("dropping trial %s/%s/%s: channel %s is degenerate",
                        subject, label.class4, trial_index, dead_channel)
            continue
        rows.append(row)
        labels.append(_class4_id(label))
        groups.append(subject)
        trials.append(trial_index)

    values = (np.asarray(rows, dtype=np.float64) if rows
              else np.empty((0, len(columns))))
    return FeatureTable(columns, values, labels, CLASS4_NAMES, groups, trials)
