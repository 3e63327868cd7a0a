"""Synthetic ECG and EEG generators, plus a coupled labeled dataset.

The ECG generator places five Gaussian template bumps per beat around
annotated R apexes, with a beat-to-beat interval sequence built from an
AR(1) process plus slow and fast sinusoidal modulation. Apexes are snapped
to the sampling grid so the returned annotations are exact.

The EEG generator mixes band-limited noise components (theta, alpha, beta)
over a 1/f^slope background, with channels drawn independently.

gen_coupled_dataset writes a small labeled study to disk: per-trial epoch
files for both modalities plus a manifest. Class structure enters through
two routes. Heart rate rises and beat-to-beat variability falls with load,
which moves the HRV features. Independently, each trial carries a shared
slow additive component in both modalities whose amplitude histogram is
shaped per class: a narrow lobe whose center shifts with the condition,
mirrored by a broad lobe on the opposite side, over a symmetric background.
Distribution-shape features pick up the lobe position in either modality,
and because the component is scaled relative to each modality's own clean
RMS the two sides agree on it, which is what lets a model fitted on one
modality's features score above chance on the other. offset_scale 0
removes every class dependency and yields a null dataset; subject_sd
scales per-subject offsets in rate and lobe position.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.signal as _sps
from scipy.special import ndtr

from .dataset import (
    CLASS4_NAMES,
    EEG_CHANNELS,
    ConditionLabel,
    Manifest,
    load_manifest,
    write_signal,
)
from .ecg import RPeakList
from .errors import InvalidSpecError
from .signal import SignalRecord

__all__ = [
    "EcgSynthSpec",
    "EegSynthSpec",
    "CoupledLoadSpec",
    "gen_ecg",
    "gen_eeg",
    "gen_coupled_dataset",
]

# per-beat template: (offset from R in seconds, amplitude relative to R, width)
_P_WAVE = (-0.200, 0.13, 0.025)
_Q_WAVE = (-0.035, -0.13, 0.010)
_R_WAVE = (0.000, 1.00, 0.012)
_S_WAVE = (0.035, -0.18, 0.011)
_T_OFFSET_S = 0.230
_T_WIDTH_S = 0.045

_FIRST_BEAT_S = 0.35        # margin so the first/last template fits the record
_END_MARGIN_S = 0.45
_AR_PHI = 0.9
_LF_FREQ_HZ = 0.10
_HF_FREQ_HZ = 0.25
_RR_FLOOR_MS = 300.0

_EEG_BANDS = {"theta": (4.0, 8.0), "alpha": (8.0, 13.0), "beta": (13.0, 30.0)}


@dataclass(frozen=True)
class EcgSynthSpec:
    fs: float = 250.0
    duration_s: float = 10.0
    mean_hr_bpm: float = 70.0
    hrv_sd_ms: float = 30.0
    lf_mod_ms: float = 7.0
    hf_mod_ms: float = 5.0
    t_amp: float = 0.30
    noise_snr_db: float | None = None
    seed: int = 0

    def validate(self) -> None:
        if not 30.0 <= self.mean_hr_bpm <= 220.0:
            raise InvalidSpecError(
                f"mean_hr_bpm {self.mean_hr_bpm} outside the plausible 30..220"
            )
        if self.hrv_sd_ms < 0 or self.lf_mod_ms < 0 or self.hf_mod_ms < 0:
            raise InvalidSpecError("variability magnitudes must be >= 0")
        if self.fs < 100.0:
            raise InvalidSpecError(f"fs {self.fs} too low for ECG synthesis")
        if self.duration_s < 2 * (_FIRST_BEAT_S + _END_MARGIN_S):
            raise InvalidSpecError(
                f"duration {self.duration_s} s leaves no room for beats"
            )
        if self.t_amp < 0 or self.t_amp >= 1.0:
            raise InvalidSpecError("t_amp must be in [0, 1)")


@dataclass(frozen=True)
class EegSynthSpec:
    fs: float = 256.0
    duration_s: float = 10.0
    theta_power: float = 1.0
    alpha_power: float = 2.0
    beta_power: float = 0.6
    background_power: float = 1.0
    one_over_f_slope: float = 1.0
    n_channels: int = 5
    seed: int = 0

    def validate(self) -> None:
        powers = (self.theta_power, self.alpha_power, self.beta_power,
                  self.background_power)
        if any(p < 0 for p in powers):
            raise InvalidSpecError("band powers must be >= 0")
        if sum(powers) == 0:
            raise InvalidSpecError("at least one component must have power > 0")
        if self.fs < 64.0:
            raise InvalidSpecError(f"fs {self.fs} too low to carry a beta band")
        if self.n_channels < 1:
            raise InvalidSpecError("n_channels must be >= 1")
        if self.duration_s <= 0:
            raise InvalidSpecError("duration_s must be > 0")


def _rr_sequence_ms(spec: EcgSynthSpec, rng: np.random.Generator,
                    max_beats: int) -> np.ndarray:
    mean_rr = 60000.0 / spec.mean_hr_bpm
    sd = spec.hrv_sd_ms
    x = np.empty(max_beats)
    # stationary AR(1): innovation variance sd^2 * (1 - phi^2)
    x[0] = rng.normal(0.0, sd) if sd > 0 else 0.0
    innov_sd = sd * math.sqrt(1.0 - _AR_PHI ** 2)
    for k in range(1, max_beats):
        x[k] = _AR_PHI * x[k - 1] + (rng.normal(0.0, innov_sd) if sd > 0 else 0.0)
    return mean_rr + x


def gen_ecg(spec: EcgSynthSpec) -> tuple[SignalRecord, RPeakList]:
    """Synthesize one ECG channel together with exact R-apex annotations."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_s * spec.fs))
    t = np.arange(n) / spec.fs

    max_beats = int(math.ceil(spec.duration_s / (_RR_FLOOR_MS / 1000.0))) + 4
    rr_draw = _rr_sequence_ms(spec, rng, max_beats)
    phase_lf = rng.uniform(0.0, 2.0 * math.pi)
    phase_hf = rng.uniform(0.0, 2.0 * math.pi)

    # beat positions tracked in sample units from an integer start; with a
    # constant interval the per-beat increment is exact, so annotated spacing
    # is exact too
    beat_samples = []
    s_beat = float(round(_FIRST_BEAT_S * spec.fs))
    s_end = (spec.duration_s - _END_MARGIN_S) * spec.fs
    k = 0
    while s_beat <= s_end and k < max_beats:
        beat_samples.append(s_beat)
        t_beat = s_beat / spec.fs
        rr = rr_draw[k]
        rr += spec.lf_mod_ms * math.sin(2 * math.pi * _LF_FREQ_HZ * t_beat + phase_lf)
        rr += spec.hf_mod_ms * math.sin(2 * math.pi * _HF_FREQ_HZ * t_beat + phase_hf)
        rr = max(rr, _RR_FLOOR_MS)
        s_beat = s_beat + rr * spec.fs / 1000.0
        k += 1

    peak_idx = np.asarray([int(round(s)) for s in beat_samples], dtype=np.int64)
    x = np.zeros(n)
    bumps = [_P_WAVE, _Q_WAVE, _R_WAVE, _S_WAVE,
             (_T_OFFSET_S, spec.t_amp, _T_WIDTH_S)]
    for idx in peak_idx:
        center = idx / spec.fs       # apex exactly on the grid
        for off, amp, width in bumps:
            c = center + off
            lo = max(0, int(math.floor((c - 5 * width) * spec.fs)))
            hi = min(n, int(math.ceil((c + 5 * width) * spec.fs)) + 1)
            seg = t[lo:hi] - c
            x[lo:hi] += amp * np.exp(-0.5 * (seg / width) ** 2)

    if spec.noise_snr_db is not None:
        rms = math.sqrt(float(np.mean(x * x)))
        noise_sd = rms * 10.0 ** (-spec.noise_snr_db / 20.0)
        x = x + rng.normal(0.0, noise_sd, size=n)

    rec = SignalRecord(x[None, :], spec.fs, channel_names=("ecg",))
    peaks = RPeakList(peak_idx, spec.fs,
                      confidence=np.ones(peak_idx.size))
    return rec, peaks


def _band_noise(rng: np.random.Generator, n: int, fs: float,
                band: tuple[float, float]) -> np.ndarray:
    low, high = band
    high = min(high, 0.49 * fs)
    sos = _sps.butter(4, [low, high], btype="bandpass", fs=fs, output="sos")
    w = rng.standard_normal(n)
    y = _sps.sosfiltfilt(sos, w)
    sd = float(np.std(y))
    return y / sd if sd > 0 else y


def _background_noise(rng: np.random.Generator, n: int, fs: float,
                      slope: float) -> np.ndarray:
    w = rng.standard_normal(n)
    spec = np.fft.rfft(w)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    shape = np.zeros_like(freqs)
    nz = freqs > 0
    shape[nz] = freqs[nz] ** (-slope / 2.0)
    y = np.fft.irfft(spec * shape, n)
    sd = float(np.std(y))
    return y / sd if sd > 0 else y


def gen_eeg(spec: EegSynthSpec) -> SignalRecord:
    """Synthesize multichannel EEG-like noise with controlled band powers."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration_s * spec.fs))
    chans = np.empty((spec.n_channels, n))
    comps = (("theta", spec.theta_power), ("alpha", spec.alpha_power),
             ("beta", spec.beta_power))
    for c in range(spec.n_channels):
        x = np.zeros(n)
        if spec.background_power > 0:
            x += math.sqrt(spec.background_power) * _background_noise(
                rng, n, spec.fs, spec.one_over_f_slope)
        for name, power in comps:
            if power > 0:
                x += math.sqrt(power) * _band_noise(rng, n, spec.fs,
                                                    _EEG_BANDS[name])
        chans[c] = x - x.mean()
    if spec.n_channels == len(EEG_CHANNELS):
        names = EEG_CHANNELS
    else:
        names = tuple(f"ch{i}" for i in range(spec.n_channels))
    return SignalRecord(chans, spec.fs, channel_names=names)


# ---------------------------------------------------------------------------
# coupled labeled dataset


@dataclass(frozen=True)
class CoupledLoadSpec:
    n_subjects: int = 4
    trials_per_class: int = 50
    offset_scale: float = 1.0
    subject_sd: float = 1.0
    epoch_seconds: float = 8.0
    ecg_fs: float = 250.0
    eeg_fs: float = 256.0
    snr_db: float = 18.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_subjects < 1:
            raise InvalidSpecError("n_subjects must be >= 1")
        if self.trials_per_class < 1:
            raise InvalidSpecError("trials_per_class must be >= 1")
        if self.offset_scale < 0 or self.subject_sd < 0:
            raise InvalidSpecError("offset_scale and subject_sd must be >= 0")
        if self.epoch_seconds < 2.0:
            raise InvalidSpecError("epoch_seconds must be >= 2 s")


# class-indexed structure, scaled by offset_scale; order follows CLASS4_NAMES
_HR_STEP_BPM = (0.0, 3.0, 6.0, 9.0)
_HRV_STEP_MS = (0.0, 6.0, 12.0, 18.0)
_MIX_DEPTH_POW = (0.78, 1.0, 1.0, 1.0)
_LOBE_SLOT = (1, 0, 1, 2)      # JustListen sits on the center lobe like Nine
_BASE_HR_BPM = 66.0
_BASE_HRV_MS = 50.0

# lobe centers per slot (low, center, high), in z units of the shared wave
_ECG_LOBE_CENTERS = (-0.55, 0.05, 0.60)
_EEG_LOBE_CENTERS = (-0.52, 0.0, 0.56)

_WAVE_GRID = np.linspace(-3.5, 3.5, 7001)
_ECG_CARRIER_HZ = (1.1, 1.9)
_EEG_CARRIER_HZ = (2.0, 3.8)
_CARRIER_RATIO = (1.6, 2.3)
_CARRIER_MIX = (0.30, 0.60)
_EEG_SMOOTH_TAPS = 3


def _shape_wave(n: int, fs: float, rng: np.random.Generator, center: float,
                lobe_frac: float, lobe_w: float, mirror_w: float,
                half_range: float, background: str, taps: int,
                f_lo: float, f_hi: float) -> np.ndarray:
    """Unit-RMS slow wave with a prescribed amplitude histogram.

    A two-tone carrier fixes the time structure; its ranks are pushed
    through the inverse CDF of a three-part mixture: a narrow Gaussian
    lobe at +center, a broad mirror lobe at -center (so the mean stays
    near zero without moving the narrow lobe), and a symmetric background
    (arcsine or uniform) spanning +-half_range. A short moving average
    optionally rounds the plateaus before re-standardizing.
    """
    t = np.arange(n) / fs
    f1 = rng.uniform(f_lo, f_hi)
    f2 = f1 * rng.uniform(*_CARRIER_RATIO)
    mix = rng.uniform(*_CARRIER_MIX)
    p1, p2 = rng.uniform(0.0, 1.0, 2)
    s = (np.sin(2 * np.pi * (f1 * t + p1))
         + mix * np.sin(2 * np.pi * (f2 * t + p2)))
    u = (np.argsort(np.argsort(s)) + 0.5) / n
    if background == "arcsine":
        bgc = 0.5 + np.arcsin(np.clip(_WAVE_GRID / half_range, -1.0, 1.0)) / np.pi
    else:
        bgc = np.clip((_WAVE_GRID + half_range) / (2.0 * half_range), 0.0, 1.0)
    cdf = (lobe_frac * ndtr((_WAVE_GRID - center) / lobe_w)
           + lobe_frac * ndtr((_WAVE_GRID + center) / mirror_w)
           + (1.0 - 2.0 * lobe_frac) * bgc)
    w = np.interp(u, cdf, _WAVE_GRID)
    if taps > 1:
        w = np.convolve(w, np.ones(taps) / taps, mode="same")
    w = w - w.mean()
    return w / math.sqrt(float(np.mean(w ** 2)))


def _trial_nuisance(rng: np.random.Generator, snr_base: float) -> dict:
    """Per-trial draws that vary everything the classes do not control."""
    return {
        "depth": rng.uniform(3.2, 3.8),        # shared-wave gain over clean RMS
        "eeg_gain": rng.uniform(1.12, 1.30),
        "t_jit": rng.uniform(0.85, 1.15),
        "snr": rng.uniform(snr_base - 6.0, snr_base),
        "band_jit": rng.uniform(0.6, 1.4, size=3),
        "hr_jit": rng.uniform(-4.0, 4.0),
        "hrv_jit": rng.uniform(-6.0, 6.0),
        "ecg_lobe_frac": rng.uniform(0.18, 0.24),
        "ecg_lobe_w": rng.uniform(0.10, 0.16),
        "eeg_lobe_frac": rng.uniform(0.24, 0.32),
        "eeg_center_jit": rng.uniform(-0.15, 0.15),
        "eeg_lobe_w": rng.uniform(0.07, 0.11),
        "mirror_ratio": rng.uniform(3.4, 4.0),
        "ecg_range": rng.uniform(1.2, 1.4),
        "eeg_range": rng.uniform(1.75, 1.95),
    }


def _gen_trial_pair(spec: CoupledLoadSpec, depth_pow: float, hr_bpm: float,
                    hrv_ms: float, ecg_center: float, eeg_center: float,
                    nz: dict, trial_seed: int) -> tuple[SignalRecord, SignalRecord]:
    ss = np.random.SeedSequence(trial_seed)
    words = ss.generate_state(4)
    ecg, _ = gen_ecg(EcgSynthSpec(
        fs=spec.ecg_fs, duration_s=spec.epoch_seconds,
        mean_hr_bpm=max(45.0, hr_bpm + nz["hr_jit"]),
        hrv_sd_ms=max(5.0, hrv_ms + nz["hrv_jit"]),
        t_amp=0.25 * nz["t_jit"], noise_snr_db=nz["snr"], seed=int(words[0])))
    wave_rng = np.random.default_rng(words[3])
    we = _shape_wave(ecg.n_samples, spec.ecg_fs, wave_rng, ecg_center,
                     nz["ecg_lobe_frac"], nz["ecg_lobe_w"],
                     nz["ecg_lobe_w"] * nz["mirror_ratio"], nz["ecg_range"],
                     "arcsine", 1, *_ECG_CARRIER_HZ)
    rms = math.sqrt(float(np.mean(ecg.samples[0] ** 2)))
    ecg = ecg.with_samples(ecg.samples + depth_pow * nz["depth"] * rms * we[None, :])

    jt = nz["band_jit"]
    eeg = gen_eeg(EegSynthSpec(
        fs=spec.eeg_fs, duration_s=spec.epoch_seconds,
        theta_power=1.0 * jt[0], alpha_power=2.0 * jt[1],
        beta_power=0.6 * jt[2], seed=int(words[1])))
    wg = _shape_wave(eeg.n_samples, spec.eeg_fs, wave_rng,
                     eeg_center + nz["eeg_center_jit"],
                     nz["eeg_lobe_frac"], nz["eeg_lobe_w"],
                     nz["eeg_lobe_w"] * nz["mirror_ratio"], nz["eeg_range"],
                     "uniform", _EEG_SMOOTH_TAPS, *_EEG_CARRIER_HZ)
    ch_rms = np.sqrt(np.mean(eeg.samples ** 2, axis=1))
    eeg = eeg.with_samples(
        eeg.samples
        + depth_pow * nz["depth"] * nz["eeg_gain"] * ch_rms[:, None] * wg[None, :])
    return ecg, eeg


def gen_coupled_dataset(spec: CoupledLoadSpec, out_dir: str | Path) -> Manifest:
    """Write per-trial epoch files plus a manifest; returns the loaded manifest.

    Layout: <out>/manifest.json and <out>/<subject>/<modality>_<class>_<idx>.bsig,
    one ECG and one EEG file per trial, each exactly epoch_seconds long with
    the trial event at sample 0.

    Class structure, all scaled by offset_scale (clipped at 1): heart rate
    steps up and beat-to-beat variability steps down with load, and the
    narrow lobe of the shared wave's amplitude histogram sits at a
    class-dependent center in both modalities. JustListen shares the center
    lobe with Nine but mixes the wave in at a reduced depth, so the pair
    stays separable through the mixing ratio. Subjects differ by a rate
    offset and a common lobe-center offset, both scaled by subject_sd, so
    held-out-subject evaluation faces a real distribution shift.
    """
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    se = min(spec.offset_scale, 1.0)
    ecg_centers = [_ECG_LOBE_CENTERS[1]
                   + se * (_ECG_LOBE_CENTERS[k] - _ECG_LOBE_CENTERS[1])
                   for k in range(3)]
    eeg_centers = [_EEG_LOBE_CENTERS[1]
                   + se * (_EEG_LOBE_CENTERS[k] - _EEG_LOBE_CENTERS[1])
                   for k in range(3)]

    subject_ids = [f"s{si + 1:02d}" for si in range(spec.n_subjects)]
    sub_hr = np.empty(spec.n_subjects)
    sub_center = np.empty(spec.n_subjects)
    for si in range(spec.n_subjects):
        srng = np.random.default_rng(
            np.random.SeedSequence(entropy=(spec.seed, 999, si)))
        sub_hr[si] = spec.subject_sd * srng.uniform(-4.0, 4.0)
        sub_center[si] = spec.subject_sd * srng.uniform(-0.12, 0.12)
        (out / subject_ids[si]).mkdir(exist_ok=True)

    recordings = [[] for _ in range(spec.n_subjects)]
    events_doc = []
    for ci, cls in enumerate(CLASS4_NAMES):
        label = ConditionLabel.from_class4(cls)
        depth_pow = _MIX_DEPTH_POW[ci] ** se
        hr = _BASE_HR_BPM + se * _HR_STEP_BPM[ci]
        hrv = _BASE_HRV_MS - se * _HRV_STEP_MS[ci]
        slot = _LOBE_SLOT[ci]
        for ti in range(spec.trials_per_class * spec.n_subjects):
            si = ti % spec.n_subjects
            idx = ti // spec.n_subjects
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=(spec.seed, ci, ti)))
            nz = _trial_nuisance(rng, spec.snr_db)
            trial_seed = int(rng.integers(2 ** 31))
            ecg_rec, eeg_rec = _gen_trial_pair(
                spec, depth_pow, hr + sub_hr[si], hrv,
                ecg_centers[slot] + sub_center[si],
                eeg_centers[slot] + sub_center[si], nz, trial_seed)

            subj_dir = out / subject_ids[si]
            stem = f"{cls.lower()}_{idx:03d}"
            ecg_path = subj_dir / f"ecg_{stem}.bsig"
            eeg_path = subj_dir / f"eeg_{stem}.bsig"
            write_signal(ecg_rec, ecg_path)
            write_signal(eeg_rec, eeg_path)

            trial_doc = {"condition": label.condition,
                         "subcondition": label.subcondition,
                         "trial_index": idx}
            recordings[si].append({
                "modality": "ecg",
                "signal_path": str(ecg_path.relative_to(out)),
                "fs": spec.ecg_fs,
                "channel_names": ["ecg"],
                "trial": trial_doc,
            })
            recordings[si].append({
                "modality": "eeg",
                "signal_path": str(eeg_path.relative_to(out)),
                "fs": spec.eeg_fs,
                "channel_names": list(EEG_CHANNELS),
                "trial": trial_doc,
            })
            events_doc.append({
                "subject": subject_ids[si],
                "onset_sample": 0,
                "condition": label.condition,
                "subcondition": label.subcondition,
                "trial_index": idx,
            })

    subjects_doc = [{"id": subject_ids[si], "recordings": recordings[si]}
                    for si in range(spec.n_subjects)]
    manifest_doc = {"subjects": subjects_doc, "events": events_doc}
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest_doc, indent=2) + "\n")
    return load_manifest(manifest_path, epoch_seconds=spec.epoch_seconds)


def null_variant(spec: CoupledLoadSpec) -> CoupledLoadSpec:
    """The same study with every class dependency removed."""
    return replace(spec, offset_scale=0.0)
