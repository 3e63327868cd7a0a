"""R-peak detection and RR-interval extraction.

The detector follows the classic energy-based recipe: squared first
difference, short moving-average integration, and an adaptive threshold built
from a running median plus a multiple of the running MAD. Candidate crossings
are refined to the local maximum of the original signal, so detected indices
land on the R apex regardless of amplitude scaling.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as _ndi

from .errors import (
    AllArtifactError,
    InsufficientDataError,
    InsufficientPeaksError,
    InvalidArgumentError,
    NoPeaksError,
    TooShortError,
)
from .signal import SignalRecord

__all__ = ["RPeakList", "RRSeries", "detect_r_peaks", "compute_rr", "mad_correct"]

REFRACTORY_MS = 200.0

# Physiological plausibility window for corrected RR intervals, in ms.
RR_MIN_MS = 250.0
RR_MAX_MS = 3000.0


@dataclass(frozen=True, eq=False)
class RPeakList:
    """Detected R-peak sample indices with per-peak confidence in [0, 1]."""

    indices: np.ndarray
    fs: float
    confidence: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        conf = np.asarray(self.confidence, dtype=np.float64)
        if self.fs <= 0:
            raise InvalidArgumentError(f"fs must be positive, got {self.fs}")
        if idx.shape != conf.shape or idx.ndim != 1:
            raise InvalidArgumentError("indices and confidence must be 1-D and aligned")
        if idx.size and np.any(np.diff(idx) <= 0):
            raise InvalidArgumentError("peak indices must be strictly ascending")
        min_gap = self.fs * REFRACTORY_MS / 1000.0
        if idx.size > 1 and np.any(np.diff(idx) < min_gap):
            raise InvalidArgumentError(
                f"peaks closer than the {REFRACTORY_MS:.0f} ms refractory period"
            )
        if conf.size and (conf.min() < 0.0 or conf.max() > 1.0):
            raise InvalidArgumentError("confidence values must lie in [0, 1]")
        idx = idx.copy(); idx.setflags(write=False)
        conf = conf.copy(); conf.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "confidence", conf)

    def __len__(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True, eq=False)
class RRSeries:
    """Successive R-to-R intervals in milliseconds.

    source_peak_index[i] is the index (into the originating RPeakList) of the
    peak that OPENS interval i. corrected_mask marks intervals replaced by
    artifact correction; it only ever accumulates.
    """

    intervals_ms: np.ndarray
    source_peak_index: np.ndarray
    fs: float
    corrected_mask: np.ndarray

    def __post_init__(self):
        iv = np.asarray(self.intervals_ms, dtype=np.float64)
        src = np.asarray(self.source_peak_index, dtype=np.int64)
        mask = np.asarray(self.corrected_mask, dtype=bool)
        if self.fs <= 0:
            raise InvalidArgumentError(f"fs must be positive, got {self.fs}")
        if not (iv.shape == src.shape == mask.shape) or iv.ndim != 1:
            raise InvalidArgumentError("interval arrays must be 1-D and aligned")
        if iv.size and iv.min() <= 0:
            raise InvalidArgumentError("RR intervals must be positive")
        iv = iv.copy(); iv.setflags(write=False)
        src = src.copy(); src.setflags(write=False)
        mask = mask.copy(); mask.setflags(write=False)
        object.__setattr__(self, "intervals_ms", iv)
        object.__setattr__(self, "source_peak_index", src)
        object.__setattr__(self, "corrected_mask", mask)

    def __len__(self) -> int:
        return int(self.intervals_ms.size)

    @property
    def duration_s(self) -> float:
        return float(self.intervals_ms.sum() / 1000.0)


def _running_median_mad(x: np.ndarray, win: int) -> tuple[np.ndarray, np.ndarray]:
    win = min(win, x.size)
    if win % 2 == 0:
        win += 1
    # reflect padding: edge windows see real data, not one repeated sample
    med = _ndi.median_filter(x, size=win, mode="reflect")
    mad = _ndi.median_filter(np.abs(x - med), size=win, mode="reflect")
    return med, mad


def detect_r_peaks(rec: SignalRecord, *, threshold_k: float = 3.0,
                   smooth_ms: float = 150.0, search_ms: float = 50.0,
                   stat_window_s: float = 2.0,
                   hysteresis: float = 2.0) -> RPeakList:
    """Detect R-peaks on a single-channel ECG record.

    Requires at least 2 s of signal. The returned peak indices are invariant
    to positive amplitude scaling of the input and never violate the 200 ms
    refractory period.
    """
    if rec.n_channels != 1:
        raise InvalidArgumentError(
            f"expected a single-channel ECG record, got {rec.n_channels} channels"
        )
    fs = rec.fs
    x = rec.samples[0].astype(np.float64)
    if x.size < 2 * fs:
        raise TooShortError(f"need >= 2 s of signal, got {x.size / fs:.3f} s")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("signal contains non-finite values")
    if np.ptp(x) == 0.0:
        raise NoPeaksError("zero-variance signal has no peaks")

    # Squared-derivative energy, integrated over a QRS-scale window. The
    # running statistics come from the raw energy, where QRS support stays a
    # small duty cycle at any plausible rate; the smoothed trace at high
    # rates occupies half the record and would poison a running median.
    d = np.diff(x)
    energy = d * d
    w = max(1, int(round(smooth_ms / 1000.0 * fs)))
    smoothed = np.convolve(energy, np.ones(w) / w, mode="same")

    med, mad = _running_median_mad(energy, int(round(stat_window_s * fs)))
    thr = med + threshold_k * mad
    # Floor against quiet stretches where local statistics collapse and
    # T-wave energy (well under 2% of QRS energy) would cross the bar.
    thr = np.maximum(thr, 0.02 * float(np.percentile(smoothed, 99)))

    above = smoothed > thr
    if not np.any(above):
        return RPeakList(indices=np.empty(0, dtype=np.int64), fs=fs,
                         confidence=np.empty(0))
    rising = np.flatnonzero(above[1:] & ~above[:-1]) + 1
    falling = np.flatnonzero(~above[1:] & above[:-1]) + 1
    if above[0]:
        rising = np.concatenate([[0], rising])
    if above[-1]:
        falling = np.concatenate([falling, [above.size]])

    # Anchor on the energy maximum of each above-threshold region, then
    # refine to the tallest original sample within +-search_ms of it. The
    # crossing threshold defines region extent; acceptance asks the region
    # peak to clear a hysteresis multiple of it, which rejects noise bumps
    # that barely poke above the adaptive level.
    s = max(1, int(round(search_ms / 1000.0 * fs)))
    cand = []
    strength = {}
    for lo_r, hi_r in zip(rising, falling):
        anchor = lo_r + int(np.argmax(smoothed[lo_r:hi_r]))
        e_peak = float(smoothed[anchor])
        t_peak = float(thr[anchor])
        if e_peak <= hysteresis * t_peak:
            continue
        lo = max(0, anchor - s)
        hi = min(x.size, anchor + s + 1)
        p = lo + int(np.argmax(x[lo:hi]))
        cand.append(p)
        strength[p] = max(strength.get(p, 0.0),
                          1.0 - (t_peak / e_peak if e_peak > 0 else 1.0))
    if not cand:
        return RPeakList(indices=np.empty(0, dtype=np.int64), fs=fs,
                         confidence=np.empty(0))
    cand = np.unique(np.asarray(cand, dtype=np.int64))

    # Refractory pass: within 200 ms keep the taller peak.
    refr = fs * REFRACTORY_MS / 1000.0
    kept: list[int] = []
    for p in cand:
        if kept and p - kept[-1] < refr:
            if x[p] > x[kept[-1]]:
                kept[-1] = int(p)
        else:
            kept.append(int(p))
    idx = np.asarray(kept, dtype=np.int64)

    conf = np.clip(np.asarray([strength[p] for p in idx]), 0.0, 1.0)
    return RPeakList(indices=idx, fs=fs, confidence=conf)


def compute_rr(peaks: RPeakList) -> RRSeries:
    """Turn consecutive peak indices into RR intervals: (i_{k+1} - i_k) * 1000 / fs."""
    if len(peaks) < 2:
        raise InsufficientPeaksError(
            f"need at least 2 peaks to form an interval, got {len(peaks)}"
        )
    gaps = np.diff(peaks.indices).astype(np.float64)
    intervals = gaps * 1000.0 / peaks.fs
    return RRSeries(
        intervals_ms=intervals,
        source_peak_index=np.arange(len(peaks) - 1, dtype=np.int64),
        fs=peaks.fs,
        corrected_mask=np.zeros(len(peaks) - 1, dtype=bool),
    )


def mad_correct(rr: RRSeries, threshold_multiplier: float = 3.5,
                mode: str = "replace") -> RRSeries:
    """Flag RR artifacts by robust deviation and repair them.

    An interval is an artifact when |RR - median| > multiplier * 1.4826 * MAD
    (a small epsilon guards the MAD against exact zero), or when it falls
    outside the physiological window [250, 3000] ms. mode="replace" fills
    flagged intervals by linear interpolation from their non-flagged
    neighbours and preserves length; mode="remove" drops them.
    """
    if mode not in ("replace", "remove"):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    if threshold_multiplier <= 0:
        raise InvalidArgumentError("threshold_multiplier must be positive")
    n = len(rr)
    if n < 4:
        raise InsufficientDataError(f"need >= 4 intervals for robust statistics, got {n}")
    x = rr.intervals_ms
    med = float(np.median(x))
    mad = float(np.median(np.abs(x - med)))
    sigma = 1.4826 * mad + 1e-9
    bad = np.abs(x - med) > threshold_multiplier * sigma
    bad |= (x < RR_MIN_MS) | (x > RR_MAX_MS)
    if bad.all():
        raise AllArtifactError("every interval flagged as artifact")
    if mode == "remove":
        return RRSeries(
            intervals_ms=x[~bad],
            source_peak_index=rr.source_peak_index[~bad],
            fs=rr.fs,
            corrected_mask=rr.corrected_mask[~bad],
        )
    good = np.flatnonzero(~bad)
    out = x.copy()
    bad_idx = np.flatnonzero(bad)
    # np.interp extends by the nearest good value at the edges.
    out[bad_idx] = np.interp(bad_idx, good, x[good])
    return RRSeries(
        intervals_ms=out,
        source_peak_index=rr.source_peak_index,
        fs=rr.fs,
        corrected_mask=rr.corrected_mask | bad,
    )
