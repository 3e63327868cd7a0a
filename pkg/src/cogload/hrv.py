"""Heart-rate-variability features from RR interval series.

Time-domain statistics use the sample convention: SDNN divides by N-1, RMSSD
averages the N-1 squared successive differences with an N-1 denominator.
Poincare geometry derives from them (SD1 = sqrt(0.5) * RMSSD,
SD2 = sqrt(2 * SDNN^2 - 0.5 * RMSSD^2)), which pins the identity
SD1^2 + SD2^2 = 2 * SDNN^2. Frequency-domain power comes from a Welch PSD of
the cubic-interpolated tachogram resampled at 4 Hz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

from .ecg import RRSeries
from .errors import InsufficientDataError, InvalidArgumentError
from .signal import band_power, welch_psd

__all__ = [
    "TimeDomain",
    "Poincare",
    "FrequencyDomain",
    "HrvFeatures",
    "time_domain",
    "poincare",
    "frequency_domain",
    "compute_hrv",
]

LF_BAND = (0.04, 0.15)
HF_BAND = (0.15, 0.40)

# Windows shorter than these make the respective estimates unreliable.
SHORT_WINDOW_FREQ_S = 10.0
SHORT_WINDOW_TIME_S = 60.0


class TimeDomain(NamedTuple):
    mean_nn: float
    sdnn: float
    rmssd: float
    pnn40: float


class Poincare(NamedTuple):
    sd1: float
    sd2: float
    clamped: bool      # True when 2*SDNN^2 - 0.5*RMSSD^2 went negative


class FrequencyDomain(NamedTuple):
    lf_power: float
    hf_power: float
    lf_hf_ratio: float
    reliable: bool     # False when the window is too short for band estimates
    hf_zero: bool      # True when HF power is exactly zero (ratio is +inf)


@dataclass(frozen=True)
class HrvFeatures:
    """The assembled HRV feature set for one RR series."""

    mean_nn: float
    sdnn: float
    rmssd: float
    pnn40: float
    sd1: float
    sd2: float
    lf_power: float
    hf_power: float
    lf_hf_ratio: float
    sd2_clamped: bool = False
    freq_reliable: bool = False
    short_window: bool = False


def time_domain(rr: RRSeries) -> TimeDomain:
    """MeanNN, SDNN, RMSSD and pNN40 over the interval series."""
    x = rr.intervals_ms
    n = x.size
    if n < 2:
        raise InsufficientDataError(f"need >= 2 intervals, got {n}")
    mean_nn = float(np.mean(x))
    sdnn = float(np.std(x, ddof=1))
    d = np.diff(x)
    rmssd = float(np.sqrt(np.mean(d * d)))
    pnn40 = float(np.mean(np.abs(d) > 40.0))
    return TimeDomain(mean_nn=mean_nn, sdnn=sdnn, rmssd=rmssd, pnn40=pnn40)


def poincare(sdnn: float, rmssd: float) -> Poincare:
    """Poincare axes from the time-domain statistics.

    The SD2 radicand can dip below zero for strongly alternating series; it is
    clamped to zero and reported via the flag rather than going NaN.
    """
    if sdnn < 0 or rmssd < 0:
        raise InvalidArgumentError("sdnn and rmssd must be non-negative")
    sd1 = math.sqrt(0.5) * rmssd
    radicand = 2.0 * sdnn * sdnn - 0.5 * rmssd * rmssd
    clamped = radicand < 0.0
    sd2 = 0.0 if clamped else math.sqrt(radicand)
    return Poincare(sd1=sd1, sd2=sd2, clamped=clamped)


def frequency_domain(rr: RRSeries, interp_fs: float = 4.0) -> FrequencyDomain:
    """LF and HF band power of the evenly resampled tachogram.

    The tachogram places interval i at the cumulative time of its closing
    beat, is cubic-spline interpolated onto an interp_fs grid, and analysed
    with a Hann-window Welch PSD. Windows shorter than 10 s (or with too few
    intervals to interpolate) are flagged unreliable; a constant series yields
    zero power in both bands. HF == 0 reports the ratio as +inf with hf_zero
    set instead of raising.
    """
    if interp_fs <= 0:
        raise InvalidArgumentError(f"interp_fs must be positive, got {interp_fs}")
    x = rr.intervals_ms
    duration = float(x.sum() / 1000.0)
    reliable = duration >= SHORT_WINDOW_FREQ_S
    degenerate = FrequencyDomain(0.0, 0.0, math.inf, reliable=False, hf_zero=True)
    if x.size < 4:
        return degenerate
    t = np.cumsum(x) / 1000.0
    span = t[-1] - t[0]
    n_grid = int(math.floor(span * interp_fs)) + 1
    if n_grid < 16:
        return degenerate
    grid = t[0] + np.arange(n_grid) / interp_fs
    tach = CubicSpline(t, x)(grid)
    seg = min(256, n_grid // 2)
    if seg < 8:
        return degenerate
    spectrum = welch_psd(tach, fs=interp_fs, segment_len=seg, window="hann")
    lf = band_power(spectrum, *LF_BAND)
    hf = band_power(spectrum, *HF_BAND)
    hf_zero = hf == 0.0
    ratio = math.inf if hf_zero else lf / hf
    return FrequencyDomain(lf_power=lf, hf_power=hf, lf_hf_ratio=ratio,
                           reliable=reliable, hf_zero=hf_zero)


def compute_hrv(rr: RRSeries) -> HrvFeatures:
    """Assemble the full HRV feature set with reliability flags."""
    td = time_domain(rr)
    pc = poincare(td.sdnn, td.rmssd)
    fd = frequency_domain(rr)
    return HrvFeatures(
        mean_nn=td.mean_nn,
        sdnn=td.sdnn,
        rmssd=td.rmssd,
        pnn40=td.pnn40,
        sd1=pc.sd1,
        sd2=pc.sd2,
        lf_power=fd.lf_power,
        hf_power=fd.hf_power,
        lf_hf_ratio=fd.lf_hf_ratio,
        sd2_clamped=pc.clamped,
        freq_reliable=fd.reliable,
        short_window=rr.duration_s < SHORT_WINDOW_TIME_S,
    )
