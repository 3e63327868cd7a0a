"""Shared DSP primitives: recursive filters, resampling, baseline removal, Welch PSD.

All operations take and return immutable SignalRecord values; nothing mutates
samples in place. Filtering is zero-phase by default (forward-backward pass
over an even-reflected extension, with steady-state initial conditions), which
keeps features that depend on timing, such as R-peak positions, unbiased.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal as _sps

from .errors import (
    InvalidArgumentError,
    InvalidSpecError,
    TooShortError,
)

__all__ = [
    "SignalRecord",
    "FilterSpec",
    "FilterCoefficients",
    "PowerSpectrum",
    "design_filter",
    "apply_filter",
    "resample",
    "baseline_correct",
    "welch_psd",
    "band_power",
]


@dataclass(frozen=True, eq=False)
class SignalRecord:
    """A multichannel signal: samples laid out (n_channels, n_samples).

    Records are immutable after construction; the sample buffer is copied and
    locked so downstream code can share records without defensive copies.
    """

    samples: np.ndarray
    fs: float
    channel_names: tuple[str, ...]
    start_time: float = 0.0

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.samples))
        if arr.ndim != 2:
            raise InvalidArgumentError("samples must be 1-D or 2-D")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if self.fs <= 0:
            raise InvalidArgumentError(f"fs must be positive, got {self.fs}")
        if len(self.channel_names) != arr.shape[0]:
            raise InvalidArgumentError(
                f"{len(self.channel_names)} channel names for {arr.shape[0]} channels"
            )
        if len(set(self.channel_names)) != len(self.channel_names):
            raise InvalidArgumentError("channel names must be unique")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.fs

    def channel(self, name: str) -> np.ndarray:
        from .errors import ChannelError

        try:
            idx = self.channel_names.index(name)
        except ValueError:
            raise ChannelError(f"channel {name!r} not present in {self.channel_names}") from None
        return self.samples[idx]

    def with_samples(self, samples: np.ndarray, fs: float | None = None) -> "SignalRecord":
        return SignalRecord(samples, self.fs if fs is None else fs,
                            self.channel_names, self.start_time)


@dataclass(frozen=True)
class FilterSpec:
    """Declarative filter description; design happens against a sampling rate."""

    kind: str                       # "bandpass" | "notch"
    low_hz: float | None = None
    high_hz: float | None = None
    center_hz: float | None = None
    q: float = 30.0
    order: int = 2
    zero_phase: bool = True

    @staticmethod
    def bandpass(low_hz: float, high_hz: float, order: int = 2,
                 zero_phase: bool = True) -> "FilterSpec":
        return FilterSpec(kind="bandpass", low_hz=low_hz, high_hz=high_hz,
                          order=order, zero_phase=zero_phase)

    @staticmethod
    def notch(center_hz: float, q: float = 30.0,
              zero_phase: bool = True) -> "FilterSpec":
        return FilterSpec(kind="notch", center_hz=center_hz, q=q,
                          zero_phase=zero_phase)


@dataclass(frozen=True, eq=False)
class FilterCoefficients:
    """Designed filter in second-order sections, tied to the rate it was built for."""

    sos: np.ndarray
    fs: float
    spec: FilterSpec

    @property
    def order(self) -> int:
        # Effective order: two poles per second-order section.
        return 2 * self.sos.shape[0]

    def frequency_response(self, freqs_hz: np.ndarray) -> np.ndarray:
        """Complex response of a single forward pass at the given frequencies."""
        _, h = _sps.sosfreqz(self.sos, worN=np.asarray(freqs_hz, dtype=float), fs=self.fs)
        return h


def design_filter(spec: FilterSpec, fs: float) -> FilterCoefficients:
    """Design Butterworth bandpass or IIR notch coefficients for rate fs."""
    if fs <= 0:
        raise InvalidArgumentError(f"fs must be positive, got {fs}")
    nyq = fs / 2.0
    if spec.kind == "bandpass":
        low, high = spec.low_hz, spec.high_hz
        if low is None or high is None:
            raise InvalidSpecError("bandpass spec needs low_hz and high_hz")
        if not (0.0 < low < high):
            raise InvalidSpecError(f"need 0 < low < high, got ({low}, {high})")
        if high >= nyq:
            raise InvalidSpecError(
                f"high corner {high} Hz not below Nyquist {nyq} Hz at fs={fs}"
            )
        if spec.order < 1:
            raise InvalidSpecError(f"order must be >= 1, got {spec.order}")
        sos = _sps.butter(spec.order, [low, high], btype="bandpass", fs=fs, output="sos")
    elif spec.kind == "notch":
        center = spec.center_hz
        if center is None:
            raise InvalidSpecError("notch spec needs center_hz")
        if not (0.0 < center < nyq):
            raise InvalidSpecError(
                f"notch center {center} Hz not inside (0, {nyq}) Hz at fs={fs}"
            )
        if spec.q <= 0:
            raise InvalidSpecError(f"notch q must be positive, got {spec.q}")
        b, a = _sps.iirnotch(center, spec.q, fs=fs)
        sos = _sps.tf2sos(b, a)
    else:
        raise InvalidSpecError(f"unknown filter kind {spec.kind!r}")
    return FilterCoefficients(sos=np.ascontiguousarray(sos), fs=fs, spec=spec)


def _filter_1d(x: np.ndarray, sos: np.ndarray, pad: int, zero_phase: bool) -> np.ndarray:
    n = x.size
    if pad > 0:
        head = x[pad:0:-1]
        tail = x[-2:-pad - 2:-1]
        xp = np.concatenate([head, x, tail])
    else:
        xp = x
    zi = _sps.sosfilt_zi(sos)
    y, _ = _sps.sosfilt(sos, xp, zi=zi * xp[0])
    if zero_phase:
        y = y[::-1]
        y, _ = _sps.sosfilt(sos, y, zi=zi * y[0])
        y = y[::-1]
    return y[pad:pad + n] if pad > 0 else y


def apply_filter(rec: SignalRecord, coeffs: FilterCoefficients,
                 zero_phase: bool | None = None) -> SignalRecord:
    """Filter every channel; zero_phase=None defers to the spec the filter was built from.

    The signal is extended by even reflection (3x the effective filter order) and
    each pass starts from steady state, so a constant input maps to the filter's
    DC gain from the first sample.
    """
    if abs(coeffs.fs - rec.fs) > 1e-9:
        raise InvalidArgumentError(
            f"filter designed for fs={coeffs.fs}, record has fs={rec.fs}"
        )
    if zero_phase is None:
        zero_phase = coeffs.spec.zero_phase
    min_len = 3 * coeffs.order
    if rec.n_samples <= min_len:
        raise TooShortError(
            f"need more than {min_len} samples for an order-{coeffs.order} filter, "
            f"got {rec.n_samples}"
        )
    pad = min(3 * coeffs.order, rec.n_samples - 1)
    out = np.empty_like(rec.samples, dtype=np.float64)
    for c in range(rec.n_channels):
        out[c] = _filter_1d(rec.samples[c].astype(np.float64), coeffs.sos, pad, zero_phase)
    return rec.with_samples(out)


def resample(rec: SignalRecord, target_fs: float) -> SignalRecord:
    """Polyphase rational resampling with a Kaiser-windowed anti-alias lowpass.

    Output length is round(n * target_fs / fs). target_fs == fs returns the
    record unchanged (bit-identical samples).
    """
    if target_fs <= 0:
        raise InvalidArgumentError(f"target_fs must be positive, got {target_fs}")
    if target_fs == rec.fs:
        return rec
    ratio = Fraction(target_fs / rec.fs).limit_denominator(10000)
    if ratio.numerator == 0:
        raise InvalidArgumentError(f"ratio {target_fs}/{rec.fs} too extreme")
    out = _sps.resample_poly(rec.samples.astype(np.float64), ratio.numerator,
                             ratio.denominator, axis=1, window=("kaiser", 8.0))
    n_out = int(round(rec.n_samples * target_fs / rec.fs))
    if out.shape[1] < n_out:
        out = np.pad(out, ((0, 0), (0, n_out - out.shape[1])))
    return rec.with_samples(out[:, :n_out], fs=target_fs)


def baseline_correct(rec: SignalRecord,
                     baseline_window: tuple[float, float]) -> SignalRecord:
    """Subtract each channel's mean over [start_s, end_s) measured from epoch start."""
    start_s, end_s = baseline_window
    i0 = int(round(start_s * rec.fs))
    i1 = int(round(end_s * rec.fs))
    i0 = max(i0, 0)
    i1 = min(i1, rec.n_samples)
    if i1 <= i0:
        raise InvalidArgumentError(
            f"baseline window [{start_s}, {end_s}) s selects no samples"
        )
    means = rec.samples[:, i0:i1].mean(axis=1, keepdims=True)
    return rec.with_samples(rec.samples - means)


@dataclass(frozen=True, eq=False)
class PowerSpectrum:
    """One-sided Welch power spectral density."""

    freqs_hz: np.ndarray
    power: np.ndarray
    segment_len: int
    overlap: float
    window: str

    def __post_init__(self):
        f = np.asarray(self.freqs_hz, dtype=float)
        p = np.asarray(self.power, dtype=float)
        if f.shape != p.shape:
            raise InvalidArgumentError("freqs and power must align")
        if f.size and (f[0] != 0.0 or np.any(np.diff(f) <= 0)):
            raise InvalidArgumentError("frequency axis must ascend from 0")
        if np.any(p < 0):
            raise InvalidArgumentError("power must be non-negative")
        object.__setattr__(self, "freqs_hz", f)
        object.__setattr__(self, "power", p)


def welch_psd(series: np.ndarray, fs: float, segment_len: int | None = None,
              overlap: float = 0.5, window: str = "rect") -> PowerSpectrum:
    """Welch PSD of a single channel with averaged overlapping segments.

    Default segment length is min(256, n // 2); the rectangular window is the
    default, "hann" is available for tapered estimates. Each segment is
    mean-detrended. The one-sided density integrates to roughly the series
    variance (Parseval).
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise InvalidArgumentError("welch_psd expects a single channel")
    if fs <= 0:
        raise InvalidArgumentError(f"fs must be positive, got {fs}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("series contains non-finite values")
    if segment_len is None:
        segment_len = min(256, x.size // 2)
    if segment_len < 8:
        raise InvalidArgumentError(f"segment_len must be >= 8, got {segment_len}")
    if x.size < segment_len:
        raise TooShortError(f"series of {x.size} shorter than segment {segment_len}")
    if not (0.0 <= overlap < 1.0):
        raise InvalidArgumentError(f"overlap must be in [0, 1), got {overlap}")
    win = {"rect": "boxcar", "hann": "hann"}.get(window)
    if win is None:
        raise InvalidArgumentError(f"unknown window {window!r}")
    freqs, power = _sps.welch(
        x, fs=fs, window=win, nperseg=segment_len,
        noverlap=int(segment_len * overlap), detrend="constant",
        scaling="density",
    )
    # Guard against -0.0 / tiny negatives from roundoff.
    power = np.maximum(power, 0.0)
    return PowerSpectrum(freqs_hz=freqs, power=power, segment_len=segment_len,
                         overlap=overlap, window=window)


def band_power(spectrum: PowerSpectrum, low_hz: float, high_hz: float) -> float:
    """Integrated density over [low_hz, high_hz) via the trapezoid rule."""
    if not (0 <= low_hz < high_hz):
        raise InvalidArgumentError(f"need 0 <= low < high, got ({low_hz}, {high_hz})")
    mask = (spectrum.freqs_hz >= low_hz) & (spectrum.freqs_hz < high_hz)
    if mask.sum() < 2:
        return 0.0
    return float(np.trapezoid(spectrum.power[mask], spectrum.freqs_hz[mask]))
