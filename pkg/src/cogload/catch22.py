"""The 22 canonical time-series features over z-scored input.

Each feature is implemented from its published definition. Values match the
reference semantics of the canonical C code, including its quirks (stretch
lengths measured between terminators, local-minimum indices reported 0-based,
threshold sweeps trimmed at the last sparse threshold). Expensive
intermediates, the FFT autocorrelation, its first zero crossing and the
rectangular Welch spectrum, are computed once and shared.

Features that cannot be computed (degenerate input, numerically undefined
result) are flagged in nan_mask and stored as NaN, never silently zeroed.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import LSQUnivariateSpline

from .errors import DegenerateSeriesError, InvalidArgumentError

__all__ = ["FEATURE_NAMES", "Catch22Vector", "zscore", "acf", "compute_catch22",
           "feature_index"]

FEATURE_NAMES: tuple[str, ...] = (
    "DN_HistogramMode_5",
    "DN_HistogramMode_10",
    "SB_BinaryStats_diff_longstretch0",
    "DN_OutlierInclude_p_001_mdrmd",
    "DN_OutlierInclude_n_001_mdrmd",
    "CO_f1ecac",
    "CO_FirstMin_ac",
    "SP_Summaries_welch_rect_area_5_1",
    "SP_Summaries_welch_rect_centroid",
    "FC_LocalSimple_mean3_stderr",
    "CO_trev_1_num",
    "CO_HistogramAMI_even_2_5",
    "IN_AutoMutualInfoStats_40_gaussian_fmmi",
    "MD_hrv_classic_pnn40",
    "SB_BinaryStats_mean_longstretch1",
    "SB_MotifThree_quantile_hh",
    "FC_LocalSimple_mean1_tauresrat",
    "CO_Embed2_Dist_tau_d_expfit_meandiff",
    "SC_FluctAnal_2_dfa_50_1_2_logi_prop_r1",
    "SC_FluctAnal_2_rsrangefit_50_1_logi_prop_r1",
    "SB_TransitionMatrix_3ac_sumdiagcov",
    "PD_PeriodicityWang_th0_01",
)


def feature_index(name: str) -> int:
    """Position of a feature in the canonical ordering (0-based)."""
    try:
        return FEATURE_NAMES.index(name)
    except ValueError:
        raise InvalidArgumentError(f"unknown feature {name!r}") from None


@dataclass(frozen=True, eq=False)
class Catch22Vector:
    """22 feature values in canonical order; nan_mask marks invalid entries."""

    values: np.ndarray
    nan_mask: np.ndarray
    names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        m = np.asarray(self.nan_mask, dtype=bool)
        if v.shape != (len(FEATURE_NAMES),) or m.shape != v.shape:
            raise InvalidArgumentError("expected 22 values and an aligned mask")
        if not np.array_equal(np.isnan(v), m):
            raise InvalidArgumentError("nan_mask must mark exactly the NaN entries")
        v = v.copy(); v.setflags(write=False)
        m = m.copy(); m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "nan_mask", m)

    def as_dict(self) -> dict[str, float]:
        return {name: float(val) for name, val in zip(self.names, self.values)}


# ---------------------------------------------------------------------------
# shared primitives


def zscore(series: np.ndarray) -> np.ndarray:
    """Standardize to zero mean and unit population standard deviation."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError("zscore expects a 1-D series")
    if x.size < 2:
        raise InvalidArgumentError("zscore needs at least 2 samples")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("series contains non-finite values")
    sd = float(np.std(x))
    if sd == 0.0:
        raise DegenerateSeriesError("zero-variance series cannot be standardized")
    return (x - x.mean()) / sd


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def _acf_fft(x: np.ndarray) -> np.ndarray:
    """Autocorrelation (global mean, biased normalization) for lags 0..n-1."""
    n = x.size
    nfft = 2 * _next_pow2(n)
    f = np.fft.rfft(x - x.mean(), nfft)
    ac = np.fft.irfft(f * np.conj(f))[:n]
    if ac[0] == 0.0:
        raise DegenerateSeriesError("zero-variance series has no autocorrelation")
    return ac / ac[0]


def acf(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Normalized autocorrelation at lags 0..max_lag; acf[0] == 1."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError("acf expects a 1-D series")
    if not 0 <= max_lag < x.size:
        raise InvalidArgumentError(
            f"max_lag must lie in [0, {x.size - 1}], got {max_lag}"
        )
    return _acf_fft(x)[: max_lag + 1]


def _first_zero(ac: np.ndarray, max_tau: int) -> int:
    """First lag with non-positive autocorrelation (max_tau if none)."""
    limit = min(max_tau, ac.size)
    below = np.flatnonzero(ac[:limit] <= 0.0)
    return int(below[0]) if below.size else limit


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    am = a - a.mean()
    bm = b - b.mean()
    denom = math.sqrt(float((am * am).sum()) * float((bm * bm).sum()))
    if denom == 0.0:
        return math.nan
    return float((am * bm).sum()) / denom


def _histcounts(y: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Uniform histogram over [min, max]; the top edge folds into the last bin."""
    lo = float(y.min())
    hi = float(y.max())
    step = (hi - lo) / n_bins
    if step == 0.0:
        raise DegenerateSeriesError("histogram of a constant has no width")
    idx = np.floor((y - lo) / step).astype(np.int64)
    np.clip(idx, 0, n_bins - 1, out=idx)
    counts = np.bincount(idx, minlength=n_bins)
    edges = lo + step * np.arange(n_bins + 1)
    return counts, edges


def _quantile_hazen(sorted_y: np.ndarray, q: float) -> float:
    """Quantile with plotting positions (k - 0.5)/n, clamped at the extremes."""
    n = sorted_y.size
    edge = 0.5 / n
    if q < edge:
        return float(sorted_y[0])
    if q > 1.0 - edge:
        return float(sorted_y[-1])
    pos = n * q - 0.5
    lo = int(math.floor(pos))
    frac = pos - lo
    if frac == 0.0:
        return float(sorted_y[lo])
    return float(sorted_y[lo] + frac * (sorted_y[lo + 1] - sorted_y[lo]))


def _coarse_grain_quantile(y: np.ndarray, k: int) -> np.ndarray:
    """Symbolize into k equiprobable groups, labelled 1..k."""
    s = np.sort(y)
    th = np.array([_quantile_hazen(s, i / k) for i in range(k + 1)])
    th[0] -= 1.0
    labels = np.zeros(y.size, dtype=np.int64)
    for i in range(k):
        labels[(y > th[i]) & (y <= th[i + 1])] = i + 1
    return labels


def _prefix_medians(vals: np.ndarray) -> np.ndarray:
    """Median of vals[:k+1] for every k, via the two-heap running median."""
    lo: list[float] = []   # max-heap (negated)
    hi: list[float] = []   # min-heap
    out = np.empty(vals.size)
    for i, v in enumerate(vals):
        if not lo or v <= -lo[0]:
            heapq.heappush(lo, -v)
        else:
            heapq.heappush(hi, v)
        if len(lo) > len(hi) + 1:
            heapq.heappush(hi, -heapq.heappop(lo))
        elif len(hi) > len(lo):
            heapq.heappush(lo, -heapq.heappop(hi))
        out[i] = -lo[0] if len(lo) > len(hi) else 0.5 * (hi[0] - lo[0])
    return out


# ---------------------------------------------------------------------------
# feature kernels


def _histogram_mode(z: np.ndarray, n_bins: int) -> float:
    counts, edges = _histcounts(z, n_bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return float(centers[counts == counts.max()].mean())


def _longest_stretch(is_target: np.ndarray) -> int:
    # Stretches end at a non-target sample or at the final position; each is
    # measured from the previous terminator, so interior runs count one extra.
    m = is_target.size
    if m == 0:
        return 0
    trig = np.flatnonzero(~is_target)
    if trig.size == 0 or trig[-1] != m - 1:
        trig = np.append(trig, m - 1)
    prev = np.concatenate(([0], trig[:-1]))
    return int(np.max(trig - prev))


def _outlier_include_mdrmd(z: np.ndarray, sign: float) -> float:
    y = sign * z
    n = y.size
    inc = 0.01
    mx = float(y.max())
    if mx < inc:
        return 0.0
    n_thr = int(mx / inc) + 1
    thresholds = inc * np.arange(n_thr)

    # Work over elements sorted by value (descending): the set above any
    # threshold is then a prefix, and min/max/median of the 1-based positions
    # come from prefix scans.
    order = np.argsort(-y, kind="stable")
    pos = (order + 1).astype(np.float64)
    y_desc = y[order]
    count_ge = n - np.searchsorted(y_desc[::-1], thresholds, side="left")
    pref_min = np.minimum.accumulate(pos)
    pref_max = np.maximum.accumulate(pos)
    pref_med = _prefix_medians(pos)

    k = count_ge
    with np.errstate(invalid="ignore", divide="ignore"):
        ms_dti1 = np.where(k > 1, (pref_max[k - 1] - pref_min[k - 1]) / (k - 1), np.nan)
    ms_dti3 = (k - 1) * 100.0 / n
    ms_dti4 = pref_med[k - 1] / (n / 2.0) - 1.0

    over = np.flatnonzero(ms_dti3 > 2.0)
    mj = int(over[-1]) if over.size else 0
    nan_at = np.flatnonzero(np.isnan(ms_dti1))
    fbi = int(nan_at[0]) if nan_at.size else n_thr - 1
    trim = min(mj, fbi)
    return float(np.median(ms_dti4[: trim + 1]))


def _f1ecac(ac: np.ndarray, n: int) -> float:
    thresh = 1.0 / math.e
    for i in range(n - 2):
        if ac[i + 1] < thresh:
            m = ac[i + 1] - ac[i]
            return float(i + (thresh - ac[i]) / m)
    return float(n)


def _first_min_ac(ac: np.ndarray, n: int) -> float:
    inner = ac[1:n - 1]
    minima = np.flatnonzero((inner < ac[:n - 2]) & (inner < ac[2:n]))
    return float(minima[0] + 1) if minima.size else float(n)


def _welch_rect(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Single-segment rectangular Welch PSD in angular-frequency units."""
    n = z.size
    nfft = _next_pow2(n)
    f = np.fft.rfft(z, nfft)
    p = (f.real * f.real + f.imag * f.imag) / n
    n_welch = nfft // 2 + 1
    p[1:n_welch - 1] *= 2.0
    s = p / (2.0 * math.pi)
    w = 2.0 * math.pi * np.arange(n_welch) / nfft
    return s, w, w[1] - w[0]


def _welch_area_5_1(s: np.ndarray, dw: float) -> float:
    return float(s[: s.size // 5].sum() * dw)


def _welch_centroid(s: np.ndarray, w: np.ndarray) -> float:
    cs = np.cumsum(s)
    half = cs[-1] * 0.5
    over = np.flatnonzero(cs > half)
    return float(w[over[0]]) if over.size else 0.0


def _local_simple_mean_resid(z: np.ndarray, train: int) -> np.ndarray:
    if train == 1:
        return np.diff(z)
    c = np.concatenate(([0.0], np.cumsum(z)))
    means = (c[train:] - c[:-train]) / train
    return z[train:] - means[: z.size - train]


def _local_simple_stderr(z: np.ndarray, train: int) -> float:
    res = _local_simple_mean_resid(z, train)
    return float(np.std(res, ddof=1))


def _trev(z: np.ndarray) -> float:
    d = np.diff(z)
    return float(np.mean(d * d * d))


def _histogram_ami_even(z: np.ndarray, tau: int = 2, n_bins: int = 5) -> float:
    y1 = z[:-tau]
    y2 = z[tau:]
    lo = float(z.min()) - 0.1
    hi = float(z.max()) + 0.1
    edges = np.linspace(lo, hi, n_bins + 1)
    b1 = np.searchsorted(edges, y1, side="right") - 1
    b2 = np.searchsorted(edges, y2, side="right") - 1
    np.clip(b1, 0, n_bins - 1, out=b1)
    np.clip(b2, 0, n_bins - 1, out=b2)
    joint = np.bincount(b1 * n_bins + b2, minlength=n_bins * n_bins).astype(np.float64)
    joint = joint.reshape(n_bins, n_bins)
    p = joint / joint.sum()
    pi = p.sum(axis=1, keepdims=True)
    pj = p.sum(axis=0, keepdims=True)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (pi * pj)[nz])))


def _auto_mutual_info_fmmi(z: np.ndarray) -> float:
    n = z.size
    tau = int(min(40, math.ceil(n / 2)))
    ami = np.empty(tau)
    for i in range(tau):
        lag = i + 1
        r = _pearson(z[:-lag], z[lag:])
        r = min(1.0, max(-1.0, r))
        ami[i] = -0.5 * math.log1p(-r * r) if abs(r) < 1.0 else math.inf
    for i in range(1, tau - 1):
        if ami[i] < ami[i - 1] and ami[i] < ami[i + 1]:
            return float(i)
    return float(tau)


def _pnn40(z: np.ndarray) -> float:
    d = np.abs(np.diff(z)) * 1000.0
    return float(np.mean(d > 40.0))


def _motif_three_hh(z: np.ndarray) -> float:
    g = _coarse_grain_quantile(z, 3)
    idx = (g[:-1] - 1) * 3 + (g[1:] - 1)
    p = np.bincount(idx, minlength=9).astype(np.float64) / idx.size
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def _tau_res_rat(z: np.ndarray, fz_y: int) -> float:
    res = np.diff(z)
    fz_res = _first_zero(_acf_fft(res), res.size)
    return float(fz_res) / float(fz_y)


def _embed2_dist_expfit_meandiff(z: np.ndarray, fz: int) -> float:
    n = z.size
    tau = fz
    if tau > n / 10.0:
        tau = n // 10
    m = n - tau - 1
    if m < 3:
        return math.nan
    d1 = z[1:m + 1] - z[:m]
    d2 = z[tau + 1:tau + 1 + m] - z[tau:tau + m]
    d = np.sqrt(d1 * d1 + d2 * d2)
    ell = float(d.mean())
    sd = float(np.std(d, ddof=1))
    if sd < 0.001:
        return 0.0
    n_bins = int(math.ceil((d.max() - d.min()) / (3.5 * sd / m ** (1.0 / 3.0))))
    counts, edges = _histcounts(d, n_bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    p = counts / m
    expf = np.exp(-centers / ell) / ell
    return float(np.mean(np.abs(p - expf)))


def _fluct_anal_prop_r1(z: np.ndarray, lag: int, how: str) -> float:
    n = z.size
    lin_low = math.log(5)
    lin_high = math.log(n // 2)
    step = (lin_high - lin_low) / 49.0
    taus = [int(round(math.exp(lin_low + i * step))) for i in range(50)]
    taus = sorted(set(taus))
    ntt = len(taus)
    if ntt < 12:
        return 0.0

    size_cs = n // lag
    y_cs = np.cumsum(z[::lag][:size_cs])

    fluct = np.empty(ntt)
    for i, tau in enumerate(taus):
        nbuf = size_cs // tau
        if nbuf == 0:
            return math.nan
        buf = y_cs[: nbuf * tau].reshape(nbuf, tau)
        x = np.arange(1.0, tau + 1.0)
        sx = x.sum()
        sxx = float((x * x).sum())
        sy = buf.sum(axis=1)
        sxy = buf @ x
        denom = tau * sxx - sx * sx
        slope = (tau * sxy - sx * sy) / denom
        intercept = (sy * sxx - sx * sxy) / denom
        resid = buf - (slope[:, None] * x[None, :] + intercept[:, None])
        if how == "rsrangefit":
            rng = resid.max(axis=1) - resid.min(axis=1)
            fluct[i] = math.sqrt(float((rng * rng).sum()) / nbuf)
        else:
            fluct[i] = math.sqrt(float((resid * resid).sum()) / (nbuf * tau))

    logtt = np.log(np.asarray(taus, dtype=np.float64))
    with np.errstate(divide="ignore"):
        logff = np.log(fluct)
    if not np.all(np.isfinite(logff)):
        return math.nan

    # Two-segment piecewise-linear fit in log-log space: the reported value is
    # the relative position of the first split minimizing the summed residual
    # norms of both segments (segments overlap at the split point).
    min_points = 6
    n_splits = ntt - 2 * min_points + 1
    sserr = np.empty(n_splits)
    for j, i in enumerate(range(min_points, ntt - min_points + 1)):
        sserr[j] = (_linfit_residual_norm(logtt[:i], logff[:i])
                    + _linfit_residual_norm(logtt[i - 1:], logff[i - 1:]))
    first = int(np.flatnonzero(sserr == sserr.min())[0])
    first_min_ind = first + min_points - 1
    return (first_min_ind + 1) / ntt


def _linfit_residual_norm(x: np.ndarray, y: np.ndarray) -> float:
    n = x.size
    sx = float(x.sum()); sy = float(y.sum())
    sxx = float((x * x).sum()); sxy = float((x * y).sum())
    denom = n * sxx - sx * sx
    if denom == 0.0:
        return 0.0
    slope = (n * sxy - sx * sy) / denom
    intercept = (sy * sxx - sx * sxy) / denom
    r = y - (slope * x + intercept)
    return math.sqrt(float((r * r).sum()))


def _transition_matrix_sumdiagcov(z: np.ndarray, fz: int) -> float:
    tau = max(fz, 1)
    y_down = z[::tau]
    n_down = y_down.size
    if n_down < 3:
        return math.nan
    g = _coarse_grain_quantile(y_down, 3)
    idx = (g[:-1] - 1) * 3 + (g[1:] - 1)
    t = (np.bincount(idx, minlength=9).astype(np.float64) / (n_down - 1)).reshape(3, 3)
    cov = np.cov(t, rowvar=False, ddof=1)
    return float(np.trace(cov))


def _spline_detrend(z: np.ndarray) -> np.ndarray:
    """Least-squares two-piece cubic spline (single interior knot at mid-span)."""
    n = z.size
    x = np.arange(n, dtype=np.float64)
    knot = (n - 1) / 2.0
    spl = LSQUnivariateSpline(x, z, t=[knot], k=3)
    return z - spl(x)


def _periodicity_wang(z: np.ndarray) -> float:
    th = 0.01
    n = z.size
    y_sub = _spline_detrend(z)
    ac_max = int(math.ceil(n / 3.0))
    acv = np.empty(ac_max)
    for tau in range(1, ac_max + 1):
        a = y_sub[:-tau]
        b = y_sub[tau:]
        am = a - a.mean()
        bm = b - b.mean()
        acv[tau - 1] = float((am * bm).sum()) / (a.size - 1)

    slope_in = acv[1:-1] - acv[:-2]
    slope_out = acv[2:] - acv[1:-1]
    troughs = np.flatnonzero((slope_in < 0) & (slope_out > 0)) + 1
    peaks = np.flatnonzero((slope_in > 0) & (slope_out < 0)) + 1
    for i_peak in peaks:
        the_peak = acv[i_peak]
        before = troughs[troughs < i_peak]
        if before.size == 0:
            continue
        the_trough = acv[before[-1]]
        if the_peak - the_trough < th or the_peak < 0:
            continue
        return float(i_peak)
    return 0.0


# ---------------------------------------------------------------------------
# assembly


def compute_catch22(series: np.ndarray) -> Catch22Vector:
    """All 22 features of a single series, in canonical order.

    A constant series yields an all-flagged vector. Very short series compute
    whatever is well defined and flag the rest.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError("compute_catch22 expects a 1-D series")
    if x.size < 2 or not np.all(np.isfinite(x)) or np.ptp(x) == 0.0:
        values = np.full(len(FEATURE_NAMES), np.nan)
        return Catch22Vector(values=values, nan_mask=np.ones(len(FEATURE_NAMES), bool))

    z = zscore(x)
    n = z.size
    ac = _acf_fft(z)
    fz = _first_zero(ac, n)
    s_w, w_w, dw = _welch_rect(z)

    thunks = (
        lambda: _histogram_mode(z, 5),
        lambda: _histogram_mode(z, 10),
        lambda: float(_longest_stretch(np.diff(z) < 0)),
        lambda: _outlier_include_mdrmd(z, 1.0),
        lambda: _outlier_include_mdrmd(z, -1.0),
        lambda: _f1ecac(ac, n),
        lambda: _first_min_ac(ac, n),
        lambda: _welch_area_5_1(s_w, dw),
        lambda: _welch_centroid(s_w, w_w),
        lambda: _local_simple_stderr(z, 3),
        lambda: _trev(z),
        lambda: _histogram_ami_even(z),
        lambda: _auto_mutual_info_fmmi(z),
        lambda: _pnn40(z),
        lambda: float(_longest_stretch(z[: n - 1] > z.mean())),
        lambda: _motif_three_hh(z),
        lambda: _tau_res_rat(z, fz),
        lambda: _embed2_dist_expfit_meandiff(z, fz),
        lambda: _fluct_anal_prop_r1(z, 2, "dfa"),
        lambda: _fluct_anal_prop_r1(z, 1, "rsrangefit"),
        lambda: _transition_matrix_sumdiagcov(z, fz),
        lambda: _periodicity_wang(z),
    )

    values = np.full(len(FEATURE_NAMES), np.nan)
    for i, thunk in enumerate(thunks):
        try:
            v = float(thunk())
        except Exception:
            # any kernel failure leaves the feature flagged invalid
            continue
        if math.isfinite(v):
            values[i] = v
    return Catch22Vector(values=values, nan_mask=np.isnan(values))
