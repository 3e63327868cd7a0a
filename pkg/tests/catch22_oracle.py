"""Independent reference implementations of the 22 canonical features.

Written straight from the feature definitions as a check on the package
implementation, deliberately taking different computational routes:
direct-correlation autocorrelation instead of FFT, polyfit-based line
fits instead of normal equations, a truncated-power spline basis instead
of a B-spline library call, and per-threshold recomputation instead of
prefix scans. Agreement between the two is what the conformance vectors
certify.

Everything here favors clarity over speed.
"""
import math

import numpy as np

ORACLE_NAMES = (
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


def oracle_zscore(x):
    x = np.asarray(x, dtype=float)
    return (x - x.mean()) / x.std()


def oracle_acf(z):
    """Autocorrelation for lags 0..n-1: global mean, biased normalization."""
    d = z - z.mean()
    full = np.correlate(d, d, mode="full")
    ac = full[d.size - 1:]
    return ac / ac[0]


def first_zero_crossing(ac, max_tau):
    for lag in range(min(max_tau, ac.size)):
        if ac[lag] <= 0.0:
            return lag
    return max_tau


def matlab_quantile(y, q):
    """Linear interpolation of the (k - 0.5)/n plotting positions."""
    s = np.sort(np.asarray(y, dtype=float))
    n = s.size
    if q <= 0.5 / n:
        return float(s[0])
    if q >= (n - 0.5) / n:
        return float(s[-1])
    pos = q * n - 0.5
    k = int(math.floor(pos))
    return float(s[k] + (pos - k) * (s[k + 1] - s[k]))


def symbolize_quantile(y, k):
    """Equiprobable k-symbol coarse graining, labels 1..k."""
    th = [matlab_quantile(y, i / k) for i in range(k + 1)]
    th[0] -= 1.0
    out = np.zeros(y.size, dtype=int)
    for i in range(k):
        out[(y > th[i]) & (y <= th[i + 1])] = i + 1
    return out


def histogram_mode(z, n_bins):
    counts, edges = np.histogram(z, bins=n_bins, range=(z.min(), z.max()))
    centers = 0.5 * (edges[:-1] + edges[1:])
    best = np.flatnonzero(counts == counts.max())
    return float(np.mean(centers[best]))


def longest_stretch(binary):
    """Longest run measured between terminator positions, the canonical way:
    a stretch ends at a zero or at the last position, and its length is the
    index distance from the previous terminator."""
    last_end = 0
    best = 0
    for i, b in enumerate(binary):
        if not b or i == binary.size - 1:
            best = max(best, i - last_end)
            last_end = i
    return float(best)


def outlier_include_mdrmd(z, positive):
    y = z if positive else -z
    n = y.size
    mx = float(y.max())
    if mx < 0.01:
        return 0.0
    n_thr = int(mx / 0.01) + 1
    dti1, dti3, dti4 = [], [], []
    for j in range(n_thr):
        thr = 0.01 * j
        r = np.flatnonzero(y >= thr) + 1.0
        if r.size > 1:
            dti1.append(float(np.mean(np.diff(r))))
        else:
            dti1.append(math.nan)
        dti3.append((r.size - 1) * 100.0 / n)
        dti4.append(float(np.median(r)) / (n / 2.0) - 1.0)
    dti1 = np.array(dti1)
    dti3 = np.array(dti3)
    dti4 = np.array(dti4)
    over = np.flatnonzero(dti3 > 2.0)
    mj = int(over[-1]) if over.size else 0
    bad = np.flatnonzero(np.isnan(dti1))
    fbi = int(bad[0]) if bad.size else n_thr - 1
    trim = min(mj, fbi)
    return float(np.median(dti4[: trim + 1]))


def f1ecac(ac, n):
    th = 1.0 / math.e
    for lag in range(n - 2):
        if ac[lag + 1] < th:
            return lag + (th - ac[lag]) / (ac[lag + 1] - ac[lag])
    return float(n)


def first_min_ac(ac, n):
    for lag in range(1, n - 1):
        if ac[lag] < ac[lag - 1] and ac[lag] < ac[lag + 1]:
            return float(lag)
    return float(n)


def welch_rect(z):
    """One rectangular segment; one-sided power density over angular freq."""
    n = z.size
    nfft = 1
    while nfft < n:
        nfft *= 2
    padded = np.zeros(nfft)
    padded[:n] = z
    spec = np.fft.fft(padded)
    n_w = nfft // 2 + 1
    p = np.abs(spec[:n_w]) ** 2 / n
    p[1:n_w - 1] *= 2.0
    s = p / (2.0 * math.pi)
    w = np.array([2.0 * math.pi * k / nfft for k in range(n_w)])
    return s, w


def welch_area_5_1(z):
    s, w = welch_rect(z)
    return float(np.sum(s[: s.size // 5]) * (w[1] - w[0]))


def welch_centroid(z):
    s, w = welch_rect(z)
    cs = np.cumsum(s)
    for i in range(s.size):
        if cs[i] > 0.5 * cs[-1]:
            return float(w[i])
    return 0.0


def local_mean_stderr(z, train):
    res = [z[i + train] - np.mean(z[i:i + train])
           for i in range(z.size - train)]
    return float(np.std(res, ddof=1))


def trev(z):
    return float(np.mean(np.diff(z) ** 3))


def histogram_ami_even(z, tau=2, n_bins=5):
    lo = z.min() - 0.1
    hi = z.max() + 0.1
    edges = np.linspace(lo, hi, n_bins + 1)
    joint = np.zeros((n_bins, n_bins))
    for a, b in zip(z[:-tau], z[tau:]):
        i = min(int((a - lo) / (hi - lo) * n_bins), n_bins - 1)
        j = min(int((b - lo) / (hi - lo) * n_bins), n_bins - 1)
        # guard against edge rounding: recompute against explicit edges
        while a < edges[i]:
            i -= 1
        while i + 1 < n_bins and a >= edges[i + 1]:
            i += 1
        while b < edges[j]:
            j -= 1
        while j + 1 < n_bins and b >= edges[j + 1]:
            j += 1
        joint[i, j] += 1.0
    p = joint / joint.sum()
    pi = p.sum(axis=1)
    pj = p.sum(axis=0)
    total = 0.0
    for i in range(n_bins):
        for j in range(n_bins):
            if p[i, j] > 0:
                total += p[i, j] * math.log(p[i, j] / (pi[i] * pj[j]))
    return float(total)


def auto_mutual_info_fmmi(z):
    n = z.size
    tau_max = int(min(40, math.ceil(n / 2)))
    ami = []
    for lag in range(1, tau_max + 1):
        a = z[:-lag]
        b = z[lag:]
        r = np.corrcoef(a, b)[0, 1]
        r = max(-1.0, min(1.0, r))
        ami.append(math.inf if abs(r) >= 1.0 else -0.5 * math.log(1 - r * r))
    for i in range(1, tau_max - 1):
        if ami[i] < ami[i - 1] and ami[i] < ami[i + 1]:
            return float(i)
    return float(tau_max)


def pnn40(z):
    d = np.abs(np.diff(z))
    return float(np.mean(d * 1000.0 > 40.0))


def motif_three_hh(z):
    g = symbolize_quantile(z, 3)
    p = np.zeros((3, 3))
    for a, b in zip(g[:-1], g[1:]):
        p[a - 1, b - 1] += 1.0
    p /= p.sum()
    h = 0.0
    for v in p.ravel():
        if v > 0:
            h -= v * math.log(v)
    return float(h)


def tau_res_rat(z):
    tau_y = first_zero_crossing(oracle_acf(z), z.size)
    res = np.diff(z)
    tau_r = first_zero_crossing(oracle_acf(res), res.size)
    return tau_r / tau_y


def embed2_dist_expfit_meandiff(z):
    n = z.size
    tau = first_zero_crossing(oracle_acf(z), n)
    if tau > n / 10.0:
        tau = n // 10
    m = n - tau - 1
    if m < 3:
        return math.nan
    d = np.array([math.hypot(z[i + 1] - z[i], z[i + tau + 1] - z[i + tau])
                  for i in range(m)])
    sd = float(np.std(d, ddof=1))
    if sd < 0.001:
        return 0.0
    ell = float(np.mean(d))
    n_bins = int(math.ceil((d.max() - d.min()) / (3.5 * sd / m ** (1 / 3))))
    counts, edges = np.histogram(d, bins=n_bins, range=(d.min(), d.max()))
    centers = 0.5 * (edges[:-1] + edges[1:])
    prob = counts / m
    pdf = np.exp(-centers / ell) / ell
    return float(np.mean(np.abs(prob - pdf)))


def _resid_norm(x, y):
    if x.size * float(np.var(x)) == 0.0:
        return 0.0
    coef = np.polyfit(x, y, 1)
    r = y - np.polyval(coef, x)
    return math.sqrt(float(np.sum(r * r)))


def fluct_anal_prop_r1(z, lag, how):
    n = z.size
    raw = [int(round(math.exp(v)))
           for v in np.linspace(math.log(5), math.log(n // 2), 50)]
    taus = sorted(set(raw))
    ntt = len(taus)
    if ntt < 12:
        return 0.0
    sub = z[::lag][: n // lag]
    y = np.cumsum(sub)
    log_f = []
    for tau in taus:
        nbuf = y.size // tau
        if nbuf == 0:
            return math.nan
        acc = 0.0
        xs = np.arange(1.0, tau + 1.0)
        for b in range(nbuf):
            seg = y[b * tau:(b + 1) * tau]
            coef = np.polyfit(xs, seg, 1)
            resid = seg - np.polyval(coef, xs)
            if how == "rsrangefit":
                acc += (resid.max() - resid.min()) ** 2
            else:
                acc += float(np.sum(resid * resid))
        if how == "rsrangefit":
            f = math.sqrt(acc / nbuf)
        else:
            f = math.sqrt(acc / (nbuf * tau))
        if f <= 0.0:
            return math.nan
        log_f.append(math.log(f))
    log_t = np.log(np.array(taus, dtype=float))
    log_f = np.array(log_f)
    min_pts = 6
    errs = []
    for i in range(min_pts, ntt - min_pts + 1):
        errs.append(_resid_norm(log_t[:i], log_f[:i])
                    + _resid_norm(log_t[i - 1:], log_f[i - 1:]))
    best = int(np.argmin(errs))
    return (best + min_pts) / ntt


def transition_matrix_sumdiagcov(z):
    tau = max(first_zero_crossing(oracle_acf(z), z.size), 1)
    y = z[::tau]
    if y.size < 3:
        return math.nan
    g = symbolize_quantile(y, 3)
    t = np.zeros((3, 3))
    for a, b in zip(g[:-1], g[1:]):
        t[a - 1, b - 1] += 1.0
    t /= (y.size - 1)
    col_means = t.mean(axis=0)
    centered = t - col_means
    cov = centered.T @ centered / (t.shape[0] - 1)
    return float(np.trace(cov))


def spline_detrend(z):
    """Least-squares cubic spline with one interior knot at mid-span,
    expressed in the truncated-power basis."""
    n = z.size
    x = np.arange(n, dtype=float) / max(n - 1, 1)
    knot = 0.5
    basis = np.column_stack([
        np.ones(n), x, x ** 2, x ** 3,
        np.where(x > knot, (x - knot) ** 3, 0.0),
    ])
    coef, *_ = np.linalg.lstsq(basis, z, rcond=None)
    return z - basis @ coef


def periodicity_wang(z):
    th = 0.01
    n = z.size
    y = spline_detrend(z)
    ac_max = int(math.ceil(n / 3.0))
    acv = np.empty(ac_max)
    for tau in range(1, ac_max + 1):
        a = y[:-tau]
        b = y[tau:]
        acv[tau - 1] = float(np.sum((a - a.mean()) * (b - b.mean()))) / (a.size - 1)
    troughs, peaks = [], []
    for i in range(1, ac_max - 1):
        if acv[i] < acv[i - 1] and acv[i] < acv[i + 1]:
            troughs.append(i)
        elif acv[i] > acv[i - 1] and acv[i] > acv[i + 1]:
            peaks.append(i)
    for ip in peaks:
        earlier = [t for t in troughs if t < ip]
        if not earlier:
            continue
        if acv[ip] < 0 or acv[ip] - acv[earlier[-1]] < th:
            continue
        return float(ip)
    return 0.0


def oracle_catch22(series):
    """All 22 reference values in canonical order; NaN where undefined."""
    x = np.asarray(series, dtype=float)
    if x.size < 2 or not np.all(np.isfinite(x)) or x.max() == x.min():
        return np.full(22, math.nan)
    z = oracle_zscore(x)
    n = z.size
    ac = oracle_acf(z)

    def diff_long0():
        # longest run of zeros in the (diff >= 0) binarization
        return longest_stretch(np.diff(z) < 0)

    def mean_long1():
        return longest_stretch(z[: n - 1] > z.mean())

    calls = (
        lambda: histogram_mode(z, 5),
        lambda: histogram_mode(z, 10),
        diff_long0,
        lambda: outlier_include_mdrmd(z, True),
        lambda: outlier_include_mdrmd(z, False),
        lambda: f1ecac(ac, n),
        lambda: first_min_ac(ac, n),
        lambda: welch_area_5_1(z),
        lambda: welch_centroid(z),
        lambda: local_mean_stderr(z, 3),
        lambda: trev(z),
        lambda: histogram_ami_even(z),
        lambda: auto_mutual_info_fmmi(z),
        lambda: pnn40(z),
        mean_long1,
        lambda: motif_three_hh(z),
        lambda: tau_res_rat(z),
        lambda: embed2_dist_expfit_meandiff(z),
        lambda: fluct_anal_prop_r1(z, 2, "dfa"),
        lambda: fluct_anal_prop_r1(z, 1, "rsrangefit"),
        lambda: transition_matrix_sumdiagcov(z),
        lambda: periodicity_wang(z),
    )
    out = np.full(22, math.nan)
    for i, call in enumerate(calls):
        try:
            v = float(call())
        except Exception:
            continue
        if math.isfinite(v):
            out[i] = v
    return out
