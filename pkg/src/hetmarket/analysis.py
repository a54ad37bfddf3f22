"""Statistical estimators for simulated (or external) price series.

All functions are pure: they read their inputs, allocate their outputs, and
share no state, so they are safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TailFit",
    "DfaResult",
    "AnalysisReport",
    "log_returns",
    "tail_exponent",
    "dfa",
    "predictability",
    "price_stddev",
    "wealth_summary",
    "build_report",
    "build_report_from_series",
]

#: Fraction of the largest samples used for the tail fit.
TAIL_FRACTION = 0.05

#: Below this many tail points the fit is flagged unreliable.
MIN_TAIL_POINTS = 50

#: Number of logarithmic bins for the diagnostic density regression.
N_LOG_BINS = 12


def log_returns(prices) -> np.ndarray:
    """Log returns ``ln(p[t+1]/p[t])`` of a positive price series."""
    p = np.asarray(prices, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise ValueError("need a 1-d series of at least 2 prices")
    if not np.all(p > 0):
        raise ValueError("prices must be positive")
    return np.log(p[1:] / p[:-1])


@dataclass
class TailFit:
    """Power-law tail fit of |R|: density exponent ``gamma`` and diagnostics.

    ``gamma`` comes from the Hill estimator over the top ``TAIL_FRACTION``
    order statistics; ``gamma_binned`` and ``r_squared`` from a log-binned
    density regression over the same range, kept as a cross-check only.
    ``reliable`` is False when the tail has fewer than ``MIN_TAIL_POINTS``
    points or no spread.
    """

    gamma: float
    xmin: float
    xmax: float
    r_squared: float
    n_tail: int
    reliable: bool
    gamma_binned: float


def tail_exponent(abs_returns, tail_fraction=TAIL_FRACTION) -> TailFit:
    """Estimate the tail exponent gamma of ``P(|R|) ~ |R|^-gamma``.

    Hill estimator on the top ``tail_fraction`` of the sample: with tail mean
    ``m = mean(ln(x_i/xmin))`` over the ``k`` largest values and ``xmin`` the
    (k+1)-th largest, the survival-function index is ``1/m`` and the density
    exponent ``gamma = 1 + 1/m``. Degenerate tails (too few points, zero
    spread, or non-positive xmin) are flagged unreliable instead of raising.
    """
    x = np.asarray(abs_returns, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("need a non-empty 1-d sample")
    if np.any(x < 0):
        raise ValueError("absolute returns cannot be negative")

    n = x.size
    k = int(n * tail_fraction)
    order = np.sort(x)[::-1]

    gamma = math.nan
    xmin = float(order[min(k, n - 1)])
    xmax = float(order[0])
    reliable = k >= MIN_TAIL_POINTS
    if k >= 1 and xmin > 0:
        tail_mean = float(np.mean(np.log(order[:k] / xmin)))
        if tail_mean > 0:
            gamma = 1.0 + 1.0 / tail_mean
        else:
            reliable = False  # all tail points identical
    else:
        reliable = False

    gamma_binned, r_squared = _binned_density_slope(x, xmin, xmax)
    return TailFit(
        gamma=gamma,
        xmin=xmin,
        xmax=xmax,
        r_squared=r_squared,
        n_tail=k,
        reliable=reliable,
        gamma_binned=gamma_binned,
    )


def _binned_density_slope(x, xmin, xmax):
    """Log-binned density regression over [xmin, xmax]; (-slope, r^2)."""
    if not (xmin > 0 and xmax > xmin):
        return math.nan, math.nan
    edges = np.geomspace(xmin, xmax, N_LOG_BINS + 1)
    tail = x[(x >= xmin) & (x <= xmax)]
    counts, _ = np.histogram(tail, bins=edges)
    widths = np.diff(edges)
    centers = np.sqrt(edges[:-1] * edges[1:])
    keep = counts > 0
    if keep.sum() < 3:
        return math.nan, math.nan
    density = counts[keep] / (widths[keep] * tail.size)
    lx = np.log(centers[keep])
    ly = np.log(density)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else math.nan
    return float(-slope), r2


@dataclass
class DfaResult:
    """First-order detrended fluctuation analysis of one series."""

    scales: np.ndarray
    fluctuation: np.ndarray
    hurst: float
    r_squared: float


def dfa(series) -> DfaResult:
    """DFA-1 with non-overlapping windows at power-of-two scales.

    The profile is the cumulative sum of the demeaned series. For each scale
    S in {4, 8, ..., len/4} the profile splits into len//S windows (tail
    remainder discarded), a linear trend is removed per window, and F(S) is
    the RMS residual over all windows. The Hurst exponent is the slope of
    log F against log S.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("need a 1-d series")
    n = x.size
    if n < 64:
        raise ValueError(f"need at least 64 points, got {n}")

    profile = np.cumsum(x - x.mean())
    scales = []
    s = 4
    while s <= n // 4:
        scales.append(s)
        s *= 2

    flucts = np.empty(len(scales))
    for i, s in enumerate(scales):
        n_win = n // s
        seg = profile[: n_win * s].reshape(n_win, s)
        tc = np.arange(s, dtype=np.float64)
        tc -= tc.mean()
        denom = float(np.sum(tc * tc))
        seg_mean = seg.mean(axis=1, keepdims=True)
        slope = (seg * tc).sum(axis=1, keepdims=True) / denom
        resid = seg - seg_mean - slope * tc
        flucts[i] = math.sqrt(float(np.mean(resid * resid)))

    if np.any(flucts <= 0):
        raise ValueError("zero detrended fluctuation (constant series)")

    log_s = np.log(scales)
    log_f = np.log(flucts)
    slope, intercept = np.polyfit(log_s, log_f, 1)
    resid = log_f - (slope * log_s + intercept)
    ss_tot = float(np.sum((log_f - log_f.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else math.nan
    return DfaResult(
        scales=np.asarray(scales, dtype=np.int64),
        fluctuation=flucts,
        hurst=float(slope),
        r_squared=r2,
    )


def predictability(patterns, excess_demand) -> float:
    """Frequency-weighted mean squared conditional imbalance.

    ``H = sum_mu (c_mu/T) * mean(A | mu)^2`` where ``c_mu`` counts the ticks
    whose pre-tick history was ``mu``. Zero for a market whose imbalance is
    unpredictable from the history; invariant under any reordering of ticks
    within a pattern class.
    """
    p = np.asarray(patterns)
    a = np.asarray(excess_demand, dtype=np.float64)
    if p.shape != a.shape or p.ndim != 1:
        raise ValueError("patterns and excess_demand must be equal-length 1-d")
    if p.size == 0:
        raise ValueError("need at least one tick")
    _, inv = np.unique(p, return_inverse=True)
    counts = np.bincount(inv)
    sums = np.bincount(inv, weights=a)
    means = sums / counts
    return float(np.sum(counts * means * means) / p.size)


def price_stddev(prices) -> float:
    """Population standard deviation of a raw price series."""
    p = np.asarray(prices, dtype=np.float64)
    if p.size < 2:
        raise ValueError("need at least 2 prices")
    return float(np.std(p))


def _realized(ledgers) -> np.ndarray:
    vals = [getattr(l, "realized", l) for l in ledgers]
    return np.asarray(vals, dtype=np.float64)


def wealth_summary(pair_ledgers, ref_ledgers):
    """Mean realized wealth per population; NaN marks an empty population."""
    pair = _realized(pair_ledgers)
    ref = _realized(ref_ledgers)
    w_pair = float(pair.mean()) if pair.size else math.nan
    w_ref = float(ref.mean()) if ref.size else math.nan
    return w_pair, w_ref


def _dfa_or_degenerate(series) -> DfaResult:
    """DFA result, or a NaN placeholder for series with zero fluctuation.

    A frozen market produces constant prices; its volatility and wealth are
    still meaningful, so reports must not fail wholesale there.
    """
    try:
        return dfa(series)
    except ValueError:
        return DfaResult(
            scales=np.zeros(0, dtype=np.int64),
            fluctuation=np.zeros(0),
            hurst=math.nan,
            r_squared=math.nan,
        )


@dataclass
class AnalysisReport:
    """All measured-segment statistics of one run.

    ``predictability`` is None when the input had no imbalance information
    (external price-only series). Estimates that are undefined for the
    segment (e.g. the Hurst exponent of a frozen, constant-price market)
    are NaN.
    """

    sigma_p: float
    predictability: float | None
    gamma_abs: TailFit
    dfa_returns: DfaResult
    dfa_abs_returns: DfaResult
    w_pair: float
    w_ref: float
    n_ticks: int
    # mark-to-market view (realized + holdings * final price); informational
    # only and never mixed into the realized wealth means above
    w_pair_mtm: float | None = None
    w_ref_mtm: float | None = None

    def to_keyvalues(self):
        """Flatten into (key, value) pairs for the text report."""
        g = self.gamma_abs
        items = [
            ("n_ticks", self.n_ticks),
            ("sigma_p", self.sigma_p),
            ("predictability", self.predictability),
            ("gamma_abs", g.gamma),
            ("gamma_abs_xmin", g.xmin),
            ("gamma_abs_xmax", g.xmax),
            ("gamma_abs_n_tail", g.n_tail),
            ("gamma_abs_reliable", g.reliable),
            ("gamma_abs_binned", g.gamma_binned),
            ("gamma_abs_r_squared", g.r_squared),
            ("hurst_returns", self.dfa_returns.hurst),
            ("hurst_returns_r_squared", self.dfa_returns.r_squared),
            ("hurst_abs", self.dfa_abs_returns.hurst),
            ("hurst_abs_r_squared", self.dfa_abs_returns.r_squared),
            ("w_pair", self.w_pair),
            ("w_ref", self.w_ref),
            ("w_pair_mtm", self.w_pair_mtm),
            ("w_ref_mtm", self.w_ref_mtm),
        ]
        return [(k, v) for k, v in items if v is not None]


def build_report_from_series(prices, excess_demand=None, memory=3) -> AnalysisReport:
    """Compute a report from a bare price series (e.g. an external CSV).

    Without ``excess_demand`` the predictability is omitted. With it, the
    history patterns are reconstructed from the signs of the price changes
    inside the series itself, so the first ``memory + 1`` rows carry no
    pattern and are skipped for the predictability average. Wealth fields are
    NaN (no ledgers exist for an external series).
    """
    p = np.asarray(prices, dtype=np.float64)
    if p.ndim != 1 or p.size < 65:
        raise ValueError(
            f"need at least 65 prices for analysis, got {p.size}"
        )
    if not np.all(p > 0):
        raise ValueError("prices must be positive")
    returns = np.log(p[1:] / p[:-1])
    abs_returns = np.abs(returns)

    h = None
    if excess_demand is not None:
        a = np.asarray(excess_demand, dtype=np.float64)
        if a.shape != p.shape:
            raise ValueError("excess_demand must match the price series")
        if p.size >= memory + 2:
            bits = (p[1:] >= p[:-1]).astype(np.int64)
            windows = np.lib.stride_tricks.sliding_window_view(bits, memory)
            weights = 1 << np.arange(memory - 1, -1, -1, dtype=np.int64)
            codes = windows @ weights
            # row j's decision pattern ends with the change into row j-1
            h = predictability(codes[: p.size - memory - 1], a[memory + 1:])

    return AnalysisReport(
        sigma_p=price_stddev(p),
        predictability=h,
        gamma_abs=tail_exponent(abs_returns),
        dfa_returns=_dfa_or_degenerate(returns),
        dfa_abs_returns=_dfa_or_degenerate(abs_returns),
        w_pair=math.nan,
        w_ref=math.nan,
        n_ticks=int(p.size),
    )


def build_report(output) -> AnalysisReport:
    """Compute the full report from a RunOutput's measured segment."""
    prices = output.measured_prices
    if prices.size < 65:
        raise ValueError(
            f"measured segment too short for analysis ({prices.size} ticks; "
            "need at least 65)"
        )
    returns = np.log(prices[1:] / prices[:-1])
    abs_returns = np.abs(returns)
    state = output.state
    w_pair, w_ref = wealth_summary(state.pair_cash, state.ref_cash)
    final = float(output.prices[-1])
    w_pair_mtm, w_ref_mtm = wealth_summary(
        state.pair_cash + state.pair_hold * final,
        state.ref_cash + state.ref_hold * final,
    )
    return AnalysisReport(
        sigma_p=price_stddev(prices),
        predictability=predictability(
            output.measured_patterns, output.measured_excess
        ),
        gamma_abs=tail_exponent(abs_returns),
        dfa_returns=_dfa_or_degenerate(returns),
        dfa_abs_returns=_dfa_or_degenerate(abs_returns),
        w_pair=w_pair,
        w_ref=w_ref,
        n_ticks=int(prices.size),
        w_pair_mtm=w_pair_mtm,
        w_ref_mtm=w_ref_mtm,
    )
