"""Monte Carlo estimation of functional means and distribution diagnostics.

Work is cut into fixed chunks of ``CHUNK`` paths; chunk i always draws from
``RngStream(seed, i)``. Chunk results are concatenated in chunk order, so the
output does not depend on how many workers ran them.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .analytic import (
    AnalyticResult,
    _is_cauchy,
    _is_one,
    _is_x,
    atom_mean,
    exchange_mean,
    functional_law,
    law_mean,
)
from .errors import DivergentMean, NonConcentrating, ParameterError, UnsupportedQuery
from .functionals import Composite, IntegralAtom, WeightedLinearAtom, eval_functional
from .numcore import Grid, RngStream, fit_loglog
from .spaces import Cauchy, Gaussian, sample

CHUNK = 2048
HIST_MAX_BINS = 512
DIVERGENCE_THRESHOLD = 0.5
_EPS = np.finfo(float).eps


def _chunks(N: int):
    return [(i, min(CHUNK, N - i * CHUNK)) for i in range(math.ceil(N / CHUNK))]


def collect(space, n: int, N: int, seed: int, fn: Callable, workers: int = 1) -> np.ndarray:
    """Apply ``fn`` to N sampled paths in chunks and return the per-path results in order."""
    if N < 1:
        raise ParameterError(f"N must be positive, got {N}")
    Grid(n)

    def run(job):
        index, rows = job
        smp = sample(space, n, RngStream(seed, index), size=rows)
        return np.asarray(fn(smp))

    jobs = _chunks(N)
    if workers <= 1:
        parts = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    return np.concatenate(parts, axis=0)


def functional_values(space, functional, n: int, N: int, seed: int, workers: int = 1) -> np.ndarray:
    grid = Grid(n)
    return collect(space, n, N, seed, lambda smp: eval_functional(functional, smp, grid), workers)


# ---------------------------------------------------------------------------
# analytic reference


def _is_linear_cauchy_atom(space, expr) -> bool:
    if not _is_cauchy(space):
        return False
    return (isinstance(expr, IntegralAtom) and _is_x(expr.g)) or (
        isinstance(expr, WeightedLinearAtom) and _is_one(expr.c)
    )


def analytic_reference(space, functional) -> AnalyticResult | None:
    """Best closed-form reference for the functional, or None when there is none.

    Concentrating pairs use the exchange formula. A composite h(Y) of a single
    atom whose law is known (Cauchy, Gaussian) is integrated against that law.
    """
    try:
        return exchange_mean(space, functional)
    except (UnsupportedQuery, DivergentMean):
        return None
    except NonConcentrating:
        pass
    if isinstance(functional, Composite):
        if len(functional.children) != 1 or isinstance(functional.children[0], Composite):
            return None
        try:
            law = functional_law(space, functional.children[0])
        except (UnsupportedQuery, DivergentMean):
            return None
        if not isinstance(law, (Cauchy, Gaussian)):
            return None
        h = functional.h
        try:
            m1 = law_mean(lambda y: h(y), law)
            m2 = law_mean(lambda y: h(y) ** 2, law)
        except DivergentMean:
            return None
        return AnalyticResult(m1, max(m2 - m1 * m1, 0.0), law, f"h integrated against the {type(law).__name__} law")
    try:
        return atom_mean(space, functional)
    except (UnsupportedQuery, DivergentMean):
        return None


# ---------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class EstimateReport:
    """Sample mean and unbiased variance of a functional, compared with its analytic mean."""

    mc_mean: float
    mc_var: float
    stderr: float
    N: int
    n: int
    analytic_mean: float | None = None
    analytic_var: float | None = None
    z_score: float | None = None
    median: float | None = None
    iqr: float | None = None
    heavy_tailed: bool = False
    method: str = ""


def summarize(values: np.ndarray, n: int, reference: AnalyticResult | None = None, heavy: bool = False,
              robust: bool = False) -> EstimateReport:
    values = np.asarray(values, dtype=float)
    N = values.size
    if N < 2:
        raise ParameterError("need at least 2 values")
    mean = float(np.mean(values))
    var = float(np.var(values, ddof=1))
    stderr = math.sqrt(var / N)
    a_mean = None if reference is None else reference.mean
    a_var = None if reference is None else reference.variance
    z = None
    if a_mean is not None and not heavy:
        z = (mean - a_mean) / stderr if stderr > 0 else (0.0 if mean == a_mean else math.copysign(math.inf, mean - a_mean))
    median = iqr = None
    if robust or heavy:
        q1, med, q3 = np.percentile(values, [25, 50, 75])
        median, iqr = float(med), float(q3 - q1)
    return EstimateReport(
        mean, var, stderr, N, n, a_mean, a_var, z, median, iqr, heavy, "" if reference is None else reference.method
    )


def estimate(space, functional, n: int, N: int, seed: int, workers: int = 1) -> EstimateReport:
    """Monte Carlo mean of the discretized functional over N paths at resolution n.

    Cauchy-space linear functionals are flagged heavy-tailed: the z-score is
    dropped and the median and interquartile range are reported instead.
    """
    if N < 2:
        raise ParameterError(f"N must be at least 2, got {N}")
    values = functional_values(space, functional, n, N, seed, workers)
    heavy = _is_linear_cauchy_atom(space, functional)
    return summarize(values, n, analytic_reference(space, functional), heavy, robust=_is_cauchy(space))


@dataclass(frozen=True)
class DecayFit:
    """Log-log fit of a per-n statistic."""

    slope: float
    intercept: float
    ns: tuple[int, ...]
    values: tuple[float, ...]
    floored: bool = False
    negative: bool = False


def _check_nlist(n_list):
    ns = [int(n) for n in n_list]
    if len(ns) < 3 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ParameterError(f"need at least 3 increasing resolutions, got {n_list}")
    return ns


def variance_decay(space, functional, n_list, N: int, seed: int, workers: int = 1) -> DecayFit:
    """Slope of log Var(Y_n) against log n; zero variances are floored at machine epsilon."""
    ns = _check_nlist(n_list)
    variances = [estimate(space, functional, n, N, seed, workers).mc_var for n in ns]
    floored = any(v < _EPS for v in variances)
    safe = [max(v, _EPS) for v in variances]
    slope, intercept = fit_loglog(ns, safe)
    return DecayFit(slope, intercept, tuple(ns), tuple(variances), floored)


@dataclass(frozen=True)
class DivergenceFit:
    exponent: float
    divergent: bool
    fit: DecayFit


def divergence_scan(space, functional, n_list, N: int, seed: int, workers: int = 1) -> DivergenceFit:
    """Growth exponent of E Y_n in n; above 0.5 the functional is classed as divergent."""
    ns = _check_nlist(n_list)
    means = [estimate(space, functional, n, N, seed, workers).mc_mean for n in ns]
    negative = any(m < 0 for m in means)
    mags = [abs(m) for m in means]
    floored = any(m < _EPS for m in mags)
    slope, intercept = fit_loglog(ns, [max(m, _EPS) for m in mags])
    fit = DecayFit(slope, intercept, tuple(ns), tuple(means), floored, negative)
    return DivergenceFit(slope, slope > DIVERGENCE_THRESHOLD, fit)


def ks_statistic(samples, density) -> float:
    """Kolmogorov-Smirnov distance between the empirical CDF of ``samples`` and ``density.cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    N = x.size
    if N < 100:
        raise ParameterError(f"KS statistic needs at least 100 samples, got {N}")
    F = np.asarray(density.cdf(x), dtype=float)
    i = np.arange(1, N + 1)
    return float(max(np.max(i / N - F), np.max(F - (i - 1) / N)))


@dataclass(frozen=True)
class ExchangeGap:
    gap: float
    stderr: float
    mc_mean: float
    predicted: float


def exchange_gap(space, composite: Composite, n: int, N: int, seed: int, workers: int = 1) -> ExchangeGap:
    """|MC mean of h(Y) - h(E Y)| with E Y taken from the analytic atom means."""
    if not isinstance(composite, Composite):
        raise ParameterError("exchange_gap needs a composite h(Y_1, .., Y_k)")
    means = [atom_mean(space, child).mean for child in composite.children]
    predicted = composite.h(*means)
    rep = estimate(space, composite, n, N, seed, workers)
    return ExchangeGap(abs(rep.mc_mean - predicted), rep.stderr, rep.mc_mean, predicted)


def empirical_cf(samples, t_grid) -> np.ndarray:
    """(1/N) sum_j exp(i t Y_j) for each t."""
    y = np.asarray(samples, dtype=float).ravel()
    if y.size < 100:
        raise ParameterError(f"empirical_cf needs at least 100 samples, got {y.size}")
    ts = np.atleast_1d(np.asarray(t_grid, dtype=float))
    return np.array([np.mean(np.cos(t * y)) + 1j * np.mean(np.sin(t * y)) for t in ts])


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    N: int


def histogram(samples, bins: int | None = None) -> Histogram:
    """Uniform-width histogram; default bin count is ceil(sqrt(N)) capped at 512."""
    y = np.asarray(samples, dtype=float).ravel()
    if y.size == 0:
        raise ParameterError("histogram needs samples")
    if bins is None:
        bins = min(math.ceil(math.sqrt(y.size)), HIST_MAX_BINS)
    lo, hi = float(y.min()), float(y.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(y, bins=bins, range=(lo, hi))
    return Histogram(edges, counts, int(y.size))


@dataclass(frozen=True)
class EventProbability:
    p: float
    lo: float
    hi: float
    hits: int
    N: int


def event_probability(values, lo: float, hi: float, confidence: float = 0.95) -> EventProbability:
    """Fraction of values in [lo, hi] with a Wilson score interval."""
    y = np.asarray(values, dtype=float).ravel()
    hits = int(np.count_nonzero((y >= lo) & (y <= hi)))
    ci = stats.binomtest(hits, y.size).proportion_ci(confidence_level=confidence, method="wilson")
    return EventProbability(hits / y.size, float(ci.low), float(ci.high), hits, int(y.size))
