"""Grid bookkeeping, seeded random streams, quadrature and log-log fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import ConvergenceError, DomainError, ParameterError

DEFAULT_TOL = 1e-10
MAX_DEPTH = 60
MAX_EVALS = 4_000_000
# Gaussian weight is truncated at this many standard deviations (tail mass ~1.2e-15).
GAUSS_CUTOFF = 8.0

_MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class Grid:
    """Uniform grid t_k = k/n, k = 1..n, on (0, 1]."""

    n: int

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ParameterError(f"grid resolution must be a positive integer, got {self.n!r}")

    @property
    def step(self) -> Fraction:
        # kept exact so that step * n == 1 holds without rounding
        return Fraction(1, int(self.n))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def points(self) -> np.ndarray:
        return np.arange(1, self.n + 1, dtype=float) / self.n

    def snap(self, t: float, has_origin: bool = False) -> tuple[int, float]:
        """Index of the grid node nearest to ``t`` (ties go to the lower node).

        Node 0 (t = 0) only exists when ``has_origin`` is set.
        """
        if not 0.0 <= t <= 1.0:
            raise ParameterError(f"t must lie in [0, 1], got {t}")
        k = math.ceil(t * self.n - 0.5)
        k = min(max(k, 0 if has_origin else 1), self.n)
        return k, abs(t - k / self.n)


# ---------------------------------------------------------------------------
# random streams


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer; a 64-bit avalanche hash."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_key(seed: int, stream_index: int) -> int:
    """Mix a stream index into a seed.

    The key of stream ``i`` is ``splitmix64(seed ^ splitmix64(i))``. Work split
    over workers uses one stream index per chunk, so a serial run that walks
    the chunks in order reproduces the parallel result exactly.
    """
    if stream_index < 0:
        raise ParameterError("stream_index must be non-negative")
    return splitmix64((int(seed) & _MASK64) ^ splitmix64(int(stream_index)))


class RngStream:
    """Deterministic stream of draws identified by ``(seed, stream_index)``.

    Raw 64-bit words come from PCG64; every distribution is derived from the
    53-bit uniform below, so a given build reproduces draws bit for bit.
    A stream is owned by one worker at a time.
    """

    def __init__(self, seed: int, stream_index: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_index = int(stream_index)
        self._bitgen = np.random.PCG64(derive_key(self.seed, self.stream_index))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_index={self.stream_index})"

    def uniform01(self, size=None):
        """Uniform draws on [0, 1) with 53 random bits each."""
        if size is None:
            return (self._bitgen.random_raw() >> 11) * 2.0**-53
        raw = self._bitgen.random_raw(size)
        return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def gaussian(self, mu: float = 0.0, sigma: float = 1.0, size=None):
        """Normal draws by Box-Muller on pairs of uniforms."""
        if not sigma > 0:
            raise ParameterError(f"sigma must be positive, got {sigma}")
        count = 1 if size is None else int(np.prod(size))
        pairs = (count + 1) // 2
        u1 = self.uniform01(pairs)
        u2 = self.uniform01(pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u1))
        angle = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        z = mu + sigma * z[:count]
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def exponential(self, rate: float = 1.0, size=None):
        """Exponential draws with the given rate, by inversion."""
        if not rate > 0:
            raise ParameterError(f"exponential rate must be positive, got {rate}")
        u = self.uniform01(size)
        return -np.log1p(-u) / rate

    def cauchy(self, size=None):
        """Standard Cauchy draws as tan(pi (U - 1/2))."""
        u = self.uniform01(size)
        return np.tan(np.pi * (u - 0.5))


def draw(kind: str, rng: RngStream, size=None, **params):
    """Draw from a named law: ``uniform01``, ``gaussian``, ``exponential`` or ``cauchy``.

    >>> rng = RngStream(7)
    >>> 0.0 <= draw("uniform01", rng) < 1.0
    True
    """
    if kind == "uniform01":
        return rng.uniform01(size)
    if kind == "gaussian":
        return rng.gaussian(params.get("mu", 0.0), params.get("sigma", 1.0), size)
    if kind == "exponential":
        return rng.exponential(params.get("rate", 1.0), size)
    if kind == "cauchy":
        return rng.cauchy(size)
    raise ParameterError(f"unknown distribution kind {kind!r}")


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadResult:
    value: float
    est_error: float
    evaluations: int


def _checked(f, x):
    try:
        v = float(f(x))
    except (DomainError, ZeroDivisionError, OverflowError, ValueError):
        return math.nan
    return v


def _endpoint(f, x, inward):
    # Endpoints may be removable or integrable singularities; nudge inward,
    # and drop the value if it is still not finite.
    v = _checked(f, x)
    if math.isfinite(v):
        return v
    v = _checked(f, x + inward)
    return v if math.isfinite(v) else 0.0


def quad_adaptive(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = DEFAULT_TOL,
    max_depth: int = MAX_DEPTH,
    min_depth: int = 4,
    max_evals: int = MAX_EVALS,
) -> QuadResult:
    """Adaptive Simpson quadrature of ``f`` over ``[a, b]``.

    Panels are accepted when the two-level Simpson difference is below
    15 times their share of ``tol``; a Richardson correction is added to each
    accepted panel. Panels that reach ``max_depth`` are accepted as they are
    and their error estimate counts against ``tol``.

    Raises:
        ParameterError: ``a > b`` or ``tol <= 0``.
        ConvergenceError: the evaluation budget ran out or the capped panels
            carry more than ``tol`` of estimated error. The exception keeps the
            best estimate.
    """
    if not tol > 0:
        raise ParameterError(f"tol must be positive, got {tol}")
    if a > b:
        raise ParameterError(f"need a <= b, got [{a}, {b}]")
    if a == b:
        return QuadResult(0.0, 0.0, 0)

    width = b - a
    nudge = width * 1e-12
    fa = _endpoint(f, a, nudge)
    fb = _endpoint(f, b, -nudge)
    m = 0.5 * (a + b)
    fm = _checked(f, m)
    evals = 3
    whole = width / 6.0 * (fa + 4.0 * fm + fb)

    total = 0.0
    err_total = 0.0
    capped_err = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s_whole, loc_tol, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        h = hi - lo
        flm = _checked(f, 0.5 * (lo + mid))
        frm = _checked(f, 0.5 * (mid + hi))
        evals += 2
        if not (math.isfinite(flm) and math.isfinite(frm) and math.isfinite(fmid)):
            raise ConvergenceError(
                f"integrand is not finite inside [{lo}, {hi}]", total, math.inf
            )
        s_left = h / 12.0 * (flo + 4.0 * flm + fmid)
        s_right = h / 12.0 * (fmid + 4.0 * frm + fhi)
        diff = s_left + s_right - s_whole
        if depth >= min_depth and abs(diff) <= 15.0 * loc_tol:
            total += s_left + s_right + diff / 15.0
            err_total += abs(diff) / 15.0
            continue
        if depth >= max_depth:
            total += s_left + s_right + diff / 15.0
            err_total += abs(diff) / 15.0
            capped_err += abs(diff) / 15.0
            continue
        if evals > max_evals:
            raise ConvergenceError(
                f"evaluation budget {max_evals} exhausted", total + s_left + s_right, math.inf
            )
        stack.append((mid, hi, fmid, frm, fhi, s_right, 0.5 * loc_tol, depth + 1))
        stack.append((lo, mid, flo, flm, fmid, s_left, 0.5 * loc_tol, depth + 1))

    if capped_err > tol:
        raise ConvergenceError(
            f"depth cap {max_depth} reached with estimated error {capped_err:.3g}",
            total,
            err_total,
        )
    return QuadResult(total, err_total, evals)


def quad_exp_weighted(g: Callable[[float], float], rate: float, tol: float = DEFAULT_TOL) -> QuadResult:
    """Integral of g(x) * rate * exp(-rate x) over [0, inf).

    Computed on [0, 1] after substituting u = exp(-rate x), which turns the
    weight into du.
    """
    if not rate > 0:
        raise ParameterError(f"rate must be positive, got {rate}")

    def mapped(u):
        return g(-math.log(u) / rate)

    return quad_adaptive(mapped, 0.0, 1.0, tol)


_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def quad_gauss_weighted(
    g: Callable[[float], float], mu: float = 0.0, sigma: float = 1.0, tol: float = DEFAULT_TOL
) -> QuadResult:
    """Expectation of g(sigma Z + mu) for standard normal Z, truncated at |Z| = 8."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")

    def weighted(x):
        return g(sigma * x + mu) * _INV_SQRT_2PI * math.exp(-0.5 * x * x)

    return quad_adaptive(weighted, -GAUSS_CUTOFF, GAUSS_CUTOFF, tol)


# ---------------------------------------------------------------------------
# regression


def fit_loglog(xs, ys) -> tuple[float, float]:
    """Least-squares line through (ln x, ln y); returns (slope, intercept)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 3:
        raise ParameterError("fit_loglog needs at least 3 paired points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ParameterError("fit_loglog needs positive values")
    slope, intercept = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope), float(intercept)
