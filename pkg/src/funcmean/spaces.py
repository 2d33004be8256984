"""Space models: discretized samplers and limiting coordinate densities.

Paths live on the grid t_k = k/n, k = 1..n. Samplers are batched: with
``size=N`` every array gains a leading axis of length N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special

from .errors import IllPosedConstraint, ParameterError, UnsupportedQuery
from .exprlang import ScalarFn, parse_scalar
from .numcore import Grid, RngStream

WELL_POSED_GRID = 1024
MAX_REJECTION_ROUNDS = 1000


def _fn(f) -> ScalarFn:
    return parse_scalar(f) if isinstance(f, str) else f


# ---------------------------------------------------------------------------
# space models


@dataclass(frozen=True)
class BoundedUniform:
    """Paths with iid uniform values on [m1, m2]."""

    m1: float = 0.0
    m2: float = 1.0
    kind = "bounded_uniform"

    def __post_init__(self):
        if not self.m1 < self.m2:
            raise ParameterError(f"need m1 < m2, got {self.m1}, {self.m2}")


@dataclass(frozen=True)
class IidDensity:
    """Paths with iid values from ``dist`` in {gaussian, cauchy, uniform}."""

    dist: str = "gaussian"
    mu: float = 0.0
    sigma: float = 1.0
    lo: float = 0.0
    hi: float = 1.0
    kind = "iid_density"

    def __post_init__(self):
        if self.dist not in ("gaussian", "cauchy", "uniform"):
            raise ParameterError(f"unknown iid distribution {self.dist!r}")
        if self.dist == "gaussian" and not self.sigma > 0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")
        if self.dist == "uniform" and not self.lo < self.hi:
            raise ParameterError(f"need lo < hi, got {self.lo}, {self.hi}")


@dataclass(frozen=True)
class LayerSimplex:
    """Level-set measures z_1..z_n of a function, uniform on the probability simplex."""

    kind = "layer_simplex"


@dataclass(frozen=True)
class DerivConstrained:
    """Paths with x(0) = 0 and derivative in [0, 1], derivative values iid uniform."""

    kind = "deriv_constrained"


@dataclass(frozen=True)
class Codim1:
    """Nonnegative paths on the hyperplane (1/n) sum a(t_k) x_k = s."""

    a: ScalarFn
    s: float
    kind = "codim1"

    def __post_init__(self):
        object.__setattr__(self, "a", _fn(self.a))
        if not self.s > 0:
            raise ParameterError(f"s must be positive, got {self.s}")


@dataclass(frozen=True)
class Codim2:
    """Nonnegative paths with (1/n) sum a_k x_k = r and (1/n) sum b_k x_k = s."""

    a: ScalarFn
    b: ScalarFn
    r: float
    s: float
    kind = "codim2"

    def __post_init__(self):
        object.__setattr__(self, "a", _fn(self.a))
        object.__setattr__(self, "b", _fn(self.b))


@dataclass(frozen=True)
class Ball2:
    """Paths uniform in the discrete L2 ball (1/n) sum x_k^2 <= R^2."""

    R: float = 1.0
    kind = "ball2"

    def __post_init__(self):
        if not self.R > 0:
            raise ParameterError(f"R must be positive, got {self.R}")


@dataclass(frozen=True)
class CauchySpace:
    """Paths with iid standard Cauchy values."""

    kind = "cauchy"


@dataclass(frozen=True)
class WienerSpace:
    """Discretized Brownian motion: x_0 = 0, increments iid N(0, 1/n)."""

    kind = "wiener"


SpaceModel = Union[
    BoundedUniform, IidDensity, LayerSimplex, DerivConstrained, Codim1, Codim2, Ball2, CauchySpace, WienerSpace
]

SPACE_KINDS = {
    cls.kind: cls
    for cls in (
        BoundedUniform,
        IidDensity,
        LayerSimplex,
        DerivConstrained,
        Codim1,
        Codim2,
        Ball2,
        CauchySpace,
        WienerSpace,
    )
}

# spaces whose integral functionals concentrate at their mean
CONCENTRATING = ("bounded_uniform", "iid_density", "layer_simplex", "deriv_constrained", "codim1", "codim2", "ball2")


def describe(space) -> str:
    """Short text form, e.g. ``ball2(R=2)``."""
    parts = []
    for name in getattr(space, "__dataclass_fields__", {}):
        v = getattr(space, name)
        parts.append(f"{name}={v}")
    return f"{space.kind}({', '.join(parts)})"


# ---------------------------------------------------------------------------
# samples


@dataclass(frozen=True)
class PathSample:
    """Path values x_1..x_n (last axis) and x_0 when the model defines it."""

    values: np.ndarray
    x0: np.ndarray | None = None
    rejection_rate: float = 0.0

    @property
    def n(self) -> int:
        return self.values.shape[-1]


@dataclass(frozen=True)
class LayerSample:
    """Level-set weights z_1..z_n, nonnegative and summing to 1."""

    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.weights.shape[-1]


@dataclass(frozen=True)
class DerivSample:
    """Derivative values z_1..z_n in [0, 1]; the path is their running mean times k/n."""

    deriv: np.ndarray

    @property
    def n(self) -> int:
        return self.deriv.shape[-1]

    @property
    def values(self) -> np.ndarray:
        return np.cumsum(self.deriv, axis=-1) / self.n

    @property
    def path(self) -> np.ndarray:
        return self.values

    @property
    def x0(self) -> np.ndarray:
        return np.zeros(self.deriv.shape[:-1])


Sample = Union[PathSample, LayerSample, DerivSample]


def _min_n(space) -> int:
    return 3 if isinstance(space, Codim2) else 2


def sample(space, n: int, rng: RngStream, size: int | None = None) -> Sample:
    """Draw one discretized element of ``space`` (or ``size`` of them).

    Raises:
        ParameterError: n below the model minimum (2, or 3 for Codim2).
        IllPosedConstraint: Codim2 data fail the well-posedness check.
    """
    Grid(n)
    if n < _min_n(space):
        raise ParameterError(f"{space.kind} needs n >= {_min_n(space)}, got {n}")
    rows = 1 if size is None else int(size)
    out = _SAMPLERS[type(space)](space, n, rng, rows)
    if size is None:
        out = _squeeze(out)
    return out


def _squeeze(s):
    if isinstance(s, PathSample):
        return PathSample(s.values[0], None if s.x0 is None else s.x0[0], s.rejection_rate)
    if isinstance(s, LayerSample):
        return LayerSample(s.weights[0])
    return DerivSample(s.deriv[0])


def _with_origin(draws):
    return PathSample(draws[:, 1:], draws[:, 0])


def _sample_bounded(space, n, rng, rows):
    u = rng.uniform01((rows, n + 1))
    return _with_origin(space.m1 + (space.m2 - space.m1) * u)


def _sample_iid(space, n, rng, rows):
    if space.dist == "gaussian":
        draws = rng.gaussian(space.mu, space.sigma, (rows, n + 1))
    elif space.dist == "cauchy":
        draws = rng.cauchy((rows, n + 1))
    else:
        draws = space.lo + (space.hi - space.lo) * rng.uniform01((rows, n + 1))
    return _with_origin(draws)


def _simplex(rng, rows, n):
    e = rng.exponential(1.0, (rows, n))
    return e / e.sum(axis=1, keepdims=True)


def _sample_layer(space, n, rng, rows):
    return LayerSample(_simplex(rng, rows, n))


def _sample_deriv(space, n, rng, rows):
    return DerivSample(rng.uniform01((rows, n)))


def _grid_values(f: ScalarFn, n: int) -> np.ndarray:
    return f.vec(Grid(n).points)


def _sample_codim1(space, n, rng, rows):
    a = _grid_values(space.a, n)
    if np.any(a <= 0):
        raise ParameterError("codim1 weight a(t) must be positive on the grid")
    u = _simplex(rng, rows, n) * (n * space.s)
    return PathSample(u / a)


def codim2_reduction(space: Codim2, n: int):
    """Coefficients of the single constraint left after eliminating x_n.

    Returns ``(q, rhs)`` with ``sum_{k<n} q_k x_k = rhs``, where
    q_k = a_k b_n - a_n b_k and rhs = n (b_n r - a_n s).
    """
    a = _grid_values(space.a, n)
    b = _grid_values(space.b, n)
    q = a[:-1] * b[-1] - a[-1] * b[:-1]
    rhs = n * (b[-1] * space.r - a[-1] * space.s)
    return q, rhs, a, b


def _sample_codim2(space, n, rng, rows):
    report = well_posed(space)
    if not report:
        raise IllPosedConstraint("; ".join(report.diagnostics))
    q, rhs, a, b = codim2_reduction(space, n)
    w = q / rhs
    if np.any(w <= 0):
        raise IllPosedConstraint(f"reduced coefficients change sign at n={n}")
    # the last coordinate is recovered from whichever constraint has a usable weight
    use_a = abs(a[-1]) >= abs(b[-1])
    last_w, last_c = (a, space.r) if use_a else (b, space.s)
    out = np.empty((rows, n))
    filled = 0
    drawn = 0
    rounds = 0
    while filled < rows:
        rounds += 1
        if rounds > MAX_REJECTION_ROUNDS:
            raise IllPosedConstraint(f"no nonnegative x_n after {drawn} proposals")
        want = rows - filled
        x = _simplex(rng, want, n - 1) / w
        xn = (n * last_c - x @ last_w[:-1]) / last_w[-1]
        drawn += want
        ok = xn >= 0
        k = int(ok.sum())
        out[filled : filled + k, :-1] = x[ok]
        out[filled : filled + k, -1] = xn[ok]
        filled += k
    return PathSample(out, None, 1.0 - rows / drawn)


def _sample_ball(space, n, rng, rows):
    g = rng.gaussian(0.0, 1.0, (rows, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radius = math.sqrt(n) * space.R * rng.uniform01((rows, 1)) ** (1.0 / n)
    return PathSample(g * radius)


def _sample_cauchy(space, n, rng, rows):
    return _with_origin(rng.cauchy((rows, n + 1)))


def _sample_wiener(space, n, rng, rows):
    y = rng.gaussian(0.0, math.sqrt(1.0 / n), (rows, n))
    return PathSample(np.cumsum(y, axis=1), np.zeros(rows))


_SAMPLERS = {
    BoundedUniform: _sample_bounded,
    IidDensity: _sample_iid,
    LayerSimplex: _sample_layer,
    DerivConstrained: _sample_deriv,
    Codim1: _sample_codim1,
    Codim2: _sample_codim2,
    Ball2: _sample_ball,
    CauchySpace: _sample_cauchy,
    WienerSpace: _sample_wiener,
}


# ---------------------------------------------------------------------------
# constraints


def constraint_residual(space, smp: Sample) -> float:
    """Largest violation of the discretized defining constraints (0 if unconstrained)."""
    if isinstance(space, LayerSimplex):
        if not isinstance(smp, LayerSample):
            raise ParameterError("layer_simplex expects a LayerSample")
        z = np.atleast_2d(smp.weights)
        return float(max(np.max(np.abs(z.sum(axis=-1) - 1.0)), max(0.0, -z.min())))
    if isinstance(space, DerivConstrained):
        if not isinstance(smp, DerivSample):
            raise ParameterError("deriv_constrained expects a DerivSample")
        z = smp.deriv
        return float(max(0.0, -z.min(), z.max() - 1.0))
    if not isinstance(smp, PathSample):
        raise ParameterError(f"{space.kind} expects a PathSample")
    x = np.atleast_2d(smp.values)
    n = x.shape[-1]
    if isinstance(space, Codim1):
        a = _grid_values(space.a, n)
        return float(max(np.max(np.abs(x @ a / n - space.s)), max(0.0, -x.min())))
    if isinstance(space, Codim2):
        a = _grid_values(space.a, n)
        b = _grid_values(space.b, n)
        r1 = np.abs(x @ a / n - space.r)
        r2 = np.abs(x @ b / n - space.s)
        return float(max(r1.max(), r2.max(), max(0.0, -x.min())))
    if isinstance(space, Ball2):
        return float(max(0.0, np.max(np.mean(x * x, axis=-1) - space.R**2)))
    return 0.0


@dataclass(frozen=True)
class WellPosedReport:
    """Outcome of the codimension-2 sign checks; truthy when every check passes."""

    ok: bool
    diagnostics: tuple[str, ...] = ()

    def __bool__(self):
        return self.ok


def codim2_rate(space: Codim2, t):
    """Exponential rate of the limiting coordinate law at t.

    (a(t) b(1) - a(1) b(t)) / (b(1) r - a(1) s); this is the normalizing
    prefactor of the marginal and the rate that keeps the density integrable.
    """
    a1, b1 = space.a(1.0), space.b(1.0)
    t = np.asarray(t, dtype=float)
    return (space.a.vec(t) * b1 - a1 * space.b.vec(t)) / (b1 * space.r - a1 * space.s)


def codim2_rate_exponent_form(space: Codim2, t):
    """Rate read off the exponent of the usual closed form: the negative of ``codim2_rate``."""
    a1, b1 = space.a(1.0), space.b(1.0)
    t = np.asarray(t, dtype=float)
    return (a1 * space.b.vec(t) - b1 * space.a.vec(t)) / (b1 * space.r - a1 * space.s)


def well_posed(space: Codim2, n: int = WELL_POSED_GRID) -> WellPosedReport:
    """Check that the codimension-2 set is a nonempty simplex-like slice.

    Passes iff the reduced coefficients q_k share one sign, the reduced
    right-hand side is nonzero with that same sign, a(1) != 0, and the
    coordinate rate is positive on the grid j/n, j = 0..n-1.
    """
    if not isinstance(space, Codim2):
        raise ParameterError("well_posed applies to codim2 spaces only")
    diags = []
    q, rhs, a, b = codim2_reduction(space, n)
    if rhs == 0:
        diags.append("reduced right-hand side n(b_n r - a_n s) is zero")
    pos = q > 0
    neg = q < 0
    if not (pos.all() or neg.all()):
        bad = np.flatnonzero(~pos if pos.sum() >= neg.sum() else ~neg) + 1
        diags.append(f"reduced coefficients not of one sign, e.g. k={bad[:5].tolist()}")
    elif rhs != 0 and (pos.all() != (rhs > 0)):
        diags.append("reduced right-hand side has the opposite sign to the coefficients")
    if a[-1] == 0:
        diags.append("a(1) = 0")
    ts = np.arange(n) / n
    denom = space.b(1.0) * space.r - space.a(1.0) * space.s
    if denom == 0:
        diags.append("rate denominator b(1) r - a(1) s is zero")
    else:
        lam = codim2_rate(space, ts)
        bad_t = ts[~(lam > 0)]
        if bad_t.size:
            diags.append(f"coordinate rate not positive at t={bad_t[:5].tolist()}")
    return WellPosedReport(not diags, tuple(diags))


# ---------------------------------------------------------------------------
# coordinate densities


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)

    @property
    def variance(self):
        return (self.b - self.a) ** 2 / 12.0

    def support(self):
        return self.a, self.b

    def draw(self, rng, size):
        return self.a + (self.b - self.a) * rng.uniform01(size)


@dataclass(frozen=True)
class Exponential:
    rate: float

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.rate * np.exp(-self.rate * np.maximum(x, 0.0)), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, -np.expm1(-self.rate * np.maximum(x, 0.0)), 0.0)

    @property
    def mean(self):
        return 1.0 / self.rate

    @property
    def variance(self):
        return 1.0 / self.rate**2

    def support(self):
        return 0.0, math.inf

    def draw(self, rng, size):
        return rng.exponential(self.rate, size)


@dataclass(frozen=True)
class Gaussian:
    mu: float
    var: float

    @property
    def sigma(self):
        return math.sqrt(self.var)

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))

    def cdf(self, x):
        return special.ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)

    @property
    def mean(self):
        return self.mu

    @property
    def variance(self):
        return self.var

    def support(self):
        return -math.inf, math.inf

    def draw(self, rng, size):
        return rng.gaussian(self.mu, self.sigma, size)


@dataclass(frozen=True)
class Cauchy:
    """Standard Cauchy law, density 1 / (pi (1 + x^2))."""

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 / (math.pi * (1.0 + x * x))

    def cdf(self, x):
        return 0.5 + np.arctan(np.asarray(x, dtype=float)) / math.pi

    @property
    def mean(self):
        return math.nan

    @property
    def variance(self):
        return math.inf

    def support(self):
        return -math.inf, math.inf

    def draw(self, rng, size):
        return rng.cauchy(size)


@dataclass(frozen=True)
class Dirac:
    """Point mass at c; ``finite_n_variance`` records the spread at the resolution asked for."""

    c: float
    finite_n_variance: float | None = None

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x == self.c, math.inf, 0.0)

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.c, 1.0, 0.0)

    @property
    def mean(self):
        return self.c

    @property
    def variance(self):
        return 0.0

    def support(self):
        return self.c, self.c

    def draw(self, rng, size):
        return np.full(size, float(self.c))


@dataclass(frozen=True)
class BallMarginal:
    """Law of one coordinate of a uniform point in the n-ball of radius sqrt(n) R.

    Density Gamma(1 + n/2) / (sqrt(pi) Gamma((n+1)/2) rho) (1 - x^2/rho^2)^((n-1)/2)
    on |x| <= rho = sqrt(n) R.
    """

    n: int
    R: float
    _logc: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rho = math.sqrt(self.n) * self.R
        logc = math.lgamma(1 + self.n / 2) - math.lgamma((self.n + 1) / 2) - 0.5 * math.log(math.pi) - math.log(rho)
        object.__setattr__(self, "_logc", logc)

    @property
    def rho(self):
        return math.sqrt(self.n) * self.R

    def pdf(self, x):
        y = np.asarray(x, dtype=float) / self.rho
        inside = np.abs(y) < 1
        base = np.where(inside, 1.0 - y * y, 1.0)
        return np.where(inside, np.exp(self._logc + 0.5 * (self.n - 1) * np.log(base)), 0.0)

    def cdf(self, x):
        y = np.clip(np.asarray(x, dtype=float) / self.rho, -1.0, 1.0)
        p = 0.5 * (self.n + 1)
        return special.betainc(p, p, 0.5 * (1.0 + y))

    @property
    def mean(self):
        return 0.0

    @property
    def variance(self):
        return self.n * self.R**2 / (self.n + 2)

    def support(self):
        return -self.rho, self.rho

    def draw(self, rng, size):
        p = 0.5 * (self.n + 1)
        u = rng.uniform01(size)
        return self.rho * (2.0 * special.betaincinv(p, p, u) - 1.0)


Density = Union[Uniform, Exponential, Gaussian, Cauchy, Dirac, BallMarginal]


def coordinate_density(space, t: float, n: int | None = None) -> Density:
    """Law of the coordinate x(t) as the resolution grows (or at resolution n where available).

    Raises:
        UnsupportedQuery: layer_simplex carries no pointwise values.
        IllPosedConstraint: codim2 rate is not positive at t.
    """
    if not 0.0 < t <= 1.0:
        raise ParameterError(f"t must lie in (0, 1], got {t}")
    if isinstance(space, BoundedUniform):
        return Uniform(space.m1, space.m2)
    if isinstance(space, IidDensity):
        if space.dist == "gaussian":
            return Gaussian(space.mu, space.sigma**2)
        if space.dist == "cauchy":
            return Cauchy()
        return Uniform(space.lo, space.hi)
    if isinstance(space, LayerSimplex):
        raise UnsupportedQuery("layer_simplex has no pointwise coordinates")
    if isinstance(space, DerivConstrained):
        return Dirac(t / 2.0, None if n is None else t / (12.0 * n))
    if isinstance(space, Codim1):
        return Exponential(space.a(t) / space.s)
    if isinstance(space, Codim2):
        lam = float(codim2_rate(space, t))
        if not lam > 0:
            raise IllPosedConstraint(f"codim2 coordinate rate {lam} is not positive at t={t}")
        return Exponential(lam)
    if isinstance(space, Ball2):
        return Gaussian(0.0, space.R**2) if n is None else BallMarginal(int(n), space.R)
    if isinstance(space, CauchySpace):
        return Cauchy()
    if isinstance(space, WienerSpace):
        return Gaussian(0.0, t)
    raise ParameterError(f"unknown space {space!r}")
