"""Closed-form means, variances and laws of functionals in the large-n limit.

Every supported (space, atom) pair is listed in ``_analyze``; anything else
raises UnsupportedQuery instead of extrapolating.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .errors import (
    ConvergenceError,
    DivergentMean,
    IllPosedConstraint,
    NonConcentrating,
    ParameterError,
    UnsupportedQuery,
)
from .exprlang import MultiFn, Num, ScalarFn, Var, parse_scalar
from .functionals import (
    Composite,
    DerivIntegralAtom,
    FunctionalClass,
    IntegralAtom,
    Interval,
    MultiIntegralAtom,
    PointAtom,
    WeightedLinearAtom,
    atoms,
    classify,
)
from .numcore import DEFAULT_TOL, Grid, RngStream, quad_adaptive, quad_exp_weighted, quad_gauss_weighted
from .spaces import (
    Ball2,
    BoundedUniform,
    Cauchy,
    CauchySpace,
    Codim1,
    Codim2,
    DerivConstrained,
    Dirac,
    Gaussian,
    IidDensity,
    LayerSimplex,
    WienerSpace,
    codim2_rate,
    coordinate_density,
    well_posed,
)

HERMITE_NODES = 48
# Cauchy law engine: core half-width and shell stopping rule
CAUCHY_CORE = 8.0
CAUCHY_SHELL_TOL = 1e-12
CAUCHY_MAX_SHELLS = 200


@dataclass(frozen=True)
class Unknown:
    """Law not available in closed form."""


Law = Union[Dirac, Cauchy, Gaussian, Unknown]


@dataclass(frozen=True)
class AnalyticResult:
    """Mean, variance and law of a functional; ``variance`` None means no finite value is known."""

    mean: float | None
    variance: float | None
    law: Law
    method: str
    stderr: float | None = None


def _is_x(g: ScalarFn) -> bool:
    return g.ast == Var("x")


def _is_one(c: ScalarFn) -> bool:
    return c.ast == Num(1.0)


def _quad(f, a, b, tol=DEFAULT_TOL) -> float:
    return quad_adaptive(f, a, b, tol).value


def _dirac(mean, method) -> AnalyticResult:
    return AnalyticResult(float(mean), 0.0, Dirac(float(mean)), method)


def _is_cauchy(space) -> bool:
    return isinstance(space, CauchySpace) or (isinstance(space, IidDensity) and space.dist == "cauchy")


# ---------------------------------------------------------------------------
# per-space formulas


def _analyze(space, atom) -> AnalyticResult:
    if isinstance(atom, Composite):
        raise UnsupportedQuery("atom analysis takes a single atom; use exchange_mean for composites")
    if isinstance(atom, PointAtom):
        raise UnsupportedQuery("pointwise atoms have no concentrated mean; see coordinate_density")

    if _is_cauchy(space):
        return _cauchy(space, atom)
    if isinstance(space, WienerSpace):
        return _wiener(atom)
    if isinstance(space, BoundedUniform):
        return _bounded(space, atom)
    if isinstance(space, IidDensity):
        return _iid(space, atom)
    if isinstance(space, LayerSimplex):
        if isinstance(atom, IntegralAtom) and atom.I.is_unit:
            return _dirac(_quad(atom.g, 0.0, 1.0), "layer model: integral of g over [0,1]")
        raise UnsupportedQuery("layer model supports int(g; 0, 1) only")
    if isinstance(space, DerivConstrained):
        return _deriv(atom)
    if isinstance(space, Codim1):
        return _codim1(space, atom)
    if isinstance(space, Codim2):
        return _codim2(space, atom)
    if isinstance(space, Ball2):
        return _ball(space, atom)
    raise UnsupportedQuery(f"unknown space {space!r}")


def _bounded(space: BoundedUniform, atom):
    m1, m2 = space.m1, space.m2
    if isinstance(atom, IntegralAtom):
        v = atom.I.length / (m2 - m1) * _quad(atom.g, m1, m2)
        return _dirac(v, "bounded uniform: |I|/(m2-m1) * integral of g over [m1,m2]")
    if isinstance(atom, WeightedLinearAtom):
        v = 0.5 * (m1 + m2) * _quad(atom.c, atom.I.lo, atom.I.hi)
        return _dirac(v, "bounded uniform: (m1+m2)/2 * integral of c over I")
    raise UnsupportedQuery(f"bounded_uniform does not support {type(atom).__name__}")


def _iid(space: IidDensity, atom):
    if space.dist == "gaussian":
        mu, sigma = space.mu, space.sigma

        def expect(g):
            return quad_gauss_weighted(g, mu, sigma).value

        center = mu
    else:
        lo, hi = space.lo, space.hi

        def expect(g):
            return _quad(g, lo, hi) / (hi - lo)

        center = 0.5 * (lo + hi)
    if isinstance(atom, IntegralAtom):
        return _dirac(atom.I.length * expect(atom.g), f"iid {space.dist}: |I| * E g(x)")
    if isinstance(atom, WeightedLinearAtom):
        return _dirac(center * _quad(atom.c, atom.I.lo, atom.I.hi), f"iid {space.dist}: E x * integral of c")
    if isinstance(atom, MultiIntegralAtom):
        if space.dist != "gaussian":
            raise UnsupportedQuery("multi-integral atoms are supported on gaussian iid spaces only")
        v = _hermite_tensor(atom, mu, sigma)
        return _dirac(v, "iid gaussian: tensor Gauss-Hermite")
    raise UnsupportedQuery(f"iid_density does not support {type(atom).__name__}")


def _deriv(atom):
    if isinstance(atom, IntegralAtom):
        if atom.I.is_unit:
            form_a, _ = deriv_mean_two_forms(atom.g)
            return _dirac(form_a, "derivative constraint: g(1/2) - 1/2 int t g'(t/2) dt")
        v = _quad(lambda t: atom.g(0.5 * t), atom.I.lo, atom.I.hi)
        return _dirac(v, "derivative constraint: integral of g(t/2) over I")
    if isinstance(atom, DerivIntegralAtom):
        v = atom.I.length * _quad(atom.g, 0.0, 1.0)
        return _dirac(v, "derivative constraint: |I| * integral of g over [0,1]")
    if isinstance(atom, WeightedLinearAtom):
        v = _quad(lambda t: atom.c(t) * 0.5 * t, atom.I.lo, atom.I.hi)
        return _dirac(v, "derivative constraint: integral of c(t) t/2 over I")
    raise UnsupportedQuery(f"deriv_constrained does not support {type(atom).__name__}")


def _codim1(space: Codim1, atom):
    a, s = space.a, space.s
    if isinstance(atom, WeightedLinearAtom):
        v = s * _quad(lambda t: atom.c(t) / a(t), atom.I.lo, atom.I.hi)
        return _dirac(v, "codim1: s * integral of c/a over I")
    if isinstance(atom, IntegralAtom):

        def inner(t):
            return quad_exp_weighted(atom.g, a(t) / s).value

        v = _quad(inner, atom.I.lo, atom.I.hi, tol=1e-9)
        return _dirac(v, "codim1: iterated integral against exponential(a(t)/s)")
    raise UnsupportedQuery(f"codim1 does not support {type(atom).__name__}")


def _codim2_check(space):
    report = well_posed(space)
    if not report:
        raise IllPosedConstraint("; ".join(report.diagnostics))


def codim2_t_integral(f, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-9) -> float:
    """Integral of f(t) over [lo, hi] using t = 1 - u^2, which absorbs the t -> 1 singularity."""

    def mapped(u):
        # t = 1 itself is excluded; clamping u keeps 1 - t accurate to ~1e-4 relative
        u = max(u, 1e-6)
        return f(1.0 - u * u) * 2.0 * u

    try:
        return quad_adaptive(mapped, math.sqrt(1.0 - hi), math.sqrt(1.0 - lo), tol).value
    except ConvergenceError as e:
        raise DivergentMean(f"integral near t = 1 does not converge: {e}") from None


def codim2_linear_mean(space: Codim2, c: ScalarFn, corrected: bool = False) -> float:
    """Limit mean of the integral of c(t) x(t) over [0, 1] on a codimension-2 space.

    With ``corrected=False`` this is r/a(1) + (b(1)r - a(1)s)/a(1) * integral of
    (a(1)c - a)/(a(1)b - a b(1)), the usual closed form. ``corrected=True``
    keeps the c(1) factor from eliminating x_n and divides by a b(1) - a(1) b
    instead, which is what the elimination actually produces.
    """
    _codim2_check(space)
    a, b, r, s = space.a, space.b, space.r, space.s
    a1, b1, c1 = a(1.0), b(1.0), c(1.0)
    K = b1 * r - a1 * s
    if corrected:
        integral = codim2_t_integral(lambda t: (a1 * c(t) - c1 * a(t)) / (a(t) * b1 - a1 * b(t)))
        return c1 * r / a1 + K / a1 * integral
    integral = codim2_t_integral(lambda t: (a1 * c(t) - a(t)) / (a1 * b(t) - a(t) * b1))
    return r / a1 + K / a1 * integral


def codim2_integral_mean(space: Codim2, g: ScalarFn, I: Interval = Interval()) -> float:
    """Limit mean of the integral of g(x(t)) over I from the exponential coordinate law."""
    _codim2_check(space)

    def inner(t):
        lam = float(codim2_rate(space, t))
        if not lam > 0:
            raise IllPosedConstraint(f"coordinate rate {lam} not positive at t={t}")
        return quad_exp_weighted(g, lam, tol=1e-11 * max(1.0, 1.0 / lam)).value

    def safe_inner(t):
        # the rate vanishes at t = 1; the substitution weight 2u makes that endpoint harmless
        return inner(min(t, 1.0 - 1e-15))

    return codim2_t_integral(safe_inner, I.lo, I.hi, tol=1e-8)


def _codim2(space: Codim2, atom):
    if isinstance(atom, WeightedLinearAtom):
        if not atom.I.is_unit:
            raise UnsupportedQuery("codim2 linear formula covers the interval [0, 1] only")
        v = codim2_linear_mean(space, atom.c)
        return _dirac(v, "codim2: eliminated-constraint linear formula, as usually stated")
    if isinstance(atom, IntegralAtom):
        v = codim2_integral_mean(space, atom.g, atom.I)
        return _dirac(v, "codim2: iterated integral against the exponential coordinate law")
    raise UnsupportedQuery(f"codim2 does not support {type(atom).__name__}")


def _hermite_tensor(atom: MultiIntegralAtom, mu: float, sigma: float) -> float:
    nodes, weights = hermegauss(HERMITE_NODES)
    weights = weights / math.sqrt(2.0 * math.pi)
    m = atom.m
    grids = np.meshgrid(*([mu + sigma * nodes] * m), indexing="ij")
    w = weights
    for _ in range(m - 1):
        w = np.multiply.outer(w, weights)
    vals = atom.g.vec(*grids)
    scale = float(np.prod([I.length for I in atom.intervals]))
    return scale * float(np.sum(w * vals))


def _ball(space: Ball2, atom):
    R = space.R
    if isinstance(atom, IntegralAtom):
        v = atom.I.length * quad_gauss_weighted(atom.g, 0.0, R).value
        return _dirac(v, "ball: |I| * E g(R Z) for standard normal Z")
    if isinstance(atom, WeightedLinearAtom):
        return _dirac(0.0, "ball: coordinates have mean zero")
    if isinstance(atom, MultiIntegralAtom):
        v = _hermite_tensor(atom, 0.0, R)
        return _dirac(v, "ball: tensor Gauss-Hermite of g(R Z_1, .., R Z_m)")
    raise UnsupportedQuery(f"ball2 does not support {type(atom).__name__}")


def _cauchy(space, atom):
    linear = (isinstance(atom, IntegralAtom) and _is_x(atom.g)) or (
        isinstance(atom, WeightedLinearAtom) and _is_one(atom.c)
    )
    if linear and atom.I.is_unit:
        return AnalyticResult(None, None, Cauchy(), "cauchy: averages of iid Cauchy values are Cauchy")
    if linear:
        return AnalyticResult(None, None, Unknown(), "cauchy: scaled Cauchy law; no mean")
    if isinstance(space, IidDensity) and isinstance(atom, IntegralAtom):
        v = atom.I.length * law_mean(atom.g, Cauchy())
        return _dirac(v, "iid cauchy: |I| * E g(x) by shell quadrature")
    raise UnsupportedQuery("cauchy space supports the linear functional over [0,1] only")


def _wiener(atom):
    unit = getattr(atom, "I", None) is not None and atom.I.is_unit
    if unit and (
        (isinstance(atom, WeightedLinearAtom) and _is_one(atom.c))
        or (isinstance(atom, IntegralAtom) and _is_x(atom.g))
    ):
        return AnalyticResult(0.0, 1.0 / 3.0, Gaussian(0.0, 1.0 / 3.0), "wiener: Gaussian with variance 1/3")
    if unit and isinstance(atom, IntegralAtom) and atom.g.ast == parse_scalar("x^2").ast:
        return AnalyticResult(0.5, 1.0 / 3.0, Unknown(), "wiener: E = 1/2, variance 7/12 - 1/4")
    raise UnsupportedQuery("wiener space supports int(x), lin(1) and int(x^2) over [0,1] only")


# ---------------------------------------------------------------------------
# public operations


def atom_mean(space, atom) -> AnalyticResult:
    """Limit mean of an atom.

    Raises:
        UnsupportedQuery: the pair is not in the supported table.
        DivergentMean: the mean does not exist (e.g. the Cauchy average).
    """
    res = _analyze(space, atom)
    if res.mean is None:
        raise DivergentMean(f"no finite mean for {atom} on {space.kind}")
    return res


def atom_variance(space, atom) -> float | None:
    """Limit variance of an atom; None when no finite variance exists."""
    return _analyze(space, atom).variance


def functional_law(space, atom) -> Law:
    return _analyze(space, atom).law


def exchange_mean(space, expr) -> AnalyticResult:
    """Mean of h(Y_1, .., Y_k) by evaluating h at the atom means.

    Raises:
        NonConcentrating: the space or a child atom keeps a spread.
        UnsupportedQuery: the functional has pointwise atoms or an unsupported child.
    """
    if classify(expr) is not FunctionalClass.PURELY_INTEGRAL:
        raise UnsupportedQuery("exchange formula needs a purely integral functional")
    if isinstance(space, (CauchySpace, WienerSpace)):
        raise NonConcentrating(f"integral functionals do not concentrate on {space.kind}")
    if not isinstance(expr, Composite):
        res = _analyze(space, expr)
        if res.variance != 0.0:
            raise NonConcentrating(f"{expr} has variance {res.variance} on {space.kind}")
        return atom_mean(space, expr)
    means = []
    for child in expr.children:
        res = exchange_mean(space, child)
        if res.variance != 0.0:
            raise NonConcentrating(f"child {child} has variance {res.variance}")
        means.append(res.mean)
    return _dirac(expr.h(*means), "exchange: h evaluated at the atom means")


def _point_law(space, k: int, n: int):
    if k == 0:
        if isinstance(space, (WienerSpace, DerivConstrained)):
            return Dirac(0.0)
        return coordinate_density(space, 1.0)
    return coordinate_density(space, k / n)


def partial_exchange(space, expr, n: int, N: int, rng: RngStream) -> AnalyticResult:
    """Mean of h(X_1, .., X_m, Y_1, .., Y_k) with the integral atoms replaced by their means.

    The remaining expectation over the pointwise coordinates is estimated from
    N independent draws of the limiting coordinate laws at the snapped nodes.
    """
    if isinstance(space, (CauchySpace, WienerSpace)):
        raise NonConcentrating(f"integral functionals do not concentrate on {space.kind}")
    if N < 2:
        raise ParameterError("N must be at least 2")
    grid = Grid(n)
    draws: dict[int, np.ndarray] = {}

    def value(node):
        if isinstance(node, Composite):
            return node.h.vec(*[value(c) for c in node.children])
        if isinstance(node, PointAtom):
            k, _ = grid.snap(node.t, has_origin=True)
            if k not in draws:
                draws[k] = np.asarray(_point_law(space, k, n).draw(rng, N), dtype=float)
            return draws[k]
        res = atom_mean(space, node)
        if res.variance != 0.0:
            raise NonConcentrating(f"atom {node} has variance {res.variance}")
        return np.full(N, res.mean)

    vals = np.broadcast_to(value(expr), (N,))
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(N))
    return AnalyticResult(
        mean, None, Unknown(), f"partial exchange: integral atoms at their means, MC stderr {stderr:.3g}", stderr
    )


def deriv_mean_two_forms(g: ScalarFn) -> tuple[float, float]:
    """Two equal expressions for the mean of the integral of g(x) under the derivative constraint.

    form_a = g(1/2) - 1/2 * integral of t g'(t/2) over [0, 1]
    form_b = integral of g(t/2) over [0, 1]
    """
    dg = g.derivative()
    form_a = g(0.5) - 0.5 * _quad(lambda t: t * dg(0.5 * t), 0.0, 1.0)
    form_b = _quad(lambda t: g(0.5 * t), 0.0, 1.0)
    return form_a, form_b


def charfn_uniform_mean(t: float, n: int | None = None) -> complex:
    """Characteristic function of the mean of n iid U[0,1] values; n=None gives the limit e^{it/2}.

    Uses (e^{iu} - 1)/(iu) = e^{iu/2} sin(u/2)/(u/2), which is exact and has no
    cancellation near u = 0.
    """
    if n is None:
        return cmath.exp(0.5j * t)
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    u = t / n
    half = 0.5 * u
    sinc = 1.0 if half == 0 else math.sin(half) / half
    return cmath.exp(0.5j * t) * sinc**n


def cauchy_selfsim_residual(t: float, n: int) -> float:
    """|phi(t) - phi(t/n)^n| for the Cauchy characteristic function phi(t) = e^{-|t|}."""
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    return abs(math.exp(-abs(t)) - math.exp(-abs(t / n)) ** n)


def cauchy_interval_measure(a: float, b: float) -> float:
    """Cauchy probability of [a, b]; a and b may be infinite."""
    if a > b:
        raise ParameterError(f"need a <= b, got {a}, {b}")
    return (math.atan(b) - math.atan(a)) / math.pi


@dataclass(frozen=True)
class ConsistencyReport:
    """Residuals of the constraints evaluated at the limiting coordinate means."""

    r1: float
    r2: float | None
    details: str


def codim_consistency(space) -> ConsistencyReport:
    """Plug the coordinate means back into the defining constraints.

    Codim1 must give r1 ~ 0. For codim2 both residuals are reported as they
    come out; they are not expected to vanish.
    """
    if isinstance(space, Codim1):
        a, s = space.a, space.s
        integral = _quad(lambda t: a(t) * coordinate_density(space, t).mean, 0.0, 1.0)
        return ConsistencyReport(abs(integral - s), None, "codim1: integral of a(t) s/a(t)")
    if isinstance(space, Codim2):
        _codim2_check(space)

        def mean_at(t):
            return 1.0 / float(codim2_rate(space, min(t, 1.0 - 1e-15)))

        ia = codim2_t_integral(lambda t: space.a(t) * mean_at(t))
        ib = codim2_t_integral(lambda t: space.b(t) * mean_at(t))
        return ConsistencyReport(
            abs(ia - space.r), abs(ib - space.s), "codim2: integrals of a m and b m against r and s"
        )
    raise ParameterError("codim_consistency applies to codim1 and codim2 spaces")


def ball_even_moment(n: int | None, m: int, R: float = 1.0) -> float:
    """E x_k^{2m} for a uniform point of the ball sum x_k^2 <= n R^2; n=None gives (2m-1)!! R^{2m}."""
    if m < 0:
        raise ParameterError(f"m must be non-negative, got {m}")
    dfact = math.prod(range(1, 2 * m, 2))
    if n is None:
        return float(dfact) * R ** (2 * m)
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    denom = math.prod(n + 2 * i for i in range(1, m + 1))
    return float(n**m * dfact) / denom * R ** (2 * m)


def wiener_moment(kind: str, n: int, k: int, j: int | None = None) -> float:
    """Moments of discretized Brownian motion: sq -> E x_k^2, quad -> E x_k^4, cross -> E x_k^2 x_j^2 (j < k)."""
    if not 1 <= k <= n:
        raise ParameterError(f"need 1 <= k <= n, got k={k}, n={n}")
    if kind == "sq":
        return k / n
    if kind == "quad":
        return 3.0 * k * k / (n * n)
    if kind == "cross":
        if j is None or not 1 <= j < k:
            raise ParameterError(f"cross moment needs 1 <= j < k, got j={j}, k={k}")
        return (k * j + 2.0 * j * j) / (n * n)
    raise ParameterError(f"unknown moment kind {kind!r}")


def law_mean(h, law, tol: float = DEFAULT_TOL) -> float:
    """E h(Y) for Y with the given law.

    For the Cauchy law the integral is taken over [-8, 8] and then over
    doubling shells on both sides until a shell adds less than 1e-12; a sum that
    keeps growing raises DivergentMean.
    """
    f = h if not isinstance(h, MultiFn) else (lambda y: h(y))
    if isinstance(law, Dirac):
        return float(f(law.c))
    if isinstance(law, Gaussian):
        return quad_gauss_weighted(f, law.mu, law.sigma, tol).value
    if isinstance(law, Cauchy):

        def weighted(y):
            return f(y) / (math.pi * (1.0 + y * y))

        total = _quad(weighted, -CAUCHY_CORE, CAUCHY_CORE, tol)
        lo = CAUCHY_CORE
        for _ in range(CAUCHY_MAX_SHELLS):
            hi = 2.0 * lo
            shell = _quad(weighted, lo, hi, tol) + _quad(weighted, -hi, -lo, tol)
            total += shell
            # absolute mass of the shell decides convergence; signed sums can cancel
            mass = _quad(lambda y: abs(weighted(y)), lo, hi, tol) + _quad(lambda y: abs(weighted(y)), -hi, -lo, tol)
            if mass < CAUCHY_SHELL_TOL:
                return total
            lo = hi
            if not math.isfinite(hi):
                break
        raise DivergentMean("expectation against the Cauchy law does not converge")
    raise UnsupportedQuery(f"no expectation rule for law {law!r}")
