import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from funcmean.analytic import (
    atom_mean,
    atom_variance,
    ball_even_moment,
    cauchy_interval_measure,
    cauchy_selfsim_residual,
    charfn_uniform_mean,
    codim2_integral_mean,
    codim2_linear_mean,
    codim_consistency,
    deriv_mean_two_forms,
    exchange_mean,
    functional_law,
    law_mean,
    partial_exchange,
    wiener_moment,
)
from funcmean.errors import DivergentMean, IllPosedConstraint, NonConcentrating, ParameterError, UnsupportedQuery
from funcmean.exprlang import parse_scalar
from funcmean.functionals import composite, parse_atom
from funcmean.numcore import RngStream
from funcmean.spaces import (
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
)

CODIM2 = Codim2("1+x", "(1+x+sqrt(1-x))/2", 1.0, 0.6)


def quad(f, a, b):
    return integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


# --- closed forms against scipy quadrature -------------------------------


def test_bounded_uniform_atoms():
    sp = BoundedUniform(-1.0, 2.0)
    got = atom_mean(sp, parse_atom("int(exp(x); 1/4, 1)")).mean
    assert got == pytest.approx(0.75 * quad(math.exp, -1, 2) / 3, abs=1e-10)
    got = atom_mean(sp, parse_atom("lin(x^2; 0, 1)")).mean
    assert got == pytest.approx(0.5 / 3, abs=1e-10)
    assert atom_variance(sp, parse_atom("int(x; 0, 1)")) == 0.0
    assert isinstance(functional_law(sp, parse_atom("int(x; 0, 1)")), Dirac)


def test_gaussian_iid_atoms():
    sp = IidDensity("gaussian", mu=0.3, sigma=0.7)
    ref = stats.norm(0.3, 0.7).expect(lambda v: math.cos(v) ** 2)
    assert atom_mean(sp, parse_atom("int(cos(x)^2; 0, 1)")).mean == pytest.approx(ref, abs=1e-9)
    # tensor Gauss-Hermite against a brute product of one-dimensional expectations
    m = atom_mean(sp, parse_atom("mint(y1*y2^2; 0, 1/2; 1/2, 1)")).mean
    assert m == pytest.approx(0.25 * 0.3 * (0.3**2 + 0.7**2), abs=1e-12)


def test_deriv_constrained_atoms():
    sp = DerivConstrained()
    assert atom_mean(sp, parse_atom("int(exp(x); 0, 1)")).mean == pytest.approx(quad(lambda t: math.exp(t / 2), 0, 1))
    assert atom_mean(sp, parse_atom("int(x; 1/2, 1)")).mean == pytest.approx(quad(lambda t: t / 2, 0.5, 1))
    arc = atom_mean(sp, parse_atom("dint(sqrt(1+x^2); 0, 1)")).mean
    assert arc == pytest.approx(quad(lambda v: math.sqrt(1 + v * v), 0, 1), abs=1e-10)


@pytest.mark.parametrize("src", ["x", "x^2", "sin(x)", "exp(-x)*cos(3*x)"])
def test_deriv_two_forms_agree_with_quadrature(src):
    g = parse_scalar(src)
    ref = quad(lambda t: g(t / 2), 0, 1)
    a, b = deriv_mean_two_forms(g)
    assert a == pytest.approx(ref, abs=1e-10)
    assert b == pytest.approx(ref, abs=1e-10)


def test_codim1_atoms_and_consistency():
    sp = Codim1("1+x", 1.0)
    assert atom_mean(sp, parse_atom("lin(1; 0, 1)")).mean == pytest.approx(math.log(2), abs=1e-12)
    # E x^2 under Exp(rate) is 2/rate^2
    got = atom_mean(sp, parse_atom("int(x^2; 0, 1)")).mean
    assert got == pytest.approx(quad(lambda t: 2 / (1 + t) ** 2, 0, 1), abs=1e-8)
    assert codim_consistency(sp).r1 <= 1e-10


def test_codim2_formulas():
    one = parse_scalar("1")
    a1, b1 = 2.0, 1.0
    K = b1 * 1.0 - a1 * 0.6

    def a(t):
        return 1 + t

    def b(t):
        return (1 + t + math.sqrt(1 - t)) / 2

    written = 1.0 / a1 + K / a1 * quad(lambda t: (a1 - a(t)) / (a1 * b(t) - a(t) * b1), 0, 1)
    fixed = 1.0 / a1 + K / a1 * quad(lambda t: (a1 - a(t)) / (a(t) * b1 - a1 * b(t)), 0, 1)
    assert codim2_linear_mean(CODIM2, one) == pytest.approx(written, abs=1e-7)
    assert codim2_linear_mean(CODIM2, one, corrected=True) == pytest.approx(fixed, abs=1e-7)
    assert fixed == pytest.approx(17 / 30, abs=1e-7)
    law = quad(lambda t: 1.0 / float(codim2_rate(CODIM2, t)), 0, 1)
    assert codim2_integral_mean(CODIM2, parse_scalar("x")) == pytest.approx(law, abs=1e-6)
    rep = codim_consistency(CODIM2)
    assert math.isfinite(rep.r1) and math.isfinite(rep.r2)


def test_codim2_ill_posed_raises():
    with pytest.raises(IllPosedConstraint):
        codim2_linear_mean(Codim2("1", "x", 1.0, 1.5), parse_scalar("1"))


def test_ball_atoms_and_moments():
    assert atom_mean(Ball2(2.0), parse_atom("int(x^2; 0, 1)")).mean == pytest.approx(4.0, abs=1e-9)
    assert atom_mean(Ball2(2.0), parse_atom("mint(y1*y2; 0, 1/2; 1/2, 1)")).mean == pytest.approx(0.0, abs=1e-12)
    assert ball_even_moment(None, 2, 2.0) == pytest.approx(3 * 16)
    assert ball_even_moment(10, 1, 1.0) == pytest.approx(10 / 12)
    assert ball_even_moment(10, 2, 1.0) == pytest.approx(3 * 100 / (12 * 14))
    # the finite-n moments approach the Gaussian ones
    assert ball_even_moment(10_000, 3, 1.0) == pytest.approx(15.0, rel=2e-3)


def test_ball_moment_against_beta_marginal():
    n, R = 6, 1.5
    rho = math.sqrt(n) * R
    # x / rho = 2B - 1 with B ~ Beta((n+1)/2, (n+1)/2)
    p = (n + 1) / 2
    ref = stats.beta(p, p).expect(lambda v: (rho * (2 * v - 1)) ** 4)
    assert ball_even_moment(n, 2, R) == pytest.approx(ref, rel=1e-9)


def test_layer_model():
    assert atom_mean(LayerSimplex(), parse_atom("int(x; 0, 1)")).mean == pytest.approx(0.5)
    with pytest.raises(UnsupportedQuery):
        atom_mean(LayerSimplex(), parse_atom("int(x; 0, 1/2)"))


def test_cauchy_and_wiener_laws():
    with pytest.raises(DivergentMean):
        atom_mean(CauchySpace(), parse_atom("int(x; 0, 1)"))
    assert isinstance(functional_law(CauchySpace(), parse_atom("int(x; 0, 1)")), Cauchy)
    law = functional_law(WienerSpace(), parse_atom("int(x; 0, 1)"))
    assert law == Gaussian(0.0, 1.0 / 3.0)
    res = atom_mean(WienerSpace(), parse_atom("int(x^2; 0, 1)"))
    assert res.mean == 0.5 and res.variance == pytest.approx(1 / 3)
    with pytest.raises(UnsupportedQuery):
        atom_mean(WienerSpace(), parse_atom("int(x^3; 0, 1)"))
    with pytest.raises(UnsupportedQuery):
        atom_mean(BoundedUniform(), parse_atom("pt(0.5)"))


def test_exchange_mean():
    sp = BoundedUniform()
    f = composite("exp(tan(y1))*sin(cos(y2))", "int(x; 0, 1)", "int(x^3; 0, 1)")
    assert exchange_mean(sp, f).mean == pytest.approx(math.exp(math.tan(0.5)) * math.sin(math.cos(0.25)), abs=1e-12)
    with pytest.raises(NonConcentrating):
        exchange_mean(WienerSpace(), composite("sin(y1)", "int(x^2; 0, 1)"))
    with pytest.raises(NonConcentrating):
        exchange_mean(CauchySpace(), composite("sin(y1)", "int(x; 0, 1)"))


def test_partial_exchange_keeps_pointwise_atoms_random():
    sp = BoundedUniform()
    f = composite("y1*y2^2", "int(x; 0, 1)", "pt(1)")
    res = partial_exchange(sp, f, 64, 40_000, RngStream(3))
    assert res.mean == pytest.approx(0.5 / 3, abs=5 * res.stderr)


def test_law_mean():
    h = parse_scalar("(1+x^2)*exp(-x^2)")
    ref = quad(lambda y: h(y) / (math.pi * (1 + y * y)), -np.inf, np.inf)
    assert law_mean(h, Cauchy()) == pytest.approx(ref, abs=1e-11)
    assert ref == pytest.approx(1 / math.sqrt(math.pi), abs=1e-12)
    assert law_mean(parse_scalar("x^2"), Gaussian(1.0, 4.0)) == pytest.approx(5.0, abs=1e-9)
    assert law_mean(math.cos, Dirac(0.3)) == math.cos(0.3)
    with pytest.raises(DivergentMean):
        law_mean(parse_scalar("x"), Cauchy())


@given(st.floats(-30, 30), st.integers(1, 64))
def test_uniform_cf_matches_direct_product(t, n):
    # characteristic function of one U(0,1) value by quadrature, raised to the n-th power
    u = t / n
    one = complex(quad(lambda v: math.cos(u * v), 0, 1), quad(lambda v: math.sin(u * v), 0, 1))
    assert abs(charfn_uniform_mean(t, n) - one**n) <= 1e-9


@given(st.floats(-100, 100), st.integers(1, 100))
def test_cauchy_self_similarity(t, n):
    assert cauchy_selfsim_residual(t, n) <= 1e-12


def test_cauchy_interval_measure():
    assert cauchy_interval_measure(-1.0, 2.0) == pytest.approx(stats.cauchy.cdf(2) - stats.cauchy.cdf(-1))
    assert cauchy_interval_measure(-math.inf, math.inf) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        cauchy_interval_measure(1.0, 0.0)


def test_wiener_moments_against_independent_paths():
    n, N = 16, 200_000
    g = np.random.Generator(np.random.Philox(11))
    x = np.cumsum(g.normal(0, 1 / math.sqrt(n), size=(N, n)), axis=1)
    for k, j in ((8, 4), (16, 8)):
        xk, xj = x[:, k - 1], x[:, j - 1]
        for kind, vals in (("sq", xk**2), ("quad", xk**4)):
            se = vals.std() / math.sqrt(N)
            assert abs(vals.mean() - wiener_moment(kind, n, k)) < 5 * se
        vals = xk**2 * xj**2
        assert abs(vals.mean() - wiener_moment("cross", n, k, j)) < 5 * vals.std() / math.sqrt(N)
    with pytest.raises(ParameterError):
        wiener_moment("cross", n, 4, 8)
