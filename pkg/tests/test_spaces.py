import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from funcmean.errors import IllPosedConstraint, ParameterError, UnsupportedQuery
from funcmean.numcore import RngStream
from funcmean.spaces import (
    Ball2,
    BallMarginal,
    BoundedUniform,
    CauchySpace,
    Codim1,
    Codim2,
    DerivConstrained,
    Dirac,
    Exponential,
    Gaussian,
    IidDensity,
    LayerSimplex,
    SPACE_KINDS,
    Uniform,
    WienerSpace,
    codim2_rate,
    codim2_rate_exponent_form,
    codim2_reduction,
    constraint_residual,
    coordinate_density,
    describe,
    sample,
    well_posed,
)

CODIM2 = Codim2("1+x", "(1+x+sqrt(1-x))/2", 1.0, 0.6)


def _mt(seed=0):
    return np.random.Generator(np.random.MT19937(seed))


def test_kinds_registry_and_describe():
    assert set(SPACE_KINDS) == {
        "bounded_uniform", "iid_density", "layer_simplex", "deriv_constrained",
        "codim1", "codim2", "ball2", "cauchy", "wiener",
    }
    assert describe(Ball2(2.0)) == "ball2(R=2.0)"


@pytest.mark.parametrize(
    "ctor",
    [
        lambda: BoundedUniform(1.0, 1.0),
        lambda: IidDensity("weibull"),
        lambda: Codim1("1+x", 0.0),
        lambda: Ball2(-1.0),
    ],
)
def test_invalid_parameters(ctor):
    with pytest.raises(ParameterError):
        ctor()


def test_minimum_resolution():
    with pytest.raises(ParameterError):
        sample(BoundedUniform(), 1, RngStream(0))
    with pytest.raises(ParameterError):
        sample(CODIM2, 2, RngStream(0))


def test_sample_shapes():
    rng = RngStream(3)
    s = sample(BoundedUniform(), 10, rng, size=5)
    assert s.values.shape == (5, 10) and s.x0.shape == (5,)
    assert sample(BoundedUniform(), 10, rng).values.shape == (10,)
    assert sample(LayerSimplex(), 10, rng, size=4).weights.shape == (4, 10)
    d = sample(DerivConstrained(), 10, rng, size=3)
    np.testing.assert_allclose(d.values, np.cumsum(d.deriv, axis=-1) / 10)


@pytest.mark.parametrize(
    "space, oracle",
    [
        (BoundedUniform(-1.0, 3.0), lambda g, m: g.uniform(-1.0, 3.0, m)),
        (IidDensity("gaussian", mu=0.3, sigma=0.7), lambda g, m: g.normal(0.3, 0.7, m)),
        (CauchySpace(), lambda g, m: g.standard_cauchy(m)),
    ],
)
def test_iid_coordinates_match_independent_generator(space, oracle):
    x = sample(space, 8, RngStream(11), size=4000).values.ravel()
    ref = oracle(_mt(1), x.size)
    assert stats.ks_2samp(x, ref).pvalue > 1e-4


def test_simplex_against_dirichlet():
    z = sample(LayerSimplex(), 6, RngStream(5), size=20_000).weights
    ref = _mt(2).dirichlet(np.ones(6), 20_000)
    for k in range(6):
        assert stats.ks_2samp(z[:, k], ref[:, k]).pvalue > 1e-4
    assert constraint_residual(LayerSimplex(), sample(LayerSimplex(), 6, RngStream(5), size=10)) < 1e-12


def test_codim1_constraint_and_marginal():
    space = Codim1("1+x", 1.0)
    s = sample(space, 256, RngStream(7), size=2000)
    assert constraint_residual(space, s) <= 1e-12
    k = 128
    dens = coordinate_density(space, k / 256)
    assert isinstance(dens, Exponential) and dens.rate == pytest.approx(1.5)
    assert stats.kstest(s.values[:, k - 1], stats.expon(scale=1 / 1.5).cdf).pvalue > 1e-4


def test_codim2_reduction_matches_exact_arithmetic():
    n = 9
    q, rhs, a, b = codim2_reduction(CODIM2, n)
    aa = [1 + Fraction(k, n) for k in range(1, n + 1)]
    for k in range(n - 1):
        want = float(aa[k]) * b[-1] - float(aa[-1]) * b[k]
        assert q[k] == pytest.approx(want, abs=1e-15)
    assert rhs == pytest.approx(n * (b[-1] * 1.0 - a[-1] * 0.6))


def test_codim2_well_posed_and_residual():
    assert well_posed(CODIM2)
    s = sample(CODIM2, 64, RngStream(1), size=500)
    assert constraint_residual(CODIM2, s) <= 1e-9
    assert np.all(s.values >= 0)


@pytest.mark.parametrize("space", [Codim2("x", "x", 1.0, 1.0), Codim2("1", "x", 1.0, 1.5)])
def test_codim2_ill_posed_detected(space):
    report = well_posed(space)
    assert not report and report.diagnostics
    with pytest.raises(IllPosedConstraint):
        sample(space, 16, RngStream(0))


def test_codim2_rate_forms_are_negatives():
    ts = np.linspace(0, 0.99, 7)
    np.testing.assert_allclose(codim2_rate(CODIM2, ts), -codim2_rate_exponent_form(CODIM2, ts))
    assert np.all(codim2_rate(CODIM2, ts) > 0)


def test_ball_points_inside_and_radius_law():
    n, R = 5, 2.0
    x = sample(Ball2(R), n, RngStream(9), size=20_000).values
    assert constraint_residual(Ball2(R), sample(Ball2(R), n, RngStream(9), size=50)) == 0.0
    # ||x|| / (sqrt(n) R) has CDF r^n for a uniform point in the n-ball
    r = np.linalg.norm(x, axis=1) / (math.sqrt(n) * R)
    assert r.max() <= 1.0
    assert stats.kstest(r, lambda v: np.clip(v, 0, 1) ** n).pvalue > 1e-4


def test_ball_marginal_against_rejection_oracle():
    n, R = 4, 1.0
    g = np.random.Generator(np.random.Philox(3))
    pts = g.uniform(-1, 1, size=(200_000, n))
    pts = pts[np.sum(pts * pts, axis=1) <= 1.0] * math.sqrt(n) * R
    dens = BallMarginal(n, R)
    assert stats.kstest(pts[:, 0], dens.cdf).pvalue > 1e-4
    assert dens.variance == pytest.approx(np.var(pts[:, 0]), rel=0.02)
    draws = dens.draw(RngStream(4), 20_000)
    assert stats.ks_2samp(draws, pts[:20_000, 0]).pvalue > 1e-4


def test_wiener_increments():
    s = sample(WienerSpace(), 32, RngStream(2), size=20_000)
    inc = np.diff(np.concatenate([s.x0[:, None], s.values], axis=1), axis=1)
    assert stats.kstest(inc.ravel() * math.sqrt(32), "norm").pvalue > 1e-4
    assert np.all(s.x0 == 0)


def test_coordinate_densities():
    assert coordinate_density(BoundedUniform(0, 2), 0.5) == Uniform(0, 2)
    assert coordinate_density(IidDensity("gaussian", 1.0, 2.0), 0.3) == Gaussian(1.0, 4.0)
    d = coordinate_density(DerivConstrained(), 0.4, n=100)
    assert isinstance(d, Dirac) and d.c == pytest.approx(0.2)
    assert isinstance(coordinate_density(Ball2(1.0), 0.5, n=10), BallMarginal)
    assert coordinate_density(WienerSpace(), 0.25) == Gaussian(0.0, 0.25)
    with pytest.raises(UnsupportedQuery):
        coordinate_density(LayerSimplex(), 0.5)
    with pytest.raises(ParameterError):
        coordinate_density(BoundedUniform(), 0.0)


@pytest.mark.parametrize("dens", [Uniform(-1, 2), Exponential(2.5), Gaussian(0.5, 2.0), BallMarginal(7, 1.5)])
def test_density_pdf_integrates_to_cdf(dens):
    from scipy import integrate

    lo, hi = dens.support()
    lo, hi = max(lo, -20), min(hi, 20)
    mid = 0.5 * (lo + hi)
    area, _ = integrate.quad(lambda v: float(dens.pdf(v)), lo, mid)
    assert area == pytest.approx(float(dens.cdf(mid)), abs=1e-8)
    m, _ = integrate.quad(lambda v: v * float(dens.pdf(v)), lo, hi)
    assert m == pytest.approx(dens.mean, abs=1e-7)


@given(st.integers(2, 64), st.integers(0, 2**32))
def test_codim1_samples_always_on_hyperplane(n, seed):
    space = Codim1("2+sin(x)", 0.7)
    s = sample(space, n, RngStream(seed), size=4)
    assert constraint_residual(space, s) <= 1e-12
