import math

import numpy as np
import pytest
from scipy import stats

from funcmean import montecarlo as mc
from funcmean.errors import ParameterError
from funcmean.functionals import composite, parse_atom
from funcmean.spaces import BoundedUniform, Cauchy, CauchySpace, Exponential, Gaussian, WienerSpace

F_INT = parse_atom("int(x; 0, 1)")


def test_chunked_collection_is_worker_independent():
    a = mc.functional_values(BoundedUniform(), F_INT, 32, 5000, seed=9, workers=1)
    b = mc.functional_values(BoundedUniform(), F_INT, 32, 5000, seed=9, workers=4)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (5000,)
    c = mc.functional_values(BoundedUniform(), F_INT, 32, 5000, seed=10)
    assert not np.array_equal(a, c)


def test_estimate_bounded_uniform():
    rep = mc.estimate(BoundedUniform(), F_INT, 64, 20_000, seed=1)
    assert rep.analytic_mean == 0.5
    assert abs(rep.z_score) < 4
    assert rep.stderr == pytest.approx(math.sqrt(rep.mc_var / 20_000))
    # Var of the mean of 64 iid U(0,1)
    assert rep.mc_var == pytest.approx(1 / (12 * 64), rel=0.05)


def test_estimate_cauchy_is_flagged_heavy():
    rep = mc.estimate(CauchySpace(), F_INT, 16, 10_000, seed=2)
    assert rep.heavy_tailed and rep.z_score is None
    assert abs(rep.median) < 0.05
    assert rep.iqr == pytest.approx(2.0, rel=0.05)


def test_estimate_composite_against_law_on_cauchy():
    f = composite("(1+y1^2)*exp(-y1^2)", "int(x; 0, 1)")
    rep = mc.estimate(CauchySpace(), f, 64, 20_000, seed=3)
    assert rep.analytic_mean == pytest.approx(1 / math.sqrt(math.pi), abs=1e-10)
    assert abs(rep.z_score) < 4


def test_variance_decay_and_divergence():
    fit = mc.variance_decay(BoundedUniform(), F_INT, [8, 32, 128], 8000, seed=4)
    assert fit.slope == pytest.approx(-1.0, abs=0.1)
    scan = mc.divergence_scan(BoundedUniform(), parse_atom("dint(x^2; 0, 1)"), [8, 16, 32], 4000, seed=4)
    assert scan.divergent and scan.exponent == pytest.approx(2.0, abs=0.1)
    flat = mc.divergence_scan(BoundedUniform(), F_INT, [8, 16, 32], 4000, seed=4)
    assert not flat.divergent
    with pytest.raises(ParameterError):
        mc.variance_decay(BoundedUniform(), F_INT, [8, 32], 100, seed=0)


def test_variance_decay_floors_zero_variance():
    fit = mc.variance_decay(BoundedUniform(), parse_atom("int(1; 0, 1)"), [4, 8, 16], 200, seed=0)
    assert fit.floored


@pytest.mark.parametrize("dist, density", [(stats.norm(0.2, 1.3), Gaussian(0.2, 1.69)), (stats.expon(scale=0.5), Exponential(2.0))])
def test_ks_statistic_matches_scipy(dist, density):
    x = dist.rvs(size=3000, random_state=np.random.Generator(np.random.MT19937(5)))
    assert mc.ks_statistic(x, density) == pytest.approx(stats.kstest(x, dist.cdf).statistic, abs=1e-12)
    with pytest.raises(ParameterError):
        mc.ks_statistic(x[:10], density)


def test_ks_cauchy_average_is_exactly_cauchy():
    vals = mc.functional_values(CauchySpace(), F_INT, 64, 20_000, seed=6)
    assert mc.ks_statistic(vals, Cauchy()) < 0.015


def test_exchange_gap_wiener_versus_uniform():
    f = composite("sin(y1)", "int(x^2; 0, 1)")
    assert mc.exchange_gap(WienerSpace(), f, 64, 10_000, seed=7).gap > 0.05
    g = composite("sin(y1)", "int(x; 0, 1)")
    gap = mc.exchange_gap(BoundedUniform(), g, 512, 10_000, seed=7)
    assert gap.gap <= 3 * gap.stderr + 0.001
    with pytest.raises(ParameterError):
        mc.exchange_gap(BoundedUniform(), F_INT, 8, 100, seed=0)


def test_empirical_cf_of_gaussian():
    x = np.random.Generator(np.random.Philox(1)).normal(size=50_000)
    phi = mc.empirical_cf(x, [0.0, 1.0, 2.0])
    np.testing.assert_allclose(phi.real, np.exp(-0.5 * np.array([0, 1, 4])), atol=0.01)
    assert phi[0] == 1.0


def test_histogram_and_events():
    x = np.arange(10_000) / 10_000
    h = mc.histogram(x)
    assert len(h.counts) == 100 and h.counts.sum() == 10_000
    assert len(mc.histogram(np.zeros(10)).counts) == 4
    ev = mc.event_probability(x, 0.25, 0.5)
    assert ev.p == pytest.approx(0.2501)
    assert ev.lo < ev.p < ev.hi
    ref = stats.binomtest(ev.hits, ev.N).proportion_ci(method="wilson")
    assert (ev.lo, ev.hi) == pytest.approx((ref.low, ref.high))
