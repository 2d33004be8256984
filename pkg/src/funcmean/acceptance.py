"""Acceptance criteria shared by ``funcmean selftest`` and the test suite.

Each criterion returns a :class:`CriterionResult` made of named checks. The
reference constants live in :data:`REFERENCE` and can be overridden, which is
how a tampered constant is shown to surface as a named failure.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import montecarlo as mc
from .analytic import (
    atom_mean,
    cauchy_selfsim_residual,
    charfn_uniform_mean,
    codim2_integral_mean,
    codim2_linear_mean,
    codim_consistency,
    deriv_mean_two_forms,
    exchange_mean,
    law_mean,
)
from .config import load_plans
from .exprlang import parse_scalar
from .functionals import composite, parse_atom
from .numcore import Grid, RngStream
from .runner import emit_report, run_plan
from .spaces import (
    Ball2,
    BoundedUniform,
    Cauchy,
    CauchySpace,
    Codim1,
    Codim2,
    DerivConstrained,
    Gaussian,
    IidDensity,
    LayerSimplex,
    WienerSpace,
    constraint_residual,
    coordinate_density,
    sample,
    well_posed,
)

DEFAULT_SEED = 20240601
N_FULL = 100_000

REFERENCE = {
    "uniform_mean": 0.5,
    "trig_composite": math.exp(math.tan(0.5)) * math.sin(math.cos(0.25)),
    "sine_exp_composite": math.exp(0.25) * math.sin(0.125),
    "deriv_int_x": 0.25,
    "deriv_int_x2": 1.0 / 12.0,
    "arc_length": math.sqrt(2.0) / 2.0 + 0.5 * math.log(1.0 + math.sqrt(2.0)),
    "deriv_int_sin": 2.0 * (1.0 - math.cos(0.5)),
    "ln2": math.log(2.0),
    "cauchy_ey": 1.0 / math.sqrt(math.pi),
    "cauchy_ey2": 5.0 * math.sqrt(2.0) / 8.0 / math.sqrt(math.pi),
    "cauchy_ey2_alt": (math.sqrt(2.0) / 8.0 + 0.5) / math.sqrt(math.pi),
    "wiener_x2_mean": 0.5,
    "wiener_var": 1.0 / 3.0,
}

# Codim2 instance used for the three-way comparison
CODIM2_INSTANCE = dict(a="1+x", b="(1+x+sqrt(1-x))/2", r=1.0, s=0.6)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list[Check] = field(default_factory=list)
    table: list[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, detail):
        self.checks.append(Check(name, bool(passed), detail))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [c.name for c in self.checks if not c.passed]
        tail = f" (failed: {', '.join(failed)})" if failed else ""
        return f"[{status}] criterion {self.number:2d} {self.title}{tail}"


@dataclass
class Context:
    seed: int = DEFAULT_SEED
    quick: bool = False
    workers: int = 1
    ref: dict = field(default_factory=lambda: dict(REFERENCE))

    @property
    def N(self) -> int:
        """Budget for checks whose tolerance scales with the standard error."""
        return N_FULL // 10 if self.quick else N_FULL


def _within_z(res, name, rep, target, k):
    z = (rep.mc_mean - target) / rep.stderr
    res.add(name, abs(z) <= k, f"mc={rep.mc_mean:.6g} target={target:.6g} z={z:+.2f} (limit {k})")


def _within_rel(res, name, value, target, rel):
    err = abs(value - target) / abs(target)
    res.add(name, err <= rel, f"value={value:.6g} target={target:.6g} rel={err:.2e} (limit {rel:g})")


def _within_abs(res, name, value, target, tol):
    err = abs(value - target)
    res.add(name, err <= tol, f"value={value:.12g} target={target:.12g} err={err:.2e} (limit {tol:g})")


def _moment_check(res, name, values, target, k=5.0):
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size))
    z = (mean - target) / se
    res.add(name, abs(z) <= k, f"mc={mean:.6g} target={target:.6g} z={z:+.2f} (limit {k})")


# ---------------------------------------------------------------------------


def criterion_1(ctx: Context) -> CriterionResult:
    res = CriterionResult(1, "bounded-uniform concentration")
    space, f = BoundedUniform(0.0, 1.0), parse_atom("int(x; 0, 1)")
    rep = mc.estimate(space, f, 256, ctx.N, ctx.seed, ctx.workers)
    _within_z(res, "mean n=256", rep, ctx.ref["uniform_mean"], 4)
    fit = mc.variance_decay(space, f, [16, 64, 256], ctx.N, ctx.seed, ctx.workers)
    for n, v in zip(fit.ns, fit.values):
        scaled = 12 * n * v
        res.add(f"12n Var n={n}", 0.9 <= scaled <= 1.1, f"12n*Var={scaled:.4f} (range [0.9, 1.1])")
    res.add("decay slope", -1.15 <= fit.slope <= -0.85, f"slope={fit.slope:.4f} (range [-1.15, -0.85])")
    return res


def criterion_2(ctx: Context) -> CriterionResult:
    res = CriterionResult(2, "nonlinear exchange")
    space = BoundedUniform(0.0, 1.0)
    p2 = composite("exp(tan(y1))*sin(cos(y2))", "int(x; 0, 1)", "int(x^3; 0, 1)")
    e21 = composite("sin(y1)*exp(y2^2)", "int(x^3; 0, 1/2)", "int(x; 0, 1)")
    for name, expr, key in (("trig composite", p2, "trig_composite"), ("sine-exp composite", e21, "sine_exp_composite")):
        target = ctx.ref[key]
        _within_abs(res, f"{name} exchange", exchange_mean(space, expr).mean, target, 1e-9)
        rep = mc.estimate(space, expr, 1024, 10_000, ctx.seed, ctx.workers)
        _within_rel(res, f"{name} MC n=1024", rep.mc_mean, target, 0.01)
    return res


def criterion_3(ctx: Context) -> CriterionResult:
    res = CriterionResult(3, "layer simplex model")
    space = LayerSimplex()
    n = 32
    z = mc.collect(space, n, ctx.N, ctx.seed, lambda s: s.weights[:, :2], ctx.workers)
    _moment_check(res, "E z1", z[:, 0], 1.0 / n)
    _moment_check(res, "E z1 z2", z[:, 0] * z[:, 1], 1.0 / (n * (n + 1)))
    _moment_check(res, "E z1^2", z[:, 0] ** 2, 2.0 / (n * (n + 1)))
    f = parse_atom("int(x; 0, 1)")
    for n in (16, 64, 256):
        rep = mc.estimate(space, f, n, ctx.N, ctx.seed, ctx.workers)
        _within_z(res, f"int x n={n}", rep, (n + 1) / (2 * n), 4)
    values = mc.functional_values(space, f, 256, ctx.N, ctx.seed, ctx.workers)
    low = mc.event_probability(values, 0.25, 1.0 / 3.0)
    high = mc.event_probability(values, 1.0 / 3.0, 0.6)
    res.add("P(1/4<=Y<=1/3)", low.p <= 0.01, f"p={low.p:.4g} wilson=[{low.lo:.3g}, {low.hi:.3g}] (limit <= 0.01)")
    res.add("P(1/3<=Y<=3/5)", high.p >= 0.99, f"p={high.p:.4g} wilson=[{high.lo:.3g}, {high.hi:.3g}] (limit >= 0.99)")
    return res


def criterion_4(ctx: Context) -> CriterionResult:
    res = CriterionResult(4, "derivative constraints")
    space = DerivConstrained()
    for src, key in (("int(x; 0, 1)", "deriv_int_x"), ("int(x^2; 0, 1)", "deriv_int_x2"), ("dint(sqrt(1+x^2); 0, 1)", "arc_length")):
        rep = mc.estimate(space, parse_atom(src), 256, ctx.N, ctx.seed, ctx.workers)
        _within_z(res, f"MC {src} n=256", rep, ctx.ref[key], 4)
    for src, key in (("x", "deriv_int_x"), ("x^2", "deriv_int_x2"), ("sin(x)", "deriv_int_sin")):
        form_a, form_b = deriv_mean_two_forms(parse_scalar(src))
        _within_abs(res, f"two forms g={src} (a)", form_a, ctx.ref[key], 1e-8)
        _within_abs(res, f"two forms g={src} (b)", form_b, ctx.ref[key], 1e-8)
    scan = mc.divergence_scan(BoundedUniform(0.0, 1.0), parse_atom("dint(x^2; 0, 1)"), [16, 64, 256], ctx.N, ctx.seed, ctx.workers)
    res.add("difference-quotient growth", 1.8 <= scan.exponent <= 2.2 and scan.divergent,
            f"exponent={scan.exponent:.4f} (range [1.8, 2.2]) divergent={scan.divergent}")
    return res


def criterion_5(ctx: Context) -> CriterionResult:
    res = CriterionResult(5, "general iid density")
    mu, sigma = 0.3, 0.7
    space = IidDensity("gaussian", mu=mu, sigma=sigma)
    target = mu * mu + sigma * sigma
    f = parse_atom("int(x^2; 0, 1)")
    _within_abs(res, "analytic mean", atom_mean(space, f).mean, target, 1e-9)
    rep = mc.estimate(space, f, 256, ctx.N, ctx.seed, ctx.workers)
    _within_z(res, "MC mean n=256", rep, target, 4)
    h = composite("sin(y1)", "int(x^2; 0, 1)")
    _within_abs(res, "exchange value", exchange_mean(space, h).mean, math.sin(target), 1e-9)
    rep = mc.estimate(space, h, 1024, ctx.N, ctx.seed, ctx.workers)
    _within_rel(res, "exchange MC n=1024", rep.mc_mean, math.sin(target), 0.01)
    return res


def criterion_6(ctx: Context) -> CriterionResult:
    res = CriterionResult(6, "codimension-1 constraint")
    space = Codim1("1+x", 1.0)
    n, t = 512, 0.5
    k, _ = Grid(n).snap(t)
    coords = mc.collect(space, n, N_FULL, ctx.seed, lambda s: s.values[:, k - 1], ctx.workers)
    dens = coordinate_density(space, t)
    ks = mc.ks_statistic(coords, dens)
    res.add("coordinate KS t=0.5 n=512", ks < 0.02, f"KS={ks:.4f} vs Exponential({dens.rate:g}) (limit 0.02)")
    f = parse_atom("lin(1; 0, 1)")
    _within_abs(res, "analytic ln 2", atom_mean(space, f).mean, ctx.ref["ln2"], 1e-9)
    rep = mc.estimate(space, f, 256, ctx.N, ctx.seed, ctx.workers)
    _within_z(res, "MC ln 2 n=256", rep, ctx.ref["ln2"], 4)
    r1 = codim_consistency(space).r1
    res.add("consistency residual", r1 <= 1e-8, f"r1={r1:.2e} (limit 1e-8)")
    return res


def codim2_table(seed: int, N: int, n: int = 256, workers: int = 1) -> list[tuple[str, float]]:
    """Closed-form and Monte Carlo values of the mean of the integral of x on the bundled codim2 instance."""
    space = Codim2(**CODIM2_INSTANCE)
    one = parse_scalar("1")
    rep = mc.estimate(space, parse_atom("int(x; 0, 1)"), n, N, seed, workers)
    cons = codim_consistency(space)
    return [
        ("linear formula as usually stated", codim2_linear_mean(space, one)),
        ("linear formula with exact elimination", codim2_linear_mean(space, one, corrected=True)),
        ("exponential coordinate law", codim2_integral_mean(space, parse_scalar("x"))),
        (f"Monte Carlo n={n}", rep.mc_mean),
        ("Monte Carlo stderr", rep.stderr),
        ("constraint residual r1", cons.r1),
        ("constraint residual r2", cons.r2),
    ]


def criterion_7(ctx: Context) -> CriterionResult:
    res = CriterionResult(7, "codimension-2 constraint")
    space = Codim2(**CODIM2_INSTANCE)
    wp = well_posed(space)
    res.add("well posed", bool(wp), "; ".join(wp.diagnostics) or "all sign checks pass")
    smp = sample(space, 256, RngStream(ctx.seed, 0), size=2048)
    resid = constraint_residual(space, smp)
    res.add("sampler residual", resid <= 1e-9, f"max residual={resid:.2e} (limit 1e-9), rejection={smp.rejection_rate:.3f}")
    table = codim2_table(ctx.seed, ctx.N, workers=ctx.workers)
    res.table = [f"    {name:<40s} {value:.10g}" for name, value in table]
    finite = all(math.isfinite(v) for _, v in table)
    res.add("comparison table finite", finite, f"{len(table)} cells")
    return res


def criterion_8(ctx: Context) -> CriterionResult:
    res = CriterionResult(8, "L2 ball")
    for R in (1.0, 2.0):
        space = Ball2(R)
        n = 512
        k, _ = Grid(n).snap(0.5)
        coords = mc.collect(space, n, N_FULL, ctx.seed, lambda s: s.values[:, k - 1], ctx.workers)
        ks = mc.ks_statistic(coords, Gaussian(0.0, R * R))
        res.add(f"coordinate KS R={R:g}", ks < 0.02, f"KS={ks:.4f} (limit 0.02)")
        rep = mc.estimate(space, parse_atom("int(x; 0, 1)"), 256, ctx.N, ctx.seed, ctx.workers)
        _within_z(res, f"int x R={R:g}", rep, 0.0, 4)
        rep = mc.estimate(space, parse_atom("int(x^2; 0, 1)"), 256, ctx.N, ctx.seed, ctx.workers)
        _within_rel(res, f"int x^2 R={R:g}", rep.mc_mean, R * R, 0.01)
        n = 16
        x1 = mc.collect(space, n, ctx.N, ctx.seed, lambda s: s.values[:, 0], ctx.workers)
        _moment_check(res, f"E x^2 n={n} R={R:g}", x1**2, n * R**2 / (n + 2))
        _moment_check(res, f"E x^4 n={n} R={R:g}", x1**4, 3 * n**2 * R**4 / ((n + 2) * (n + 4)))
    space = Ball2(1.0)
    m = parse_atom("mint(y1*y2; 0, 1/2; 1/2, 1)")
    _within_abs(res, "two-variable atom analytic", atom_mean(space, m).mean, 0.0, 1e-12)
    rep = mc.estimate(space, m, 64, ctx.N, ctx.seed, ctx.workers)
    _within_z(res, "two-variable atom MC n=64", rep, 0.0, 4)
    return res


def criterion_9(ctx: Context) -> CriterionResult:
    res = CriterionResult(9, "Cauchy space")
    space = CauchySpace()
    f = parse_atom("int(x; 0, 1)")
    for n in (4, 64, 256):
        values = mc.functional_values(space, f, n, N_FULL, ctx.seed, ctx.workers)
        ks = mc.ks_statistic(values, Cauchy())
        res.add(f"KS int x n={n}", ks < 0.01, f"KS={ks:.4f} (limit 0.01)")
    worst = max(cauchy_selfsim_residual(t, n) for t in np.linspace(-50, 50, 201) for n in range(1, 33))
    res.add("self-similarity residual", worst <= 1e-12, f"max={worst:.2e} (limit 1e-12)")
    h = parse_scalar("(1+x^2)*exp(-x^2)")
    ey = law_mean(h, Cauchy())
    _within_abs(res, "E Y quadrature", ey, ctx.ref["cauchy_ey"], 1e-10)
    rep = mc.estimate(space, composite("(1+y1^2)*exp(-y1^2)", "int(x; 0, 1)"), 256, N_FULL, ctx.seed, ctx.workers)
    _within_rel(res, "E Y Monte Carlo", rep.mc_mean, ctx.ref["cauchy_ey"], 0.01)
    ey2 = law_mean(parse_scalar("((1+x^2)*exp(-x^2))^2"), Cauchy())
    _within_abs(res, "E Y^2 quadrature", ey2, ctx.ref["cauchy_ey2"], 1e-10)
    alt = ctx.ref["cauchy_ey2_alt"]
    res.table = [f"    E Y^2 quadrature {ey2:.10f}; alternative closed form (sqrt2/8+1/2)/sqrt(pi) {alt:.10f}; differ by {abs(ey2 - alt):.3e} (flagged)"]
    return res


def criterion_10(ctx: Context) -> CriterionResult:
    res = CriterionResult(10, "Wiener space")
    space = WienerSpace()
    n = 256
    rep = mc.estimate(space, parse_atom("int(x^2; 0, 1)"), n, N_FULL, ctx.seed, ctx.workers)
    _within_rel(res, "int x^2 mean", rep.mc_mean, ctx.ref["wiener_x2_mean"], 0.01)
    _within_rel(res, "int x^2 variance", rep.mc_var, ctx.ref["wiener_var"], 0.05)
    rep = mc.estimate(space, parse_atom("int(x; 0, 1)"), n, N_FULL, ctx.seed, ctx.workers)
    _within_z(res, "int x mean", rep, 0.0, 4)
    _within_rel(res, "int x variance", rep.mc_var, ctx.ref["wiener_var"], 0.05)
    ks = [64, 128, 256]
    x = mc.collect(space, n, ctx.N, ctx.seed, lambda s: s.values[:, [k - 1 for k in ks]], ctx.workers)
    col = {k: x[:, i] for i, k in enumerate(ks)}
    for k in ks:
        _moment_check(res, f"E x_k^2 k={k}", col[k] ** 2, k / n)
        _moment_check(res, f"E x_k^4 k={k}", col[k] ** 4, 3 * k * k / n**2)
    for k, j in ((128, 64), (256, 64), (256, 128)):
        _moment_check(res, f"E x_k^2 x_j^2 k={k} j={j}", col[k] ** 2 * col[j] ** 2, (k * j + 2 * j * j) / n**2)
    gap = mc.exchange_gap(space, composite("sin(y1)", "int(x^2; 0, 1)"), n, N_FULL, ctx.seed, ctx.workers)
    res.add("Wiener exchange gap", gap.gap > 0.01, f"gap={gap.gap:.4f} (limit > 0.01)")
    gap = mc.exchange_gap(BoundedUniform(0.0, 1.0), composite("sin(y1)", "int(x; 0, 1)"), 1024, 10_000, ctx.seed, ctx.workers)
    limit = 3 * gap.stderr + 0.001
    res.add("uniform exchange gap", gap.gap <= limit, f"gap={gap.gap:.2e} (limit {limit:.2e})")
    return res


def criterion_11(ctx: Context) -> CriterionResult:
    res = CriterionResult(11, "characteristic functions")
    ts = np.linspace(-10.0, 10.0, 2001)
    sups = []
    for n in (4, 16, 64, 256):
        sups.append(max(abs(charfn_uniform_mean(t, n) - charfn_uniform_mean(t)) for t in ts))
    decreasing = all(b < a for a, b in zip(sups, sups[1:]))
    res.add("sup distance decreasing", decreasing, "sups=" + ", ".join(f"{s:.3e}" for s in sups))
    values = mc.functional_values(CauchySpace(), parse_atom("int(x; 0, 1)"), 256, N_FULL, ctx.seed, ctx.workers)
    phi = complex(mc.empirical_cf(values, [1.0])[0])
    err = abs(phi - math.exp(-1.0))
    res.add("Cauchy empirical cf t=1", err <= 0.02, f"phi={phi.real:.4f}{phi.imag:+.4f}i err={err:.4f} (limit 0.02)")
    return res


def bundled_config_text() -> str:
    return resources.files("funcmean").joinpath("configs/example.yaml").read_text(encoding="utf-8")


def criterion_12(ctx: Context) -> CriterionResult:
    import yaml

    res = CriterionResult(12, "engineering determinism")
    plans = load_plans(yaml.safe_load(bundled_config_text()))
    first = emit_report(run_plan(plans, workers=1))
    second = emit_report(run_plan(plans, workers=1))
    parallel = emit_report(run_plan(plans, workers=8))
    res.add("two runs identical", first == second, f"{len(first)} bytes")
    res.add("workers 1 vs 8 identical", first == parallel, f"{len(parallel)} bytes")
    return res


CRITERIA = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
    criterion_11,
    criterion_12,
]


def run_criterion(number: int, ctx: Context | None = None) -> CriterionResult:
    ctx = ctx or Context()
    start = time.perf_counter()
    res = CRITERIA[number - 1](ctx)
    res.seconds = time.perf_counter() - start
    return res


def run_all(ctx: Context | None = None, numbers=None, echo=print) -> list[CriterionResult]:
    """Run the criteria in order, printing one summary line per criterion plus its checks."""
    ctx = ctx or Context()
    results = []
    for number in numbers or range(1, len(CRITERIA) + 1):
        res = run_criterion(number, ctx)
        results.append(res)
        if echo is not None:
            echo(res.line())
            for c in res.checks:
                echo(f"    {'ok ' if c.passed else 'BAD'} {c.name}: {c.detail}")
            for line in res.table:
                echo(line)
    return results
