"""Execute experiment plans and serialize the report rows."""

from __future__ import annotations

import cmath
import csv
import io
import json
import math
from dataclasses import asdict, dataclass, replace

from . import montecarlo as mc
from .analytic import exchange_mean, functional_law
from .config import ExperimentPlan
from .errors import (
    DivergentMean,
    DomainError,
    FuncMeanError,
    IllPosedConstraint,
    NonConcentrating,
    UnsupportedQuery,
)
from .functionals import Composite
from .numcore import Grid
from .spaces import (
    Cauchy,
    CauchySpace,
    Dirac,
    Gaussian,
    WienerSpace,
    coordinate_density,
    describe,
)

FIELDS = (
    "experiment_id",
    "space",
    "functional",
    "n",
    "N",
    "seed",
    "analytic_mean",
    "analytic_var",
    "mc_mean",
    "mc_var",
    "mc_stderr",
    "abs_error",
    "z_score",
    "status",
)
STATUSES = ("OK", "HEAVY_TAIL", "DIVERGENT", "UNSUPPORTED", "NONCONCENTRATING", "ILL_POSED")


@dataclass(frozen=True)
class ReportRow:
    experiment_id: str
    space: str
    functional: str
    n: int | None
    N: int
    seed: int
    analytic_mean: float | None = None
    analytic_var: float | None = None
    mc_mean: float | None = None
    mc_var: float | None = None
    mc_stderr: float | None = None
    abs_error: float | None = None
    z_score: float | None = None
    status: str = "OK"
    # set when the row could not be evaluated at all; not serialized
    failed: bool = False


def _finite(v):
    return v is not None and math.isfinite(v)


def _mean_row(base: ReportRow, rep: mc.EstimateReport) -> ReportRow:
    abs_err = None
    if _finite(rep.analytic_mean):
        abs_err = abs(rep.mc_mean - rep.analytic_mean)
    if rep.heavy_tailed:
        status = "HEAVY_TAIL"
    elif _finite(rep.analytic_mean) and _finite(rep.mc_mean):
        status = "OK"
    else:
        status = "UNSUPPORTED"
    return replace(
        base,
        analytic_mean=rep.analytic_mean,
        analytic_var=rep.analytic_var,
        mc_mean=rep.mc_mean,
        mc_var=rep.mc_var,
        mc_stderr=rep.stderr,
        abs_error=abs_err,
        z_score=rep.z_score,
        status=status,
    )


def _analytic_status(plan: ExperimentPlan) -> str | None:
    """Status implied by the analytic side alone (None when nothing special applies)."""
    try:
        exchange_mean(plan.space, plan.functional)
    except IllPosedConstraint:
        return "ILL_POSED"
    except DivergentMean:
        return "DIVERGENT"
    except (NonConcentrating, UnsupportedQuery, FuncMeanError):
        return None
    return None


def _check_mean(plan, base, n, workers):
    rep = mc.estimate(plan.space, plan.functional, n, plan.N, plan.seed, workers)
    row = _mean_row(base, rep)
    if row.status == "UNSUPPORTED" and _analytic_status(plan) == "DIVERGENT":
        row = replace(row, status="DIVERGENT")
    rows = [row]
    if plan.events:
        values = mc.functional_values(plan.space, plan.functional, n, plan.N, plan.seed, workers)
        for lo, hi in plan.events:
            ev = mc.event_probability(values, lo, hi)
            rows.append(
                replace(
                    base,
                    experiment_id=f"{base.experiment_id}/event[{lo:g},{hi:g}]",
                    mc_mean=ev.p,
                    mc_var=ev.p * (1.0 - ev.p),
                    mc_stderr=math.sqrt(ev.p * (1.0 - ev.p) / ev.N),
                    status="OK",
                )
            )
    return rows


def _summary_row(base, exponent, status):
    return replace(base, experiment_id=f"{base.experiment_id}/slope", n=None, mc_mean=exponent, status=status)


def _check_decay(plan, base, workers):
    rows = []
    if len(plan.n_list) < 3:
        return [replace(base, n=None, status="UNSUPPORTED")]
    fit = mc.variance_decay(plan.space, plan.functional, plan.n_list, plan.N, plan.seed, workers)
    for n, v in zip(fit.ns, fit.values):
        rows.append(replace(base, n=n, mc_var=v, status="OK"))
    rows.append(_summary_row(base, fit.slope, "OK"))
    return rows


def _check_divergence(plan, base, workers):
    if len(plan.n_list) < 3:
        return [replace(base, n=None, status="UNSUPPORTED")]
    res = mc.divergence_scan(plan.space, plan.functional, plan.n_list, plan.N, plan.seed, workers)
    rows = [replace(base, n=n, mc_mean=m, status="OK") for n, m in zip(res.fit.ns, res.fit.values)]
    rows.append(_summary_row(base, res.exponent, "DIVERGENT" if res.divergent else "OK"))
    return rows


def _check_ks(plan, base, n, workers):
    if plan.ks_t is not None:
        density = coordinate_density(plan.space, plan.ks_t)
        k, _ = Grid(n).snap(plan.ks_t)
        values = mc.collect(plan.space, n, plan.N, plan.seed, lambda s: s.values[:, k - 1], workers)
    else:
        density = functional_law(plan.space, plan.functional)
        if isinstance(density, Dirac) or not hasattr(density, "cdf"):
            return replace(base, status="UNSUPPORTED")
        values = mc.functional_values(plan.space, plan.functional, n, plan.N, plan.seed, workers)
    ks = mc.ks_statistic(values, density)
    rep = mc.summarize(values, n)
    mean = density.mean if math.isfinite(density.mean) else None
    var = density.variance if math.isfinite(density.variance) else None
    heavy = isinstance(density, Cauchy)
    return replace(
        base,
        analytic_mean=mean,
        analytic_var=var,
        mc_mean=rep.mc_mean,
        mc_var=rep.mc_var,
        mc_stderr=rep.stderr,
        abs_error=ks,
        status="HEAVY_TAIL" if heavy else "OK",
    )


def _check_gap(plan, base, n, workers):
    if not isinstance(plan.functional, Composite):
        return replace(base, status="UNSUPPORTED")
    gap = mc.exchange_gap(plan.space, plan.functional, n, plan.N, plan.seed, workers)
    nonconc = isinstance(plan.space, (WienerSpace, CauchySpace))
    return replace(
        base,
        analytic_mean=gap.predicted,
        mc_mean=gap.mc_mean,
        mc_stderr=gap.stderr,
        abs_error=gap.gap,
        z_score=None if nonconc else (gap.mc_mean - gap.predicted) / gap.stderr if gap.stderr > 0 else None,
        status="NONCONCENTRATING" if nonconc else "OK",
    )


def _law_cf(law, t):
    if isinstance(law, Dirac):
        return cmath.exp(1j * t * law.c)
    if isinstance(law, Gaussian):
        return cmath.exp(1j * t * law.mu - 0.5 * law.var * t * t)
    if isinstance(law, Cauchy):
        return complex(math.exp(-abs(t)))
    return None


def _check_cf(plan, base, n, workers):
    values = mc.functional_values(plan.space, plan.functional, n, plan.N, plan.seed, workers)
    phi = complex(mc.empirical_cf(values, [plan.cf_t])[0])
    try:
        ref = _law_cf(functional_law(plan.space, plan.functional), plan.cf_t)
    except (UnsupportedQuery, DivergentMean):
        ref = None
    return replace(
        base,
        analytic_mean=None if ref is None else ref.real,
        mc_mean=phi.real,
        abs_error=None if ref is None else abs(phi - ref),
        status="OK" if ref is not None else "UNSUPPORTED",
    )


def _error_status(exc) -> str:
    if isinstance(exc, IllPosedConstraint):
        return "ILL_POSED"
    if isinstance(exc, DivergentMean):
        return "DIVERGENT"
    if isinstance(exc, NonConcentrating):
        return "NONCONCENTRATING"
    return "UNSUPPORTED"


def _run_one(plan: ExperimentPlan, check: str, n: int | None, seed: int, workers: int) -> list[ReportRow]:
    base = ReportRow(f"{plan.id}/{check}", describe(plan.space), str(plan.functional), n, plan.N, seed)
    plan = replace(plan, seed=seed)
    try:
        if check == "mean":
            return _check_mean(plan, base, n, workers)
        if check == "variance_decay":
            return _check_decay(plan, base, workers)
        if check == "divergence":
            return _check_divergence(plan, base, workers)
        if check == "ks":
            return [_check_ks(plan, base, n, workers)]
        if check == "exchange_gap":
            return [_check_gap(plan, base, n, workers)]
        if check == "cf":
            return [_check_cf(plan, base, n, workers)]
    except (FuncMeanError, DomainError) as e:
        status = _error_status(e)
        return [replace(base, status=status, failed=status in ("ILL_POSED", "UNSUPPORTED"))]
    raise ValueError(f"unknown check {check!r}")


def run_plan(plans, workers: int = 1, seed: int | None = None) -> list[ReportRow]:
    """Run every check of every plan; errors become row statuses and never abort the batch."""
    rows = []
    for plan in plans:
        s = plan.seed if seed is None else seed
        for check in plan.checks:
            if check in ("variance_decay", "divergence"):
                rows.extend(_run_one(plan, check, None, s, workers))
            else:
                for n in plan.n_list:
                    rows.extend(_run_one(plan, check, n, s, workers))
    return rows


def rows_failed(rows) -> bool:
    """True when any row is ill-posed or could not be evaluated."""
    return any(r.status == "ILL_POSED" or r.failed for r in rows)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _record(row: ReportRow) -> dict:
    d = asdict(row)
    d.pop("failed")
    return d


def emit_report(rows, fmt: str = "csv") -> bytes:
    """Serialize rows as CSV (fixed header) or JSON lines with the same field names."""
    if not rows:
        raise ValueError("no rows to emit")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(FIELDS)
        for r in rows:
            rec = _record(r)
            w.writerow([_cell(rec[f]) for f in FIELDS])
        return buf.getvalue().encode("utf-8")
    if fmt == "jsonl":
        lines = []
        for r in rows:
            rec = _record(r)
            out = {}
            for f in FIELDS:
                v = rec[f]
                if isinstance(v, float):
                    v = float("%.17g" % v) if math.isfinite(v) else None
                out[f] = v
            lines.append(json.dumps(out, separators=(",", ":")))
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise ValueError(f"unknown format {fmt!r}")
