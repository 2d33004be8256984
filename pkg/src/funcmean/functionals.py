"""Functional expression trees and their exact evaluation on discretized samples.

Text syntax for atoms::

    int(g; lo, hi)      integral of g(x(t)) over (lo, hi]
    lin(c; lo, hi)      integral of c(t) x(t) over (lo, hi]
    dint(g; lo, hi)     integral of g(x'(t)) over (lo, hi]
    pt(t)               x(t)
    mint(g; I1; I2)     m-fold integral of g(x(t1), .., x(tm)), g over y1..ym

Bounds default to ``0, 1`` and may be constant expressions such as ``1/2``.
A composite applies an expression ``h`` in ``y1..yk`` to k atoms.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ArityError, BudgetError, ParameterError, ParseError, UnsupportedQuery
from .exprlang import MultiFn, ScalarFn, constant_value, parse, parse_multi, parse_scalar
from .numcore import Grid
from .spaces import DerivSample, LayerSample, PathSample

MULTI_MAX_ARITY = 3
MULTI_BUDGET = 10**8
# grid evaluations held in memory at once while summing multi-integrals
_MULTI_BLOCK = 4_000_000


@dataclass(frozen=True)
class Interval:
    """Half-open interval (lo, hi] inside [0, 1]."""

    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lo <= self.hi <= 1.0:
            raise ParameterError(f"need 0 <= lo <= hi <= 1, got ({self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def is_unit(self) -> bool:
        return self.lo == 0.0 and self.hi == 1.0

    def mask(self, points: np.ndarray) -> np.ndarray:
        return (points > self.lo) & (points <= self.hi)

    def __str__(self):
        return f"{_num(self.lo)}, {_num(self.hi)}"


UNIT = Interval(0.0, 1.0)


def _num(v: float) -> str:
    return np.format_float_positional(float(v), trim="-")


@dataclass(frozen=True)
class IntegralAtom:
    g: ScalarFn
    I: Interval = UNIT

    def __str__(self):
        return f"int({self.g}; {self.I})"


@dataclass(frozen=True)
class WeightedLinearAtom:
    c: ScalarFn
    I: Interval = UNIT

    def __str__(self):
        return f"lin({self.c}; {self.I})"


@dataclass(frozen=True)
class DerivIntegralAtom:
    g: ScalarFn
    I: Interval = UNIT

    def __str__(self):
        return f"dint({self.g}; {self.I})"


@dataclass(frozen=True)
class PointAtom:
    t: float

    def __post_init__(self):
        if not 0.0 <= self.t <= 1.0:
            raise ParameterError(f"point must lie in [0, 1], got {self.t}")

    def __str__(self):
        return f"pt({_num(self.t)})"


@dataclass(frozen=True)
class MultiIntegralAtom:
    g: MultiFn
    intervals: tuple[Interval, ...]

    def __post_init__(self):
        m = len(self.intervals)
        if not 1 <= m <= MULTI_MAX_ARITY:
            raise ParameterError(f"multi-integral arity must be 1..{MULTI_MAX_ARITY}, got {m}")
        if self.g.arity != m:
            raise ArityError(f"integrand arity {self.g.arity} does not match {m} intervals")

    @property
    def m(self) -> int:
        return len(self.intervals)

    def __str__(self):
        return f"mint({self.g}; " + "; ".join(str(i) for i in self.intervals) + ")"


Atom = Union[IntegralAtom, WeightedLinearAtom, DerivIntegralAtom, PointAtom, MultiIntegralAtom]
ATOM_TYPES = (IntegralAtom, WeightedLinearAtom, DerivIntegralAtom, PointAtom, MultiIntegralAtom)


@dataclass(frozen=True)
class Composite:
    """h(child_1, .., child_k) with h written over y1..yk."""

    h: MultiFn
    children: tuple

    def __post_init__(self):
        if self.h.arity != len(self.children):
            raise ArityError(f"h has arity {self.h.arity} but {len(self.children)} children were given")

    def __str__(self):
        inner = "; ".join(f"y{i}={c}" for i, c in enumerate(self.children, 1))
        return f"{self.h} where {inner}"


FunctionalExpr = Union[Atom, Composite]


def atoms(expr) -> list:
    """All atoms of a tree, left to right."""
    if isinstance(expr, Composite):
        out = []
        for c in expr.children:
            out.extend(atoms(c))
        return out
    return [expr]


class FunctionalClass(enum.Enum):
    PURELY_INTEGRAL = "PurelyIntegral"
    MIXED_POINTWISE = "MixedPointwise"
    PURELY_POINTWISE = "PurelyPointwise"


def classify(expr) -> FunctionalClass:
    kinds = [isinstance(a, PointAtom) for a in atoms(expr)]
    if not any(kinds):
        return FunctionalClass.PURELY_INTEGRAL
    if all(kinds):
        return FunctionalClass.PURELY_POINTWISE
    return FunctionalClass.MIXED_POINTWISE


# ---------------------------------------------------------------------------
# evaluation


def eval_functional(expr, smp, grid: Grid | None = None):
    """Discrete value of ``expr`` on a sample (or on each row of a batched sample).

    Raises:
        UnsupportedQuery: the atom is not defined on this kind of sample.
        BudgetError: a multi-integral would need more than 1e8 grid evaluations.
    """
    n = smp.n
    if grid is None:
        grid = Grid(n)
    elif grid.n != n:
        raise ParameterError(f"grid n={grid.n} does not match sample n={n}")
    out = _eval(expr, smp, grid)
    return float(out) if np.ndim(out) == 0 else out


def _path(smp):
    if isinstance(smp, LayerSample):
        raise UnsupportedQuery("layer samples only support int(g; 0, 1)")
    return smp.values


def _eval(expr, smp, grid):
    pts = grid.points
    n = grid.n
    if isinstance(expr, Composite):
        args = [_eval(c, smp, grid) for c in expr.children]
        return expr.h.vec(*args)
    if isinstance(expr, IntegralAtom):
        if isinstance(smp, LayerSample):
            if not expr.I.is_unit:
                raise UnsupportedQuery("layer samples only support integrals over [0, 1]")
            return smp.weights @ expr.g.vec(pts)
        x = _path(smp)[..., expr.I.mask(pts)]
        return expr.g.vec(x).sum(axis=-1) / n
    if isinstance(expr, WeightedLinearAtom):
        mask = expr.I.mask(pts)
        x = _path(smp)[..., mask]
        return x @ expr.c.vec(pts[mask]) / n
    if isinstance(expr, DerivIntegralAtom):
        mask = expr.I.mask(pts)
        if isinstance(smp, DerivSample):
            z = smp.deriv[..., mask]
        elif isinstance(smp, PathSample) and smp.x0 is not None:
            # difference quotients n (x_k - x_{k-1})
            full = np.concatenate([np.asarray(smp.x0)[..., None], smp.values], axis=-1)
            z = (n * np.diff(full, axis=-1))[..., mask]
        else:
            raise UnsupportedQuery("derivative atoms need a derivative sample or a path with x_0")
        return expr.g.vec(z).sum(axis=-1) / n
    if isinstance(expr, PointAtom):
        x = _path(smp)
        has_origin = getattr(smp, "x0", None) is not None
        k, _ = grid.snap(expr.t, has_origin=has_origin)
        if k == 0:
            return np.asarray(smp.x0, dtype=float)
        return x[..., k - 1]
    if isinstance(expr, MultiIntegralAtom):
        return _eval_multi(expr, _path(smp), grid)
    raise ParameterError(f"not a functional: {expr!r}")


def _eval_multi(atom: MultiIntegralAtom, x: np.ndarray, grid: Grid):
    n = grid.n
    if n**atom.m > MULTI_BUDGET:
        raise BudgetError(f"{n}^{atom.m} grid evaluations exceed the budget {MULTI_BUDGET}; lower n")
    pts = grid.points
    cols = [x[..., I.mask(pts)] for I in atom.intervals]
    batched = x.ndim == 2
    if not batched:
        cols = [c[None, :] for c in cols]
    rows = cols[0].shape[0]
    cells = int(np.prod([c.shape[1] for c in cols]))
    block = max(1, _MULTI_BLOCK // max(cells, 1))
    out = np.empty(rows)
    m = atom.m
    for start in range(0, rows, block):
        sl = slice(start, start + block)
        args = []
        for i, c in enumerate(cols):
            shape = [c[sl].shape[0]] + [1] * m
            shape[1 + i] = c.shape[1]
            args.append(c[sl].reshape(shape))
        vals = atom.g.vec(*args)
        out[sl] = vals.reshape(vals.shape[0], -1).sum(axis=1) if cells else 0.0
    out /= float(n) ** m
    return out if batched else out[0]


# ---------------------------------------------------------------------------
# text syntax

_ATOM = re.compile(r"\s*(int|lin|dint|pt|mint)\s*\(")


def _split(src: str, start: int, end: int, sep: str):
    """Split src[start:end] on top-level ``sep``; returns (text, offset) pairs."""
    parts = []
    depth = 0
    last = start
    for i in range(start, end):
        ch = src[i]
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == sep and depth == 0:
            parts.append((src[last:i], last))
            last = i + 1
    parts.append((src[last:end], last))
    return parts


def _shifted(fn, text, offset, *args):
    try:
        return fn(text, *args)
    except ParseError as e:
        raise ParseError(str(e).rsplit(" (at offset", 1)[0], e.offset + offset) from None


def _interval(text: str, offset: int) -> Interval:
    pieces = _split(text, 0, len(text), ",")
    if len(pieces) != 2:
        raise ParseError("interval needs two bounds 'lo, hi'", offset)
    lo = _shifted(constant_value, pieces[0][0], offset + pieces[0][1])
    hi = _shifted(constant_value, pieces[1][0], offset + pieces[1][1])
    try:
        return Interval(lo, hi)
    except ParameterError as e:
        raise ParseError(str(e), offset) from None


def parse_atom(src: str, base: int = 0):
    """Parse one atom such as ``int(x^2; 0, 1/2)``."""
    m = _ATOM.match(src)
    if m is None:
        raise ParseError(f"expected an atom int/lin/dint/pt/mint, got {src.strip()!r}", base)
    close = src.rstrip()
    if not close.endswith(")"):
        raise ParseError("atom must end with ')'", base + len(close))
    body_start, body_end = m.end(), len(close) - 1
    parts = _split(src, body_start, body_end, ";")
    kind = m.group(1)
    if kind == "pt":
        if len(parts) != 1:
            raise ParseError("pt takes a single point", base + body_start)
        t = _shifted(constant_value, parts[0][0], base + parts[0][1])
        try:
            return PointAtom(t)
        except ParameterError as e:
            raise ParseError(str(e), base + body_start) from None
    if kind == "mint":
        if len(parts) < 2:
            raise ParseError("mint needs an integrand and at least one interval", base + body_start)
        intervals = tuple(_interval(t, base + off) for t, off in parts[1:])
        g = _shifted(parse_multi, parts[0][0], base + parts[0][1], len(intervals))
        return MultiIntegralAtom(g, intervals)
    if len(parts) > 2:
        raise ParseError(f"{kind} takes 'expr; lo, hi'", base + parts[2][1])
    fn = _shifted(parse_scalar, parts[0][0], base + parts[0][1])
    I = _interval(parts[1][0], base + parts[1][1]) if len(parts) == 2 else UNIT
    cls = {"int": IntegralAtom, "lin": WeightedLinearAtom, "dint": DerivIntegralAtom}[kind]
    return cls(fn, I)


def parse_functional(spec) -> FunctionalExpr:
    """Build a functional from an atom string or a mapping ``{h: ..., atoms: [...]}``."""
    if isinstance(spec, str):
        return parse_atom(spec)
    if isinstance(spec, dict):
        h_src = spec.get("h")
        atom_srcs = spec.get("atoms")
        if not isinstance(h_src, str) or not isinstance(atom_srcs, (list, tuple)) or not atom_srcs:
            raise ParseError("composite needs 'h' (text) and a nonempty 'atoms' list", 0)
        children = tuple(parse_atom(a) for a in atom_srcs)
        h = parse(h_src, arity=len(children))
        if not isinstance(h, MultiFn):
            raise ParseError("h must be written over y1..yk", 0)
        return Composite(h, children)
    raise ParseError(f"unsupported functional specification {spec!r}", 0)


def composite(h: str, *children) -> Composite:
    """Convenience constructor: ``composite("sin(y1)", "int(x; 0, 1)")``."""
    kids = tuple(parse_atom(c) if isinstance(c, str) else c for c in children)
    return Composite(parse(h, arity=len(kids)), kids)
