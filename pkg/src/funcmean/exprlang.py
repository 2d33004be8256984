"""Small expression language for the integrands g and outer functions h.

Grammar (Pratt / precedence climbing)::

    expr   := literal | variable | name '(' expr ')' | '(' expr ')'
            | '-' expr | expr op expr
    op     := '+' | '-' | '*' | '/' | '^'

``^`` binds tightest and is right associative, then unary minus, then
``* /``, then ``+ -``. Literals are integers or decimals; there is no implicit
multiplication, so ``2x`` is rejected. Scalar expressions use the variable
``x``; multivariate ones use ``y1 .. yk``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import ArityError, DomainError, ParseError

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt", "atan")

# binding powers
_BP_ADD = 10
_BP_MUL = 20
_BP_NEG = 30
_BP_POW = 40
_INFIX = {"+": _BP_ADD, "-": _BP_ADD, "*": _BP_MUL, "/": _BP_MUL, "^": _BP_POW}

_Y_VAR = re.compile(r"y([1-9][0-9]*)\Z")


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Var, Neg, Bin, Call]


# ---------------------------------------------------------------------------
# tokenizer and parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>[0-9]+(?:\.[0-9]*)?|\.[0-9]+)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


@dataclass
class _Tok:
    kind: str  # 'num', 'name', 'op', 'end'
    text: str
    offset: int


def _tokenize(src: str) -> list[_Tok]:
    toks = []
    pos = 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            toks.append(_Tok("end", "", len(src.encode("utf-8"))))
            return toks
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {src[pos]!r}", _byte_offset(src, pos))
        kind = m.lastgroup
        text = m.group(kind)
        toks.append(_Tok(kind, text, _byte_offset(src, m.start(kind))))
        pos = m.end()


def _byte_offset(src, pos):
    return len(src[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def advance(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        tok = self.advance()
        if tok.text != text or tok.kind != "op":
            got = "end of input" if tok.kind == "end" else repr(tok.text)
            raise ParseError(f"expected {text!r}, got {got}", tok.offset)
        return tok

    def parse(self) -> Node:
        node = self.expr(0)
        tok = self.peek()
        if tok.kind != "end":
            raise ParseError(f"unexpected {tok.text!r}", tok.offset)
        return node

    def expr(self, rbp: int) -> Node:
        left = self.nud(self.advance())
        while True:
            tok = self.peek()
            lbp = _INFIX.get(tok.text, -1) if tok.kind == "op" else -1
            if rbp >= lbp:
                break
            self.advance()
            if tok.text == "^":
                right = self.expr(_BP_POW - 1)
            else:
                right = self.expr(lbp)
            left = Bin(tok.text, left, right)
        if self.peek().kind in ("num", "name"):
            tok = self.peek()
            raise ParseError(f"unexpected {tok.text!r} (no implicit multiplication)", tok.offset)
        return left

    def nud(self, tok: _Tok) -> Node:
        if tok.kind == "num":
            return Num(float(tok.text))
        if tok.kind == "name":
            if self.peek().text == "(" and self.peek().kind == "op":
                if tok.text not in FUNCTIONS:
                    raise ParseError(f"unknown function {tok.text!r}", tok.offset)
                self.advance()
                arg = self.expr(0)
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in FUNCTIONS:
                raise ParseError(f"function {tok.text!r} needs an argument", tok.offset)
            if tok.text != "x" and not _Y_VAR.match(tok.text):
                raise ParseError(f"unknown identifier {tok.text!r}", tok.offset)
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "-":
            return Neg(self.expr(_BP_NEG))
        if tok.kind == "op" and tok.text == "(":
            node = self.expr(0)
            self.expect(")")
            return node
        if tok.kind == "end":
            raise ParseError("unexpected end of input", tok.offset)
        raise ParseError(f"unexpected {tok.text!r}", tok.offset)


# ---------------------------------------------------------------------------
# scalar and vector evaluation


def _ln(v):
    if v <= 0:
        raise DomainError(f"ln of non-positive value {v}")
    return math.log(v)


def _sqrt(v):
    if v < 0:
        raise DomainError(f"sqrt of negative value {v}")
    return math.sqrt(v)


def _exp(v):
    try:
        return math.exp(v)
    except OverflowError:
        raise DomainError(f"exp overflow at {v}") from None


def _div(a, b):
    if b == 0:
        raise DomainError("division by zero")
    return a / b


def _pow(a, b):
    if a == 0 and b < 0:
        raise DomainError("zero raised to a negative power")
    if a < 0 and b != math.floor(b):
        raise DomainError(f"negative base {a} with non-integer exponent {b}")
    try:
        r = math.pow(a, b)
    except OverflowError:
        raise DomainError(f"overflow in {a}^{b}") from None
    return r


_SCALAR_FN = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": _exp,
    "ln": _ln,
    "sqrt": _sqrt,
    "atan": math.atan,
}
_SCALAR_OP = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div,
    "^": _pow,
}


def _v_ln(v):
    if np.any(v <= 0):
        raise DomainError("ln of non-positive value")
    return np.log(v)


def _v_sqrt(v):
    if np.any(v < 0):
        raise DomainError("sqrt of negative value")
    return np.sqrt(v)


def _v_div(a, b):
    if np.any(np.asarray(b) == 0):
        raise DomainError("division by zero")
    return a / b


def _v_pow(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any((a == 0) & (b < 0)):
        raise DomainError("zero raised to a negative power")
    if np.any((a < 0) & (b != np.floor(b))):
        raise DomainError("negative base with non-integer exponent")
    return np.power(a, b)


_VECTOR_FN = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "ln": _v_ln,
    "sqrt": _v_sqrt,
    "atan": np.arctan,
}
_VECTOR_OP = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": _v_div,
    "^": _v_pow,
}


def _compile(node: Node, names: tuple[str, ...], fns, ops) -> Callable:
    """Turn an AST into a closure over positional arguments ordered as ``names``."""
    if isinstance(node, Num):
        v = node.value
        return lambda args: v
    if isinstance(node, Var):
        i = names.index(node.name)
        return lambda args: args[i]
    if isinstance(node, Neg):
        inner = _compile(node.arg, names, fns, ops)
        return lambda args: -inner(args)
    if isinstance(node, Call):
        fn = fns[node.fn]
        inner = _compile(node.arg, names, fns, ops)
        return lambda args: fn(inner(args))
    op = ops[node.op]
    left = _compile(node.left, names, fns, ops)
    right = _compile(node.right, names, fns, ops)
    return lambda args: op(left(args), right(args))


def variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg, Call)):
        return variables(node.arg)
    return variables(node.left) | variables(node.right)


def _eval_const(node: Node) -> float:
    return _compile(node, (), _SCALAR_FN, _SCALAR_OP)(())


def fold_constants(node: Node) -> Node:
    """Replace every variable-free subtree by its value (when it evaluates cleanly)."""
    if isinstance(node, (Num, Var)):
        return node
    if isinstance(node, (Neg, Call)):
        arg = fold_constants(node.arg)
        rebuilt = type(node)(arg) if isinstance(node, Neg) else Call(node.fn, arg)
    else:
        rebuilt = Bin(node.op, fold_constants(node.left), fold_constants(node.right))
    if not variables(rebuilt):
        try:
            v = _eval_const(rebuilt)
        except DomainError:
            return rebuilt
        if math.isfinite(v):
            return Num(v)
    return rebuilt


# ---------------------------------------------------------------------------
# printing


def _fmt_num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        s = str(int(v))
    else:
        s = np.format_float_positional(v, trim="-")
    return f"({s})" if v < 0 else s


def to_source(node: Node) -> str:
    """Render an AST in the input grammar; parsing the result gives back the same AST."""
    return _render(node, 0)


def _render(node: Node, ctx: int) -> str:
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({_render(node.arg, 0)})"
    if isinstance(node, Neg):
        s = "-" + _render(node.arg, _BP_NEG)
        return f"({s})" if ctx > _BP_NEG - 1 else s
    bp = _INFIX[node.op]
    if node.op == "^":
        s = f"{_render(node.left, bp + 1)}^{_render(node.right, bp)}"
    else:
        s = f"{_render(node.left, bp)}{node.op}{_render(node.right, bp + 1)}"
    return f"({s})" if ctx > bp else s


# ---------------------------------------------------------------------------
# differentiation


def _add(a, b):
    if a == Num(0.0):
        return b
    if b == Num(0.0):
        return a
    return fold_constants(Bin("+", a, b))


def _sub(a, b):
    if b == Num(0.0):
        return a
    if a == Num(0.0):
        return _neg(b)
    return fold_constants(Bin("-", a, b))


def _mul(a, b):
    if a == Num(0.0) or b == Num(0.0):
        return Num(0.0)
    if a == Num(1.0):
        return b
    if b == Num(1.0):
        return a
    return fold_constants(Bin("*", a, b))


def _div_node(a, b):
    if a == Num(0.0):
        return Num(0.0)
    if b == Num(1.0):
        return a
    return fold_constants(Bin("/", a, b))


def _pow_node(a, b):
    if b == Num(1.0):
        return a
    if b == Num(0.0):
        return Num(1.0)
    return fold_constants(Bin("^", a, b))


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def derive(node: Node, var: str = "x") -> Node:
    """Symbolic derivative with respect to ``var``; only constant folding is applied."""
    if isinstance(node, Num):
        return Num(0.0)
    if isinstance(node, Var):
        return Num(1.0 if node.name == var else 0.0)
    if isinstance(node, Neg):
        return _neg(derive(node.arg, var))
    if isinstance(node, Call):
        u = node.arg
        du = derive(u, var)
        if du == Num(0.0):
            return Num(0.0)
        if node.fn == "sin":
            outer = Call("cos", u)
        elif node.fn == "cos":
            outer = _neg(Call("sin", u))
        elif node.fn == "tan":
            outer = _div_node(Num(1.0), _pow_node(Call("cos", u), Num(2.0)))
        elif node.fn == "exp":
            outer = node
        elif node.fn == "ln":
            outer = _div_node(Num(1.0), u)
        elif node.fn == "sqrt":
            outer = _div_node(Num(1.0), _mul(Num(2.0), node))
        elif node.fn == "atan":
            outer = _div_node(Num(1.0), _add(Num(1.0), _pow_node(u, Num(2.0))))
        else:  # pragma: no cover - catalog is closed
            raise ValueError(node.fn)
        return _mul(outer, du)
    u, v = node.left, node.right
    du, dv = derive(u, var), derive(v, var)
    if node.op == "+":
        return _add(du, dv)
    if node.op == "-":
        return _sub(du, dv)
    if node.op == "*":
        return _add(_mul(du, v), _mul(u, dv))
    if node.op == "/":
        return _div_node(_sub(_mul(du, v), _mul(u, dv)), _pow_node(v, Num(2.0)))
    # power
    if dv == Num(0.0):
        return _mul(_mul(v, _pow_node(u, _sub(v, Num(1.0)))), du)
    if du == Num(0.0):
        return _mul(_mul(Call("ln", u), node), dv)
    return _mul(node, _add(_mul(dv, Call("ln", u)), _div_node(_mul(v, du), u)))


# ---------------------------------------------------------------------------
# public function objects


def _finite_scalar(v):
    if not math.isfinite(v):
        raise DomainError(f"non-finite result {v}")
    return v


@dataclass(frozen=True)
class ScalarFn:
    """Parsed expression in the single variable ``x``."""

    ast: Node
    _scalar: Callable = field(init=False, repr=False, compare=False)
    _vector: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        bad = variables(self.ast) - {"x"}
        if bad:
            raise ArityError(f"scalar expression uses {sorted(bad)}")
        object.__setattr__(self, "_scalar", _compile(self.ast, ("x",), _SCALAR_FN, _SCALAR_OP))
        object.__setattr__(self, "_vector", _compile(self.ast, ("x",), _VECTOR_FN, _VECTOR_OP))

    arity = 1

    def __call__(self, x: float) -> float:
        return _finite_scalar(float(self._scalar((float(x),))))

    def vec(self, xs) -> np.ndarray:
        """Evaluate on an array; raises DomainError if any point is invalid."""
        xs = np.asarray(xs, dtype=float)
        with np.errstate(all="ignore"):
            out = self._vector((xs,))
        out = np.broadcast_to(np.asarray(out, dtype=float), xs.shape)
        if not np.all(np.isfinite(out)):
            raise DomainError("non-finite value in vector evaluation")
        return out

    def derivative(self) -> "ScalarFn":
        return ScalarFn(derive(self.ast, "x"))

    @property
    def is_constant(self) -> bool:
        return isinstance(self.ast, Num)

    def __str__(self):
        return to_source(self.ast)


@dataclass(frozen=True)
class MultiFn:
    """Parsed expression over ``y1 .. y_arity``."""

    ast: Node
    arity: int
    _scalar: Callable = field(init=False, repr=False, compare=False)
    _vector: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(f"y{i}" for i in range(1, self.arity + 1))
        bad = variables(self.ast) - set(names)
        if bad:
            raise ArityError(f"expression uses {sorted(bad)} beyond declared arity {self.arity}")
        object.__setattr__(self, "_scalar", _compile(self.ast, names, _SCALAR_FN, _SCALAR_OP))
        object.__setattr__(self, "_vector", _compile(self.ast, names, _VECTOR_FN, _VECTOR_OP))

    def __call__(self, *args: float) -> float:
        if len(args) != self.arity:
            raise ArityError(f"expected {self.arity} arguments, got {len(args)}")
        return _finite_scalar(float(self._scalar(tuple(float(a) for a in args))))

    def vec(self, *arrays) -> np.ndarray:
        if len(arrays) != self.arity:
            raise ArityError(f"expected {self.arity} arguments, got {len(arrays)}")
        arrays = np.broadcast_arrays(*[np.asarray(a, dtype=float) for a in arrays])
        with np.errstate(all="ignore"):
            out = self._vector(tuple(arrays))
        out = np.broadcast_to(np.asarray(out, dtype=float), arrays[0].shape if arrays else ())
        if not np.all(np.isfinite(out)):
            raise DomainError("non-finite value in vector evaluation")
        return out

    def __str__(self):
        return to_source(self.ast)


def parse(src: str, arity: int | None = None) -> ScalarFn | MultiFn:
    """Parse ``src`` into a ScalarFn (variable ``x``) or a MultiFn (``y1..yk``).

    ``arity`` forces a MultiFn with that many arguments; otherwise the arity is
    the largest ``y`` index used.

    >>> parse("x^2")(3.0)
    9.0
    """
    if not src or not src.strip():
        raise ParseError("empty expression", 0)
    ast = fold_constants(_Parser(src).parse())
    names = variables(ast)
    ys = sorted(int(_Y_VAR.match(v).group(1)) for v in names if v != "x")
    if "x" in names and (ys or arity is not None):
        raise ParseError("cannot mix x with y1..yk", 0)
    if ys or arity is not None:
        k = max(ys) if ys else 0
        if arity is not None:
            if k > arity:
                raise ArityError(f"expression uses y{k} but arity is {arity}")
            k = arity
        return MultiFn(ast, k)
    return ScalarFn(ast)


def parse_scalar(src: str) -> ScalarFn:
    fn = parse(src)
    if not isinstance(fn, ScalarFn):
        raise ParseError(f"expected an expression in x, got one in y-variables: {src!r}", 0)
    return fn


def parse_multi(src: str, arity: int) -> MultiFn:
    if "x" in variables(_Parser(src).parse()):
        raise ParseError(f"expected an expression in y1..y{arity}: {src!r}", 0)
    return parse(src, arity=arity)


def constant_value(src: str) -> float:
    """Value of a variable-free expression such as ``1/3``."""
    fn = parse(src)
    if variables(fn.ast):
        raise ParseError(f"expected a constant, got {src!r}", 0)
    return _eval_const(fn.ast)
