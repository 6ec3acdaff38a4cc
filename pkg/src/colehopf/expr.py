"""Symbolic expressions in one variable ``x`` with named real parameters.

Expressions are immutable trees built from numbers, the variable ``x``,
named parameters, unary minus, the binary operators ``+ - * / ^`` and the
functions ``exp ln sin cos tan sqrt sinh cosh``.  Trees are constant-folded
as they are built; no other simplification is attempted.

    >>> e = parse("C*exp(alpha*x)")
    >>> str(differentiate(e))
    'C*(exp(alpha*x)*alpha)'
    >>> evaluate(e, 0.0, {"C": 2.0, "alpha": 5.0})
    2.0
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.integrate import quad

from .errors import EvaluationError, ParseError, SolverError, UnboundParameterError

FUNCTIONS = ("exp", "ln", "sin", "cos", "tan", "sqrt", "sinh", "cosh")
RESERVED = ("x",) + FUNCTIONS

ParamEnv = Mapping[str, float]


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __pow__(self, other):
        return power(self, as_expr(other))

    def __rpow__(self, other):
        return power(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __str__(self):
        return to_text(self)

    def diff(self, order: int = 1) -> Expr:
        return differentiate(self, order)

    def __call__(self, x, env: ParamEnv | None = None):
        return evaluate(self, x, env)

    @property
    def children(self) -> tuple[Expr, ...]:
        return ()


@dataclass(frozen=True, repr=False)
class Const(Expr):
    value: float

    def __post_init__(self):
        # normalise -0.0 and ints so structural equality is value equality
        object.__setattr__(self, "value", float(self.value) + 0.0)

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, repr=False)
class Var(Expr):
    def __repr__(self):
        return "Var()"


@dataclass(frozen=True, repr=False)
class Param(Expr):
    name: str

    def __repr__(self):
        return f"Param({self.name!r})"


@dataclass(frozen=True, repr=False)
class Neg(Expr):
    arg: Expr

    @property
    def children(self):
        return (self.arg,)

    def __repr__(self):
        return f"Neg({self.arg!r})"


@dataclass(frozen=True, repr=False)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    @property
    def children(self):
        return (self.left, self.right)

    def __repr__(self):
        return f"BinOp({self.op!r}, {self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Call(Expr):
    func: str
    arg: Expr

    @property
    def children(self):
        return (self.arg,)

    def __repr__(self):
        return f"Call({self.func!r}, {self.arg!r})"


@dataclass(frozen=True, repr=False)
class Antiderivative(Expr):
    """``int_lower^x integrand(s) ds``, evaluated by adaptive quadrature.

    Not part of the text grammar; produced by code that needs a primitive
    it cannot write in closed form.  Its derivative is the integrand.
    """

    integrand: Expr
    lower: float

    @property
    def children(self):
        return (self.integrand,)

    def __repr__(self):
        return f"Antiderivative({self.integrand!r}, {self.lower!r})"


X = Var()
ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return parse(value)
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Const(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


# ---------------------------------------------------------------------------
# smart constructors (constant folding and neutral-element elimination)

_BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
    "^": math.pow,
}

_MATH = {
    "exp": math.exp,
    "ln": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "sqrt": math.sqrt,
    "sinh": math.sinh,
    "cosh": math.cosh,
}

_NUMPY = {
    "exp": np.exp,
    "ln": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sqrt": np.sqrt,
    "sinh": np.sinh,
    "cosh": np.cosh,
}


def _is(e: Expr, value: float) -> bool:
    return isinstance(e, Const) and e.value == value


def _try_fold(fn, *args) -> Const | None:
    try:
        v = fn(*args)
    except (ArithmeticError, ValueError):
        return None
    if isinstance(v, complex) or not math.isfinite(v):
        return None
    return Const(v)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _try_fold(_BINARY["+"], a.value, b.value) or BinOp("+", a, b)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return BinOp("+", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _try_fold(_BINARY["-"], a.value, b.value) or BinOp("-", a, b)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return BinOp("-", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _try_fold(_BINARY["*"], a.value, b.value) or BinOp("*", a, b)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if _is(a, -1.0):
        return neg(b)
    if _is(b, -1.0):
        return neg(a)
    return BinOp("*", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _try_fold(_BINARY["/"], a.value, b.value) or BinOp("/", a, b)
    if _is(b, 1.0):
        return a
    if _is(b, -1.0):
        return neg(a)
    if _is(a, 0.0) and not _is(b, 0.0):
        return ZERO
    return BinOp("/", a, b)


def power(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _try_fold(_BINARY["^"], a.value, b.value) or BinOp("^", a, b)
    if _is(b, 1.0):
        return a
    if _is(b, 0.0):
        return ONE
    return BinOp("^", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def call(func: str, arg: Expr) -> Expr:
    if func not in FUNCTIONS:
        raise ValueError(f"unknown function {func!r}")
    if isinstance(arg, Const):
        return _try_fold(_MATH[func], arg.value) or Call(func, arg)
    return Call(func, arg)


def exp(a) -> Expr:
    return call("exp", as_expr(a))


def ln(a) -> Expr:
    return call("ln", as_expr(a))


def sin(a) -> Expr:
    return call("sin", as_expr(a))


def cos(a) -> Expr:
    return call("cos", as_expr(a))


def sqrt(a) -> Expr:
    return call("sqrt", as_expr(a))


_REBUILD = {"+": add, "-": sub, "*": mul, "/": div, "^": power}


def fold(e: Expr) -> Expr:
    """Rebuild ``e`` bottom-up through the folding constructors."""
    if isinstance(e, Neg):
        return neg(fold(e.arg))
    if isinstance(e, BinOp):
        return _REBUILD[e.op](fold(e.left), fold(e.right))
    if isinstance(e, Call):
        return call(e.func, fold(e.arg))
    if isinstance(e, Antiderivative):
        return Antiderivative(fold(e.integrand), e.lower)
    return e


def substitute(e: Expr, env: ParamEnv) -> Expr:
    """Replace bound parameters by constants and fold."""
    if isinstance(e, Param):
        return Const(env[e.name]) if e.name in env else e
    if isinstance(e, Neg):
        return neg(substitute(e.arg, env))
    if isinstance(e, BinOp):
        return _REBUILD[e.op](substitute(e.left, env), substitute(e.right, env))
    if isinstance(e, Call):
        return call(e.func, substitute(e.arg, env))
    if isinstance(e, Antiderivative):
        return Antiderivative(substitute(e.integrand, env), e.lower)
    return e


def free_params(e: Expr) -> frozenset[str]:
    if isinstance(e, Param):
        return frozenset((e.name,))
    out = frozenset()
    for c in e.children:
        out |= free_params(c)
    return out


def depends_on_x(e: Expr) -> bool:
    if isinstance(e, (Var, Antiderivative)):
        return True
    return any(depends_on_x(c) for c in e.children)


# ---------------------------------------------------------------------------
# differentiation


def _d(e: Expr) -> Expr:
    if isinstance(e, (Const, Param)):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return neg(_d(e.arg))
    if isinstance(e, Antiderivative):
        return e.integrand
    if isinstance(e, Call):
        u, du = e.arg, _d(e.arg)
        if _is(du, 0.0):
            return ZERO
        f = e.func
        if f == "exp":
            outer = e
        elif f == "ln":
            return div(du, u)
        elif f == "sin":
            outer = call("cos", u)
        elif f == "cos":
            outer = neg(call("sin", u))
        elif f == "tan":
            return div(du, power(call("cos", u), Const(2.0)))
        elif f == "sqrt":
            return div(du, mul(Const(2.0), e))
        elif f == "sinh":
            outer = call("cosh", u)
        else:  # cosh
            outer = call("sinh", u)
        return mul(outer, du)
    assert isinstance(e, BinOp)
    a, b = e.left, e.right
    if e.op == "+":
        return add(_d(a), _d(b))
    if e.op == "-":
        return sub(_d(a), _d(b))
    if e.op == "*":
        return add(mul(_d(a), b), mul(a, _d(b)))
    if e.op == "/":
        da, db = _d(a), _d(b)
        if _is(db, 0.0):
            return div(da, b)
        return div(sub(mul(da, b), mul(a, db)), power(b, Const(2.0)))
    # "^"
    if not depends_on_x(b):
        return mul(mul(b, power(a, sub(b, ONE))), _d(a))
    return _d(call("exp", mul(b, call("ln", a))))


def differentiate(e: Expr, order: int = 1) -> Expr:
    """Return the ``order``-th derivative of ``e`` with respect to ``x``."""
    if int(order) != order or order < 1:
        raise ValueError(f"derivative order must be a positive integer, got {order!r}")
    for _ in range(int(order)):
        e = _d(e)
    return e


# ---------------------------------------------------------------------------
# text form

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    n = len(src)
    while pos < n:
        if src[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {src[pos]!r}", _byte_offset(src, pos))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


def _byte_offset(src: str, pos: int) -> int:
    return len(src[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, _byte_offset(self.src, tok[2]))

    def expect(self, value):
        tok = self.take()
        if tok[1] != value or tok[0] == "end":
            raise self.error(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = (add if op == "+" else sub)(node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = (mul if op == "*" else div)(node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return power(base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.take()
        kind, text, _ = tok
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            called = self.peek()[:2] == ("op", "(")
            if text in FUNCTIONS:
                if not called:
                    raise self.error(f"function {text!r} needs an argument", tok)
                self.take()
                arg = self.expr()
                self.expect(")")
                return call(text, arg)
            if called:
                raise self.error(f"unknown function {text!r}", tok)
            return X if text == "x" else Param(text)
        if tok[:2] == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of input", tok)
        raise self.error(f"unexpected {text!r}", tok)


def parse(src: str) -> Expr:
    """Parse expression text into a (constant-folded) tree."""
    if not isinstance(src, str):
        raise TypeError("expression source must be text")
    if not src.strip():
        raise ParseError("empty expression", 0)
    p = _Parser(src)
    node = p.expr()
    if p.peek()[0] != "end":
        raise p.error(f"unexpected {p.peek()[1]!r}")
    return node


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg) or (isinstance(e, Const) and e.value < 0):
        return 3
    return 5


def _num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(e: Expr) -> str:
    """Render ``e`` in the parse grammar; ``parse(to_text(e)) == e`` for
    trees without :class:`Antiderivative` nodes."""
    if isinstance(e, Const):
        return _num(e.value)
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Param):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({to_text(e.arg)})"
    if isinstance(e, Antiderivative):
        return f"integral({to_text(e.integrand)}, {_num(e.lower)})"
    if isinstance(e, Neg):
        inner = to_text(e.arg)
        return f"-{inner}" if _prec(e.arg) >= 3 else f"-({inner})"
    p = _PREC[e.op]
    left, right = to_text(e.left), to_text(e.right)
    if e.op == "^":
        if _prec(e.left) < 5:
            left = f"({left})"
        if _prec(e.right) < 3 or _prec(e.right) == 3:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p or _prec(e.right) == 3:
        right = f"({right})"
    return f"{left}{e.op}{right}"


# ---------------------------------------------------------------------------
# evaluation


def _check_bound(e: Expr, env: ParamEnv | None):
    missing = free_params(e) - set(env or {})
    if missing:
        raise UnboundParameterError(missing)


def _antiderivative(integrand: Callable[[float], float], lower: float, x):
    """Vectorised ``int_lower^x integrand``; integrates between sorted
    evaluation points and accumulates."""

    def piece(a, b):
        if a == b:
            return 0.0
        val, err = quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
        if not math.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
            raise SolverError(f"quadrature failed on [{a}, {b}] (error estimate {err:.3g})")
        return val

    xs = np.asarray(x, dtype=float)
    if xs.ndim == 0:
        return piece(lower, float(xs))
    flat = xs.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_x = flat[order]
    out = np.empty_like(sorted_x)
    # split at the lower limit so each cumulative sweep starts there
    k = int(np.searchsorted(sorted_x, lower))
    acc, prev = 0.0, lower
    for i in range(k, len(sorted_x)):
        acc += piece(prev, sorted_x[i])
        out[i], prev = acc, sorted_x[i]
    acc, prev = 0.0, lower
    for i in range(k - 1, -1, -1):
        acc += piece(prev, sorted_x[i])
        out[i], prev = acc, sorted_x[i]
    result = np.empty_like(flat)
    result[order] = out
    return result.reshape(xs.shape)


def _walk(e: Expr, x, env: ParamEnv):
    if isinstance(e, Const):
        v = e.value
    elif isinstance(e, Var):
        v = x
    elif isinstance(e, Param):
        v = float(env[e.name])
    elif isinstance(e, Neg):
        v = -_walk(e.arg, x, env)
    elif isinstance(e, Call):
        v = _NUMPY[e.func](_walk(e.arg, x, env))
    elif isinstance(e, Antiderivative):
        v = _antiderivative(compile_expr(e.integrand, env).scalar, e.lower, x)
    else:
        a, b = _walk(e.left, x, env), _walk(e.right, x, env)
        if e.op == "+":
            v = a + b
        elif e.op == "-":
            v = a - b
        elif e.op == "*":
            v = a * b
        elif e.op == "/":
            v = np.divide(a, b)
        else:
            v = np.power(a, b)
    if not np.all(np.isfinite(v)):
        raise EvaluationError(f"non-finite value in subexpression {to_text(e)}", e)
    return v


def evaluate(e: Expr, x, env: ParamEnv | None = None):
    """Evaluate ``e`` at ``x`` (a float or an array of floats).

    Raises :class:`UnboundParameterError` when a parameter of ``e`` is not in
    ``env`` and :class:`EvaluationError` (carrying the innermost offending
    subexpression) when any intermediate value is not finite.
    """
    env = env or {}
    _check_bound(e, env)
    scalar = np.ndim(x) == 0
    xv = float(x) if scalar else np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        v = _walk(e, xv, env)
    if scalar:
        return float(v)
    return np.broadcast_to(np.asarray(v, dtype=float), xv.shape).copy()


class CompiledExpr:
    """Fast evaluator for one expression with parameters bound.

    The expression is turned into a single Python expression (``math``
    functions for scalars, ``numpy`` ufuncs for arrays).  Any exception or
    non-finite result falls back to :func:`evaluate`, which locates the
    offending subexpression and raises.
    """

    def __init__(self, e: Expr, env: ParamEnv | None = None):
        env = dict(env or {})
        _check_bound(e, env)
        self.expr = e
        self.env = env
        self._helpers = {}
        src = self._gen(e)
        scalar_ns = {f"_{k}": v for k, v in _MATH.items()}
        scalar_ns["_pow"] = math.pow
        vector_ns = {f"_{k}": v for k, v in _NUMPY.items()}
        vector_ns["_pow"] = np.power
        lines = ["def _f(x):"]
        for node, i in self._helpers.items():
            f = CompiledExpr(node.integrand, env).scalar
            scalar_ns[f"_ad{i}"] = vector_ns[f"_ad{i}"] = (
                lambda t, f=f, lo=node.lower: _antiderivative(f, lo, t)
            )
            lines.append(f"    _a{i} = _ad{i}(x)")
        lines.append(f"    return {src}")
        self.source = "\n".join(lines)
        # generated from a parse tree, never from raw user text
        exec(self.source, scalar_ns)  # noqa: S102
        exec(self.source, vector_ns)  # noqa: S102
        self._scalar = scalar_ns["_f"]
        self._vector = vector_ns["_f"]

    def _gen(self, e: Expr) -> str:
        if isinstance(e, Const):
            return f"({e.value!r})"
        if isinstance(e, Var):
            return "x"
        if isinstance(e, Param):
            return f"({float(self.env[e.name])!r})"
        if isinstance(e, Neg):
            return f"(-{self._gen(e.arg)})"
        if isinstance(e, Call):
            return f"_{e.func}({self._gen(e.arg)})"
        if isinstance(e, Antiderivative):
            i = self._helpers.setdefault(e, len(self._helpers))
            return f"_a{i}"
        a, b = self._gen(e.left), self._gen(e.right)
        if e.op == "^":
            return f"_pow({a}, {b})"
        return f"({a} {e.op} {b})"

    def scalar(self, x: float) -> float:
        try:
            v = self._scalar(float(x))
        except (ArithmeticError, ValueError):
            v = math.nan
        if not math.isfinite(v):
            return evaluate(self.expr, x, self.env)
        return float(v)

    def __call__(self, x):
        if np.ndim(x) == 0:
            return self.scalar(x)
        xv = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            v = self._vector(xv)
        if not np.all(np.isfinite(v)):
            return evaluate(self.expr, xv, self.env)
        return np.broadcast_to(np.asarray(v, dtype=float), xv.shape).copy()


def compile_expr(e: Expr, env: ParamEnv | None = None) -> CompiledExpr:
    return CompiledExpr(e, env)
