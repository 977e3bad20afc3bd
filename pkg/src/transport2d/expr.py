"""Closed-form scalar expressions in ``x`` and ``y``.

Grammar (standard precedence, ``^`` right-associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | '+' unary | power
    power  := atom ('^' unary)?
    atom   := number | 'x' | 'y' | 'pi' | func '(' expr ')' | '(' expr ')'
    func   := neg | sqrt | exp | ln | sin | cos | arctan | abs

Expressions are parsed into immutable nodes that can be evaluated on scalars
or numpy arrays and differentiated symbolically.  Domain violations (``ln`` or
``sqrt`` of a negative number, division by zero, non-integer power of a
negative base) raise :class:`ExprDomainError`; NaN is never produced silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np

FUNCTIONS = ("neg", "sqrt", "exp", "ln", "sin", "cos", "arctan", "abs")
VARIABLES = ("x", "y")
BINARY_OPS = ("+", "-", "*", "/", "^")


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    """Malformed expression text; ``offset`` is a byte offset into the UTF-8 text."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifier(ExprSyntaxError):
    pass


class ExprDomainError(ArithmeticError):
    """Evaluation outside the domain of a primitive."""

    def __init__(self, message: str, subexpr: "Node | None" = None, point=None):
        detail = message
        if subexpr is not None:
            detail += f" in {to_string(subexpr)}"
        if point is not None:
            detail += f" at {tuple(float(v) for v in point)}"
        super().__init__(detail)
        self.subexpr = subexpr
        self.point = point


# --------------------------------------------------------------------- nodes

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Const, Var, Unary, Binary]


def is_constant(node: Node) -> bool:
    if isinstance(node, Const):
        return True
    if isinstance(node, Var):
        return False
    if isinstance(node, Unary):
        return is_constant(node.arg)
    return is_constant(node.left) and is_constant(node.right)


# ------------------------------------------------------------------ scalars

def _pow_scalar(a: float, b: float) -> float:
    if float(b).is_integer():
        if a == 0.0 and b < 0:
            raise ZeroDivisionError("zero to a negative power")
        return float(a) ** int(b)
    if a > 0.0:
        return a ** b
    if a == 0.0:
        if b > 0:
            return 0.0
        raise ZeroDivisionError("zero to a negative power")
    raise ValueError("non-integer power of a negative base")


def _div_scalar(a: float, b: float) -> float:
    if b == 0.0:
        raise ZeroDivisionError("division by zero")
    return a / b


def _sqrt_scalar(a: float) -> float:
    if a < 0.0:
        raise ValueError("sqrt of a negative number")
    return math.sqrt(a)


def _ln_scalar(a: float) -> float:
    if a <= 0.0:
        raise ValueError("ln of a non-positive number")
    return math.log(a)


def _exp_scalar(a: float) -> float:
    return math.exp(a)


_UNARY_SCALAR: Mapping[str, Callable[[float], float]] = {
    "neg": lambda a: -a,
    "sqrt": _sqrt_scalar,
    "exp": _exp_scalar,
    "ln": _ln_scalar,
    "sin": math.sin,
    "cos": math.cos,
    "arctan": math.atan,
    "abs": abs,
}

_BINARY_SCALAR: Mapping[str, Callable[[float, float], float]] = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": _div_scalar,
    "^": _pow_scalar,
}


def _apply_unary(op: str, a: float) -> float:
    return _UNARY_SCALAR[op](a)


def _apply_binary(op: str, a: float, b: float) -> float:
    return _BINARY_SCALAR[op](a, b)


def evaluate(node: Node, p) -> float:
    """Evaluate ``node`` at the point ``p = (x, y)``."""
    x, y = float(p[0]), float(p[1])
    return _eval(node, x, y, p)


def _eval(node: Node, x: float, y: float, p) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return x if node.name == "x" else y
    try:
        if isinstance(node, Unary):
            a = _eval(node.arg, x, y, p)
            out = _apply_unary(node.op, a)
        else:
            a = _eval(node.left, x, y, p)
            b = _eval(node.right, x, y, p)
            out = _apply_binary(node.op, a, b)
    except (ValueError, ZeroDivisionError) as exc:
        raise ExprDomainError(str(exc), node, p) from None
    except OverflowError as exc:
        raise ExprDomainError(f"overflow ({exc})", node, p) from None
    if not math.isfinite(out):
        raise ExprDomainError("non-finite result", node, p)
    return out


# ------------------------------------------------------------------- arrays

def evaluate_array(node: Node, x, y) -> np.ndarray:
    """Vectorized evaluation on broadcastable arrays ``x`` and ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    shape = np.broadcast(x, y).shape
    with np.errstate(all="ignore"):
        out = _eval_array(node, x, y)
    return np.broadcast_to(out, shape).astype(float, copy=True)


def _first_bad(mask, x, y):
    idx = np.argwhere(np.broadcast_to(mask, np.broadcast(mask, x, y).shape))
    if idx.size == 0:
        return None
    i = tuple(idx[0])
    xb = np.broadcast_to(x, np.broadcast(mask, x, y).shape)
    yb = np.broadcast_to(y, np.broadcast(mask, x, y).shape)
    return (float(xb[i]), float(yb[i]))


def _eval_array(node: Node, x, y):
    if isinstance(node, Const):
        return np.float64(node.value)
    if isinstance(node, Var):
        return x if node.name == "x" else y
    if isinstance(node, Unary):
        a = _eval_array(node.arg, x, y)
        op = node.op
        if op == "neg":
            out = -a
        elif op == "sqrt":
            bad = a < 0
            if np.any(bad):
                raise ExprDomainError("sqrt of a negative number", node, _first_bad(bad, x, y))
            out = np.sqrt(a)
        elif op == "ln":
            bad = a <= 0
            if np.any(bad):
                raise ExprDomainError("ln of a non-positive number", node, _first_bad(bad, x, y))
            out = np.log(a)
        elif op == "exp":
            out = np.exp(a)
        elif op == "sin":
            out = np.sin(a)
        elif op == "cos":
            out = np.cos(a)
        elif op == "arctan":
            out = np.arctan(a)
        else:
            out = np.abs(a)
    else:
        a = _eval_array(node.left, x, y)
        b = _eval_array(node.right, x, y)
        op = node.op
        if op == "+":
            out = a + b
        elif op == "-":
            out = a - b
        elif op == "*":
            out = a * b
        elif op == "/":
            bad = b == 0
            if np.any(bad):
                raise ExprDomainError("division by zero", node, _first_bad(bad, x, y))
            out = a / b
        else:
            out = _pow_array(node, a, b, x, y)
    out = np.asarray(out, dtype=float)
    bad = ~np.isfinite(out)
    if np.any(bad):
        raise ExprDomainError("non-finite result", node, _first_bad(bad, x, y))
    return out


def _pow_array(node, a, b, x, y):
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    integer = b == np.round(b)
    zero_neg = (a == 0) & (b < 0)
    if np.any(zero_neg):
        raise ExprDomainError("zero to a negative power", node, _first_bad(zero_neg, x, y))
    neg_frac = (a < 0) & ~integer
    if np.any(neg_frac):
        raise ExprDomainError("non-integer power of a negative base", node, _first_bad(neg_frac, x, y))
    out = np.empty(a.shape)
    # integer exponents: exact repeated multiplication semantics via float power
    out[integer] = np.power(a[integer], b[integer])
    frac = ~integer
    pos = frac & (a > 0)
    out[pos] = np.power(a[pos], b[pos])
    out[frac & (a == 0)] = 0.0
    return out


# ------------------------------------------------------------- compilation

def _emit(node: Node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        a = _emit(node.arg)
        if node.op == "neg":
            return f"(-{a})"
        if node.op == "abs":
            return f"abs({a})"
        if node.op in ("sin", "cos"):
            return f"_m.{node.op}({a})"
        if node.op == "arctan":
            return f"_m.atan({a})"
        return f"_{node.op}({a})"
    a, b = _emit(node.left), _emit(node.right)
    if node.op in ("+", "-", "*"):
        return f"({a} {node.op} {b})"
    if node.op == "/":
        return f"_div({a}, {b})"
    return f"_pow({a}, {b})"


_COMPILE_ENV = {
    "_m": math,
    "_sqrt": _sqrt_scalar,
    "_ln": _ln_scalar,
    "_exp": _exp_scalar,
    "_div": _div_scalar,
    "_pow": _pow_scalar,
}


def compile_scalar(node: Node) -> Callable[[float, float], float]:
    """Fast scalar evaluator ``f(x, y)``; on failure it re-evaluates the tree
    to report the offending subexpression."""
    fast = eval(f"lambda x, y: {_emit(node)}", dict(_COMPILE_ENV))  # noqa: S307 - generated from our own AST

    def f(x: float, y: float) -> float:
        try:
            out = fast(x, y)
        except (ValueError, ZeroDivisionError, OverflowError):
            return _eval(node, float(x), float(y), (x, y))
        if out != out or out in (math.inf, -math.inf):
            return _eval(node, float(x), float(y), (x, y))
        return out

    return f


# ----------------------------------------------------------------- printing

def to_string(node: Node) -> str:
    """Fully parenthesized canonical form; parses back to an equal-valued tree."""
    if isinstance(node, Const):
        if node.value < 0 or (node.value == 0 and math.copysign(1.0, node.value) < 0):
            return f"neg({repr(-node.value)})"
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        return f"{node.op}({to_string(node.arg)})"
    return f"({to_string(node.left)} {node.op} {to_string(node.right)})"


# ----------------------------------------------------------------- building
# Constant folding happens here, and only here.

def _fold(node: Node) -> Node:
    try:
        return Const(_eval(node, 0.0, 0.0, None))
    except ExprDomainError:
        return node


def const(v: float) -> Const:
    return Const(float(v))


def unary(op: str, a: Node) -> Node:
    node = Unary(op, a)
    return _fold(node) if isinstance(a, Const) else node


def binary(op: str, a: Node, b: Node) -> Node:
    if op == "+":
        if _is(a, 0.0):
            return b
        if _is(b, 0.0):
            return a
    elif op == "-":
        if _is(b, 0.0):
            return a
        if _is(a, 0.0):
            return unary("neg", b)
    elif op == "*":
        if _is(a, 0.0) or _is(b, 0.0):
            return Const(0.0)
        if _is(a, 1.0):
            return b
        if _is(b, 1.0):
            return a
    elif op == "/":
        if _is(b, 1.0):
            return a
    elif op == "^":
        if _is(b, 1.0):
            return a
    node = Binary(op, a, b)
    return _fold(node) if isinstance(a, Const) and isinstance(b, Const) else node


def _is(node: Node, v: float) -> bool:
    return isinstance(node, Const) and node.value == v


def add(a, b):
    return binary("+", a, b)


def sub(a, b):
    return binary("-", a, b)


def mul(a, b):
    return binary("*", a, b)


def div(a, b):
    return binary("/", a, b)


def power(a, b):
    return binary("^", a, b)


# ------------------------------------------------------------------ parsing

@dataclass
class _Token:
    kind: str  # "num", "name", "op", "end"
    text: str
    offset: int
    value: float = 0.0


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    i = 0
    n = len(text)

    def boff(k: int) -> int:
        return len(text[:k].encode("utf-8"))

    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    while k < n and text[k].isdigit():
                        k += 1
                    j = k
            lexeme = text[i:j]
            try:
                value = float(lexeme)
            except ValueError:
                raise ExprSyntaxError(f"malformed number {lexeme!r}", boff(i)) from None
            tokens.append(_Token("num", lexeme, boff(i), value))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("name", text[i:j], boff(i)))
            i = j
            continue
        if c in "+-*/^()":
            tokens.append(_Token("op", c, boff(i)))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", boff(i))
    tokens.append(_Token("end", "", boff(n)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> None:
        tok = self.take()
        if tok.text != text or tok.kind != "op":
            found = tok.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {found!r}", tok.offset)

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {tok.text!r}", tok.offset)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            return Unary("neg", self.unary())
        if tok.kind == "op" and tok.text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.take()
        if tok.kind == "num":
            return Const(tok.value)
        if tok.kind == "name":
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text == "pi":
                return Const(math.pi)
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(tok.text, arg)
            raise UnknownIdentifier(f"unknown identifier {tok.text!r}", tok.offset)
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = tok.text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", tok.offset)


def parse_expression(text: str) -> Node:
    """Parse ``text`` into an expression tree (no folding, structure preserved)."""
    if not isinstance(text, str):
        raise ExprSyntaxError(f"expression must be a string, got {type(text).__name__}", 0)
    return _Parser(text).parse()


def constant_value(text: str | float | int) -> float:
    """Evaluate a constant expression such as ``"-pi/2"`` or ``"1/3"``."""
    if isinstance(text, bool):
        raise ExprError("boolean is not a number")
    if isinstance(text, (int, float)):
        return float(text)
    node = parse_expression(text)
    if not is_constant(node):
        raise ExprError(f"{text!r} is not a constant expression")
    return _eval(node, 0.0, 0.0, None)


# ----------------------------------------------------------- differentiation

def differentiate(node: Node, var: str) -> Node:
    """Exact symbolic derivative with respect to ``var`` (``"x"`` or ``"y"``)."""
    if var not in VARIABLES:
        raise ExprError(f"cannot differentiate with respect to {var!r}")
    return _d(node, var)


def _d(node: Node, v: str) -> Node:
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0 if node.name == v else 0.0)
    if isinstance(node, Unary):
        f = _fold_tree(node.arg)
        df = _d(f, v)
        if _is(df, 0.0):
            return Const(0.0)
        op = node.op
        if op == "neg":
            return unary("neg", df)
        if op == "sqrt":
            return div(df, mul(const(2.0), unary("sqrt", f)))
        if op == "exp":
            return mul(unary("exp", f), df)
        if op == "ln":
            return div(df, f)
        if op == "sin":
            return mul(unary("cos", f), df)
        if op == "cos":
            return unary("neg", mul(unary("sin", f), df))
        if op == "arctan":
            return div(df, add(const(1.0), power(f, const(2.0))))
        # abs: sign(f) f' written as f / |f| * f'; undefined at f = 0
        return mul(div(f, unary("abs", f)), df)
    f = _fold_tree(node.left)
    g = _fold_tree(node.right)
    df, dg = _d(f, v), _d(g, v)
    op = node.op
    if op == "+":
        return add(df, dg)
    if op == "-":
        return sub(df, dg)
    if op == "*":
        return add(mul(df, g), mul(f, dg))
    if op == "/":
        return div(sub(mul(df, g), mul(f, dg)), power(g, const(2.0)))
    # power
    if is_constant(g):
        c = _fold_tree(g)
        if _is(df, 0.0):
            return Const(0.0)
        return mul(mul(c, power(f, sub(c, const(1.0)))), df)
    # general f^g = exp(g ln f): d = f^g (g' ln f + g f'/f)
    return mul(power(f, g), add(mul(dg, unary("ln", f)), div(mul(g, df), f)))


def _fold_tree(node: Node) -> Node:
    """Rebuild a tree through the folding constructors."""
    if isinstance(node, (Const, Var)):
        return node
    if isinstance(node, Unary):
        return unary(node.op, _fold_tree(node.arg))
    return binary(node.op, _fold_tree(node.left), _fold_tree(node.right))


def substitute(node: Node, mapping: Mapping[str, Node]) -> Node:
    """Replace variables by expressions (used to rotate fields into local frames)."""
    if isinstance(node, Const):
        return node
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Unary):
        return unary(node.op, substitute(node.arg, mapping))
    return binary(node.op, substitute(node.left, mapping), substitute(node.right, mapping))


# ------------------------------------------------------------------- fields

@dataclass(frozen=True)
class ScalarField:
    """An expression with its two symbolic partial derivatives."""

    value: Node
    dx: Node = field(init=False)
    dy: Node = field(init=False)
    text: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "dx", differentiate(self.value, "x"))
        object.__setattr__(self, "dy", differentiate(self.value, "y"))
        object.__setattr__(self, "_f", compile_scalar(self.value))
        object.__setattr__(self, "_fx", compile_scalar(self.dx))
        object.__setattr__(self, "_fy", compile_scalar(self.dy))
        if not self.text:
            object.__setattr__(self, "text", to_string(self.value))

    @classmethod
    def parse(cls, text: str) -> "ScalarField":
        return cls(parse_expression(text), text=text)

    @classmethod
    def constant(cls, v: float) -> "ScalarField":
        return cls(Const(float(v)))

    def __call__(self, x: float, y: float) -> float:
        return self._f(x, y)

    def grad(self, x: float, y: float) -> tuple[float, float]:
        return (self._fx(x, y), self._fy(x, y))

    def eval_dx(self, x: float, y: float) -> float:
        return self._fx(x, y)

    def eval_dy(self, x: float, y: float) -> float:
        return self._fy(x, y)

    def array(self, x, y) -> np.ndarray:
        return evaluate_array(self.value, x, y)

    def array_dx(self, x, y) -> np.ndarray:
        return evaluate_array(self.dx, x, y)

    def array_dy(self, x, y) -> np.ndarray:
        return evaluate_array(self.dy, x, y)

    def __getstate__(self):
        return {"value": self.value, "text": self.text}

    def __setstate__(self, state):
        object.__setattr__(self, "value", state["value"])
        object.__setattr__(self, "text", state["text"])
        self.__post_init__()


class DivergenceError(ExprError):
    pass


def default_validation_points(bbox=(-2.0, -2.0, 2.0, 2.0), n: int = 11) -> np.ndarray:
    x0, y0, x1, y1 = bbox
    xs = np.linspace(x0, x1, n)
    ys = np.linspace(y0, y1, n)
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True)
class VectorField2:
    """A divergence-free velocity field; construction fails if div u != 0."""

    u1: ScalarField
    u2: ScalarField
    validation_points: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        pts = (np.asarray(self.validation_points, dtype=float)
               if len(self.validation_points) else default_validation_points())
        div_node = _fold_tree(add(self.u1.dx, self.u2.dy))
        if isinstance(div_node, Const):
            if abs(div_node.value) > 1e-10:
                raise DivergenceError(f"divergence != 0 (div u = {div_node.value:g})")
            return
        f = compile_scalar(div_node)
        checked = 0
        for px, py in pts:
            try:
                val = f(px, py)
            except ExprDomainError:
                continue
            checked += 1
            if abs(val) > 1e-10:
                raise DivergenceError(
                    f"divergence != 0: div u = {val:.3e} at ({px:g}, {py:g})")
        if checked == 0:
            raise DivergenceError("divergence could not be evaluated at any validation point")

    @classmethod
    def parse(cls, u1: str, u2: str, validation_points=()) -> "VectorField2":
        return cls(ScalarField.parse(u1), ScalarField.parse(u2), tuple(map(tuple, validation_points)))

    def __call__(self, x: float, y: float) -> tuple[float, float]:
        return (self.u1(x, y), self.u2(x, y))

    def jacobian(self, x: float, y: float) -> tuple[tuple[float, float], tuple[float, float]]:
        return (self.u1.grad(x, y), self.u2.grad(x, y))

    def array(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        return self.u1.array(x, y), self.u2.array(x, y)
