"""Scalar expression trees over chart coordinates.

Expressions are immutable hash-consed-by-value trees built from numeric
literals, coordinate/parameter symbols, the unary functions in
``UNARY_OPS``, the four arithmetic operators and powers with a constant
exponent.  They support exact differentiation, tree-walking evaluation with
domain checks, and compilation to fast Python/numpy callables.
"""

from __future__ import annotations

import math
import re
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

UNARY_OPS = ("neg", "exp", "ln", "sqrt", "sin", "cos", "abs", "sign")
BINARY_OPS = ("add", "sub", "mul", "div")
FUNCTIONS = ("exp", "ln", "sqrt", "sin", "cos", "abs", "sign")

COORD = "coord"
PARAM = "param"


class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UndeclaredSymbolError(ExprError):
    def __init__(self, symbol: str, offset: int | None = None):
        where = "" if offset is None else f" at byte offset {offset}"
        super().__init__(f"undeclared symbol {symbol!r}{where}")
        self.symbol = symbol
        self.offset = offset


class DomainError(ExprError, ArithmeticError):
    """Evaluation left the domain of one of the operations."""

    def __init__(self, message: str, expr: "Expr"):
        super().__init__(f"{message} in sub-expression {to_string(expr)!r}")
        self.expr = expr


# ---------------------------------------------------------------------------
# Node types
# ---------------------------------------------------------------------------


class Expr:
    __slots__ = ("_hash",)

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"{type(self).__name__}({to_string(self)!r})"

    def __str__(self) -> str:
        return to_string(self)

    # operator sugar, always through the folding constructors
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

    def __pow__(self, exponent):
        if isinstance(exponent, Num):
            exponent = exponent.value
        if not isinstance(exponent, (int, float)):
            raise TypeError("exponent must be a constant number")
        return power(self, float(exponent))

    def __neg__(self):
        return neg(self)


class Num(Expr):
    __slots__ = ("value",)
    __hash__ = Expr.__hash__

    def __init__(self, value: float):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"numeric literal must be finite, got {value}")
        self.value = value
        self._hash = hash(("num", value))

    def __eq__(self, other):
        return isinstance(other, Num) and other.value == self.value


class Sym(Expr):
    __slots__ = ("name", "kind")
    __hash__ = Expr.__hash__

    def __init__(self, name: str, kind: str = COORD):
        if kind not in (COORD, PARAM):
            raise ValueError(f"unknown symbol kind {kind!r}")
        self.name = name
        self.kind = kind
        self._hash = hash(("sym", name, kind))

    def __eq__(self, other):
        return (
            isinstance(other, Sym)
            and other.name == self.name
            and other.kind == self.kind
        )


class Unary(Expr):
    __slots__ = ("op", "arg")
    __hash__ = Expr.__hash__

    def __init__(self, op: str, arg: Expr):
        if op not in UNARY_OPS:
            raise ValueError(f"unknown unary op {op!r}")
        self.op = op
        self.arg = arg
        self._hash = hash(("un", op, arg._hash))

    def __eq__(self, other):
        if self is other:
            return True
        return (
            isinstance(other, Unary)
            and other._hash == self._hash
            and other.op == self.op
            and other.arg == self.arg
        )


class Binary(Expr):
    __slots__ = ("op", "left", "right")
    __hash__ = Expr.__hash__

    def __init__(self, op: str, left: Expr, right: Expr):
        if op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {op!r}")
        self.op = op
        self.left = left
        self.right = right
        self._hash = hash(("bin", op, left._hash, right._hash))

    def __eq__(self, other):
        if self is other:
            return True
        return (
            isinstance(other, Binary)
            and other._hash == self._hash
            and other.op == self.op
            and other.left == self.left
            and other.right == self.right
        )


class Pow(Expr):
    __slots__ = ("base", "exponent")
    __hash__ = Expr.__hash__

    def __init__(self, base: Expr, exponent: float):
        exponent = float(exponent)
        if not math.isfinite(exponent):
            raise ValueError("exponent must be finite")
        self.base = base
        self.exponent = exponent
        self._hash = hash(("pow", base._hash, exponent))

    def __eq__(self, other):
        if self is other:
            return True
        return (
            isinstance(other, Pow)
            and other._hash == self._hash
            and other.exponent == self.exponent
            and other.base == self.base
        )


ZERO = Num(0.0)
ONE = Num(1.0)


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return Num(float(value))
    raise TypeError(f"cannot convert {type(value).__name__} to Expr")


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Unary):
        return (e.arg,)
    if isinstance(e, Binary):
        return (e.left, e.right)
    if isinstance(e, Pow):
        return (e.base,)
    return ()


def is_zero(e: Expr) -> bool:
    return isinstance(e, Num) and e.value == 0.0


def is_one(e: Expr) -> bool:
    return isinstance(e, Num) and e.value == 1.0


# ---------------------------------------------------------------------------
# Constant-folding constructors
# ---------------------------------------------------------------------------


def _fold(value: float, fallback: Expr) -> Expr:
    if math.isfinite(value):
        return Num(value)
    return fallback


def add(a: Expr, b: Expr) -> Expr:
    if is_zero(a):
        return b
    if is_zero(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _fold(a.value + b.value, Binary("add", a, b))
    if isinstance(b, Unary) and b.op == "neg":
        return sub(a, b.arg)
    return Binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if is_zero(b):
        return a
    if is_zero(a):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return _fold(a.value - b.value, Binary("sub", a, b))
    if a == b:
        return ZERO
    return Binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if is_zero(a) or is_zero(b):
        return ZERO
    if is_one(a):
        return b
    if is_one(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return _fold(a.value * b.value, Binary("mul", a, b))
    if isinstance(a, Num) and a.value == -1.0:
        return neg(b)
    if isinstance(b, Num) and b.value == -1.0:
        return neg(a)
    return Binary("mul", a, b)


def div(a: Expr, b: Expr) -> Expr:
    if is_zero(a) and not is_zero(b):
        return ZERO
    if is_one(b):
        return a
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return _fold(a.value / b.value, Binary("div", a, b))
    return Binary("div", a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Unary) and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def power(base: Expr, exponent: float) -> Expr:
    exponent = float(exponent)
    if exponent == 0.0:
        return ONE
    if exponent == 1.0:
        return base
    if isinstance(base, Num):
        try:
            return _fold(_pow_scalar(base.value, exponent), Pow(base, exponent))
        except (ValueError, ZeroDivisionError, OverflowError):
            return Pow(base, exponent)
    if isinstance(base, Pow):
        inner = base.exponent
        # (u^p)^q = u^(pq) only when no sign/branch information is lost
        if float(inner).is_integer() and float(exponent).is_integer():
            return power(base.base, inner * exponent)
    return Pow(base, exponent)


def func(op: str, a: Expr) -> Expr:
    if op == "neg":
        return neg(a)
    if isinstance(a, Num):
        try:
            return _fold(_UNARY_SCALAR[op](a.value), Unary(op, a))
        except (ValueError, ZeroDivisionError, OverflowError):
            return Unary(op, a)
    if op == "abs" and isinstance(a, Unary) and a.op == "abs":
        return a
    return Unary(op, a)


def exp(a) -> Expr:
    return func("exp", as_expr(a))


def ln(a) -> Expr:
    return func("ln", as_expr(a))


def sqrt(a) -> Expr:
    return func("sqrt", as_expr(a))


def sin(a) -> Expr:
    return func("sin", as_expr(a))


def cos(a) -> Expr:
    return func("cos", as_expr(a))


def absolute(a) -> Expr:
    return func("abs", as_expr(a))


def sign(a) -> Expr:
    return func("sign", as_expr(a))


def total(terms: Iterable[Expr]) -> Expr:
    out: Expr = ZERO
    for t in terms:
        out = add(out, t)
    return out


# ---------------------------------------------------------------------------
# Scalar semantics
# ---------------------------------------------------------------------------


def _sign(x: float) -> float:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def _ln(x: float) -> float:
    if x <= 0:
        raise ValueError("ln of non-positive argument")
    return math.log(x)


def _sqrt(x: float) -> float:
    if x < 0:
        raise ValueError("sqrt of negative argument")
    return math.sqrt(x)


def _pow_scalar(x: float, c: float) -> float:
    if x == 0.0 and c < 0:
        raise ZeroDivisionError("zero raised to a negative power")
    if c == 2.0:
        return x * x
    if x < 0 and not c.is_integer():
        raise ValueError("negative base with non-integer exponent")
    return math.pow(x, c)


_UNARY_SCALAR: dict[str, Callable[[float], float]] = {
    "neg": lambda x: -x,
    "exp": math.exp,
    "ln": _ln,
    "sqrt": _sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "abs": abs,
    "sign": _sign,
}


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<sym>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    raw = text.encode("utf-8")
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            offset = len(text[:pos].encode("utf-8"))
            raise ParseError(f"unexpected character {text[pos]!r}", offset)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), len(text[:start].encode("utf-8"))))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
    return tokens


class _Parser:
    def __init__(self, text: str, coords: Sequence[str], params: Sequence[str]):
        overlap = set(coords) & set(params)
        if overlap:
            raise ValueError(f"symbols declared as both coordinate and parameter: {sorted(overlap)}")
        self.tokens = _tokenize(text)
        self.i = 0
        self.coords = set(coords)
        self.params = set(params)

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, offset = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", offset)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, offset = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", offset)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = Binary("add" if op == "+" else "sub", e, rhs)
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            e = Binary("mul" if op == "*" else "div", e, rhs)
        return e

    def factor(self) -> Expr:
        kind, text, offset = self.peek()
        if kind == "op" and text in ("-", "+"):
            self.take()
            inner = self.factor()
            return Unary("neg", inner) if text == "-" else inner
        base = self.base()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            base = Pow(base, self.exponent())
        return base

    def exponent(self) -> float:
        kind, text, offset = self.peek()
        if kind == "op" and text == "(":
            self.take()
            value = self.signed_number()
            self.expect(")")
            return value
        return self.signed_number()

    def signed_number(self) -> float:
        sgn = 1.0
        kind, text, offset = self.peek()
        if kind == "op" and text in ("-", "+"):
            self.take()
            sgn = -1.0 if text == "-" else 1.0
            kind, text, offset = self.peek()
        if kind != "num":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"exponent must be a number, found {found}", offset)
        self.take()
        return sgn * float(text)

    def base(self) -> Expr:
        kind, text, offset = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "op" and text == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "sym":
            if text in FUNCTIONS:
                if self.peek()[1] != "(":
                    raise ParseError(f"function {text!r} must be called with '('", offset)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if text in self.coords:
                return Sym(text, COORD)
            if text in self.params:
                return Sym(text, PARAM)
            raise UndeclaredSymbolError(text, offset)
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected token {found}", offset)


def parse(text: str, coords: Sequence[str] = (), params: Sequence[str] = ()) -> Expr:
    """Parse ``text`` into an expression tree.

    Every symbol must be listed in ``coords`` or ``params``; anything else
    raises :class:`UndeclaredSymbolError`.  Syntax errors raise
    :class:`ParseError` with the byte offset of the offending token.
    """
    return _Parser(text, coords, params).parse()


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2}
_NEG_PREC = 3
_POW_PREC = 4
_ATOM_PREC = 5


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return _NEG_PREC
    if isinstance(e, Num) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return _NEG_PREC
    if isinstance(e, Pow):
        return _POW_PREC
    return _ATOM_PREC


def _fmt_num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v)) if v != 0 or math.copysign(1.0, v) > 0 else "-0.0"
    return repr(v)


def to_string(e: Expr) -> str:
    """Render ``e`` in the input grammar; ``parse(to_string(e))`` evaluates like ``e``."""
    memo: dict[int, str] = {}

    def go(node: Expr) -> str:
        key = id(node)
        if key in memo:
            return memo[key]
        out = _render(node, go)
        memo[key] = out
        return out

    return go(e)


def _render(e: Expr, go) -> str:
    if isinstance(e, Num):
        return _fmt_num(e.value)
    if isinstance(e, Sym):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            inner = go(e.arg)
            if _prec(e.arg) < _NEG_PREC:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({go(e.arg)})"
    if isinstance(e, Pow):
        base = go(e.base)
        if _prec(e.base) < _ATOM_PREC:
            base = f"({base})"
        c = _fmt_num(e.exponent)
        if e.exponent < 0:
            c = f"({c})"
        return f"{base}^{c}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        left = go(e.left)
        if _prec(e.left) < p:
            left = f"({left})"
        right = go(e.right)
        # right operand of a left-associative op needs parens at equal precedence
        if _prec(e.right) < p or (_prec(e.right) == p and e.op in ("sub", "div", "add", "mul")
                                  and isinstance(e.right, Binary)):
            right = f"({right})"
        sym = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}[e.op]
        return f"{left}{sym}{right}"
    raise TypeError(f"not an expression: {e!r}")


# ---------------------------------------------------------------------------
# Traversal helpers
# ---------------------------------------------------------------------------


def postorder(roots: Iterable[Expr]) -> list[Expr]:
    """Distinct nodes reachable from ``roots``, children before parents."""
    seen: set[Expr] = set()
    order: list[Expr] = []
    for root in roots:
        stack: list[tuple[Expr, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                if node not in seen:
                    seen.add(node)
                    order.append(node)
                continue
            if node in seen:
                continue
            stack.append((node, True))
            for child in reversed(children(node)):
                if child not in seen:
                    stack.append((child, False))
    return order


def free_symbols(e: Expr) -> set[Sym]:
    return {node for node in postorder([e]) if isinstance(node, Sym)}


def _rebuild(node: Expr, new_children: Sequence[Expr]) -> Expr:
    if isinstance(node, Unary):
        return func(node.op, new_children[0])
    if isinstance(node, Pow):
        return power(new_children[0], node.exponent)
    if isinstance(node, Binary):
        a, b = new_children
        return {"add": add, "sub": sub, "mul": mul, "div": div}[node.op](a, b)
    return node


def substitute(e: Expr, mapping: Mapping[str, Expr | float]) -> Expr:
    """Replace symbols by name and re-fold constants."""
    repl = {name: as_expr(v) for name, v in mapping.items()}
    done: dict[Expr, Expr] = {}
    for node in postorder([e]):
        if isinstance(node, Sym):
            done[node] = repl.get(node.name, node)
        elif isinstance(node, Num):
            done[node] = node
        else:
            done[node] = _rebuild(node, [done[c] for c in children(node)])
    return done[e]


def bind(e: Expr, params: Mapping[str, float]) -> Expr:
    """Substitute numeric values for parameter symbols."""
    return substitute(e, {k: float(v) for k, v in params.items()})


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


class Differentiator:
    """Exact symbolic derivatives with a cache shared across calls.

    Sharing one instance across many related derivatives keeps the results
    as a DAG with common sub-expressions instead of duplicated trees.
    """

    def __init__(self):
        self._cache: dict[tuple[Expr, str], Expr] = {}

    def __call__(self, e: Expr, var: str) -> Expr:
        for node in postorder([e]):
            key = (node, var)
            if key not in self._cache:
                self._cache[key] = self._rule(node, var)
        return self._cache[(e, var)]

    def _d(self, node: Expr, var: str) -> Expr:
        return self._cache[(node, var)]

    def _rule(self, e: Expr, var: str) -> Expr:
        if isinstance(e, Num):
            return ZERO
        if isinstance(e, Sym):
            return ONE if e.name == var else ZERO
        if isinstance(e, Pow):
            du = self._d(e.base, var)
            if is_zero(du):
                return ZERO
            c = e.exponent
            return mul(mul(Num(c), power(e.base, c - 1.0)), du)
        if isinstance(e, Binary):
            da = self._d(e.left, var)
            db = self._d(e.right, var)
            if e.op == "add":
                return add(da, db)
            if e.op == "sub":
                return sub(da, db)
            if e.op == "mul":
                return add(mul(da, e.right), mul(e.left, db))
            # quotient rule written as da/b - a*db/b^2
            if is_zero(db):
                return div(da, e.right)
            return sub(div(da, e.right), div(mul(e.left, db), power(e.right, 2.0)))
        if isinstance(e, Unary):
            u = e.arg
            du = self._d(u, var)
            if is_zero(du):
                return ZERO
            op = e.op
            if op == "neg":
                return neg(du)
            if op == "exp":
                return mul(e, du)
            if op == "ln":
                return div(du, u)
            if op == "sqrt":
                return div(du, mul(Num(2.0), e))
            if op == "sin":
                return mul(cos(u), du)
            if op == "cos":
                return neg(mul(sin(u), du))
            if op == "abs":
                return mul(sign(u), du)
            if op == "sign":
                return ZERO
        raise TypeError(f"cannot differentiate {e!r}")


def differentiate(e: Expr, coord: str) -> Expr:
    """Exact derivative of ``e`` with respect to the symbol named ``coord``."""
    return Differentiator()(e, coord)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def evaluate(e: Expr, point: Mapping[str, float], params: Mapping[str, float] | None = None) -> float:
    """Evaluate by walking the tree; domain violations raise :class:`DomainError`."""
    params = params or {}
    values: dict[Expr, float] = {}
    for node in postorder([e]):
        values[node] = _eval_node(node, values, point, params)
    return values[e]


def _eval_node(node, values, point, params) -> float:
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Sym):
        table = point if node.kind == COORD else params
        if node.name not in table:
            # tolerate a parameter supplied as a coordinate or vice versa
            other = params if node.kind == COORD else point
            if node.name in other:
                return float(other[node.name])
            raise UndeclaredSymbolError(node.name)
        return float(table[node.name])
    try:
        if isinstance(node, Unary):
            out = _UNARY_SCALAR[node.op](values[node.arg])
        elif isinstance(node, Pow):
            out = _pow_scalar(values[node.base], node.exponent)
        else:
            a, b = values[node.left], values[node.right]
            if node.op == "add":
                out = a + b
            elif node.op == "sub":
                out = a - b
            elif node.op == "mul":
                out = a * b
            else:
                if b == 0.0:
                    raise ZeroDivisionError("division by zero")
                out = a / b
    except ZeroDivisionError as exc:
        raise DomainError(str(exc), node) from None
    except ValueError as exc:
        raise DomainError(str(exc), node) from None
    except OverflowError:
        raise DomainError("overflow", node) from None
    if not math.isfinite(out):
        raise DomainError("non-finite result", node)
    return out


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------


def _np_pow(x, c):
    if c == 2.0:
        return x * x
    if c == -1.0:
        return 1.0 / x
    return np.power(x, c)


_NP_FUNCS = {
    "exp": "np.exp",
    "ln": "np.log",
    "sqrt": "np.sqrt",
    "sin": "np.sin",
    "cos": "np.cos",
    "abs": "np.abs",
    "sign": "np.sign",
}

_MATH_FUNCS = {
    "exp": "_exp",
    "ln": "_ln",
    "sqrt": "_sqrt",
    "sin": "_sin",
    "cos": "_cos",
    "abs": "abs",
    "sign": "_sign",
}


class CompiledExprs:
    """A batch of expressions compiled into one function with shared temporaries.

    Call with one argument per variable (scalars or equally-shaped arrays);
    returns a list with one value per expression.  With the numpy backend
    every output is broadcast to the argument shape and non-finite results
    are reported as :class:`DomainError`.
    """

    def __init__(self, exprs: Sequence[Expr], variables: Sequence[str],
                 params: Mapping[str, float] | None = None, backend: str = "numpy"):
        if backend not in ("numpy", "math"):
            raise ValueError(f"unknown backend {backend!r}")
        self.params = dict(params or {})
        self.exprs = [bind(e, self.params) if self.params else e for e in exprs]
        self.variables = list(variables)
        self.backend = backend
        declared = set(self.variables)
        for e in self.exprs:
            for s in free_symbols(e):
                if s.name not in declared:
                    raise UndeclaredSymbolError(s.name)
        self._fn = self._build()

    def _build(self):
        names: dict[Expr, str] = {}
        lines: list[str] = []
        argnames = [f"_a{i}" for i in range(len(self.variables))]
        by_var = dict(zip(self.variables, argnames))
        funcs = _NP_FUNCS if self.backend == "numpy" else _MATH_FUNCS
        powf = "_npow" if self.backend == "numpy" else "_pow"
        counter = 0
        for node in postorder(self.exprs):
            if isinstance(node, Num):
                names[node] = repr(node.value)
                continue
            if isinstance(node, Sym):
                names[node] = by_var[node.name]
                continue
            if isinstance(node, Unary):
                a = names[node.arg]
                code = f"(-{a})" if node.op == "neg" else f"{funcs[node.op]}({a})"
            elif isinstance(node, Pow):
                code = f"{powf}({names[node.base]}, {node.exponent!r})"
            else:
                a, b = names[node.left], names[node.right]
                sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[node.op]
                code = f"({a} {sym} {b})"
            var = f"_t{counter}"
            counter += 1
            lines.append(f"    {var} = {code}")
            names[node] = var
        outs = ", ".join(names[e] for e in self.exprs)
        src = f"def _compiled({', '.join(argnames)}):\n"
        src += "\n".join(lines) + ("\n" if lines else "")
        src += f"    return [{outs}]\n"
        namespace = {
            "np": np,
            "_npow": _np_pow,
            "_pow": _pow_scalar,
            "_exp": math.exp,
            "_ln": _ln,
            "_sqrt": _sqrt,
            "_sin": math.sin,
            "_cos": math.cos,
            "_sign": _sign,
        }
        exec(compile(src, "<berwald_lab.expr>", "exec"), namespace)
        self.source = src
        return namespace["_compiled"]

    def __call__(self, *args):
        if len(args) != len(self.variables):
            raise TypeError(f"expected {len(self.variables)} arguments, got {len(args)}")
        if self.backend == "math":
            try:
                return self._fn(*[float(a) for a in args])
            except (ValueError, ZeroDivisionError, OverflowError):
                self._raise_domain_error(dict(zip(self.variables, args)))
        arrays = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*[a.shape for a in arrays]) if arrays else ()
        with np.errstate(all="ignore"):
            outs = self._fn(*arrays)
        result = []
        for val in outs:
            val = np.broadcast_to(np.asarray(val, dtype=float), shape)
            result.append(val)
        bad = None
        for val in result:
            if not np.all(np.isfinite(val)):
                bad = np.argwhere(~np.isfinite(val))[0]
                break
        if bad is not None:
            idx = tuple(bad)
            point = {v: float(np.broadcast_to(a, shape)[idx]) for v, a in zip(self.variables, arrays)}
            self._raise_domain_error(point, where=idx)
        return result

    def _raise_domain_error(self, point, where=None):
        for e in self.exprs:
            evaluate(e, point)  # raises with the offending sub-expression
        raise DomainError(f"non-finite value at {point}", self.exprs[0])


def compile_exprs(exprs: Sequence[Expr], variables: Sequence[str],
                  params: Mapping[str, float] | None = None, backend: str = "numpy") -> CompiledExprs:
    return CompiledExprs(exprs, variables, params, backend)


def size(e: Expr) -> int:
    """Number of distinct nodes in the DAG of ``e``."""
    return len(postorder([e]))
