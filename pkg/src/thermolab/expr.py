"""Small arithmetic expression language with symbolic differentiation.

Expressions are ASTs over the variables x, y, theta, the constant pi,
the binary operators + - * / ^ (with ^ binding tightest and right
associative), unary minus, and the functions sin, cos, tan, exp, log,
sqrt, tanh, abs.  Evaluation is vectorized over numpy arrays and every
node type knows its own partial derivatives, so arbitrarily nested
derivatives stay analytic.
"""

from __future__ import annotations

import numpy as np

from .errors import ParseError, UnknownIdentifier

VARIABLES = ("x", "y", "theta")

_CONSTANTS = {"pi": np.pi}

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
    # internal only (derivative of abs); not accepted by the parser
    "sign": np.sign,
}

_PARSEABLE_FUNCTIONS = frozenset(
    ("sin", "cos", "tan", "exp", "log", "sqrt", "tanh", "abs")
)


class Expr:
    """Base expression node."""

    def eval(self, x, y, theta):
        raise NotImplementedError

    def diff(self, var):
        raise NotImplementedError

    def __call__(self, x, y, theta):
        return self.eval(x, y, theta)

    # -- operator sugar used internally when assembling derived fields --

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

    def __neg__(self):
        return neg(self)

    def __pow__(self, other):
        return pow_(self, as_expr(other))


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)

    def eval(self, x, y, theta):
        return self.value

    def diff(self, var):
        return Const(0.0)

    def __str__(self):
        if self.value < 0:
            return f"({self.value!r})"
        return repr(self.value)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name

    def eval(self, x, y, theta):
        return {"x": x, "y": y, "theta": theta}[self.name]

    def diff(self, var):
        return Const(1.0 if var == self.name else 0.0)

    def __str__(self):
        return self.name


class Binary(Expr):
    __slots__ = ("a", "b")
    op = "?"

    def __init__(self, a, b):
        self.a = a
        self.b = b

    def __str__(self):
        return f"({self.a}{self.op}{self.b})"


class Add(Binary):
    op = "+"

    def eval(self, x, y, theta):
        return self.a.eval(x, y, theta) + self.b.eval(x, y, theta)

    def diff(self, var):
        return add(self.a.diff(var), self.b.diff(var))


class Sub(Binary):
    op = "-"

    def eval(self, x, y, theta):
        return self.a.eval(x, y, theta) - self.b.eval(x, y, theta)

    def diff(self, var):
        return sub(self.a.diff(var), self.b.diff(var))


class Mul(Binary):
    op = "*"

    def eval(self, x, y, theta):
        return self.a.eval(x, y, theta) * self.b.eval(x, y, theta)

    def diff(self, var):
        return add(
            mul(self.a.diff(var), self.b),
            mul(self.a, self.b.diff(var)),
        )


class Div(Binary):
    op = "/"

    def eval(self, x, y, theta):
        return self.a.eval(x, y, theta) / self.b.eval(x, y, theta)

    def diff(self, var):
        da, db = self.a.diff(var), self.b.diff(var)
        return div(
            sub(mul(da, self.b), mul(self.a, db)),
            mul(self.b, self.b),
        )


class Pow(Binary):
    op = "^"

    def eval(self, x, y, theta):
        return self.a.eval(x, y, theta) ** self.b.eval(x, y, theta)

    def diff(self, var):
        da, db = self.a.diff(var), self.b.diff(var)
        if isinstance(self.b, Const):
            # d(u^c) = c * u^(c-1) * u'
            return mul(
                mul(self.b, pow_(self.a, Const(self.b.value - 1.0))),
                da,
            )
        # d(u^v) = u^v * (v' log u + v u'/u)
        return mul(
            self,
            add(mul(db, call("log", self.a)), mul(self.b, div(da, self.a))),
        )


class Neg(Expr):
    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a

    def eval(self, x, y, theta):
        return -self.a.eval(x, y, theta)

    def diff(self, var):
        return neg(self.a.diff(var))

    def __str__(self):
        return f"(-{self.a})"


class Call(Expr):
    __slots__ = ("fn", "a")

    def __init__(self, fn, a):
        self.fn = fn
        self.a = a

    def eval(self, x, y, theta):
        return _FUNCTIONS[self.fn](self.a.eval(x, y, theta))

    def diff(self, var):
        u, du = self.a, self.a.diff(var)
        if self.fn == "sin":
            outer = call("cos", u)
        elif self.fn == "cos":
            outer = neg(call("sin", u))
        elif self.fn == "tan":
            outer = div(Const(1.0), mul(call("cos", u), call("cos", u)))
        elif self.fn == "exp":
            outer = self
        elif self.fn == "log":
            outer = div(Const(1.0), u)
        elif self.fn == "sqrt":
            outer = div(Const(0.5), self)
        elif self.fn == "tanh":
            outer = sub(Const(1.0), mul(self, self))
        elif self.fn == "abs":
            outer = call("sign", u)
        elif self.fn == "sign":
            outer = Const(0.0)
        else:  # pragma: no cover
            raise ValueError(f"no derivative rule for {self.fn}")
        return mul(outer, du)

    def __str__(self):
        return f"{self.fn}({self.a})"


def as_expr(obj):
    if isinstance(obj, Expr):
        return obj
    if isinstance(obj, (int, float)):
        return Const(obj)
    if isinstance(obj, str):
        return parse_expression(obj)
    raise TypeError(f"cannot convert {type(obj)!r} to Expr")


def _is_const(e, value=None):
    return isinstance(e, Const) and (value is None or e.value == value)


# Smart constructors with light constant folding.  They keep the ASTs
# produced by repeated frame-operator application from ballooning.

def add(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a, b):
    if _is_const(a, 0.0):
        return Const(0.0)
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Const(a.value / b.value)
    return Div(a, b)


def neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def pow_(a, b):
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return Const(1.0)
    if _is_const(a) and _is_const(b):
        return Const(a.value ** b.value)
    return Pow(a, b)


def call(fn, a):
    return Call(fn, a)


# ---------------------------------------------------------------------------
# Parser: recursive descent with standard precedence.
#   expr   := term (('+'|'-') term)*
#   term   := unary (('*'|'/') unary)*
#   unary  := '-' unary | power
#   power  := atom ('^' unary)?          (right associative)
#   atom   := NUMBER | IDENT '(' expr ')' | IDENT | '(' expr ')'
# ---------------------------------------------------------------------------

class _Tokenizer:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.tokens = []
        self._scan()
        self.index = 0

    def _scan(self):
        text = self.text
        i = 0
        n = len(text)
        while i < n:
            c = text[i]
            if c.isspace():
                i += 1
                continue
            if c.isdigit() or c == ".":
                j = i
                while j < n and (text[j].isdigit() or text[j] == "."):
                    j += 1
                # exponent part
                if j < n and text[j] in "eE":
                    k = j + 1
                    if k < n and text[k] in "+-":
                        k += 1
                    if k < n and text[k].isdigit():
                        j = k
                        while j < n and text[j].isdigit():
                            j += 1
                try:
                    value = float(text[i:j])
                except ValueError:
                    raise ParseError(f"bad number '{text[i:j]}'", i)
                self.tokens.append(("num", value, i))
                i = j
            elif c.isalpha() or c == "_":
                j = i
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                self.tokens.append(("ident", text[i:j], i))
                i = j
            elif c in "+-*/^()":
                self.tokens.append((c, c, i))
                i += 1
            else:
                raise ParseError(f"unexpected character '{c}'", i)
        self.tokens.append(("end", None, n))

    def peek(self):
        return self.tokens[self.index]

    def next(self):
        tok = self.tokens[self.index]
        self.index += 1
        return tok


class _Parser:
    def __init__(self, text):
        self.toks = _Tokenizer(text)

    def parse(self):
        e = self.expr()
        kind, _, offset = self.toks.peek()
        if kind != "end":
            raise ParseError("trailing input", offset)
        return e

    def expr(self):
        e = self.term()
        while self.toks.peek()[0] in ("+", "-"):
            op = self.toks.next()[0]
            rhs = self.term()
            e = add(e, rhs) if op == "+" else sub(e, rhs)
        return e

    def term(self):
        e = self.unary()
        while self.toks.peek()[0] in ("*", "/"):
            op = self.toks.next()[0]
            rhs = self.unary()
            e = mul(e, rhs) if op == "*" else div(e, rhs)
        return e

    def unary(self):
        if self.toks.peek()[0] == "-":
            self.toks.next()
            return neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.toks.peek()[0] == "^":
            self.toks.next()
            return pow_(base, self.unary())
        return base

    def atom(self):
        kind, value, offset = self.toks.next()
        if kind == "num":
            return Const(value)
        if kind == "(":
            e = self.expr()
            k, _, off = self.toks.next()
            if k != ")":
                raise ParseError("expected ')'", off)
            return e
        if kind == "ident":
            if self.toks.peek()[0] == "(":
                if value not in _PARSEABLE_FUNCTIONS:
                    raise UnknownIdentifier(value, offset)
                self.toks.next()
                arg = self.expr()
                k, _, off = self.toks.next()
                if k != ")":
                    raise ParseError("expected ')'", off)
                return call(value, arg)
            if value in VARIABLES:
                return Var(value)
            if value in _CONSTANTS:
                return Const(_CONSTANTS[value])
            raise UnknownIdentifier(value, offset)
        raise ParseError(f"unexpected token '{value}'", offset)


def parse_expression(text):
    """Parse expression text into an AST.

    Raises ParseError (with byte offset) on malformed input and
    UnknownIdentifier for names outside the supported vocabulary.
    """
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text).parse()
