"""Minimal arithmetic expression language over state variables x1..xm.

Grammar::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := ('-')? atom ('^' integer)?
    atom   := number | 'x' digits | func '(' expr ')' | '(' expr ')'

with functions sin, cos, exp, tanh and insignificant whitespace. Expressions
support symbolic differentiation (with constant folding), printing back to
parseable text, and compilation to fast numpy callables.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .core import SddelimError

FUNCTIONS = ("sin", "cos", "exp", "tanh")


class ExpressionSyntaxError(SddelimError):
    """Raised on malformed expression text; carries the character position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvaluationError(SddelimError):
    """Raised when evaluation hits a pole (division by zero)."""


class Expr:
    """Base class for expression nodes; nodes are immutable."""

    def __call__(self, x):
        return evaluate(self, x)

    def __str__(self):
        return to_source(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 1-based, printed as x1..xm


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * /
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


_TOKEN_RE = re.compile(
    r"(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))")


def _tokenize(text):
    tokens = []
    pos = 0
    end = len(text)
    while pos < end:
        if text[pos].isspace():
            pos += 1
            continue
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = match.lastgroup
        tokens.append((kind, match.group(kind), pos))
        pos = match.end()
    tokens.append(("end", "", end))
    return tokens


class _Parser:
    def __init__(self, tokens, m):
        self.tokens = tokens
        self.m = m
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, value, pos = self.peek()
        if kind != "op" or value != op:
            raise ExpressionSyntaxError(f"expected {op!r}", pos)
        return self.next()

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {value!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.next()
                node = BinOp(value, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.next()
                node = BinOp(value, node, self.factor())
            else:
                return node

    def factor(self):
        kind, value, _ = self.peek()
        negated = kind == "op" and value == "-"
        if negated:
            self.next()
        node = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.next()
            node = Pow(node, self.integer())
        return Neg(node) if negated else node

    def integer(self):
        sign = 1
        kind, value, pos = self.peek()
        if kind == "op" and value == "-":
            self.next()
            sign = -1
            kind, value, pos = self.peek()
        if kind != "number" or not value.isdigit():
            raise ExpressionSyntaxError("integer exponent expected", pos)
        self.next()
        return sign * int(value)

    def atom(self):
        kind, value, pos = self.next()
        if kind == "number":
            return Num(float(value))
        if kind == "ident":
            if re.fullmatch(r"x\d+", value):
                index = int(value[1:])
                if not 1 <= index <= self.m:
                    raise ExpressionSyntaxError(
                        f"variable index out of range [1, {self.m}]: {value}", pos)
                return Var(index)
            if value in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(value, arg)
            raise ExpressionSyntaxError(f"unknown name {value!r}", pos)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExpressionSyntaxError(
            "expected a number, variable, function or '('", pos)


def parse_expr(text, m):
    """Parse ``text`` into an expression over variables x1..xm."""
    return _Parser(_tokenize(text), m).parse()


_NP_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh}


def evaluate(expr, x):
    """Evaluate at state ``x`` (sequence of scalars or broadcastable arrays)."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        return x[expr.index - 1]
    if isinstance(expr, Neg):
        return -evaluate(expr.arg, x)
    if isinstance(expr, BinOp):
        a = evaluate(expr.left, x)
        b = evaluate(expr.right, x)
        if expr.op == "+":
            return a + b
        if expr.op == "-":
            return a - b
        if expr.op == "*":
            return a * b
        return _checked_div(a, b)
    if isinstance(expr, Pow):
        base = evaluate(expr.base, x)
        if expr.exponent < 0:
            return _checked_div(1.0, base ** (-expr.exponent))
        return base ** expr.exponent
    if isinstance(expr, Call):
        return _NP_FUNCS[expr.func](evaluate(expr.arg, x))
    raise TypeError(f"not an expression node: {expr!r}")


def _checked_div(a, b):
    if np.any(np.asarray(b) == 0.0):
        raise EvaluationError("division by zero during expression evaluation")
    return a / b


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def _precedence(expr):
    if isinstance(expr, BinOp):
        return _PRECEDENCE[expr.op]
    if isinstance(expr, Neg):
        return 3
    return 9


def to_source(expr):
    """Print as text that reparses to an equivalent expression."""
    if isinstance(expr, Num):
        if expr.value < 0:
            return f"-{-expr.value!r}"
        return repr(expr.value)
    if isinstance(expr, Var):
        return f"x{expr.index}"
    if isinstance(expr, Neg):
        inner = to_source(expr.arg)
        if _precedence(expr.arg) <= 3 and not isinstance(expr.arg, (Num, Var, Call, Pow)):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(expr, BinOp):
        a = to_source(expr.left)
        b = to_source(expr.right)
        prec = _PRECEDENCE[expr.op]
        if _precedence(expr.left) < prec:
            a = f"({a})"
        # right operand of - and / binds tighter; parenthesise equal precedence
        if _precedence(expr.right) < prec or (
                _precedence(expr.right) == prec and expr.op in "-/"):
            b = f"({b})"
        if expr.op in "*/" and isinstance(expr.right, Neg):
            b = f"({b})"
        return f"{a} {expr.op} {b}"
    if isinstance(expr, Pow):
        base = to_source(expr.base)
        if not isinstance(expr.base, (Num, Var, Call)) or (
                isinstance(expr.base, Num) and expr.base.value < 0):
            base = f"({base})"
        return f"{base}^{expr.exponent}"
    if isinstance(expr, Call):
        return f"{expr.func}({to_source(expr.arg)})"
    raise TypeError(f"not an expression node: {expr!r}")


# --- symbolic differentiation ------------------------------------------------

def _fold(expr):
    """Constant-fold a node whose children are already folded."""
    if isinstance(expr, Neg) and isinstance(expr.arg, Num):
        return Num(-expr.arg.value)
    if isinstance(expr, BinOp):
        a, b = expr.left, expr.right
        if isinstance(a, Num) and isinstance(b, Num):
            if expr.op == "/" and b.value == 0.0:
                return expr
            return Num(evaluate(expr, ()))
        if expr.op == "+":
            if isinstance(a, Num) and a.value == 0.0:
                return b
            if isinstance(b, Num) and b.value == 0.0:
                return a
        elif expr.op == "-":
            if isinstance(b, Num) and b.value == 0.0:
                return a
            if isinstance(a, Num) and a.value == 0.0:
                return _fold(Neg(b))
        elif expr.op == "*":
            if (isinstance(a, Num) and a.value == 0.0) or (
                    isinstance(b, Num) and b.value == 0.0):
                return Num(0.0)
            if isinstance(a, Num) and a.value == 1.0:
                return b
            if isinstance(b, Num) and b.value == 1.0:
                return a
        elif expr.op == "/":
            if isinstance(a, Num) and a.value == 0.0 and not (
                    isinstance(b, Num) and b.value == 0.0):
                return Num(0.0)
            if isinstance(b, Num) and b.value == 1.0:
                return a
    if isinstance(expr, Pow):
        if expr.exponent == 0:
            return Num(1.0)
        if expr.exponent == 1:
            return expr.base
        if isinstance(expr.base, Num) and expr.exponent > 0:
            return Num(expr.base.value ** expr.exponent)
    return expr


def _add(a, b):
    return _fold(BinOp("+", a, b))


def _sub(a, b):
    return _fold(BinOp("-", a, b))


def _mul(a, b):
    return _fold(BinOp("*", a, b))


def _div(a, b):
    return _fold(BinOp("/", a, b))


def diff_expr(expr, var_index):
    """Symbolic derivative with respect to x{var_index}."""
    if isinstance(expr, Num):
        return Num(0.0)
    if isinstance(expr, Var):
        return Num(1.0 if expr.index == var_index else 0.0)
    if isinstance(expr, Neg):
        return _fold(Neg(diff_expr(expr.arg, var_index)))
    if isinstance(expr, BinOp):
        da = diff_expr(expr.left, var_index)
        db = diff_expr(expr.right, var_index)
        if expr.op in "+-":
            return _add(da, db) if expr.op == "+" else _sub(da, db)
        if expr.op == "*":
            return _add(_mul(da, expr.right), _mul(expr.left, db))
        # quotient rule
        num = _sub(_mul(da, expr.right), _mul(expr.left, db))
        return _div(num, _fold(Pow(expr.right, 2)))
    if isinstance(expr, Pow):
        dbase = diff_expr(expr.base, var_index)
        power = _mul(Num(float(expr.exponent)), _fold(Pow(expr.base, expr.exponent - 1)))
        return _mul(power, dbase)
    if isinstance(expr, Call):
        darg = diff_expr(expr.arg, var_index)
        if expr.func == "sin":
            outer = Call("cos", expr.arg)
        elif expr.func == "cos":
            outer = _fold(Neg(Call("sin", expr.arg)))
        elif expr.func == "exp":
            outer = expr
        else:  # tanh' = 1 - tanh^2
            outer = _sub(Num(1.0), _fold(Pow(Call("tanh", expr.arg), 2)))
        return _mul(outer, darg)
    raise TypeError(f"not an expression node: {expr!r}")


# --- compilation to fast callables -------------------------------------------

def _py_source(expr):
    """Python source for the compiled form; variables are named x1..xm."""
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, Var):
        return f"x{expr.index}"
    if isinstance(expr, Neg):
        return f"(-{_py_source(expr.arg)})"
    if isinstance(expr, BinOp):
        a, b = _py_source(expr.left), _py_source(expr.right)
        if expr.op == "/":
            return f"_div({a}, {b})"
        return f"({a} {expr.op} {b})"
    if isinstance(expr, Pow):
        if expr.exponent < 0:
            return f"_div(1.0, {_py_source(expr.base)}**{-expr.exponent})"
        return f"({_py_source(expr.base)}**{expr.exponent})"
    if isinstance(expr, Call):
        return f"{expr.func}({_py_source(expr.arg)})"
    raise TypeError(f"not an expression node: {expr!r}")


def compile_exprs(exprs, m):
    """Compile expressions into one callable returning a tuple of values.

    The callable takes the m state components as separate arguments (scalars
    or numpy arrays) so hot loops avoid per-node interpretation.
    """
    exprs = list(exprs)
    args = ", ".join(f"x{i}" for i in range(1, m + 1)) or "*_unused"
    body = ", ".join(_py_source(e) for e in exprs)
    source = f"lambda {args}: ({body}{',' if len(exprs) == 1 else ''})"
    namespace = dict(_NP_FUNCS)
    namespace["_div"] = _checked_div
    return eval(source, namespace)  # noqa: S307 - source built from our own AST
