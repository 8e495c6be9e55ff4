"""Tiny arithmetic expression grammar for coefficients given in run configs.

Grammar (part of the CLI contract):

    expr   := term  (('+'|'-') term)*
    term   := unary (('*'|'/') unary)*
    unary  := ('+'|'-') unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names: variables x, y, z, t; constants pi, e; functions sin, cos, exp, tanh.
Expressions evaluate vectorized over numpy arrays and support symbolic
differentiation with respect to any variable (needed for homogenizer
derivatives); the exponent of '^' must be variable-free for differentiation.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .errors import ExpressionError

VARIABLES = ("x", "y", "z", "t")
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "tanh": np.tanh}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(src):
    pos, out = 0, []
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ExpressionError(f"unexpected character {src[pos]!r} in {src!r}")
        pos = m.end()
        if m.group("num") is not None:
            out.append(("num", float(m.group("num"))))
        elif m.group("name") is not None:
            out.append(("name", m.group("name")))
        else:
            out.append(("op", m.group("op")))
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, src):
        self.src = src
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val = self.take()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r} in {self.src!r}")

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ExpressionError(f"trailing input in {self.src!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = ("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = ("mul" if op == "*" else "div", node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return ("neg", self.unary())
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return ("pow", base, self.unary())
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return ("num", val)
        if kind == "name":
            if val in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return ("call", val, arg)
            if val in CONSTANTS:
                return ("num", CONSTANTS[val])
            if val in VARIABLES:
                return ("var", val)
            raise ExpressionError(
                f"unknown name {val!r} in {self.src!r}; allowed: "
                f"variables {VARIABLES}, constants {tuple(CONSTANTS)}, "
                f"functions {tuple(FUNCTIONS)}"
            )
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ExpressionError(f"unexpected token in {self.src!r}")


def parse(src):
    """Parse an expression string into an AST."""
    if not isinstance(src, str) or not src.strip():
        raise ExpressionError(f"expression must be a non-empty string, got {src!r}")
    return _Parser(src).parse()


def _is_const(node, value=None):
    return node[0] == "num" and (value is None or node[1] == value)


def _add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return ("num", a[1] + b[1])
    return ("add", a, b)


def _sub(a, b):
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return ("num", a[1] - b[1])
    return ("sub", a, b)


def _mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ("num", 0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return ("num", a[1] * b[1])
    return ("mul", a, b)


def _div(a, b):
    if _is_const(a, 0.0):
        return ("num", 0.0)
    if _is_const(b, 1.0):
        return a
    return ("div", a, b)


def diff(node, var):
    """Symbolic derivative of an AST with respect to one variable."""
    kind = node[0]
    if kind == "num":
        return ("num", 0.0)
    if kind == "var":
        return ("num", 1.0 if node[1] == var else 0.0)
    if kind == "neg":
        return ("neg", diff(node[1], var))
    if kind == "add":
        return _add(diff(node[1], var), diff(node[2], var))
    if kind == "sub":
        return _sub(diff(node[1], var), diff(node[2], var))
    if kind == "mul":
        a, b = node[1], node[2]
        return _add(_mul(diff(a, var), b), _mul(a, diff(b, var)))
    if kind == "div":
        a, b = node[1], node[2]
        num = _sub(_mul(diff(a, var), b), _mul(a, diff(b, var)))
        return _div(num, ("mul", b, b))
    if kind == "pow":
        base, expo = node[1], node[2]
        dexpo = diff(expo, var)
        if not _is_const(dexpo, 0.0):
            raise ExpressionError(
                "differentiation requires a variable-free exponent in '^'"
            )
        dbase = diff(base, var)
        return _mul(_mul(expo, ("pow", base, _sub(expo, ("num", 1.0)))), dbase)
    if kind == "call":
        fname, arg = node[1], node[2]
        darg = diff(arg, var)
        if fname == "sin":
            outer = ("call", "cos", arg)
        elif fname == "cos":
            outer = ("neg", ("call", "sin", arg))
        elif fname == "exp":
            outer = ("call", "exp", arg)
        elif fname == "tanh":
            th = ("call", "tanh", arg)
            outer = _sub(("num", 1.0), ("mul", th, th))
        else:  # pragma: no cover - parser rejects unknown functions
            raise ExpressionError(f"no derivative rule for {fname}")
        return _mul(outer, darg)
    raise ExpressionError(f"cannot differentiate node {kind!r}")


def evaluate(node, env):
    """Evaluate an AST; env maps variable names to scalars or arrays."""
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        return env[node[1]]
    if kind == "neg":
        return -evaluate(node[1], env)
    if kind == "add":
        return evaluate(node[1], env) + evaluate(node[2], env)
    if kind == "sub":
        return evaluate(node[1], env) - evaluate(node[2], env)
    if kind == "mul":
        return evaluate(node[1], env) * evaluate(node[2], env)
    if kind == "div":
        return evaluate(node[1], env) / evaluate(node[2], env)
    if kind == "pow":
        return evaluate(node[1], env) ** evaluate(node[2], env)
    if kind == "call":
        return FUNCTIONS[node[1]](evaluate(node[2], env))
    raise ExpressionError(f"cannot evaluate node {kind!r}")


def depends_on(node, var):
    """True if the AST references the given variable."""
    kind = node[0]
    if kind == "num":
        return False
    if kind == "var":
        return node[1] == var
    if kind in ("neg",):
        return depends_on(node[1], var)
    if kind == "call":
        return depends_on(node[2], var)
    return depends_on(node[1], var) or depends_on(node[2], var)


class SpaceTimeFunction:
    """Callable wrapper for a parsed expression f(x, y, z, t).

    Calling convention: f(coords, t) where coords is a tuple of per-axis
    arrays (broadcastable against each other) and t is a scalar. Missing
    axes (2D) evaluate z as 0.
    """

    def __init__(self, src_or_ast):
        if isinstance(src_or_ast, str):
            self.src = src_or_ast
            self.ast = parse(src_or_ast)
        else:
            self.src = None
            self.ast = src_or_ast

    def __call__(self, coords, t):
        env = {"x": 0.0, "y": 0.0, "z": 0.0, "t": t}
        for name, arr in zip(("x", "y", "z"), coords):
            env[name] = arr
        # overflow propagates as inf and is caught by the field validators
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            val = evaluate(self.ast, env)
        shape = np.broadcast_shapes(*(np.shape(c) for c in coords)) if coords else ()
        return np.broadcast_to(np.asarray(val, dtype=float), shape).copy()

    def diff(self, var):
        return SpaceTimeFunction(diff(self.ast, var))

    def is_time_dependent(self):
        return depends_on(self.ast, "t")
