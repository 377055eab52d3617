"""Scalar functions of ``t`` written in a small text grammar.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := number | 't' | name | name '(' expr (',' expr)* ')' | '(' expr ')'

Functions: sin, cos, exp, abs, sqrt (one argument) and min, max (two).
Names other than ``t`` are looked up in a parameter table at parse time and
inlined as constants, so a parsed tree never refers to anything but ``t``.
``pi`` (or ``π``) is always bound.

A literal directly behind a unary minus is folded into a negative constant
(``-2`` is ``Const(-2.0)``), which keeps printing and re-parsing lossless.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

__all__ = [
    "ExprNode",
    "Const",
    "Time",
    "Unary",
    "Binary",
    "ExprError",
    "ExprSyntaxError",
    "EvalError",
    "parse",
    "evaluate",
    "to_source",
    "compile_expr",
    "depends_on_t",
    "UNARY_OPS",
    "BINARY_FUNCS",
]

UNARY_OPS = ("neg", "sin", "cos", "exp", "abs", "sqrt")
BINARY_OPS = ("add", "sub", "mul", "div", "pow", "min", "max")
BINARY_FUNCS = ("min", "max")
_CALLABLE_UNARY = ("sin", "cos", "exp", "abs", "sqrt")
_CONSTANTS = {"pi": math.pi, "π": math.pi}


class ExprError(ValueError):
    """Base class for parse and evaluation failures."""


class ExprSyntaxError(ExprError):
    """Raised for malformed source; ``offset`` is a UTF-8 byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class EvalError(ExprError):
    """Domain error during evaluation; ``node`` is the offending subtree."""

    def __init__(self, message: str, node: "ExprNode", t=None):
        where = "" if t is None or np.ndim(t) else f" at t={t!r}"
        super().__init__(f"{message} in '{to_source(node)}'{where}")
        self.node = node


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Time:
    pass


@dataclass(frozen=True)
class Unary:
    op: str
    child: "ExprNode"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "ExprNode"
    right: "ExprNode"


ExprNode = Union[Const, Time, Unary, Binary]


# --------------------------------------------------------------------------
# Parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[^\W\d]\w*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE | re.UNICODE,
)


class _Parser:
    def __init__(self, source: str, params: Mapping[str, float]):
        self.source = source
        self.params = params
        self.tokens = self._tokenize(source)
        self.pos = 0

    def _byte_offset(self, char_index: int) -> int:
        return len(self.source[:char_index].encode("utf-8"))

    def _tokenize(self, source):
        tokens = []
        i = 0
        while i < len(source):
            m = _TOKEN_RE.match(source, i)
            if m is None:
                raise ExprSyntaxError(
                    f"unexpected character {source[i]!r}", self._byte_offset(i)
                )
            kind = m.lastgroup
            if kind != "ws":
                tokens.append((kind, m.group(), i))
            i = m.end()
        tokens.append(("end", "", len(source)))
        return tokens

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, self._byte_offset(tok[2]))

    def expect(self, text):
        tok = self.peek()
        if tok[1] != text or tok[0] != "op":
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {text!r}, found {found}")
        return self.advance()

    def parse(self) -> ExprNode:
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = "add" if self.advance()[1] == "+" else "sub"
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = "mul" if self.advance()[1] == "*" else "div"
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            nxt = self.peek()
            after = self.tokens[self.pos + 1]
            if nxt[0] == "number" and not (after[0] == "op" and after[1] == "^"):
                self.advance()
                return Const(-float(nxt[1]))
            return Unary("neg", self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.advance()
            return Binary("pow", base, self.unary())
        return base

    def atom(self):
        tok = self.peek()
        kind, text, _ = tok
        if kind == "number":
            self.advance()
            return Const(float(text))
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "name":
            self.advance()
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                return self.call(tok)
            if text == "t":
                return Time()
            if text in self.params:
                value = float(self.params[text])
                if not math.isfinite(value):
                    raise self.error(f"parameter {text!r} is not finite", tok)
                return Const(value)
            if text in _CONSTANTS:
                return Const(_CONSTANTS[text])
            raise self.error(f"unknown identifier {text!r}", tok)
        if kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected token {text!r}")

    def call(self, name_tok):
        name = name_tok[1]
        if name not in _CALLABLE_UNARY and name not in BINARY_FUNCS:
            raise self.error(f"unknown function {name!r}", name_tok)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        want = 2 if name in BINARY_FUNCS else 1
        if len(args) != want:
            raise self.error(
                f"{name}() takes {want} argument(s), got {len(args)}", name_tok
            )
        if want == 1:
            return Unary(name, args[0])
        return Binary(name, args[0], args[1])


def parse(source: str, params: Mapping[str, float] | None = None) -> ExprNode:
    """Parse ``source`` into an expression tree, inlining ``params``."""
    if isinstance(source, (int, float)):
        return Const(float(source))
    return _Parser(source, params or {}).parse()


# --------------------------------------------------------------------------
# Printing

_INFIX = {"add": ("+", 1), "sub": ("-", 1), "mul": ("*", 2), "div": ("/", 2)}


def _fmt_const(value: float) -> str:
    text = repr(float(value))
    return f"({text})" if value < 0 or text.startswith("-") else text


def to_source(node: ExprNode) -> str:
    """Render ``node`` as grammar text that parses back to the same tree."""
    if isinstance(node, Const):
        return _fmt_const(node.value)
    if isinstance(node, Time):
        return "t"
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"-({to_source(node.child)})"
        return f"{node.op}({to_source(node.child)})"
    if node.op in BINARY_FUNCS:
        return f"{node.op}({to_source(node.left)}, {to_source(node.right)})"
    if node.op == "pow":
        return f"({to_source(node.left)})^({to_source(node.right)})"
    sym, _ = _INFIX[node.op]
    return f"({to_source(node.left)} {sym} {to_source(node.right)})"


# --------------------------------------------------------------------------
# Evaluation


def depends_on_t(node: ExprNode) -> bool:
    if isinstance(node, Time):
        return True
    if isinstance(node, Const):
        return False
    if isinstance(node, Unary):
        return depends_on_t(node.child)
    return depends_on_t(node.left) or depends_on_t(node.right)


def _check_pow(node, base, expo, t):
    base_arr = np.asarray(base)
    expo_arr = np.asarray(expo)
    bad_neg = (base_arr < 0) & (np.floor(expo_arr) != expo_arr)
    bad_zero = (base_arr == 0) & (expo_arr < 0)
    if np.any(bad_neg):
        raise EvalError("fractional power of a negative base", node, t)
    if np.any(bad_zero):
        raise EvalError("zero raised to a negative power", node, t)


def evaluate(node: ExprNode, t):
    """Evaluate ``node`` at ``t`` (a float or a numpy array).

    Scalars give a Python float, arrays give an array of the same shape.
    Domain violations raise :class:`EvalError` naming the subexpression.
    """
    if np.ndim(t) == 0:
        return _eval_scalar(node, float(t))
    arr = np.asarray(t, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval_array(node, arr)
    return np.broadcast_to(out, arr.shape).astype(float, copy=True)


def _eval_scalar(node, t):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Time):
        return t
    if isinstance(node, Unary):
        x = _eval_scalar(node.child, t)
        op = node.op
        if op == "neg":
            return -x
        if op == "sin":
            return math.sin(x)
        if op == "cos":
            return math.cos(x)
        if op == "abs":
            return abs(x)
        if op == "sqrt":
            if x < 0:
                raise EvalError("square root of a negative number", node, t)
            return math.sqrt(x)
        try:
            return math.exp(x)
        except OverflowError:
            raise EvalError("exp overflow", node, t) from None
    a = _eval_scalar(node.left, t)
    b = _eval_scalar(node.right, t)
    op = node.op
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if b == 0:
            raise EvalError("division by zero", node, t)
        return a / b
    if op == "min":
        return min(a, b)
    if op == "max":
        return max(a, b)
    _check_pow(node, a, b, t)
    try:
        return math.pow(a, b)
    except OverflowError:
        raise EvalError("power overflow", node, t) from None


def _eval_array(node, t):
    if isinstance(node, Const):
        return np.float64(node.value)
    if isinstance(node, Time):
        return t
    if isinstance(node, Unary):
        x = _eval_array(node.child, t)
        op = node.op
        if op == "neg":
            return -x
        if op == "sqrt":
            if np.any(np.asarray(x) < 0):
                raise EvalError("square root of a negative number", node, t)
            return np.sqrt(x)
        if op == "exp":
            out = np.exp(x)
            if not np.all(np.isfinite(out)):
                raise EvalError("exp overflow", node, t)
            return out
        return {"sin": np.sin, "cos": np.cos, "abs": np.abs}[op](x)
    a = _eval_array(node.left, t)
    b = _eval_array(node.right, t)
    op = node.op
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if np.any(np.asarray(b) == 0):
            raise EvalError("division by zero", node, t)
        return a / b
    if op == "min":
        return np.minimum(a, b)
    if op == "max":
        return np.maximum(a, b)
    _check_pow(node, a, b, t)
    out = np.power(a, b)
    if not np.all(np.isfinite(out)):
        raise EvalError("power overflow", node, t)
    return out


# --------------------------------------------------------------------------
# Compilation to a Python closure (hot path inside integrators)

_PY_UNARY = {"sin": "_sin", "cos": "_cos", "exp": "_exp", "abs": "abs", "sqrt": "_sqrt"}
_PY_BINARY = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def _py_source(node) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Time):
        return "t"
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{_py_source(node.child)})"
        return f"{_PY_UNARY[node.op]}({_py_source(node.child)})"
    left, right = _py_source(node.left), _py_source(node.right)
    if node.op in BINARY_FUNCS:
        return f"{node.op}({left}, {right})"
    if node.op == "pow":
        return f"_pow({left}, {right})"
    return f"({left} {_PY_BINARY[node.op]} {right})"


_NAMESPACE = {
    "_sin": math.sin,
    "_cos": math.cos,
    "_exp": math.exp,
    "_sqrt": math.sqrt,
    "_pow": math.pow,
    "min": min,
    "max": max,
    "abs": abs,
    "__builtins__": {},
}


def compile_many(nodes) -> Callable[[float], tuple]:
    """Compile several trees into one ``f(t) -> tuple`` of floats.

    The fast path uses :mod:`math` directly; any arithmetic exception falls
    back to :func:`evaluate` so that the error names the failing subtree.
    """
    nodes = tuple(nodes)
    body = ", ".join(_py_source(n) for n in nodes)
    code = compile(f"lambda t: ({body},)", "<expr>", "eval")
    fast = eval(code, dict(_NAMESPACE))

    def f(t):
        try:
            return fast(t)
        except (ArithmeticError, ValueError):
            return tuple(_eval_scalar(n, float(t)) for n in nodes)

    return f


def compile_expr(node: ExprNode) -> Callable[[float], float]:
    """Compile a single tree into ``f(t) -> float``."""
    many = compile_many([node])
    return lambda t: many(t)[0]
