"""Closed-form scalar expressions: parsing, evaluation and symbolic derivatives.

Grammar (``^`` is right associative and binds tighter than unary minus, so
``-x^2`` is ``-(x^2)``; there is no implicit multiplication and no unary plus)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | power ;
    power   = atom [ "^" unary ] ;
    atom    = number | name | func "(" expr ")" | "(" expr ")" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
            | "." digits [ exponent ] ;
    func    = "sin" | "cos" | "tan" | "sinh" | "cosh" | "tanh"
            | "exp" | "log" | "sqrt" | "abs" | "atan" ;

Names are the declared variables/parameters plus the constants ``pi`` and
``e`` (a declared name shadows a constant).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainFault, ExprSyntaxError, UnknownIdentifierError

FUNCTIONS = ("sin", "cos", "tan", "sinh", "cosh", "tanh", "exp", "log", "sqrt", "abs", "atan")
CONSTANTS = {"pi": math.pi, "e": math.e}

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


# -- syntax tree -----------------------------------------------------------------

class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Const(Node):
    name: str

    @property
    def value(self):
        return CONSTANTS[self.name]


@dataclass(frozen=True)
class Sym(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class Bin(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    fn: str
    arg: Node


# -- tokenizer / parser ----------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


class _Parser:
    def __init__(self, source, names):
        self.source = source
        self.names = frozenset(names)
        self.tokens = self._tokenize(source)
        self.pos = 0

    def _byte_offset(self, char_index):
        return len(self.source[:char_index].encode("utf-8"))

    def _tokenize(self, source):
        tokens = []
        i = 0
        while i < len(source):
            m = _TOKEN.match(source, i)
            if m is None:
                raise ExprSyntaxError(f"unexpected character {source[i]!r}", self._byte_offset(i))
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
        what = "end of input" if tok[0] == "end" else repr(tok[1])
        return ExprSyntaxError(f"{message}, found {what}", self._byte_offset(tok[2]))

    def expect(self, text):
        tok = self.peek()
        if tok[0] != "op" or tok[1] != text:
            raise self.error(f"expected {text!r}")
        return self.advance()

    def parse(self):
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error("unexpected token")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.advance()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        tok = self.peek()
        kind, text, _ = tok
        if kind == "num":
            self.advance()
            value = float(text)
            if math.isinf(value):
                raise ExprSyntaxError("number out of range", self._byte_offset(tok[2]))
            return Num(value)
        if kind == "name":
            self.advance()
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "(":
                if text not in FUNCTIONS:
                    raise UnknownIdentifierError(text, self._byte_offset(tok[2]))
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in FUNCTIONS:
                raise self.error(f"function {text!r} requires '('", nxt)
            if text in self.names:
                return Sym(text)
            if text in CONSTANTS:
                return Const(text)
            raise UnknownIdentifierError(text, self._byte_offset(tok[2]))
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        raise self.error("expected a number, name or '('")


# -- printing --------------------------------------------------------------------

def _prec(node):
    if isinstance(node, Bin):
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}[node.op]
    if isinstance(node, Neg):
        return _PREC_NEG
    if isinstance(node, Num) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return _PREC_NEG
    return _PREC_ATOM


def _fmt_num(value):
    if value == int(value) and abs(value) < 1e16:
        return str(int(value)) if not (value == 0 and math.copysign(1, value) < 0) else "-0"
    return repr(value)


def _to_str(node):
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, (Const, Sym)):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({_to_str(node.arg)})"
    if isinstance(node, Neg):
        inner = _to_str(node.arg)
        if _prec(node.arg) < _PREC_NEG:
            inner = f"({inner})"
        return "-" + inner
    p = _prec(node)
    left, right = _to_str(node.left), _to_str(node.right)
    lp, rp = _prec(node.left), _prec(node.right)
    if node.op == "^":
        if lp <= _PREC_POW:
            left = f"({left})"
        if rp < _PREC_NEG:
            right = f"({right})"
        return f"{left}^{right}"
    if lp < p:
        left = f"({left})"
    if rp <= p:
        # keep right nesting explicit: floating-point + and * are not associative
        right = f"({right})"
    return f"{left}{node.op}{right}"


# -- evaluation ------------------------------------------------------------------

def _check_finite(value, node):
    if math.isnan(value) or math.isinf(value):
        raise DomainFault("non-finite result", _to_str(node))
    return value


def _apply_fn(fn, x, node):
    try:
        if fn == "log":
            if x <= 0.0:
                raise DomainFault("log of non-positive value", _to_str(node))
            return math.log(x)
        if fn == "sqrt":
            if x < 0.0:
                raise DomainFault("sqrt of negative value", _to_str(node))
            return math.sqrt(x)
        if fn == "abs":
            return abs(x)
        return _check_finite(_MATH[fn](x), node)
    except (OverflowError, ValueError) as exc:
        raise DomainFault(str(exc), _to_str(node)) from None


_MATH = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan,
    "sinh": math.sinh, "cosh": math.cosh, "tanh": math.tanh,
    "exp": math.exp, "atan": math.atan,
}


def _apply_bin(op, a, b, node):
    try:
        if op == "+":
            r = a + b
        elif op == "-":
            r = a - b
        elif op == "*":
            r = a * b
        elif op == "/":
            if b == 0.0:
                raise DomainFault("division by zero", _to_str(node))
            r = a / b
        else:
            if a < 0.0 and b != int(b):
                raise DomainFault("negative base with non-integer exponent", _to_str(node))
            if a == 0.0 and b < 0.0:
                raise DomainFault("zero to a negative power", _to_str(node))
            r = a**b
    except OverflowError:
        raise DomainFault("overflow", _to_str(node)) from None
    return _check_finite(r, node)


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Sym):
        try:
            return float(env[node.name])
        except KeyError:
            raise UnknownIdentifierError(node.name) from None
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, Call):
        return _apply_fn(node.fn, _eval(node.arg, env), node)
    return _apply_bin(node.op, _eval(node.left, env), _eval(node.right, env), node)


def _compile(node, slots):
    """Turn a tree into a closure over a positional argument tuple."""
    if isinstance(node, (Num, Const)):
        v = node.value
        return lambda a: v
    if isinstance(node, Sym):
        i = slots[node.name]
        return lambda a: a[i]
    if isinstance(node, Neg):
        f = _compile(node.arg, slots)
        return lambda a: -f(a)
    if isinstance(node, Call):
        f = _compile(node.arg, slots)
        fn = node.fn
        return lambda a: _apply_fn(fn, f(a), node)
    fl, fr = _compile(node.left, slots), _compile(node.right, slots)
    op = node.op
    if op == "+":
        return lambda a: _check_finite(fl(a) + fr(a), node)
    if op == "-":
        return lambda a: _check_finite(fl(a) - fr(a), node)
    if op == "*":
        return lambda a: _check_finite(fl(a) * fr(a), node)
    return lambda a: _apply_bin(op, fl(a), fr(a), node)


_NP_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "sinh": np.sinh, "cosh": np.cosh,
    "tanh": np.tanh, "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
    "atan": np.arctan,
}
_NP_BIN = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power}


def _compile_np(node, slots):
    """Array version of :func:`_compile`; faults surface as non-finite entries."""
    if isinstance(node, (Num, Const)):
        v = node.value
        return lambda a: v
    if isinstance(node, Sym):
        i = slots[node.name]
        return lambda a: a[i]
    if isinstance(node, Neg):
        f = _compile_np(node.arg, slots)
        return lambda a: -f(a)
    if isinstance(node, Call):
        f, fn = _compile_np(node.arg, slots), _NP_FUNCS[node.fn]
        return lambda a: fn(f(a))
    fl, fr, op = _compile_np(node.left, slots), _compile_np(node.right, slots), _NP_BIN[node.op]
    return lambda a: op(fl(a), fr(a))


# -- symbolic helpers with light simplification ---------------------------------

def _is_num(node, value=None):
    if not isinstance(node, Num):
        return False
    return value is None or node.value == value


def _fold(node):
    try:
        return Num(_eval(node, {}))
    except DomainFault:
        return node


def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    if _is_num(a) and _is_num(b):
        return _fold(Bin("+", a, b))
    return Bin("+", a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    if _is_num(a) and _is_num(b):
        return _fold(Bin("-", a, b))
    return Bin("-", a, b)


def _neg(a):
    if _is_num(a):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    if _is_num(a, -1.0):
        return _neg(b)
    if _is_num(b, -1.0):
        return _neg(a)
    if _is_num(a) and _is_num(b):
        return _fold(Bin("*", a, b))
    return Bin("*", a, b)


def _div(a, b):
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return _fold(Bin("/", a, b))
    return Bin("/", a, b)


def _pow(a, b):
    if _is_num(b, 0.0):
        return Num(1.0)
    if _is_num(b, 1.0):
        return a
    if _is_num(a) and _is_num(b):
        return _fold(Bin("^", a, b))
    return Bin("^", a, b)


def _depends(node, var):
    if isinstance(node, Sym):
        return node.name == var
    if isinstance(node, (Neg, Call)):
        return _depends(node.arg, var)
    if isinstance(node, Bin):
        return _depends(node.left, var) or _depends(node.right, var)
    return False


def _d(node, var):
    if not _depends(node, var):
        return Num(0.0)
    if isinstance(node, Sym):
        return Num(1.0)
    if isinstance(node, Neg):
        return _neg(_d(node.arg, var))
    if isinstance(node, Call):
        u = node.arg
        du = _d(u, var)
        fn = node.fn
        if fn == "sin":
            outer = Call("cos", u)
        elif fn == "cos":
            outer = _neg(Call("sin", u))
        elif fn == "tan":
            outer = _div(Num(1.0), _pow(Call("cos", u), Num(2.0)))
        elif fn == "sinh":
            outer = Call("cosh", u)
        elif fn == "cosh":
            outer = Call("sinh", u)
        elif fn == "tanh":
            outer = _div(Num(1.0), _pow(Call("cosh", u), Num(2.0)))
        elif fn == "exp":
            outer = node
        elif fn == "log":
            return _div(du, u)
        elif fn == "sqrt":
            return _div(du, _mul(Num(2.0), node))
        elif fn == "abs":
            outer = _div(u, node)
        else:  # atan
            return _div(du, _add(Num(1.0), _pow(u, Num(2.0))))
        return _mul(outer, du)
    a, b = node.left, node.right
    op = node.op
    if op == "+":
        return _add(_d(a, var), _d(b, var))
    if op == "-":
        return _sub(_d(a, var), _d(b, var))
    if op == "*":
        return _add(_mul(_d(a, var), b), _mul(a, _d(b, var)))
    if op == "/":
        # (a/b)' = a'/b - a b'/b^2
        return _sub(_div(_d(a, var), b), _div(_mul(a, _d(b, var)), _pow(b, Num(2.0))))
    # power
    if not _depends(b, var):
        return _mul(_mul(b, _pow(a, _sub(b, Num(1.0)))), _d(a, var))
    if not _depends(a, var):
        return _mul(_mul(node, Call("log", a)), _d(b, var))
    return _mul(node, _add(_mul(_d(b, var), Call("log", a)), _div(_mul(b, _d(a, var)), a)))


def _substitute(node, values):
    if isinstance(node, Sym):
        if node.name in values:
            return values[node.name]
        return node
    if isinstance(node, Neg):
        return _neg(_substitute(node.arg, values))
    if isinstance(node, Call):
        return Call(node.fn, _substitute(node.arg, values))
    if isinstance(node, Bin):
        return Bin(node.op, _substitute(node.left, values), _substitute(node.right, values))
    return node


def _free(node, out):
    if isinstance(node, Sym):
        out.add(node.name)
    elif isinstance(node, (Neg, Call)):
        _free(node.arg, out)
    elif isinstance(node, Bin):
        _free(node.left, out)
        _free(node.right, out)
    return out


# -- public API ------------------------------------------------------------------

class Expression:
    """Immutable expression tree together with its declared names."""

    __slots__ = ("node", "names")

    def __init__(self, node: Node, names: Iterable[str]):
        object.__setattr__(self, "node", node)
        object.__setattr__(self, "names", tuple(names))

    def __setattr__(self, key, value):
        raise AttributeError("Expression is immutable")

    def __repr__(self):
        return f"Expression({str(self)!r}, names={list(self.names)})"

    def __str__(self):
        return _to_str(self.node)

    def __eq__(self, other):
        return isinstance(other, Expression) and self.node == other.node and self.names == other.names

    def __hash__(self):
        return hash((self.node, self.names))

    @property
    def free_names(self) -> frozenset:
        return frozenset(_free(self.node, set()))

    def depends_on(self, name: str) -> bool:
        return _depends(self.node, name)

    def evaluate(self, bindings: Mapping[str, float] | None = None, /, **kw) -> float:
        env = dict(bindings or {})
        env.update(kw)
        missing = self.free_names - env.keys()
        if missing:
            raise UnknownIdentifierError(sorted(missing)[0])
        return _eval(self.node, env)

    def diff(self, var: str) -> "Expression":
        if var not in self.names:
            raise UnknownIdentifierError(var)
        return Expression(_d(self.node, var), self.names)

    def substitute(self, values: Mapping[str, "float | Expression"]) -> "Expression":
        """Replace names by numbers or other expressions; replaced names are dropped."""
        nodes = {}
        for k, v in values.items():
            nodes[k] = v.node if isinstance(v, Expression) else Num(float(v))
        extra = [n for v in values.values() if isinstance(v, Expression) for n in v.names]
        names = [n for n in self.names if n not in values]
        names += [n for n in dict.fromkeys(extra) if n not in names]
        return Expression(_substitute(self.node, nodes), names)

    def function(self, args: Sequence[str], params: Mapping[str, float] | None = None) -> Callable:
        """Compile to ``f(*args)``; every other free name must be fixed by ``params``."""
        node = self.node
        if params:
            node = _substitute(node, {k: Num(float(v)) for k, v in params.items()})
        unbound = _free(node, set()) - set(args)
        if unbound:
            raise UnknownIdentifierError(sorted(unbound)[0])
        slots = {name: i for i, name in enumerate(args)}
        f = _compile(node, slots)
        return lambda *a: f(a)

    # arithmetic builders so derived quantities stay symbolic
    def vectorized(self, args: Sequence[str], check: bool = True) -> Callable:
        """numpy version of :meth:`function` for float arrays.

        Raises DomainFault if any entry of the result is not finite, unless ``check``
        is false (for hot loops whose inputs were validated beforehand).
        """
        missing = self.free_names - set(args)
        if missing:
            raise UnknownIdentifierError(sorted(missing)[0])
        slots = {name: i for i, name in enumerate(args)}
        body = _compile_np(self.node, slots)
        text = str(self)

        if not check:
            def raw(*a):
                return body(a)
            return raw

        def f(*a):
            with np.errstate(all="ignore"):
                arrs = tuple(np.asarray(x, dtype=float) for x in a)
                out = body(arrs)
                out = np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(*arrs).shape if arrs else ())
            if not np.all(np.isfinite(out)):
                raise DomainFault("non-finite value", text)
            return out

        return f

    def _coerce(self, other):
        if isinstance(other, Expression):
            return other.node, list(dict.fromkeys(self.names + other.names))
        return Num(float(other)), list(self.names)

    def __add__(self, other):
        n, names = self._coerce(other)
        return Expression(_add(self.node, n), names)

    def __sub__(self, other):
        n, names = self._coerce(other)
        return Expression(_sub(self.node, n), names)

    def __mul__(self, other):
        n, names = self._coerce(other)
        return Expression(_mul(self.node, n), names)

    def __truediv__(self, other):
        n, names = self._coerce(other)
        return Expression(_div(self.node, n), names)

    def __pow__(self, other):
        n, names = self._coerce(other)
        return Expression(_pow(self.node, n), names)

    def __rmul__(self, other):
        return Expression(_mul(Num(float(other)), self.node), self.names)

    def __radd__(self, other):
        return Expression(_add(Num(float(other)), self.node), self.names)

    def __rtruediv__(self, other):
        return Expression(_div(Num(float(other)), self.node), self.names)

    def __rsub__(self, other):
        return Expression(_sub(Num(float(other)), self.node), self.names)

    def __neg__(self):
        return Expression(_neg(self.node), self.names)

    def apply(self, fn: str) -> "Expression":
        if fn not in FUNCTIONS:
            raise UnknownIdentifierError(fn)
        return Expression(Call(fn, self.node), self.names)


def parse(source: str, names: Iterable[str] = ()) -> Expression:
    """Parse ``source``; identifiers must be in ``names`` or be ``pi``/``e``."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    names = tuple(names)
    return Expression(_Parser(source, names).parse(), names)


def evaluate(e: Expression, bindings: Mapping[str, float] | None = None, /, **kw) -> float:
    return e.evaluate(bindings, **kw)


def differentiate(e: Expression, var: str) -> Expression:
    return e.diff(var)


def constant(value: float, names: Iterable[str] = ()) -> Expression:
    return Expression(Num(float(value)), names)


def as_expression(value, names: Sequence[str]) -> Expression:
    """Accept an Expression, source text or a number."""
    if isinstance(value, Expression):
        return value
    if isinstance(value, str):
        return parse(value, names)
    return constant(value, names)
