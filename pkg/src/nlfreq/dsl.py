"""Arithmetic expression language for model definitions.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' unary)?          # right associative
    primary := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation follows IEEE-754 double semantics: domain errors produce NaN or
infinity instead of raising, ``sign(0) = 0``, and a negative base raised to
a non-integer power is NaN.
"""

import math
import re
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple, Union

from .errors import (
    ArityError,
    ExpressionSyntaxError,
    UnboundVariableError,
    UnknownIdentifierError,
)

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Expression", "FUNCTIONS",
    "CONSTANTS", "parse_expression", "eval_expression", "unparse",
    "free_variables", "substitute", "default_name",
]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Call:
    func: str
    args: Tuple["Expression", ...]


Expression = Union[Num, Var, Neg, BinOp, Call]

FUNCTIONS = {
    "sin": 1, "cos": 1, "tan": 1, "tanh": 1, "exp": 1, "ln": 1,
    "sqrt": 1, "abs": 1, "sign": 1, "min": 2, "max": 2, "pow": 2,
}

CONSTANTS = {"pi": math.pi}

_DEFAULT_NAME = re.compile(r"(?:x|u|z|y|ydot|v|xp)[1-9][0-9]*|t\Z")


def default_name(name):
    """True for the implicit variable families x1, u1, z1, y1, ydot1, v1, xp1 and t."""
    return _DEFAULT_NAME.fullmatch(name) is not None


# -- runtime semantics ------------------------------------------------------
# Shared by the tree-walking evaluator and the generated Python code so both
# produce the same doubles as the compiled kernel.

def fdiv(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        if a != a or a == 0.0:
            return math.nan
        neg = (a < 0.0) != (math.copysign(1.0, b) < 0.0)
        return -math.inf if neg else math.inf


def fpow(a, b):
    try:
        return math.pow(a, b)
    except OverflowError:
        if a < 0.0 and b == math.floor(b) and int(b) % 2 == 1:
            return -math.inf
        return math.inf
    except ValueError:
        if a == 0.0:
            if b == math.floor(b) and int(b) % 2 == 1:
                return math.copysign(math.inf, a)
            return math.inf
        return math.nan


def _guard(fn):
    def wrapped(x):
        try:
            return fn(x)
        except OverflowError:
            return math.inf
        except ValueError:
            return math.nan
    wrapped.__name__ = fn.__name__
    return wrapped


fsin = _guard(math.sin)
fcos = _guard(math.cos)
ftan = _guard(math.tan)
ftanh = math.tanh
fexp = _guard(math.exp)
fabs = math.fabs


def fln(x):
    if x > 0.0:
        return math.log(x)
    if x == 0.0:
        return -math.inf
    return math.nan


def fsqrt(x):
    if x >= 0.0:
        return math.sqrt(x)
    return math.nan


def fsign(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    if x == 0.0:
        return 0.0
    return math.nan


def fmin(a, b):
    if a != a or b != b:
        return math.nan
    return a if a <= b else b


def fmax(a, b):
    if a != a or b != b:
        return math.nan
    return a if a >= b else b


RUNTIME = {
    "sin": fsin, "cos": fcos, "tan": ftan, "tanh": ftanh, "exp": fexp,
    "ln": fln, "sqrt": fsqrt, "abs": fabs, "sign": fsign,
    "min": fmin, "max": fmax, "pow": fpow,
}


# -- tokenizer ----------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
""", re.VERBOSE)


def _tokenize(text):
    tokens = []
    pos = 0
    # byte offsets for diagnostics
    boff = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(
                f"unexpected character {text[pos]!r}", boff, text)
        kind = m.lastgroup
        lexeme = m.group()
        if kind != "ws":
            tokens.append((kind, lexeme, boff))
        boff += len(lexeme.encode("utf-8"))
        pos = m.end()
    tokens.append(("end", "", boff))
    return tokens


class _Parser:
    def __init__(self, text, names):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.names = names

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, lexeme):
        kind, lex, off = self.peek()
        if lex != lexeme or kind != "op":
            what = "end of input" if kind == "end" else repr(lex)
            raise ExpressionSyntaxError(
                f"expected {lexeme!r}, found {what}", off, self.text)
        return self.advance()

    def parse(self):
        node = self.expr()
        kind, lex, off = self.peek()
        if kind != "end":
            raise ExpressionSyntaxError(
                f"unexpected {lex!r} after expression", off, self.text)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def primary(self):
        kind, lex, off = self.advance()
        if kind == "num":
            return Num(float(lex))
        if kind == "ident":
            if self.peek()[:2] == ("op", "("):
                return self.call(lex, off)
            if lex in CONSTANTS:
                return Var(lex)
            if not self._known(lex):
                raise UnknownIdentifierError(
                    f"unknown identifier {lex!r}", off, self.text)
            return Var(lex)
        if (kind, lex) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(lex)
        raise ExpressionSyntaxError(f"unexpected {what}", off, self.text)

    def call(self, name, off):
        if name not in FUNCTIONS:
            raise UnknownIdentifierError(
                f"unknown function {name!r}", off, self.text)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[:2] == ("op", ","):
            self.advance()
            args.append(self.expr())
        self.expect(")")
        if len(args) != FUNCTIONS[name]:
            raise ArityError(
                f"{name}() takes {FUNCTIONS[name]} argument(s), got {len(args)}",
                off, self.text)
        return Call(name, tuple(args))

    def _known(self, name):
        if self.names is None:
            return default_name(name)
        return name in self.names


def parse_expression(text, names=None):
    """Parse ``text`` into an expression tree.

    Parameters
    ----------
    text : str
        Source text, e.g. ``"-a1*x1 + u1"``.
    names : iterable of str, optional
        Declared variable and parameter names. When omitted, only the
        implicit families (``x1``, ``u1``, ``z1``, ``y1``, ``ydot1``, ``v1``,
        ``xp1``, ``t``) are accepted. ``pi`` is always available.

    Raises
    ------
    ExpressionSyntaxError, UnknownIdentifierError, ArityError
        With ``offset`` set to the byte offset of the offending token.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionSyntaxError("empty expression", 0, text)
    if names is not None:
        names = frozenset(names)
    return _Parser(text, names).parse()


def eval_expression(expr, bindings: Mapping[str, float]):
    """Evaluate ``expr`` with IEEE semantics.

    Domain errors are not raised; they surface as a NaN or infinite return
    value which the caller is expected to check with :func:`math.isfinite`.
    """
    return _eval(expr, bindings)


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        try:
            return float(env[node.name])
        except KeyError:
            if node.name in CONSTANTS:
                return CONSTANTS[node.name]
            raise UnboundVariableError(f"unbound variable {node.name!r}") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, BinOp):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        op = node.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return fdiv(a, b)
        return fpow(a, b)
    fn = RUNTIME[node.func]
    return fn(*[_eval(arg, env) for arg in node.args])


# -- pretty printing ------------------------------------------------------------

_LEVEL_ADD, _LEVEL_MUL, _LEVEL_UNARY, _LEVEL_POW, _LEVEL_ATOM = range(1, 6)


def _level(node):
    if isinstance(node, BinOp):
        if node.op in "+-":
            return _LEVEL_ADD
        if node.op in "*/":
            return _LEVEL_MUL
        return _LEVEL_POW
    if isinstance(node, Neg):
        return _LEVEL_UNARY
    if isinstance(node, Num) and (node.value < 0 or math.copysign(1.0, node.value) < 0):
        return _LEVEL_UNARY
    return _LEVEL_ATOM


def _fmt_num(value):
    if math.isinf(value) or math.isnan(value):
        raise ValueError(f"cannot print non-finite literal {value!r}")
    return repr(float(value))


def unparse(node):
    """Render an expression with the minimum parentheses needed to re-parse it."""
    return _render(node, 0)


def _render(node, min_level):
    if isinstance(node, Num):
        s = _fmt_num(node.value)
    elif isinstance(node, Var):
        s = node.name
    elif isinstance(node, Call):
        s = f"{node.func}({', '.join(_render(a, 0) for a in node.args)})"
    elif isinstance(node, Neg):
        s = "-" + _render(node.operand, _LEVEL_UNARY)
    else:
        op = node.op
        if op in "+-":
            s = f"{_render(node.left, _LEVEL_ADD)} {op} {_render(node.right, _LEVEL_MUL)}"
        elif op in "*/":
            s = f"{_render(node.left, _LEVEL_MUL)}{op}{_render(node.right, _LEVEL_UNARY)}"
        else:
            s = f"{_render(node.left, _LEVEL_ATOM)}^{_render(node.right, _LEVEL_UNARY)}"
    if _level(node) < min_level:
        return f"({s})"
    return s


# -- tree utilities -------------------------------------------------------------

def free_variables(node):
    """Names referenced by ``node`` (built-in constants excluded)."""
    out = set()
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Var):
            if n.name not in CONSTANTS:
                out.add(n.name)
        elif isinstance(n, Neg):
            stack.append(n.operand)
        elif isinstance(n, BinOp):
            stack.extend((n.left, n.right))
        elif isinstance(n, Call):
            stack.extend(n.args)
    return out


def substitute(node, mapping: Mapping[str, "Expression"]):
    """Replace variables by expressions; unmapped names are kept."""
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, Num):
        return node
    if isinstance(node, Neg):
        return Neg(substitute(node.operand, mapping))
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, mapping),
                     substitute(node.right, mapping))
    return Call(node.func, tuple(substitute(a, mapping) for a in node.args))


def as_expression(obj, names=None) -> Optional[Expression]:
    """Accept an expression tree, a source string or a number."""
    if isinstance(obj, (Num, Var, Neg, BinOp, Call)):
        return obj
    if isinstance(obj, (int, float)) and not isinstance(obj, bool):
        return Num(float(obj))
    if isinstance(obj, str):
        return parse_expression(obj, names)
    raise TypeError(f"cannot interpret {obj!r} as an expression")
