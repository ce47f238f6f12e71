"""Straight-line programs compiled from expressions.

A program evaluates a list of assignments over a flat variable array laid
out as ``[t, state_0 .. state_{N-1}, aux_0 ..]`` and writes a fixed number
of outputs. The same resolved assignment list is lowered twice: to a compact
bytecode executed by the compiled kernel, and to Python source executed by the
fallback kernel. Both lowerings perform identical floating-point operations
in identical order.
"""

from dataclasses import dataclass

import numpy as np

from . import dsl
from .dsl import BinOp, Call, Neg, Num, Var
from .errors import UnboundVariableError

# opcode numbering is mirrored in _kernels.pyx
OP_CONST, OP_LOAD, OP_NEG, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = range(8)
OP_CALL1, OP_CALL2, OP_STORE, OP_OUT = range(8, 12)

UNARY_IDS = {"sin": 0, "cos": 1, "tan": 2, "tanh": 3, "exp": 4, "ln": 5,
             "sqrt": 6, "abs": 7, "sign": 8}
BINARY_IDS = {"min": 0, "max": 1, "pow": 2}
_BINOP_CODES = {"+": OP_ADD, "-": OP_SUB, "*": OP_MUL, "/": OP_DIV, "^": OP_POW}

MAX_STACK = 64


@dataclass(frozen=True)
class Slot:
    """Resolved reference to entry ``index`` of the variable array."""
    index: int


def resolve(expr, env):
    """Replace names by slots or constants according to ``env``.

    ``env`` maps a name to either an ``int`` slot index or a ``float``.
    """
    if isinstance(expr, Var):
        try:
            ref = env[expr.name]
        except KeyError:
            if expr.name in dsl.CONSTANTS:
                return Num(dsl.CONSTANTS[expr.name])
            raise UnboundVariableError(f"unbound variable {expr.name!r}") from None
        if isinstance(ref, Slot):
            return ref
        if isinstance(ref, (int, np.integer)) and not isinstance(ref, bool):
            return Slot(int(ref))
        return Num(float(ref))
    if isinstance(expr, (Num, Slot)):
        return expr
    if isinstance(expr, Neg):
        return Neg(resolve(expr.operand, env))
    if isinstance(expr, BinOp):
        return BinOp(expr.op, resolve(expr.left, env), resolve(expr.right, env))
    return Call(expr.func, tuple(resolve(a, env) for a in expr.args))


class ProgramBuilder:
    """Accumulates assignments for a program over ``n_state`` state entries."""

    def __init__(self, n_state):
        self.n_state = n_state
        self.n_aux = 0
        self.steps = []      # (kind, index, resolved expression)
        self.outputs = {}

    def state_slot(self, i):
        return Slot(1 + i)

    @property
    def time_slot(self):
        return Slot(0)

    def assign_aux(self, expr, env):
        slot = Slot(1 + self.n_state + self.n_aux)
        self.n_aux += 1
        self.steps.append(("aux", slot.index, resolve(expr, env)))
        return slot

    def output(self, index, expr, env):
        if index in self.outputs:
            raise ValueError(f"output {index} assigned twice")
        self.outputs[index] = True
        self.steps.append(("out", index, resolve(expr, env)))

    def build(self):
        n_out = len(self.outputs)
        if sorted(self.outputs) != list(range(n_out)):
            raise ValueError("program outputs must be contiguous from 0")
        return Program(self.n_state, self.n_aux, n_out, tuple(self.steps))


class Program:
    """Compiled straight-line program; see module docstring for the layout."""

    def __init__(self, n_state, n_aux, n_out, steps):
        self.n_state = n_state
        self.n_aux = n_aux
        self.n_out = n_out
        self.n_vars = 1 + n_state + n_aux
        self.steps = steps
        self.code, self.consts = _emit_bytecode(steps)
        self._pyfunc = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_pyfunc"] = None
        return state

    @property
    def pyfunc(self):
        """Python function ``f(t, state_list) -> list`` with identical arithmetic."""
        if self._pyfunc is None:
            self._pyfunc = _emit_python(self)
        return self._pyfunc

    def __call__(self, t, state):
        return np.array(self.pyfunc(float(t), [float(v) for v in state]))

    def python_source(self):
        return _python_source(self)


def _emit_bytecode(steps):
    code = []
    consts = []
    const_index = {}

    def const(value):
        key = float(value).hex()
        if key not in const_index:
            const_index[key] = len(consts)
            consts.append(float(value))
        return const_index[key]

    def emit(node):
        # returns stack depth needed
        if isinstance(node, Num):
            code.extend((OP_CONST, const(node.value)))
            return 1
        if isinstance(node, Slot):
            code.extend((OP_LOAD, node.index))
            return 1
        if isinstance(node, Neg):
            d = emit(node.operand)
            code.extend((OP_NEG, 0))
            return d
        if isinstance(node, BinOp):
            d1 = emit(node.left)
            d2 = emit(node.right)
            code.extend((_BINOP_CODES[node.op], 0))
            return max(d1, d2 + 1)
        if len(node.args) == 1:
            d = emit(node.args[0])
            code.extend((OP_CALL1, UNARY_IDS[node.func]))
            return d
        d1 = emit(node.args[0])
        d2 = emit(node.args[1])
        code.extend((OP_CALL2, BINARY_IDS[node.func]))
        return max(d1, d2 + 1)

    for kind, index, expr in steps:
        depth = emit(expr)
        if depth > MAX_STACK:
            raise ValueError(f"expression too deeply nested (stack depth {depth})")
        code.extend((OP_STORE if kind == "aux" else OP_OUT, index))
    return np.asarray(code, dtype=np.int32), np.asarray(consts, dtype=np.float64)


_PY_BINOPS = {"+": "({} + {})", "-": "({} - {})", "*": "({} * {})",
              "/": "_fdiv({}, {})", "^": "_fpow({}, {})"}


def _py_expr(node, n_state):
    if isinstance(node, Num):
        return repr(float(node.value)) if np.isfinite(node.value) else f"float({str(node.value)!r})"
    if isinstance(node, Slot):
        if node.index == 0:
            return "t"
        if node.index <= n_state:
            return f"s[{node.index - 1}]"
        return f"a{node.index}"
    if isinstance(node, Neg):
        return f"(-{_py_expr(node.operand, n_state)})"
    if isinstance(node, BinOp):
        return _PY_BINOPS[node.op].format(_py_expr(node.left, n_state),
                                          _py_expr(node.right, n_state))
    args = ", ".join(_py_expr(a, n_state) for a in node.args)
    return f"_f_{node.func}({args})"


def _python_source(prog):
    lines = ["def _program(t, s):"]
    outs = {}
    for kind, index, expr in prog.steps:
        src = _py_expr(expr, prog.n_state)
        if kind == "aux":
            lines.append(f"    a{index} = {src}")
        else:
            lines.append(f"    o{index} = {src}")
            outs[index] = True
    lines.append("    return [" + ", ".join(f"o{i}" for i in range(prog.n_out)) + "]")
    return "\n".join(lines)


def _emit_python(prog):
    namespace = {"_fdiv": dsl.fdiv, "_fpow": dsl.fpow}
    for name, fn in dsl.RUNTIME.items():
        namespace[f"_f_{name}"] = fn
    exec(compile(_python_source(prog), "<nlfreq-program>", "exec"), namespace)
    return namespace["_program"]
