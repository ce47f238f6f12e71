"""Domain types: parameter points, plant and generator models, supply rates.

Plants and generators are described by expression trees (see :mod:`nlfreq.dsl`)
so they can be compiled into fast right-hand sides and shipped to worker
processes as plain data.
"""

import math
import re
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import dsl
from .dsl import BinOp, Num, Var
from .errors import ModelError

__all__ = [
    "ParamPoint", "PlantModel", "GeneratorModel", "LtiRealization",
    "SupplyRate", "SpecSet", "SweepGrid",
]


def _finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise ModelError(f"{name} must be finite, got {value!r}")
    return value


def _freeze_params(params):
    items = []
    for k, v in dict(params or {}).items():
        if not isinstance(k, str) or not k.isidentifier():
            raise ModelError(f"invalid parameter name {k!r}")
        items.append((k, _finite(k, v)))
    return tuple(sorted(items))


@dataclass(frozen=True)
class ParamPoint:
    """Generator parameter ``omega``: angular frequency, amplitude and extras.

    Parameters
    ----------
    varpi : float
        Angular frequency in rad/s, strictly positive.
    a_u : float
        Input amplitude, strictly positive.
    extras : dict, optional
        Additional named components such as ``phi_u`` (phase, rad).
    """

    varpi: float
    a_u: float
    extras: Tuple[Tuple[str, float], ...] = ()

    def __init__(self, varpi, a_u, extras=None, **kw):
        varpi = _finite("varpi", varpi)
        a_u = _finite("a_u", a_u)
        if varpi <= 0:
            raise ModelError(f"varpi must be positive, got {varpi!r}")
        if a_u <= 0:
            raise ModelError(f"a_u must be positive, got {a_u!r}")
        merged = dict(extras or {})
        merged.update(kw)
        for reserved in ("varpi", "a_u"):
            if reserved in merged:
                raise ModelError(f"{reserved} given twice")
        object.__setattr__(self, "varpi", varpi)
        object.__setattr__(self, "a_u", a_u)
        object.__setattr__(self, "extras", _freeze_params(merged))

    def as_dict(self):
        out = {"varpi": self.varpi, "a_u": self.a_u}
        out.update(self.extras)
        return out

    def get(self, name, default=None):
        return self.as_dict().get(name, default)


def _index_names(prefix, count):
    return [f"{prefix}{i + 1}" for i in range(count)]


def _parse_list(exprs, names):
    return tuple(dsl.as_expression(e, names) for e in exprs)


def _check_free(exprs, allowed, what):
    for i, e in enumerate(exprs):
        unknown = dsl.free_variables(e) - allowed
        if unknown:
            raise ModelError(f"{what}[{i}] references undeclared name(s) {sorted(unknown)}")


@dataclass(frozen=True)
class PlantModel:
    """Plant ``x' = f(x, u, v)``, ``y = h(x, u)``.

    Expressions may use ``x1..xn``, ``u1..um``, ``v1..`` (feedback channels,
    only for controlled plants with ``n_v > 0``), ``t``, auxiliary names
    defined in ``aux`` and the names in ``params``. ``n = 0`` gives a
    memoryless map ``y = h(u)``.
    """

    n: int
    m: int
    p: int
    f: tuple
    h: tuple
    params: tuple = ()
    aux: tuple = ()
    n_v: int = 0
    differentiable: bool = True
    name: str = "custom"

    def __init__(self, n, m, p, f, h, params=None, aux=(), n_v=0,
                 differentiable=True, name="custom"):
        if n < 0 or m < 1 or p < 1 or n_v < 0:
            raise ModelError(f"invalid dimensions n={n}, m={m}, p={p}, n_v={n_v}")
        params = _freeze_params(params)
        pnames = {k for k, _ in params}
        base = (set(_index_names("x", n)) | set(_index_names("u", m))
                | set(_index_names("v", n_v)) | {"t"} | pnames)
        aux_items = []
        known = set(base)
        for name_, expr in aux:
            if name_ in known:
                raise ModelError(f"auxiliary name {name_!r} shadows another name")
            e = dsl.as_expression(expr, known)
            _check_free([e], known, f"aux {name_}")
            aux_items.append((name_, e))
            known.add(name_)
        f = _parse_list(f, known)
        h = _parse_list(h, known - set(_index_names("v", n_v)))
        if len(f) != n:
            raise ModelError(f"f has {len(f)} components, expected n={n}")
        if len(h) != p:
            raise ModelError(f"h has {len(h)} components, expected p={p}")
        _check_free(f, known, "f")
        _check_free(h, known, "h")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "p", int(p))
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "aux", tuple(aux_items))
        object.__setattr__(self, "n_v", int(n_v))
        object.__setattr__(self, "differentiable", bool(differentiable))
        object.__setattr__(self, "name", name)

    @property
    def param_dict(self):
        return dict(self.params)

    def _bindings(self, x, u, v=None, t=0.0):
        b = dict(self.params)
        b["t"] = float(t)
        for i in range(self.n):
            b[f"x{i + 1}"] = float(x[i])
        for i in range(self.m):
            b[f"u{i + 1}"] = float(u[i])
        for i in range(self.n_v):
            b[f"v{i + 1}"] = 0.0 if v is None else float(v[i])
        for name_, e in self.aux:
            b[name_] = dsl.eval_expression(e, b)
        return b

    def eval_f(self, x, u, v=None, t=0.0):
        """Evaluate the state derivative (tree-walking reference path)."""
        b = self._bindings(np.ravel(x), np.ravel(u), v, t)
        return np.array([dsl.eval_expression(e, b) for e in self.f], dtype=float)

    def eval_h(self, x, u, t=0.0):
        b = self._bindings(np.ravel(x), np.ravel(u), None, t)
        return np.array([dsl.eval_expression(e, b) for e in self.h], dtype=float)


@dataclass(frozen=True)
class GeneratorModel:
    """Autonomous signal generator ``z' = s(omega, z)``, ``u = ell(omega, z)``.

    Expressions may use ``z1..zr``, ``t``, the components of the parameter
    point (``varpi``, ``a_u`` and extras) and ``params``; point components
    override parameters of the same name. ``ell_dot`` is ``None`` when the
    input derivative must be obtained numerically.
    """

    r: int
    m: int
    s: tuple
    ell: tuple
    ell_dot: Optional[tuple]
    z0: tuple
    period: object
    params: tuple = ()
    name: str = "custom"

    def __init__(self, r, m, s, ell, z0, period, ell_dot=None, params=None,
                 name="custom"):
        if r < 1 or m < 1:
            raise ModelError(f"invalid dimensions r={r}, m={m}")
        params = _freeze_params(params)
        # any identifier is accepted here; names are checked at bind time
        s = tuple(_parse_free(e) for e in s)
        ell = tuple(_parse_free(e) for e in ell)
        z0 = tuple(_parse_free(e) for e in z0)
        period = _parse_free(period)
        if ell_dot is not None:
            ell_dot = tuple(_parse_free(e) for e in ell_dot)
            if len(ell_dot) != m:
                raise ModelError("ell_dot must have m components")
        if len(s) != r or len(z0) != r:
            raise ModelError("s and z0 must have r components")
        if len(ell) != m:
            raise ModelError("ell must have m components")
        object.__setattr__(self, "r", int(r))
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "ell", ell)
        object.__setattr__(self, "ell_dot", ell_dot)
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "period", period)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "name", name)

    def constants(self, omega):
        """Name bindings for the generator at ``omega`` (params, then point)."""
        b = dict(self.params)
        b.update(omega.as_dict())
        return b

    def check_names(self, omega):
        allowed = set(self.constants(omega)) | set(_index_names("z", self.r)) | {"t"}
        groups = [("s", self.s), ("ell", self.ell), ("z0", self.z0),
                  ("period", (self.period,))]
        if self.ell_dot is not None:
            groups.append(("ell_dot", self.ell_dot))
        for what, exprs in groups:
            _check_free(exprs, allowed, what)

    def _state_bindings(self, omega, z, t=0.0):
        b = self.constants(omega)
        b["t"] = float(t)
        for i in range(self.r):
            b[f"z{i + 1}"] = float(z[i])
        return b

    def eval_z0(self, omega):
        b = self.constants(omega)
        return np.array([dsl.eval_expression(e, b) for e in self.z0], dtype=float)

    def eval_period(self, omega):
        T = dsl.eval_expression(self.period, self.constants(omega))
        if not (math.isfinite(T) and T > 0):
            raise ModelError(f"generator period must be positive and finite, got {T!r}")
        return T

    def eval_s(self, omega, z, t=0.0):
        b = self._state_bindings(omega, z, t)
        return np.array([dsl.eval_expression(e, b) for e in self.s], dtype=float)

    def eval_ell(self, omega, z, t=0.0):
        b = self._state_bindings(omega, z, t)
        return np.array([dsl.eval_expression(e, b) for e in self.ell], dtype=float)

    def eval_ell_dot(self, omega, z, t=0.0):
        if self.ell_dot is None:
            raise ModelError("generator has no analytic ell_dot")
        b = self._state_bindings(omega, z, t)
        return np.array([dsl.eval_expression(e, b) for e in self.ell_dot], dtype=float)


def _parse_free(e):
    # generator expressions may name arbitrary parameters
    if isinstance(e, str):
        names = _identifiers(e)
        return dsl.parse_expression(e, names)
    return dsl.as_expression(e)


def _identifiers(text):
    return set(re.findall(r"[A-Za-z_][A-Za-z0-9_]*", text)) - set(dsl.FUNCTIONS)


class LtiRealization:
    """State-space triple ``(A, B, C)`` with Hurwitz ``A``."""

    def __init__(self, A, B, C):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float)
        C = np.asarray(C, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ModelError(f"A must be square, got shape {A.shape}")
        B = B.reshape(n, -1)
        C = C.reshape(-1, n)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(C))):
            raise ModelError("realization matrices must be finite")
        eig = np.linalg.eigvals(A)
        if n and not np.all(eig.real < 0):
            raise ModelError(f"A is not Hurwitz (max Re eig = {eig.real.max():.3g})")
        self.A, self.B, self.C = A, B, C
        for arr in (A, B, C):
            arr.setflags(write=False)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    def to_plant(self, name="lti"):
        """Equivalent :class:`PlantModel` with linear expressions."""
        f = [_linear_combination(self.A[i], "x", self.B[i], "u") for i in range(self.n)]
        h = [_linear_combination(self.C[i], "x", (), "u") for i in range(self.p)]
        return PlantModel(self.n, self.m, self.p, f, h, name=name)


def _linear_combination(c1, p1, c2, p2):
    terms = []
    for coeffs, prefix in ((c1, p1), (c2, p2)):
        for j, c in enumerate(coeffs):
            if c != 0.0:
                terms.append(BinOp("*", Num(float(c)), Var(f"{prefix}{j + 1}")))
    if not terms:
        return Num(0.0)
    out = terms[0]
    for term in terms[1:]:
        out = BinOp("+", out, term)
    return out


_SUPPLY_KINDS = ("l2_gain", "passivity", "counterclockwise", "output_strict",
                 "input_strict", "very_strict", "custom")


@dataclass(frozen=True)
class SupplyRate:
    """Supply rate descriptor.

    ``kind`` is one of ``l2_gain`` (``gamma``), ``passivity``,
    ``counterclockwise``, ``output_strict`` (``gamma1``), ``input_strict``
    (``gamma2``), ``very_strict`` (``gamma1``, ``gamma2``) or ``custom``
    (``expr`` over ``u1..``, ``y1..``, ``ydot1..``).
    """

    kind: str
    gamma: Optional[float] = None
    gamma1: Optional[float] = None
    gamma2: Optional[float] = None
    expr: object = None

    def __post_init__(self):
        if self.kind not in _SUPPLY_KINDS:
            raise ModelError(f"unknown supply kind {self.kind!r}")
        need = {"l2_gain": ("gamma",), "output_strict": ("gamma1",),
                "input_strict": ("gamma2",), "very_strict": ("gamma1", "gamma2")}
        for attr in need.get(self.kind, ()):
            val = getattr(self, attr)
            if val is None or not math.isfinite(val) or val <= 0:
                raise ModelError(f"{self.kind} requires {attr} > 0")
        if self.kind == "custom":
            if self.expr is None:
                raise ModelError("custom supply requires an expression")
            object.__setattr__(self, "expr", dsl.as_expression(self.expr))

    @classmethod
    def l2_gain(cls, gamma):
        return cls("l2_gain", gamma=float(gamma))

    @classmethod
    def passivity(cls):
        return cls("passivity")

    @classmethod
    def counterclockwise(cls):
        return cls("counterclockwise")

    @classmethod
    def output_strict(cls, gamma1):
        return cls("output_strict", gamma1=float(gamma1))

    @classmethod
    def input_strict(cls, gamma2):
        return cls("input_strict", gamma2=float(gamma2))

    @classmethod
    def very_strict(cls, gamma1, gamma2):
        return cls("very_strict", gamma1=float(gamma1), gamma2=float(gamma2))

    @classmethod
    def custom(cls, expr):
        return cls("custom", expr=expr)

    @property
    def needs_ydot(self):
        if self.kind == "counterclockwise":
            return True
        if self.kind == "custom":
            return any(n.startswith("ydot") for n in dsl.free_variables(self.expr))
        return False

    def evaluate(self, u, y, ydot=None):
        """Pointwise supply ``s(u_k, y_k)`` for ``(M, m)`` sample arrays."""
        u = np.asarray(u, dtype=float)
        y = np.asarray(y, dtype=float)
        u = u.reshape(len(u), -1)
        y = y.reshape(len(y), -1)
        uy = np.sum(u * y, axis=1) if u.shape == y.shape else None
        uu = np.sum(u * u, axis=1)
        yy = np.sum(y * y, axis=1)
        k = self.kind
        if k == "l2_gain":
            return self.gamma ** 2 * uu - yy
        if k == "passivity":
            return uy
        if k == "output_strict":
            return uy - self.gamma1 * yy
        if k == "input_strict":
            return uy - self.gamma2 * uu
        if k == "very_strict":
            return uy - self.gamma1 * yy - self.gamma2 * uu
        if ydot is not None:
            ydot = np.asarray(ydot, dtype=float).reshape(len(y), -1)
        if k == "counterclockwise":
            if ydot is None:
                raise ModelError("counterclockwise supply needs ydot")
            return np.sum(u * ydot, axis=1)
        out = np.empty(len(u))
        for i in range(len(u)):
            b = {f"u{j + 1}": u[i, j] for j in range(u.shape[1])}
            b.update({f"y{j + 1}": y[i, j] for j in range(y.shape[1])})
            if ydot is not None:
                b.update({f"ydot{j + 1}": ydot[i, j] for j in range(ydot.shape[1])})
            out[i] = dsl.eval_expression(self.expr, b)
        if not np.all(np.isfinite(out)):
            raise ModelError("custom supply evaluated to a non-finite value")
        return out


def _range(name, pair, lo=-math.inf, hi=math.inf, open_lo=False):
    a, b = (float(v) for v in pair)
    if not (a <= b):
        raise ModelError(f"{name}: min must not exceed max")
    if a < lo or b > hi or (open_lo and a <= lo):
        raise ModelError(f"{name} must lie within {'(' if open_lo else '['}{lo}, {hi}]")
    return (a, b)


@dataclass(frozen=True)
class SpecSet:
    """Box ``[alpha] x [theta] x [radius]`` the frequency response must lie in."""

    alpha_range: Tuple[float, float]
    theta_range: Tuple[float, float] = (-math.pi, math.pi)
    radius_range: Tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "alpha_range", _range("alpha_range", self.alpha_range))
        object.__setattr__(self, "theta_range",
                           _range("theta_range", self.theta_range, -math.pi, math.pi))
        rr = tuple(float(v) for v in self.radius_range)
        if rr[0] == 0.0:
            rr = (0.0, rr[1])  # lower bound 0 admits every valid radius
            if not (0.0 < rr[1] <= 1.0):
                raise ModelError("radius_range must lie within (0, 1]")
        else:
            rr = _range("radius_range", rr, 0.0, 1.0, open_lo=True)
        object.__setattr__(self, "radius_range", rr)


@dataclass(frozen=True)
class SweepGrid:
    """Frequency and amplitude values of a Bode-surface sweep."""

    varpi_values: Tuple[float, ...]
    a_u_values: Tuple[float, ...]

    def __post_init__(self):
        for name in ("varpi_values", "a_u_values"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ModelError(f"{name} must be nonempty")
            for i, v in enumerate(vals):
                if not (math.isfinite(v) and v > 0):
                    raise ModelError(f"{name}[{i}] must be positive and finite")
                if i and v <= vals[i - 1]:
                    raise ModelError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, vals)

    @classmethod
    def logspace(cls, varpi_range=(1e-2, 1e2), n_varpi=20, a_u_range=(1e-2, 1e2), n_a_u=20):
        return cls(tuple(np.logspace(np.log10(varpi_range[0]), np.log10(varpi_range[1]), n_varpi)),
                   tuple(np.logspace(np.log10(a_u_range[0]), np.log10(a_u_range[1]), n_a_u)))

    def points(self, extras=None):
        """Parameter points in row order (``varpi`` outer, ``a_u`` inner)."""
        return [ParamPoint(w, a, extras) for w in self.varpi_values for a in self.a_u_values]
