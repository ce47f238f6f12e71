"""Simulation of generator-driven plants and periodic steady-state extraction."""

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple

import numpy as np

from . import _backend
from .dsl import BinOp, Num
from .errors import InvalidRecord, ModelError, NoConvergence
from .model import ParamPoint
from .program import ProgramBuilder, Slot

__all__ = [
    "IntegratorSettings", "DrivenSystem", "Trajectory", "SteadyStateRecord",
    "integrate", "settle_to_steady_state", "settle_system", "periodic_derivative",
]


@dataclass(frozen=True)
class IntegratorSettings:
    """Integrator and settling controls.

    Attributes
    ----------
    rtol, atol : float
        Local error tolerances of the Dormand-Prince 5(4) pair.
    samples_per_period : int
        Uniform samples ``M`` per period (endpoint excluded).
    settle_tol : float
        Relative L2 distance between consecutive periods of ``y`` that
        counts as steady state.
    washout_periods : int
        Periods simulated before convergence is tested.
    max_periods : int
        Period budget; exceeding it raises :class:`NoConvergence`.
    x_init : tuple of float, optional
        Initial plant state (zeros when omitted).
    h_min : float
        Smallest admissible step; 0 means a few ulps of ``t``.
    max_steps : int
        Step budget per integration call.
    quadrature : {"trapezoid", "simpson"}
        Rule used by the response functionals.
    """

    rtol: float = 1e-10
    atol: float = 1e-12
    samples_per_period: int = 1024
    settle_tol: float = 1e-8
    washout_periods: int = 5
    max_periods: int = 2000
    x_init: Optional[Tuple[float, ...]] = None
    h_min: float = 0.0
    max_steps: int = 10_000_000
    quadrature: str = "trapezoid"

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if self.samples_per_period < 8:
            raise ValueError("samples_per_period must be at least 8")
        if self.quadrature == "simpson" and self.samples_per_period % 2:
            raise ValueError("simpson quadrature needs an even samples_per_period")
        if self.quadrature not in ("trapezoid", "simpson"):
            raise ValueError(f"unknown quadrature {self.quadrature!r}")
        if not self.settle_tol > 0:
            raise ValueError("settle_tol must be positive")
        if self.washout_periods < 0 or self.max_periods < 1:
            raise ValueError("invalid period counts")
        if self.max_periods <= self.washout_periods:
            raise ValueError("max_periods must exceed washout_periods")
        if self.x_init is not None:
            object.__setattr__(self, "x_init", tuple(float(v) for v in self.x_init))


def _weighted_sum(terms):
    """Expression ``sum(w * slot)`` over ``(weight, Slot)`` pairs (None = 1)."""
    expr = None
    for w, slot in terms:
        term = slot if w is None else BinOp("*", Num(float(w)), slot)
        expr = term if expr is None else BinOp("+", expr, term)
    return expr if expr is not None else Num(0.0)


class DrivenSystem:
    """Plant driven by one or more generators, compiled to straight-line programs.

    State layout is ``[x_1..x_n, z^(1), z^(2), ..]``. Each source is a tuple
    ``(generator, omega, weight)`` where ``weight`` is ``None`` (identity), a
    scalar or an ``m x m`` matrix; the plant input is ``sum(weight @ ell)``.
    """

    def __init__(self, plant, sources, period):
        # open feedback channels v of a controlled plant are held at zero
        self.plant = plant
        self.sources = tuple(sources)
        if not self.sources:
            raise ModelError("at least one generator is required")
        self.period = float(period)
        self.n = plant.n
        self.m = plant.m
        self.p = plant.p
        self.r = sum(g.r for g, _, _ in self.sources)
        self.N = self.n + self.r
        weights = []
        for g, omega, w in self.sources:
            if g.m != plant.m:
                raise ModelError(f"generator output dimension {g.m} != plant input dimension {plant.m}")
            g.check_names(omega)
            weights.append(self._weight_matrix(w))
        self.weights = weights
        self.has_udot = all(g.ell_dot is not None for g, _, _ in self.sources)
        self.z0 = np.concatenate([g.eval_z0(o) for g, o, _ in self.sources])
        self.rhs = self._build(kind="rhs")
        self.outputs = self._build(kind="out")

    @classmethod
    def single(cls, plant, generator, omega):
        return cls(plant, [(generator, omega, None)], generator.eval_period(omega))

    def _weight_matrix(self, w):
        if w is None:
            return None
        arr = np.asarray(w, dtype=float)
        if arr.ndim == 0:
            return np.eye(self.m) * float(arr)
        if arr.shape != (self.m, self.m):
            raise ModelError(f"weight must be scalar or {self.m}x{self.m}, got shape {arr.shape}")
        return arr

    def _build(self, kind):
        b = ProgramBuilder(self.N)
        ell_slots, ell_dot_slots = [], []
        offset = self.n
        gen_envs = []
        for g, omega, _ in self.sources:
            env = dict(g.constants(omega))
            env["t"] = b.time_slot
            for i in range(g.r):
                env[f"z{i + 1}"] = b.state_slot(offset + i)
            offset += g.r
            gen_envs.append(env)
            ell_slots.append([b.assign_aux(e, env) for e in g.ell])
            if kind == "out" and self.has_udot:
                ell_dot_slots.append([b.assign_aux(e, env) for e in g.ell_dot])
        u_slots = self._mix(b, ell_slots)
        penv = dict(self.plant.params)
        penv["t"] = b.time_slot
        for i in range(self.n):
            penv[f"x{i + 1}"] = b.state_slot(i)
        for j in range(self.m):
            penv[f"u{j + 1}"] = u_slots[j]
        for i in range(self.plant.n_v):
            penv[f"v{i + 1}"] = 0.0
        for name, expr in self.plant.aux:
            penv[name] = b.assign_aux(expr, penv)
        if kind == "rhs":
            for i, e in enumerate(self.plant.f):
                b.output(i, e, penv)
            k = self.n
            for (g, _, _), env in zip(self.sources, gen_envs):
                for e in g.s:
                    b.output(k, e, env)
                    k += 1
        else:
            for j in range(self.m):
                b.output(j, u_slots[j], {})
            k = self.m
            if self.has_udot:
                udot_slots = self._mix(b, ell_dot_slots)
                for j in range(self.m):
                    b.output(k + j, udot_slots[j], {})
                k += self.m
            for i, e in enumerate(self.plant.h):
                b.output(k + i, e, penv)
        return b.build()

    def _mix(self, b, per_source):
        if len(self.sources) == 1 and self.weights[0] is None:
            return per_source[0]
        out = []
        for j in range(self.m):
            terms = []
            for W, slots in zip(self.weights, per_source):
                if W is None:
                    terms.append((None, slots[j]))
                else:
                    terms.extend((W[j, k], slots[k]) for k in range(self.m) if W[j, k] != 0.0)
            out.append(b.assign_aux(_weighted_sum(terms), {}))
        return out

    def initial_state(self, x_init=None):
        x = np.zeros(self.n) if x_init is None else np.asarray(x_init, dtype=float).ravel()
        if x.size != self.n:
            raise ModelError(f"x_init has {x.size} entries, expected {self.n}")
        if not np.all(np.isfinite(x)):
            raise ModelError("x_init must be finite")
        return np.concatenate([x, self.z0])

    def evaluate_outputs(self, t, states):
        """Return ``(u, udot or None, y)`` at the given times and states."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        states = np.asarray(states, dtype=float).reshape(t.size, self.N)
        out = _backend.eval_program(self.outputs, t, states)
        u = out[:, :self.m]
        k = self.m
        udot = None
        if self.has_udot:
            udot = out[:, k:k + self.m]
            k += self.m
        return u, udot, out[:, k:k + self.p]


class Trajectory:
    """Dense solution of a driven system over ``[t0, t_end]``."""

    def __init__(self, system, t0, t_end, y0, y_end, dense, n_accepted, n_rejected):
        self.system = system
        self.t0 = t0
        self.t_end = t_end
        self.y0 = y0
        self.y_end = y_end
        self._t_old, self._h, self._coef = dense
        self.n_accepted = n_accepted
        self.n_rejected = n_rejected

    def states(self, times):
        """Interpolated full state ``[x, z]`` at ``times`` (shape ``(K, N)``)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        lo = self.t0 - 1e-12 * max(1.0, abs(self.t0))
        hi = self.t_end + 1e-12 * max(1.0, abs(self.t_end))
        if np.any(times < lo) or np.any(times > hi):
            raise ValueError("requested time outside the integrated horizon")
        if self._t_old.size == 0:
            return np.tile(self.y0, (times.size, 1))
        idx = np.clip(np.searchsorted(self._t_old, times, side="right") - 1, 0, self._t_old.size - 1)
        theta = ((times - self._t_old[idx]) / self._h[idx])[:, None]
        th1 = 1.0 - theta
        c = self._coef[idx]
        out = c[:, 0] + theta * (c[:, 1] + th1 * (c[:, 2] + theta * (c[:, 3] + th1 * c[:, 4])))
        at_end = times >= self.t_end
        out[at_end] = self.y_end
        return out

    def x(self, times):
        return self.states(times)[:, :self.system.n]

    def outputs(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return self.system.evaluate_outputs(times, self.states(times))


def integrate(plant, generator, omega, x0=None, horizon=None, settings=None):
    """Integrate the driven system from ``x(0) = x0``, ``z(0) = z0(omega)``.

    Parameters
    ----------
    plant : PlantModel
    generator : GeneratorModel
    omega : ParamPoint
    x0 : array_like, optional
        Initial plant state (zeros by default).
    horizon : float
        Final time, strictly positive.
    settings : IntegratorSettings, optional

    Returns
    -------
    Trajectory
        Dense sampler over ``[0, horizon]``.

    Raises
    ------
    StepUnderflow, NonFiniteState
    """
    settings = settings or IntegratorSettings()
    if horizon is None or not (float(horizon) > 0) or not math.isfinite(horizon):
        raise ValueError("horizon must be positive and finite")
    system = DrivenSystem.single(plant, generator, omega)
    y0 = system.initial_state(x0)
    _, y_end, _, nacc, nrej, dense = _backend.dopri5(
        system.rhs, 0.0, y0, float(horizon), np.empty(0), settings.rtol, settings.atol,
        0.0, settings.h_min, settings.max_steps, True)
    return Trajectory(system, 0.0, float(horizon), y0, y_end, dense, nacc, nrej)


@dataclass
class SteadyStateRecord:
    """One period of the periodic steady state, sampled on ``M`` uniform points.

    ``t`` runs over ``[0, T)``; ``u_end``/``y_end`` are the values at ``t = T``
    and close the period for periodicity checks.
    """

    omega: object
    period: float
    M: int
    t: np.ndarray
    u: np.ndarray
    udot: np.ndarray
    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    u_end: np.ndarray
    y_end: np.ndarray
    periods_simulated: int
    final_residual: float
    udot_source: str = "analytic"
    quadrature: str = "trapezoid"
    residual_history: list = field(default_factory=list, repr=False)

    def periodicity_error(self):
        """``max(|u_0 - u(T)|, |y_0 - y(T)|)`` relative to the signal sup-norms."""
        eu = np.max(np.abs(self.u[0] - self.u_end)) / max(np.max(np.abs(self.u)), 1e-300)
        ys = np.max(np.abs(self.y))
        ey = np.max(np.abs(self.y[0] - self.y_end)) / ys if ys > 0 else 0.0
        return max(eu, ey)


def periodic_derivative(samples, period):
    """Fourth-order central difference of periodic samples along axis 0."""
    f = np.asarray(samples, dtype=float)
    h = period / f.shape[0]
    return (np.roll(f, 2, axis=0) - 8.0 * np.roll(f, 1, axis=0)
            + 8.0 * np.roll(f, -1, axis=0) - np.roll(f, -2, axis=0)) / (12.0 * h)


def _l2(a):
    return math.sqrt(float(np.sum(np.square(a))))


def settle_system(system, settings=None, omega=None):
    """Simulate ``system`` period by period until the output is periodic.

    Returns
    -------
    SteadyStateRecord

    Raises
    ------
    NoConvergence
        When ``max_periods`` is reached; ``subharmonic`` holds the smallest
        ``k`` in 2..8 for which the output repeats every ``k`` periods, if any.
    """
    settings = settings or IntegratorSettings()
    T = system.period
    M = settings.samples_per_period
    grid = np.arange(M) * (T / M)
    state = system.initial_state(settings.x_init)
    h = 0.0
    history = deque(maxlen=9)
    residuals = []
    prev_y = None
    residual = math.inf
    for k in range(1, settings.max_periods + 1):
        t0 = (k - 1) * T
        samples, state_end, h, _, _, _ = _backend.dopri5(
            system.rhs, t0, state, t0 + T, t0 + grid, settings.rtol, settings.atol,
            h, settings.h_min, settings.max_steps, False)
        if system.r:
            # The generator is exactly T-periodic, so its state is re-anchored
            # at every boundary; otherwise integration error accumulates into
            # a phase drift that never lets consecutive periods agree.
            _check_generator(system, state, state_end, samples)
            state_end = state_end.copy()
            state_end[system.n:] = system.z0
        u, udot, y = system.evaluate_outputs(t0 + grid, samples)
        history.append(y)
        if prev_y is not None:
            scale = max(_l2(y), 1e-12 * _l2(u))
            residual = _l2(y - prev_y) / scale if scale > 0 else 0.0
            residuals.append(residual)
            if k > settings.washout_periods and residual <= settings.settle_tol:
                u_end, _, y_end = system.evaluate_outputs([t0 + T], state_end[None, :])
                if udot is None:
                    udot = periodic_derivative(u, T)
                    source = "numeric"
                else:
                    source = "analytic"
                return SteadyStateRecord(
                    omega=omega, period=T, M=M, t=grid.copy(), u=u, udot=udot, y=y,
                    x=samples[:, :system.n], z=samples[:, system.n:],
                    u_end=u_end[0], y_end=y_end[0], periods_simulated=k,
                    final_residual=residual, udot_source=source,
                    quadrature=settings.quadrature, residual_history=residuals)
        prev_y = y
        state = state_end
    raise NoConvergence(
        f"no periodic steady state after {settings.max_periods} periods "
        f"(residual {residual:.3g})",
        periods=settings.max_periods, residual=residual,
        subharmonic=_subharmonic_hint(history, settings.settle_tol))


def _check_generator(system, z_start, z_end, samples):
    z0 = z_start[system.n:]
    z1 = z_end[system.n:]
    drift = float(np.linalg.norm(z1 - z0))
    scale = max(float(np.linalg.norm(z0)), float(np.max(np.linalg.norm(samples[:, system.n:], axis=1))))
    if drift > 1e-6 * (1.0 + scale):
        raise ModelError(f"generator state is not periodic with period {system.period:.6g} "
                         f"(drift {drift:.3g} after one period)")


def _subharmonic_hint(history, tol):
    if len(history) < 3:
        return None
    last = history[-1]
    scale = max(_l2(last), 1e-300)
    for k in range(2, len(history)):
        if _l2(last - history[-1 - k]) / scale <= max(100 * tol, 1e-6):
            return k
    return None


def settle_to_steady_state(plant, generator, omega, settings=None):
    """Periodic steady state of ``plant`` driven by ``generator`` at ``omega``.

    Parameters
    ----------
    plant : PlantModel
    generator : GeneratorModel
    omega : ParamPoint
    settings : IntegratorSettings, optional

    Returns
    -------
    SteadyStateRecord

    Raises
    ------
    NoConvergence, StepUnderflow, NonFiniteState, InvalidRecord
    """
    if not isinstance(omega, ParamPoint):
        raise TypeError("omega must be a ParamPoint")
    system = DrivenSystem.single(plant, generator, omega)
    record = settle_system(system, settings, omega)
    if _l2(record.u) == 0.0:
        raise InvalidRecord("generator output is identically zero over the period")
    return record


def with_settings(settings, **changes):
    """Copy of ``settings`` with fields replaced."""
    return replace(settings or IntegratorSettings(), **changes)
