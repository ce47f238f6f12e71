"""Closed-loop composition, origin stability and specification-set checks."""

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import _backend, dsl
from .errors import IntegrationError, ModelError
from .model import PlantModel, SpecSet
from .program import ProgramBuilder

__all__ = [
    "compose_closed_loop", "StabilityVerdict", "check_origin_stability",
    "SpecReport", "check_spec", "state_feedback", "output_feedback",
    "FEEDBACK_BUILDERS", "JACOBIAN_EPS",
]

JACOBIAN_EPS = 1e-6


def _names(prefix, count):
    return [f"{prefix}{i + 1}" for i in range(count)]


def compose_closed_loop(plant, kappa, f_p=(), params=None, name=None):
    """Close the feedback channel ``v`` of a controlled plant.

    Parameters
    ----------
    plant : PlantModel
        Controlled plant with ``n_v`` feedback inputs ``v1..``.
    kappa : sequence of str or expression
        Feedback law ``v = kappa(x, xp, u)``, one entry per ``v`` channel.
    f_p : sequence of str or expression
        Controller dynamics ``xp' = f_p(x, xp, u)``; empty for static feedback.
    params : dict, optional
        Controller parameters (for example ``{"K": 10}``).

    Returns
    -------
    PlantModel
        State ``(x, xp)`` with ``xp_i`` stored as ``x_{n+i}``; output unchanged.
    """
    if plant.n_v == 0:
        raise ModelError("plant has no feedback channel to close")
    kappa, f_p = tuple(kappa), tuple(f_p)
    if len(kappa) != plant.n_v:
        raise ModelError(f"feedback has {len(kappa)} components, plant expects n_v={plant.n_v}")
    params = dict(params or {})
    clash = set(params) & set(plant.param_dict)
    if clash:
        raise ModelError(f"controller parameters {sorted(clash)} shadow plant parameters")
    n, n_p = plant.n, len(f_p)
    known = (set(_names("x", n)) | set(_names("xp", n_p)) | set(_names("u", plant.m))
             | {"t"} | set(params) | set(plant.param_dict))
    kappa = [dsl.as_expression(e, known) for e in kappa]
    f_p = [dsl.as_expression(e, known) for e in f_p]
    to_state = {f"xp{i + 1}": dsl.Var(f"x{n + i + 1}") for i in range(n_p)}
    kappa = [dsl.substitute(e, to_state) for e in kappa]
    f_p = [dsl.substitute(e, to_state) for e in f_p]
    close_v = {f"v{i + 1}": k for i, k in enumerate(kappa)}
    aux = tuple((a, dsl.substitute(e, close_v)) for a, e in plant.aux)
    f = tuple(dsl.substitute(e, close_v) for e in plant.f) + tuple(f_p)
    merged = dict(plant.param_dict)
    merged.update(params)
    return PlantModel(n + n_p, plant.m, plant.p, f, plant.h, params=merged, aux=aux,
                      differentiable=plant.differentiable,
                      name=name or f"{plant.name}_closed")


def state_feedback(K):
    """Example-5 style state feedback ``v = (-K x1, K x1^2)``."""
    return ("-K*x1", "K*x1^2"), (), {"K": float(K)}


def output_feedback(K):
    """Example-5 style output feedback ``v = (-K (x1 + tanh(x1 + x2)), 0)``."""
    return ("-K*(x1 + tanh(x1 + x2))", "0"), (), {"K": float(K)}


FEEDBACK_BUILDERS = {"state_feedback": state_feedback, "output_feedback": output_feedback}


@dataclass(frozen=True)
class StabilityVerdict:
    """Outcome of the origin stability check.

    ``verdict`` is ``"stable"``, ``"unstable"`` or ``"inconclusive"``;
    ``evidence`` names the test that decided it.
    """

    verdict: str
    evidence: str
    eigenvalues: Optional[Tuple[complex, ...]]
    jacobian: Optional[np.ndarray] = field(default=None, compare=False)
    decay_ratios: Tuple[float, ...] = ()


def _zero_input_program(model):
    b = ProgramBuilder(model.n)
    env = dict(model.params)
    env["t"] = b.time_slot
    for i in range(model.n):
        env[f"x{i + 1}"] = b.state_slot(i)
    for j in range(model.m):
        env[f"u{j + 1}"] = 0.0
    for i in range(model.n_v):
        env[f"v{i + 1}"] = 0.0
    for name, expr in model.aux:
        env[name] = b.assign_aux(expr, env)
    for i, e in enumerate(model.f):
        b.output(i, e, env)
    return b.build()


def _jacobian(model):
    n = model.n
    zero_u = np.zeros(model.m)
    J = np.empty((n, n))
    h = 1e-6  # step 1e-6 (1 + |x|) at x = 0
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        J[:, k] = (model.eval_f(e, zero_u) - model.eval_f(-e, zero_u)) / (2 * h)
    return J


def _simulate(prog, n, n_trials, radius, horizon, seed, rtol, atol):
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, horizon, 201)[1:]
    ratios, monotone, rising, growth = [], True, True, False
    for _ in range(n_trials):
        x0 = rng.standard_normal(n)
        x0 *= radius / np.linalg.norm(x0)
        try:
            samples = _backend.dopri5(prog, 0.0, x0, horizon, times, rtol, atol)[0]
        except IntegrationError:
            growth = True
            rising = False
            continue
        norms = np.concatenate([[radius], np.linalg.norm(samples, axis=1)])
        ratios.append(norms[-1] / radius)
        if np.any(np.diff(norms) > 1e-9 * radius) or norms[-1] >= radius:
            monotone = False
        if np.any(np.diff(norms) < -1e-9 * radius) or norms[-1] <= radius:
            rising = False
        if norms.max() > 1e3 * radius or not np.all(np.isfinite(norms)):
            growth = True
    return ratios, monotone, rising, growth


def check_origin_stability(model, horizon=200.0, n_trials=16, radius=1e-3, decay=1e-3,
                           seed=0, eps=JACOBIAN_EPS, rtol=1e-10, atol=1e-14):
    """Decide asymptotic stability of ``x = 0`` for ``u = 0``.

    A hyperbolic Jacobian (central differences) decides directly. Otherwise
    ``n_trials`` seeded perturbations of norm ``radius`` are simulated over
    ``horizon``: decay by ``decay`` in every trial is strong evidence of
    stability; strictly monotone decrease of the norm in every trial is
    reported as weak evidence (slow, non-hyperbolic decay). Growth beyond
    ``1e3 * radius`` is evidence of instability, and strictly monotone
    growth in every trial is weak evidence of it.
    """
    if model.n == 0:
        return StabilityVerdict("stable", "memoryless", (), None, ())
    if not np.allclose(model.eval_f(np.zeros(model.n), np.zeros(model.m)), 0.0, atol=1e-12):
        return StabilityVerdict("inconclusive", "origin is not an equilibrium", None)
    J, eigs = None, None
    if model.differentiable:
        J = _jacobian(model)
        eigs = tuple(complex(v) for v in sorted(np.linalg.eigvals(J),
                                                key=lambda z: (z.real, z.imag)))
    ratios, monotone, rising, growth = _simulate(
        _zero_input_program(model), model.n, n_trials, radius, horizon, seed, rtol, atol)
    ratios = tuple(float(r) for r in ratios)
    strong = len(ratios) == n_trials and max(ratios) <= decay
    if eigs is not None:
        worst = max(z.real for z in eigs)
        if worst < -eps:
            return StabilityVerdict("stable", "jacobian", eigs, J, ratios)
        if worst > eps:
            return StabilityVerdict("unstable", "jacobian", eigs, J, ratios)
    if growth:
        return StabilityVerdict("unstable", "simulation: growth", eigs, J, ratios)
    if strong:
        return StabilityVerdict("stable", "simulation: decay", eigs, J, ratios)
    if monotone and len(ratios) == n_trials:
        return StabilityVerdict("stable", "simulation: monotone decay (weak)", eigs, J, ratios)
    if rising and len(ratios) == n_trials:
        return StabilityVerdict("unstable", "simulation: monotone growth (weak)", eigs, J, ratios)
    return StabilityVerdict("inconclusive", "simulation", eigs, J, ratios)


@dataclass(frozen=True)
class SpecReport:
    """Membership of frequency-response samples in a specification box.

    ``margins[i]`` holds the signed distances ``(alpha, theta, radius)`` to
    the nearest box face (positive inside); ``worst`` indexes the sample with
    the most negative margin, or is ``None`` when all samples are inside.
    """

    inside: bool
    members: Tuple[Tuple[bool, bool, bool], ...]
    margins: Tuple[Tuple[float, float, float], ...]
    worst: Optional[int]
    worst_margin: float


def _interval_margin(value, lo, hi):
    return min(value - lo, hi - value)


def check_spec(samples, spec):
    """Check every sample against ``spec``; degenerate samples only on alpha."""
    if not isinstance(spec, SpecSet):
        raise TypeError("spec must be a SpecSet")
    members, margins = [], []
    worst, worst_margin = None, math.inf
    for i, s in enumerate(samples):
        ma = _interval_margin(s.alpha, *spec.alpha_range)
        if s.degenerate:
            mt = mr = math.inf
        else:
            mt = _interval_margin(s.theta, *spec.theta_range)
            mr = _interval_margin(s.radius, *spec.radius_range)
        members.append((ma >= 0, mt >= 0, mr >= 0))
        margins.append((ma, mt, mr))
        m = min(ma, mt, mr)
        if m < 0 and m < worst_margin:
            worst, worst_margin = i, m
    return SpecReport(all(all(t) for t in members), tuple(members), tuple(margins),
                      worst, worst_margin if worst is not None else 0.0)
