"""Multi-tone excitation: common period, lifted steady state, superposition ratios."""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Tuple

import numpy as np

from .analysis import frequency_response, l2_inner, l2_norm
from .engine import DrivenSystem, settle_system, settle_to_steady_state
from .errors import IncommensurateFrequencies, InvalidRecord, ModelError
from .model import ParamPoint

__all__ = ["MultiInputSpec", "common_period", "multi_steady_state",
           "superposition_report", "SuperpositionReport", "Q_MAX"]

Q_MAX = 64


@dataclass(frozen=True)
class MultiInputSpec:
    """Tones ``(omega, weight)``; weight is a scalar or an ``m x m`` matrix."""

    entries: Tuple[Tuple[ParamPoint, object], ...]

    def __init__(self, entries):
        entries = tuple((om, w) for om, w in entries)
        if not entries:
            raise ModelError("multi-input spec needs at least one tone")
        for om, w in entries:
            if not isinstance(om, ParamPoint):
                raise TypeError("tone parameters must be ParamPoint instances")
            if not np.all(np.isfinite(np.asarray(w, dtype=float))):
                raise ModelError("tone weights must be finite")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_tones(cls, tones):
        """Build from ``[{"varpi": .., "a_u": .., "weight": ..}, ...]``."""
        out = []
        for tone in tones:
            tone = dict(tone)
            w = tone.pop("weight", 1.0)
            om = ParamPoint(tone.pop("varpi"), tone.pop("a_u"), tone)
            out.append((om, w))
        return cls(out)


def _weight_norm(w):
    arr = np.asarray(w, dtype=float)
    return abs(float(arr)) if arr.ndim == 0 else float(np.linalg.norm(arr, 2))


def common_period(spec, generator=None, q_max=Q_MAX, rel_tol=1e-9):
    """Least common multiple of the tone periods.

    Each ratio ``T_i / T_1`` is approximated by the best rational with
    denominator at most ``q_max``; the period is ``T_1`` times the LCM of
    those rationals.

    Raises
    ------
    IncommensurateFrequencies
        If some ratio has no such rational within ``rel_tol``.
    """
    periods = [generator.eval_period(om) if generator is not None else 2 * math.pi / om.varpi
               for om, _ in spec.entries]
    T1 = periods[0]
    num_lcm, den_gcd = 1, 0
    for T in periods:
        ratio = T / T1
        frac = Fraction(ratio).limit_denominator(q_max)
        if frac == 0 or abs(float(frac) - ratio) > rel_tol * ratio:
            raise IncommensurateFrequencies(
                f"period ratio {ratio!r} has no rational approximation with "
                f"denominator <= {q_max}")
        num_lcm = math.lcm(num_lcm, frac.numerator)
        den_gcd = math.gcd(den_gcd, frac.denominator)
    return T1 * num_lcm / den_gcd


def _sources(generator, spec):
    if all(_weight_norm(w) == 0.0 for _, w in spec.entries):
        raise ModelError("all tone weights are zero; the input would vanish")
    return [(generator, om, w) for om, w in spec.entries]


def multi_steady_state(plant, generator, spec, settings=None):
    """Steady state under ``u = sum(weight * ell(omega_i, z_i))`` over ``T_A``."""
    T = common_period(spec, generator)
    system = DrivenSystem(plant, _sources(generator, spec), T)
    record = settle_system(system, settings, omega=spec)
    if l2_norm(record.u, record.period) == 0.0:
        raise InvalidRecord("multi-tone input is identically zero")
    return record


@dataclass(frozen=True)
class SuperpositionReport:
    """Empirical constants for the weak superposition bounds.

    ``b_star``, ``c_star`` and ``d_star`` are the smallest uniform constants
    for which ``|Y_A| <= b sum |M| alpha``,
    ``|<u_A, Y_A>| <= c sum |r cos theta|`` and
    ``|<u_A', Y_A>| <= d sum |r sin theta|`` hold for this instance.
    ``triangle_bound`` is ``sum |M| alpha |ell_omega|`` over ``T_A``.
    """

    period: float
    y_norm: float
    alphas: Tuple[float, ...]
    weight_norms: Tuple[float, ...]
    u_y_inner: float
    udot_y_inner: float
    r_cos: Tuple[float, ...]
    r_sin: Tuple[float, ...]
    b_star: float
    c_star: float
    d_star: float
    triangle_bound: float
    record: object = None


def _ratio(num, den):
    if den > 0:
        return num / den
    return 0.0 if num <= 1e-14 else math.inf


def superposition_report(plant, generator, spec, settings=None):
    """Multi-tone steady state plus per-tone responses and minimal constants."""
    rec = multi_steady_state(plant, generator, spec, settings)
    T = rec.period
    y_norm = l2_norm(rec.y, T)
    alphas, wn, rcos, rsin = [], [], [], []
    triangle = 0.0
    for om, w in spec.entries:
        single = settle_to_steady_state(plant, generator, om, settings)
        s = frequency_response(single)
        alphas.append(s.alpha)
        wn.append(_weight_norm(w))
        rcos.append(0.0 if s.degenerate else s.radius * math.cos(s.theta))
        rsin.append(0.0 if s.degenerate else s.radius * math.sin(s.theta))
        # |ell_omega| over T_A is sqrt(T_A / T_omega) times its one-period norm
        triangle += wn[-1] * s.alpha * l2_norm(single.u, single.period) * math.sqrt(T / single.period)
    if not any(a > 0 for a in alphas):
        raise ModelError("superposition report needs at least one tone with positive gain")
    uy = l2_inner(rec.u, rec.y, T)
    udy = l2_inner(rec.udot, rec.y, T)
    return SuperpositionReport(
        period=T, y_norm=y_norm, alphas=tuple(alphas), weight_norms=tuple(wn),
        u_y_inner=uy, udot_y_inner=udy, r_cos=tuple(rcos), r_sin=tuple(rsin),
        b_star=_ratio(y_norm, sum(m * a for m, a in zip(wn, alphas))),
        c_star=_ratio(abs(uy), sum(abs(v) for v in rcos)),
        d_star=_ratio(abs(udy), sum(abs(v) for v in rsin)),
        triangle_bound=triangle, record=rec)
