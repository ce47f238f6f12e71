"""Dissipativity relative to a signal generator, by two independent routes.

The integral route evaluates the supply over one steady-state period; the
frequency-response route checks the corresponding condition on
``(alpha, theta, r)``. The two must agree away from the borderline.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analysis import l2_inner, l2_norm
from .engine import periodic_derivative
from .model import SupplyRate

__all__ = ["DissipativityCertificate", "supply_integral", "frf_condition", "certify",
           "MARGIN_TOL", "integral_band"]

MARGIN_TOL = 1e-6
_HALF_PI = math.pi / 2


def _rule(record):
    return getattr(record, "quadrature", "trapezoid")


def supply_integral(record, supply):
    """``c_omega``: the supply integrated over one steady-state period.

    ``ydot`` (for counterclockwise or custom supplies using it) comes from
    fourth-order periodic central differences of the output samples.
    """
    ydot = periodic_derivative(record.y, record.period) if supply.needs_ydot else None
    s = supply.evaluate(record.u, record.y, ydot)
    return l2_inner(s, np.ones_like(s), record.period, _rule(record))


def integral_band(record):
    """Tolerance on ``|c_omega|`` below which the integral verdict is borderline."""
    T, q = record.period, _rule(record)
    nu = l2_norm(record.u, T, q)
    ny = l2_norm(record.y, T, q)
    return 1e-8 * nu * max(nu, ny)


def frf_condition(sample, supply):
    """Evaluate the frequency-response condition for ``supply``.

    Returns
    -------
    holds : bool
        The condition exactly as stated for the supply (with its ``alpha = 0``
        branch for degenerate samples).
    margin : float
        Signed distance to the binding inequality, normalised so that its
        sign matches ``c_omega``: ``gamma - alpha`` (L2 gain),
        ``r cos(theta)`` (passivity), ``-r sin(theta)`` (counterclockwise),
        ``r cos(theta) - gamma1 alpha`` (output strict),
        ``alpha r cos(theta) - gamma2`` (input strict) and
        ``alpha r cos(theta) - gamma1 alpha^2 - gamma2`` (very strict).
    """
    kind = supply.kind
    if kind == "custom":
        raise ValueError("custom supplies have no frequency-response condition")
    a = sample.alpha
    if kind == "l2_gain":
        return bool(0.0 <= a <= supply.gamma), supply.gamma - a
    if sample.degenerate or a == 0.0:
        if kind in ("passivity", "counterclockwise", "output_strict"):
            return True, 0.0
        return False, -supply.gamma2
    th, r = sample.theta, sample.radius
    rc = r * math.cos(th)
    open_half = -_HALF_PI < th < _HALF_PI
    if kind == "passivity":
        return bool(-_HALF_PI <= th <= _HALF_PI), rc
    if kind == "counterclockwise":
        return bool(-math.pi <= th <= 0.0 or th == math.pi), -r * math.sin(th)
    if kind == "output_strict":
        g1 = supply.gamma1
        return bool(open_half and 0.0 < a <= rc / g1), rc - g1 * a
    if kind == "input_strict":
        g2 = supply.gamma2
        holds = open_half and rc > 0 and a >= g2 / rc
        return bool(holds), a * rc - g2
    g1, g2 = supply.gamma1, supply.gamma2
    delta = rc * rc - 4.0 * g1 * g2
    holds = False
    if delta >= 0.0 and open_half:
        sq = math.sqrt(delta)
        holds = (rc - sq) / (2 * g1) <= a <= (rc + sq) / (2 * g1)
    return bool(holds), a * rc - g1 * a * a - g2


@dataclass(frozen=True)
class DissipativityCertificate:
    """Both dissipativity verdicts at one parameter point.

    ``verdict`` is ``"holds"``, ``"fails"`` or ``"indeterminate"`` (either
    route within its tolerance band). ``consistent`` compares the two
    booleans and is vacuously true for borderline points.
    """

    omega: object
    supply: SupplyRate
    c_omega: float
    holds_integral: bool
    holds_frf: Optional[bool]
    consistent: bool
    margin: float
    borderline: bool
    verdict: str


def certify(record, sample, supply):
    """Populate both routes and compare them."""
    c = supply_integral(record, supply)
    band = integral_band(record)
    holds_int = c >= -band
    if supply.kind == "custom":
        borderline = abs(c) <= band
        verdict = "indeterminate" if borderline else ("holds" if holds_int else "fails")
        return DissipativityCertificate(record.omega, supply, c, holds_int, None, True,
                                        math.nan, borderline, verdict)
    holds_frf, margin = frf_condition(sample, supply)
    borderline = abs(c) <= band or abs(margin) <= MARGIN_TOL
    consistent = True if borderline else holds_int == holds_frf
    if borderline:
        verdict = "indeterminate"
    elif consistent:
        verdict = "holds" if holds_frf else "fails"
    else:
        verdict = "inconsistent"
    return DissipativityCertificate(record.omega, supply, c, bool(holds_int), bool(holds_frf),
                                    bool(consistent), margin, bool(borderline), verdict)
