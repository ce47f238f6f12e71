"""Gain, phase, radius and frequency response of a periodic steady state."""

import cmath
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateResponse, InvalidRecord

__all__ = [
    "FrequencyResponseSample", "l2_inner", "l2_norm", "omega_gain",
    "omega_phase_components", "omega_phase", "omega_radius",
    "frequency_response", "orthogonality_check", "projection_residual",
    "DEGENERATE_RATIO",
]

# ||Y|| below this fraction of ||u|| makes phase and radius undefined
DEGENERATE_RATIO = 1e-12


def _weights(M, T, rule):
    if rule == "trapezoid":
        return None
    if rule == "simpson":
        if M % 2:
            raise ValueError("simpson rule needs an even number of samples")
        w = np.where(np.arange(M) % 2 == 1, 4.0 / 3.0, 2.0 / 3.0)
        return w * (T / M)
    raise ValueError(f"unknown quadrature {rule!r}")


def l2_inner(f_k, g_k, T, rule="trapezoid"):
    """Inner product over one period from uniform periodic samples.

    Parameters
    ----------
    f_k, g_k : array_like, shape (M,) or (M, k)
        Samples on ``t_j = j T / M``, ``j = 0..M-1`` (endpoint excluded).
    T : float
        Period in seconds.
    rule : {"trapezoid", "simpson"}

    Returns
    -------
    float
        ``(T/M) sum_j f_j . g_j`` for the trapezoid rule.
    """
    f = np.asarray(f_k, dtype=float)
    g = np.asarray(g_k, dtype=float)
    if f.shape != g.shape:
        raise ValueError(f"sample arrays differ in shape: {f.shape} vs {g.shape}")
    if f.shape[0] == 0:
        raise ValueError("empty sample arrays")
    M = f.shape[0]
    prod = (f * g).reshape(M, -1).sum(axis=1)
    w = _weights(M, T, rule)
    if w is None:
        return float(T / M * math.fsum(prod))
    return float(math.fsum(w * prod))


def l2_norm(f_k, T, rule="trapezoid"):
    return math.sqrt(max(l2_inner(f_k, f_k, T, rule), 0.0))


def _rule(record):
    return getattr(record, "quadrature", "trapezoid")


def _norms(record):
    T, q = record.period, _rule(record)
    nu = l2_norm(record.u, T, q)
    if nu == 0.0:
        raise InvalidRecord("input has zero L2 norm over the period")
    return nu, l2_norm(record.udot, T, q), l2_norm(record.y, T, q)


def _check_square(record):
    if np.shape(record.u)[1:] != np.shape(record.y)[1:]:
        raise ValueError("phase and radius need equal input and output dimensions")


def omega_gain(record):
    """``||Y|| / ||u||`` over one period."""
    nu, _, ny = _norms(record)
    return ny / nu


def omega_phase_components(record):
    """Normalised inner products ``(<u, Y>/(|u||Y|), <u', Y>/(|u'||Y|))``.

    Raises
    ------
    DegenerateResponse
        When ``||Y|| < 1e-12 ||u||``.
    """
    _check_square(record)
    nu, nud, ny = _norms(record)
    if ny < DEGENERATE_RATIO * nu:
        raise DegenerateResponse("steady-state output is numerically zero")
    if nud == 0.0:
        raise InvalidRecord("input derivative has zero L2 norm")
    T, q = record.period, _rule(record)
    re = l2_inner(record.u, record.y, T, q) / (nu * ny)
    im = l2_inner(record.udot, record.y, T, q) / (nud * ny)
    return re, im


def omega_phase(record):
    re, im = omega_phase_components(record)
    return _atan2(im, re)


def omega_radius(record):
    re, im = omega_phase_components(record)
    return math.hypot(re, im)


def _atan2(im, re):
    theta = math.atan2(im, re)
    # report in (-pi, pi]
    return math.pi if theta == -math.pi else theta


@dataclass(frozen=True)
class FrequencyResponseSample:
    """Frequency response at one parameter point.

    ``theta``, ``radius``, ``re``, ``im``, ``lambda1``, ``lambda2`` and
    ``residual_sq`` are NaN when ``degenerate`` is set; ``gamma`` is then 0.
    """

    omega: object
    alpha: float
    re: float
    im: float
    theta: float
    radius: float
    gamma: complex
    lambda1: float
    lambda2: float
    residual_sq: float
    degenerate: bool = False

    def __post_init__(self):
        if self.degenerate:
            return
        if abs(self.radius ** 2 - (self.re ** 2 + self.im ** 2)) > 1e-12:
            raise ValueError("radius inconsistent with phase components")

    @classmethod
    def from_polar(cls, omega, alpha, theta, radius):
        """Sample built from ``(alpha, theta, radius)`` alone."""
        re = radius * math.cos(theta)
        im = radius * math.sin(theta)
        radius = math.hypot(re, im)
        return cls(omega, alpha, re, im, theta, radius,
                   alpha * radius * cmath.exp(1j * theta), math.nan, math.nan,
                   1.0 - radius ** 2, False)


def projection_residual(record):
    """Projection of ``Y`` on ``span{u, u'}``.

    Returns
    -------
    lambda1, lambda2, residual_sq : float
        ``lambda1 = <u,Y>/|u|^2``, ``lambda2 = <u',Y>/|u'|^2`` and
        ``|Y - lambda1 u - lambda2 u'|^2 / |Y|^2``, the last evaluated directly
        from the residual signal.
    """
    _check_square(record)
    nu, nud, ny = _norms(record)
    if ny < DEGENERATE_RATIO * nu:
        raise DegenerateResponse("steady-state output is numerically zero")
    T, q = record.period, _rule(record)
    lam1 = l2_inner(record.u, record.y, T, q) / nu ** 2
    lam2 = l2_inner(record.udot, record.y, T, q) / nud ** 2
    u = np.asarray(record.u).reshape(record.M, -1)
    ud = np.asarray(record.udot).reshape(record.M, -1)
    y = np.asarray(record.y).reshape(record.M, -1)
    resid = y - lam1 * u - lam2 * ud
    return lam1, lam2, l2_inner(resid, resid, T, q) / ny ** 2


def frequency_response(record):
    """Assemble a :class:`FrequencyResponseSample` from a steady-state record.

    ``gamma`` is computed as ``alpha r e^{j theta}`` and checked against the
    Euler form ``alpha (re + j im)``.
    """
    nu, _, ny = _norms(record)
    alpha = ny / nu
    if ny < DEGENERATE_RATIO * nu:
        nan = math.nan
        return FrequencyResponseSample(record.omega, alpha, nan, nan, nan, nan,
                                       0j, nan, nan, nan, True)
    re, im = omega_phase_components(record)
    theta = _atan2(im, re)
    radius = math.hypot(re, im)
    gamma = alpha * radius * cmath.exp(1j * theta)
    euler = complex(alpha * re, alpha * im)
    if abs(gamma - euler) > 1e-12 * max(1.0, abs(euler)):
        raise ArithmeticError("polar and Euler forms of gamma disagree")
    lam1, lam2, res = projection_residual(record)
    return FrequencyResponseSample(record.omega, alpha, re, im, theta, radius,
                                   gamma, lam1, lam2, res, False)


def orthogonality_check(record, tol=1e-8, strict=True):
    """Normalised ``<u', u>``; zero for any periodic input.

    Raises
    ------
    InvalidRecord
        With ``strict`` set, when the samples are not periodic
        (``u(T) != u(0)``) or the normalised product exceeds ``tol``.
    """
    T, q = record.period, _rule(record)
    nu, nud, _ = _norms(record)
    if nud == 0.0:
        raise InvalidRecord("input derivative has zero L2 norm")
    value = l2_inner(record.udot, record.u, T, q) / (nu * nud)
    if not strict:
        return value
    u_end: Optional[np.ndarray] = getattr(record, "u_end", None)
    if u_end is not None:
        sup = float(np.max(np.abs(record.u)))
        if np.max(np.abs(np.asarray(record.u)[0] - u_end)) > 1e-6 * sup:
            raise InvalidRecord(f"input samples are not periodic (orthogonality {value:.3g})")
    if abs(value) > tol:
        raise InvalidRecord(f"input not orthogonal to its derivative ({value:.3g})")
    return value
