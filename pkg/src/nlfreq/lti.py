"""Linear reference: Sylvester solutions, transfer function and LTI response."""

import cmath
import math

import numpy as np

from .analysis import FrequencyResponseSample
from .errors import ModelError, SingularSystemError
from .model import LtiRealization, ParamPoint

__all__ = [
    "lu_factor", "lu_solve", "oscillator_matrices", "sylvester_closed_form",
    "sylvester_direct", "sylvester_residual", "transfer_eval",
    "lti_reference_response",
]


def lu_factor(a):
    """LU factorisation with partial pivoting (real or complex).

    Returns
    -------
    lu : ndarray
        Packed unit-lower and upper factors.
    piv : list of int
        Row interchanges, ``piv[k]`` swapped with row ``k``.
    """
    lu = np.array(a, dtype=np.result_type(a, float), copy=True)
    n = lu.shape[0]
    if lu.shape != (n, n):
        raise ValueError("lu_factor needs a square matrix")
    scale = max(float(np.max(np.abs(lu))) if n else 0.0, 1e-300)
    piv = []
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        piv.append(p)
        if abs(lu[p, k]) <= 1e-14 * scale:
            raise SingularSystemError(f"matrix is singular to working precision (pivot {k})")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, piv


def lu_solve(factors, b):
    """Solve ``A x = b`` from :func:`lu_factor` output; ``b`` may be 2-D."""
    lu, piv = factors
    x = np.array(b, dtype=np.result_type(lu, b), copy=True)
    n = lu.shape[0]
    for k, p in enumerate(piv):
        if p != k:
            x[[k, p]] = x[[p, k]]
    for k in range(n):
        x[k + 1:] -= np.multiply.outer(lu[k + 1:, k], x[k])
    for k in range(n - 1, -1, -1):
        x[k] /= lu[k, k]
        x[:k] -= np.multiply.outer(lu[:k, k], x[k])
    return x


def oscillator_matrices(varpi):
    """``S(varpi) = [[0, varpi], [-varpi, 0]]`` and ``L = [1, 0]``."""
    S = np.array([[0.0, varpi], [-varpi, 0.0]])
    L = np.array([[1.0, 0.0]])
    return S, L


def _check_varpi(varpi):
    varpi = float(varpi)
    if not (varpi > 0 and math.isfinite(varpi)):
        raise ModelError(f"varpi must be positive and finite, got {varpi!r}")
    return varpi


def sylvester_closed_form(A, B, varpi):
    """Solution ``Phi`` (n x 2) of ``A Phi + B L = Phi S(varpi)``.

    Uses ``Phi = -(A^2 + varpi^2 I)^{-1} (B L S + A B L)``, solved by LU with
    partial pivoting. ``B`` must have a single column.
    """
    varpi = _check_varpi(varpi)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, 1)
    S, L = oscillator_matrices(varpi)
    BL = B @ L
    rhs = -(BL @ S + A @ BL)
    return lu_solve(lu_factor(A @ A + varpi ** 2 * np.eye(n)), rhs)


def sylvester_direct(A, S, W):
    """Solve ``A Phi - Phi S = -W`` via the Kronecker-vectorised linear system.

    Independent of :func:`sylvester_closed_form`; used as its oracle.

    Raises
    ------
    SingularSystemError
        When ``A`` and ``S`` share an eigenvalue (no unique solution).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    n, k = A.shape[0], S.shape[0]
    W = np.asarray(W, dtype=float).reshape(n, k)
    K = np.kron(np.eye(k), A) - np.kron(S.T, np.eye(n))
    if np.linalg.cond(K) > 1e13:
        raise SingularSystemError("A and S share an eigenvalue; Sylvester equation is singular")
    vec = np.linalg.solve(K, -W.reshape(-1, order="F"))
    return vec.reshape(n, k, order="F")


def sylvester_residual(A, B, varpi, Phi):
    """``||A Phi + B L - Phi S||`` (Frobenius)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], 1)
    S, L = oscillator_matrices(varpi)
    return float(np.linalg.norm(A @ Phi + B @ L - Phi @ S))


def transfer_eval(A, B, C, varpi, check=True):
    """``H(j varpi) = C (j varpi I - A)^{-1} B`` for a SISO realization.

    With ``check`` set the value is compared against ``C Phi_1 + j C Phi_2``
    from :func:`sylvester_closed_form`.
    """
    varpi = _check_varpi(varpi)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)
    C = np.asarray(C, dtype=float).reshape(-1, n)
    if B.shape[1] != 1 or C.shape[0] != 1:
        raise ModelError("transfer_eval supports single-input single-output systems")
    x = lu_solve(lu_factor(1j * varpi * np.eye(n) - A), B.astype(complex))
    H = complex((C @ x)[0, 0])
    if check:
        Phi = sylvester_closed_form(A, B, varpi)
        alt = complex((C @ Phi[:, 0])[0], (C @ Phi[:, 1])[0])
        if abs(alt - H) > 1e-10 * max(1.0, abs(H)):
            raise ArithmeticError(f"resolvent and Sylvester forms disagree ({H} vs {alt})")
    return H


def lti_reference_response(realization, omega):
    """Exact frequency response of a stable SISO system under harmonic input.

    Gain ``|H|``, phase ``arg H``, radius 1 and ``gamma = H(j varpi)``; the
    projection coefficients are ``Re H`` and ``Im H / varpi``. Independent of
    the input amplitude.
    """
    if not isinstance(realization, LtiRealization):
        raise TypeError("realization must be an LtiRealization")
    if realization.m != 1 or realization.p != 1:
        raise ModelError("lti_reference_response needs a SISO realization")
    if not isinstance(omega, ParamPoint):
        omega = ParamPoint(*omega)
    H = transfer_eval(realization.A, realization.B, realization.C, omega.varpi)
    alpha = abs(H)
    if alpha == 0.0:
        nan = math.nan
        return FrequencyResponseSample(omega, 0.0, nan, nan, nan, nan, 0j, nan, nan, nan, True)
    theta = cmath.phase(H)
    if theta == -math.pi:
        theta = math.pi
    return FrequencyResponseSample(
        omega=omega, alpha=alpha, re=H.real / alpha, im=H.imag / alpha, theta=theta,
        radius=1.0,
        gamma=H, lambda1=H.real, lambda2=H.imag / omega.varpi, residual_sq=0.0)
