"""Parallel grid evaluation with deterministic row order."""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .analysis import frequency_response
from .dissipativity import certify
from .engine import settle_to_steady_state
from .errors import IntegrationError, NlfreqError, NoConvergence
from .lti import lti_reference_response

__all__ = ["SweepRow", "CertificateRow", "parallel_map", "sweep_point", "run_sweep",
           "run_certificates", "certificate_point", "lti_oracle_surface", "unwrap_rows", "default_workers"]


def default_workers():
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # not available on every platform
        return os.cpu_count() or 1


def parallel_map(fn, items, workers=None):
    """``[fn(x) for x in items]``, evaluated in a process pool when ``workers > 1``.

    Results come back in input order, so output never depends on scheduling.
    """
    items = list(items)
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


# failures recorded in-row; anything else is a bug and propagates
_POINT_ERRORS = (NlfreqError, ArithmeticError, ValueError)


def _status(exc):
    if isinstance(exc, NoConvergence):
        return f"no_convergence: {exc}"
    if isinstance(exc, IntegrationError):
        return f"integration_error: {exc}"
    return f"error: {exc}"


@dataclass(frozen=True)
class SweepRow:
    """One grid point of a Bode surface; ``status`` is empty on success."""

    index: int
    varpi: float
    a_u: float
    alpha: float
    theta_rad: float
    theta_unwrapped: float
    radius: float
    re_gamma: float
    im_gamma: float
    degenerate: bool
    periods_simulated: int
    residual: float
    residual_sq: float
    status: str = ""

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    @property
    def converged(self):
        return not self.status.startswith("no_convergence")


def _failed_row(index, omega, status, periods=0, residual=math.nan):
    nan = math.nan
    return SweepRow(index, omega.varpi, omega.a_u, nan, nan, nan, nan, nan, nan,
                    False, periods, residual, nan, status)


def _sample_row(index, omega, s, periods, residual):
    return SweepRow(index, omega.varpi, omega.a_u, s.alpha, s.theta, s.theta, s.radius,
                    s.gamma.real, s.gamma.imag, s.degenerate, periods, residual,
                    s.residual_sq)


def sweep_point(task):
    """Settle and analyse one ``(index, plant, generator, omega, settings)`` task."""
    index, plant, generator, omega, settings = task
    try:
        rec = settle_to_steady_state(plant, generator, omega, settings)
        s = frequency_response(rec)
    except NoConvergence as exc:
        return _failed_row(index, omega, _status(exc), exc.periods or 0,
                           exc.residual if exc.residual is not None else math.nan)
    except _POINT_ERRORS as exc:
        return _failed_row(index, omega, _status(exc))
    return _sample_row(index, omega, s, rec.periods_simulated, rec.final_residual)


def unwrap_rows(rows, n_a_u):
    """Fill ``theta_unwrapped`` by unwrapping along ``a_u`` within each ``varpi``.

    Missing phases (failed or degenerate points) are skipped and keep NaN.
    """
    out = list(rows)
    for start in range(0, len(out), n_a_u):
        block = out[start:start + n_a_u]
        idx = [i for i, r in enumerate(block) if math.isfinite(r.theta_rad)]
        if not idx:
            continue
        unwrapped = np.unwrap([block[i].theta_rad for i in idx])
        for i, th in zip(idx, unwrapped):
            r = block[i]
            out[start + i] = SweepRow(**{**r.__dict__, "theta_unwrapped": float(th)})
    return out


def run_sweep(plant, generator, grid, settings=None, workers=None, extras=None):
    """Bode surface of ``plant`` over ``grid``, rows ordered ``varpi``-major."""
    tasks = [(i, plant, generator, om, settings) for i, om in enumerate(grid.points(extras))]
    rows = parallel_map(sweep_point, tasks, workers)
    return unwrap_rows(rows, len(grid.a_u_values))


def lti_oracle_surface(realization, grid, extras=None):
    """Exact LTI response on ``grid`` in the same row format as :func:`run_sweep`."""
    rows = []
    for i, om in enumerate(grid.points(extras)):
        rows.append(_sample_row(i, om, lti_reference_response(realization, om), 0, 0.0))
    return unwrap_rows(rows, len(grid.a_u_values))


@dataclass(frozen=True)
class CertificateRow:
    """Dissipativity certificate at one grid point."""

    index: int
    varpi: float
    a_u: float
    supply: str
    c_omega: float
    holds_integral: bool
    holds_frf: object
    consistent: bool
    margin: float
    borderline: bool
    verdict: str
    status: str = ""

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]


def certificate_point(task):
    index, plant, generator, omega, settings, supply = task
    try:
        rec = settle_to_steady_state(plant, generator, omega, settings)
        cert = certify(rec, frequency_response(rec), supply)
    except _POINT_ERRORS as exc:
        nan = math.nan
        return CertificateRow(index, omega.varpi, omega.a_u, supply.kind, nan, False, None,
                              False, nan, False, "", _status(exc))
    return CertificateRow(index, omega.varpi, omega.a_u, supply.kind, cert.c_omega,
                          cert.holds_integral, cert.holds_frf, cert.consistent, cert.margin,
                          cert.borderline, cert.verdict)


def run_certificates(plant, generator, grid, supply, settings=None, workers=None, extras=None):
    tasks = [(i, plant, generator, om, settings, supply)
             for i, om in enumerate(grid.points(extras))]
    return parallel_map(certificate_point, tasks, workers)
