"""Pure-Python kernels with the same algorithm as the compiled ``_kernels``.

``system`` may be a :class:`~nlfreq.program.Program` or any callable
``f(t, y) -> array``.
"""

import math

import numpy as np

from .errors import IntegrationError, NonFiniteState, StepUnderflow

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
A71, A73, A74, A75, A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423

_EPS = 2.220446049250313e-16


def _rhs(system):
    pyfunc = getattr(system, "pyfunc", None)
    if pyfunc is not None:
        return lambda t, y: np.array(pyfunc(float(t), y.tolist()), dtype=float)
    return lambda t, y: np.asarray(system(t, y), dtype=float).ravel()


def _err_norm(e, y0, y1, rtol, atol):
    if e.size == 0:
        return 0.0
    sc = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    # an overflowing trial step gives inf/nan here and is rejected by the caller
    with np.errstate(over="ignore", invalid="ignore"):
        return math.sqrt(float(np.sum((e / sc) ** 2)) / e.size)


def _initial_step(f, t0, y0, f0, rtol, atol, span):
    n = y0.size
    if n == 0:
        return span
    sc = atol + rtol * np.abs(y0)
    d0 = math.sqrt(float(np.sum((y0 / sc) ** 2)) / n)
    d1 = math.sqrt(float(np.sum((f0 / sc) ** 2)) / n)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = f(t0 + h0, y0 + h0 * f0)
    d2 = math.sqrt(float(np.sum(((f1 - f0) / sc) ** 2)) / n) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def dopri5(system, t0, y0, t_end, sample_times, rtol, atol, h0=0.0, h_min=0.0,
           max_steps=10_000_000, dense=False):
    """Dormand-Prince 5(4) with dense output; see ``_kernels.dopri5``."""
    f = _rhs(system)
    y = np.array(y0, dtype=float).ravel()
    n = y.size
    if hasattr(system, "n_state") and (system.n_state != n or system.n_out != n):
        raise ValueError("program does not match state dimension")
    ts = np.asarray(sample_times, dtype=float).ravel()
    nsamp = ts.size
    samples = np.empty((nsamp, n))
    span = t_end - t0
    if span < 0:
        raise ValueError("t_end must not precede t0")
    for i in range(nsamp):
        if (ts[i] < t0 - 1e-12 * max(1.0, abs(t0))
                or ts[i] > t_end + 1e-12 * max(1.0, abs(t_end))):
            raise ValueError("sample time outside integration interval")
        if i > 0 and ts[i] < ts[i - 1]:
            raise ValueError("sample times must be ascending")

    t = float(t0)
    k1 = f(t, y)
    if not (np.all(np.isfinite(k1)) and np.all(np.isfinite(y))):
        raise NonFiniteState(f"non-finite state or derivative at t={t:.6g}", t=t, h=None)
    si = 0
    while si < nsamp and ts[si] <= t0:
        samples[si] = y
        si += 1
    dense_rows = []
    nacc = nrej = 0
    facmax = 10.0
    h_keep = 0.0
    if span == 0:
        h = 0.0
        last = True
    else:
        h = min(h0, span) if h0 > 0 else _initial_step(f, t, y, k1, rtol, atol, span)
        last = False

    while not last:
        hmin_eff = max(h_min, 16 * _EPS * max(abs(t), 1e-300))
        if h < hmin_eff:
            raise StepUnderflow(f"step size {h:.3g} below minimum at t={t:.6g}", t=t, h=h)
        if nacc + nrej >= max_steps:
            raise IntegrationError(f"step budget of {max_steps} exhausted at t={t:.6g}", t=t, h=h)
        clipped = False
        if t + h >= t_end or t + 1.0000001 * h >= t_end:
            h_keep = h
            h = t_end - t
            clipped = True
        k2 = f(t + C2 * h, y + h * A21 * k1)
        k3 = f(t + C3 * h, y + h * (A31 * k1 + A32 * k2))
        k4 = f(t + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = f(t + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        k6 = f(t + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
        ynew = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6)
        k7 = f(t + h, ynew)
        yerr = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        err = _err_norm(yerr, y, ynew, rtol, atol)
        if not (math.isfinite(err) and np.all(np.isfinite(k7)) and np.all(np.isfinite(ynew))):
            nrej += 1
            h *= 0.2
            facmax = 1.0
            continue
        if err > 1.0:
            nrej += 1
            h *= max(0.2, 0.9 * err ** -0.2)
            facmax = 1.0
            continue
        nacc += 1
        fac = 10.0 if err == 0.0 else 0.9 * err ** -0.2
        hnew = h * min(facmax, max(0.2, fac))
        facmax = 10.0
        ydiff = ynew - y
        r3 = h * k1 - ydiff
        r4 = ydiff - h * k7 - r3
        r5 = h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7)
        if dense:
            dense_rows.append((t, h, np.stack([y, ydiff, r3, r4, r5])))
        while si < nsamp and (clipped or ts[si] <= t + h):
            if ts[si] >= t + h or (clipped and ts[si] >= t_end):
                samples[si] = ynew
            else:
                th = (ts[si] - t) / h
                th1 = 1.0 - th
                samples[si] = y + th * (ydiff + th1 * (r3 + th * (r4 + th1 * r5)))
            si += 1
        y = ynew
        k1 = k7
        if clipped:
            t = float(t_end)
            last = True
            hnew = max(hnew, h_keep)
        else:
            t = t + h
        h = hnew

    dense_data = None
    if dense:
        if dense_rows:
            dense_data = (np.array([r[0] for r in dense_rows]),
                          np.array([r[1] for r in dense_rows]),
                          np.array([r[2] for r in dense_rows]))
        else:
            dense_data = (np.empty(0), np.empty(0), np.empty((0, 5, n)))
    return samples, y.copy(), h, nacc, nrej, dense_data


def eval_program(prog, t_values, states):
    """Evaluate ``prog`` (Program or callable) row-wise; returns ``(K, n_out)``."""
    t_values = np.asarray(t_values, dtype=float).ravel()
    states = np.asarray(states, dtype=float).reshape(t_values.size, -1)
    pyfunc = getattr(prog, "pyfunc", None) or prog
    rows = [pyfunc(float(t), s) for t, s in zip(t_values.tolist(), states.tolist())]
    nout = getattr(prog, "n_out", None)
    if nout is None:
        nout = len(rows[0]) if rows else 0
    return np.array(rows, dtype=float).reshape(t_values.size, nout)
