# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: bytecode interpreter and Dormand-Prince 5(4) integrator.

Mirrors ``_pykernels`` exactly in algorithm; only the right-hand side
evaluation differs (bytecode here, generated Python there).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport (sin, cos, tan, tanh, exp, log, sqrt, fabs, pow,
                        isfinite, isnan, NAN, INFINITY, copysign, fmax, fmin)
from libc.stdlib cimport realloc, free

from .errors import NonFiniteState, StepUnderflow, IntegrationError

cnp.import_array()

cdef enum:
    OP_CONST = 0
    OP_LOAD = 1
    OP_NEG = 2
    OP_ADD = 3
    OP_SUB = 4
    OP_MUL = 5
    OP_DIV = 6
    OP_POW = 7
    OP_CALL1 = 8
    OP_CALL2 = 9
    OP_STORE = 10
    OP_OUT = 11
    STACK_SIZE = 64

cdef enum:
    ST_OK = 0
    ST_UNDERFLOW = 1
    ST_NONFINITE = 2
    ST_MAXSTEPS = 3
    ST_NOMEM = 4

# Dormand-Prince 5(4) tableau
cdef double C2 = 1.0 / 5.0, C3 = 3.0 / 10.0, C4 = 4.0 / 5.0, C5 = 8.0 / 9.0
cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0
cdef double A53 = 64448.0 / 6561.0, A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0, A63 = 46732.0 / 5247.0
cdef double A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0
cdef double A71 = 35.0 / 384.0, A73 = 500.0 / 1113.0, A74 = 125.0 / 192.0
cdef double A75 = -2187.0 / 6784.0, A76 = 11.0 / 84.0
cdef double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0
cdef double E5 = -17253.0 / 339200.0, E6 = 22.0 / 525.0, E7 = -1.0 / 40.0
cdef double D1 = -12715105075.0 / 11282082432.0, D3 = 87487479700.0 / 32700410799.0
cdef double D4 = -10690763975.0 / 1880347072.0, D5 = 701980252875.0 / 199316789632.0
cdef double D6 = -1453857185.0 / 822651844.0, D7 = 69997945.0 / 29380423.0


cdef inline double _sign(double x) noexcept nogil:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    if x == 0.0:
        return 0.0
    return NAN


cdef inline double _min(double a, double b) noexcept nogil:
    if isnan(a) or isnan(b):
        return NAN
    return a if a <= b else b


cdef inline double _max(double a, double b) noexcept nogil:
    if isnan(a) or isnan(b):
        return NAN
    return a if a >= b else b


cdef inline double _ln(double x) noexcept nogil:
    if x > 0.0:
        return log(x)
    if x == 0.0:
        return -INFINITY
    return NAN


cdef inline double _sqrt(double x) noexcept nogil:
    if x >= 0.0:
        return sqrt(x)
    return NAN


cdef inline double _div(double a, double b) noexcept nogil:
    if b == 0.0:
        if isnan(a) or a == 0.0:
            return NAN
        if (a < 0.0) != (copysign(1.0, b) < 0.0):
            return -INFINITY
        return INFINITY
    return a / b


cdef void run_program(const int* code, Py_ssize_t ncode, const double* consts,
                      double* var, double* out) noexcept nogil:
    cdef double stack[STACK_SIZE]
    cdef int sp = 0
    cdef Py_ssize_t pc = 0
    cdef int op, arg
    cdef double a, b
    while pc < ncode:
        op = code[pc]
        arg = code[pc + 1]
        pc += 2
        if op == OP_CONST:
            stack[sp] = consts[arg]
            sp += 1
        elif op == OP_LOAD:
            stack[sp] = var[arg]
            sp += 1
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_DIV:
            sp -= 1
            stack[sp - 1] = _div(stack[sp - 1], stack[sp])
        elif op == OP_POW:
            sp -= 1
            stack[sp - 1] = pow(stack[sp - 1], stack[sp])
        elif op == OP_CALL1:
            a = stack[sp - 1]
            if arg == 0:
                a = sin(a)
            elif arg == 1:
                a = cos(a)
            elif arg == 2:
                a = tan(a)
            elif arg == 3:
                a = tanh(a)
            elif arg == 4:
                a = exp(a)
            elif arg == 5:
                a = _ln(a)
            elif arg == 6:
                a = _sqrt(a)
            elif arg == 7:
                a = fabs(a)
            else:
                a = _sign(a)
            stack[sp - 1] = a
        elif op == OP_CALL2:
            sp -= 1
            a = stack[sp - 1]
            b = stack[sp]
            if arg == 0:
                a = _min(a, b)
            elif arg == 1:
                a = _max(a, b)
            else:
                a = pow(a, b)
            stack[sp - 1] = a
        elif op == OP_STORE:
            sp -= 1
            var[arg] = stack[sp]
        else:
            sp -= 1
            out[arg] = stack[sp]


cdef struct Rhs:
    const int* code
    Py_ssize_t ncode
    const double* consts
    double* var
    Py_ssize_t n


cdef inline void rhs_eval(Rhs* f, double t, const double* y, double* dy) noexcept nogil:
    cdef Py_ssize_t i
    f.var[0] = t
    for i in range(f.n):
        f.var[1 + i] = y[i]
    run_program(f.code, f.ncode, f.consts, f.var, dy)


cdef double err_norm(const double* e, const double* y0, const double* y1,
                     Py_ssize_t n, double rtol, double atol) noexcept nogil:
    cdef double acc = 0.0, sc, r
    cdef Py_ssize_t i
    for i in range(n):
        sc = atol + rtol * fmax(fabs(y0[i]), fabs(y1[i]))
        r = e[i] / sc
        acc += r * r
    if n == 0:
        return 0.0
    return sqrt(acc / n)


cdef double initial_step(Rhs* f, double t0, const double* y0, const double* f0,
                         double* y1, double* f1, Py_ssize_t n, double rtol,
                         double atol, double direction_span) noexcept nogil:
    # Hairer, Norsett & Wanner, Solving ODEs I, II.4
    cdef double d0 = 0.0, d1 = 0.0, d2 = 0.0, sc, h0, h1
    cdef Py_ssize_t i
    if n == 0:
        return direction_span
    for i in range(n):
        sc = atol + rtol * fabs(y0[i])
        d0 += (y0[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = sqrt(d0 / n)
    d1 = sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = fmin(h0, direction_span)
    for i in range(n):
        y1[i] = y0[i] + h0 * f0[i]
    rhs_eval(f, t0 + h0, y1, f1)
    for i in range(n):
        sc = atol + rtol * fabs(y0[i])
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = sqrt(d2 / n) / h0
    if fmax(d1, d2) <= 1e-15:
        h1 = fmax(1e-6, h0 * 1e-3)
    else:
        h1 = pow(0.01 / fmax(d1, d2), 1.0 / 5.0)
    return fmin(fmin(100.0 * h0, h1), direction_span)


def dopri5(prog, double t0, y0, double t_end, sample_times, double rtol,
           double atol, double h0=0.0, double h_min=0.0, long max_steps=10000000,
           bint dense=False):
    """Integrate ``y' = prog(t, y)`` from ``t0`` to ``t_end``.

    Returns ``(samples, y_end, h_next, n_accepted, n_rejected, dense_data)``.
    ``samples[k]`` is the state at ``sample_times[k]`` (ascending, inside
    ``[t0, t_end]``). ``dense_data`` is ``(t_old, h, coeffs)`` when ``dense``.
    """
    cdef cnp.ndarray[int, ndim=1, mode="c"] code = np.ascontiguousarray(prog.code, dtype=np.int32)
    cdef cnp.ndarray[double, ndim=1, mode="c"] consts = np.ascontiguousarray(prog.consts, dtype=np.float64)
    if consts.shape[0] == 0:
        consts = np.zeros(1)
    cdef cnp.ndarray[double, ndim=1, mode="c"] y = np.array(y0, dtype=np.float64, copy=True).ravel()
    cdef Py_ssize_t n = y.shape[0]
    if n != prog.n_state or prog.n_out != n:
        raise ValueError("program does not match state dimension")
    cdef cnp.ndarray[double, ndim=1, mode="c"] ts = np.ascontiguousarray(sample_times, dtype=np.float64)
    cdef Py_ssize_t nsamp = ts.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] samples = np.empty((nsamp, n))
    cdef cnp.ndarray[double, ndim=1, mode="c"] var = np.zeros(prog.n_vars)
    cdef cnp.ndarray[double, ndim=2, mode="c"] work = np.zeros((14, max(n, 1)))
    cdef Rhs f
    f.code = &code[0] if code.shape[0] > 0 else NULL
    f.ncode = code.shape[0]
    f.consts = &consts[0]
    f.var = &var[0]
    f.n = n

    cdef double* yy = &y[0] if n > 0 else &work[13, 0]
    cdef double* k1 = &work[0, 0]
    cdef double* k2 = &work[1, 0]
    cdef double* k3 = &work[2, 0]
    cdef double* k4 = &work[3, 0]
    cdef double* k5 = &work[4, 0]
    cdef double* k6 = &work[5, 0]
    cdef double* k7 = &work[6, 0]
    cdef double* ytmp = &work[7, 0]
    cdef double* ynew = &work[8, 0]
    cdef double* yerr = &work[9, 0]
    cdef double* r3 = &work[10, 0]
    cdef double* r4 = &work[11, 0]
    cdef double* r5 = &work[12, 0]

    cdef double* dbuf = NULL
    cdef Py_ssize_t dsize = 0, dcap = 0, dwidth = 2 + 5 * n
    cdef double* tmpbuf

    cdef double t = t0, h, hnew, err, fac, facmax = 10.0, theta, theta1
    cdef double span = t_end - t0, h_keep = 0.0
    cdef double hmin_eff
    cdef long nacc = 0, nrej = 0
    cdef Py_ssize_t i, si = 0
    cdef int status = ST_OK
    cdef bint last = False, clipped, ok
    cdef double ydiff, bspl

    if span < 0.0:
        raise ValueError("t_end must not precede t0")
    for i in range(nsamp):
        if ts[i] < t0 - 1e-12 * fmax(1.0, fabs(t0)) or ts[i] > t_end + 1e-12 * fmax(1.0, fabs(t_end)):
            raise ValueError("sample time outside integration interval")
        if i > 0 and ts[i] < ts[i - 1]:
            raise ValueError("sample times must be ascending")

    with nogil:
        rhs_eval(&f, t, yy, k1)
        ok = True
        for i in range(n):
            if not isfinite(k1[i]) or not isfinite(yy[i]):
                ok = False
        if not ok:
            status = ST_NONFINITE
        # samples at t0
        while status == ST_OK and si < nsamp and ts[si] <= t0:
            for i in range(n):
                samples[si, i] = yy[i]
            si += 1
        if status == ST_OK and span == 0.0:
            last = True
            h = 0.0
        elif status == ST_OK:
            if h0 > 0.0:
                h = fmin(h0, span)
            else:
                h = initial_step(&f, t, yy, k1, ytmp, k2, n, rtol, atol, span)
        while status == ST_OK and not last:
            hmin_eff = fmax(h_min, 16.0 * 2.220446049250313e-16 * fmax(fabs(t), 1e-300))
            if h < hmin_eff:
                status = ST_UNDERFLOW
                break
            if nacc + nrej >= max_steps:
                status = ST_MAXSTEPS
                break
            clipped = False
            if t + h >= t_end or t + 1.0000001 * h >= t_end:
                h_keep = h
                h = t_end - t
                clipped = True
            for i in range(n):
                ytmp[i] = yy[i] + h * A21 * k1[i]
            rhs_eval(&f, t + C2 * h, ytmp, k2)
            for i in range(n):
                ytmp[i] = yy[i] + h * (A31 * k1[i] + A32 * k2[i])
            rhs_eval(&f, t + C3 * h, ytmp, k3)
            for i in range(n):
                ytmp[i] = yy[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            rhs_eval(&f, t + C4 * h, ytmp, k4)
            for i in range(n):
                ytmp[i] = yy[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            rhs_eval(&f, t + C5 * h, ytmp, k5)
            for i in range(n):
                ytmp[i] = yy[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
            rhs_eval(&f, t + h, ytmp, k6)
            for i in range(n):
                ynew[i] = yy[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
            rhs_eval(&f, t + h, ynew, k7)
            for i in range(n):
                yerr[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            err = err_norm(yerr, yy, ynew, n, rtol, atol)
            ok = isfinite(err)
            if ok:
                for i in range(n):
                    if not isfinite(k7[i]) or not isfinite(ynew[i]):
                        ok = False
            if not ok:
                # treat as a failed step; shrink hard
                nrej += 1
                h = 0.2 * h
                facmax = 1.0
                continue
            if err <= 1.0:
                nacc += 1
                if err == 0.0:
                    fac = 10.0
                else:
                    fac = 0.9 * pow(err, -0.2)
                fac = fmin(facmax, fmax(0.2, fac))
                hnew = h * fac
                facmax = 10.0
                # dense output coefficients
                for i in range(n):
                    ydiff = ynew[i] - yy[i]
                    bspl = h * k1[i] - ydiff
                    r3[i] = bspl
                    r4[i] = ydiff - h * k7[i] - bspl
                    r5[i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                if dense:
                    if dsize == dcap:
                        dcap = 64 if dcap == 0 else 2 * dcap
                        tmpbuf = <double*> realloc(dbuf, dcap * dwidth * sizeof(double))
                        if tmpbuf == NULL:
                            status = ST_NOMEM
                            break
                        dbuf = tmpbuf
                    dbuf[dsize * dwidth] = t
                    dbuf[dsize * dwidth + 1] = h
                    for i in range(n):
                        dbuf[dsize * dwidth + 2 + i] = yy[i]
                        dbuf[dsize * dwidth + 2 + n + i] = ynew[i] - yy[i]
                        dbuf[dsize * dwidth + 2 + 2 * n + i] = r3[i]
                        dbuf[dsize * dwidth + 2 + 3 * n + i] = r4[i]
                        dbuf[dsize * dwidth + 2 + 4 * n + i] = r5[i]
                    dsize += 1
                # samples strictly inside (t, t + h]
                while si < nsamp and (clipped or ts[si] <= t + h):
                    if ts[si] >= t + h or (clipped and ts[si] >= t_end):
                        for i in range(n):
                            samples[si, i] = ynew[i]
                    else:
                        theta = (ts[si] - t) / h
                        theta1 = 1.0 - theta
                        for i in range(n):
                            ydiff = ynew[i] - yy[i]
                            samples[si, i] = yy[i] + theta * (ydiff + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])))
                    si += 1
                for i in range(n):
                    yy[i] = ynew[i]
                    k1[i] = k7[i]
                if clipped:
                    t = t_end
                    last = True
                    hnew = fmax(hnew, h_keep)
                else:
                    t = t + h
                h = hnew
            else:
                nrej += 1
                fac = fmax(0.2, 0.9 * pow(err, -0.2))
                h = h * fac
                facmax = 1.0

    dense_data = None
    if dense and status == ST_OK:
        arr = np.empty((dsize, dwidth))
        for i in range(dsize * dwidth):
            arr.flat[i] = dbuf[i]
        dense_data = (arr[:, 0].copy(), arr[:, 1].copy(),
                      arr[:, 2:].reshape(dsize, 5, n).copy())
    if dbuf != NULL:
        free(dbuf)
    if status == ST_UNDERFLOW:
        raise StepUnderflow(f"step size {h:.3g} below minimum at t={t:.6g}", t=t, h=h)
    if status == ST_NONFINITE:
        raise NonFiniteState(f"non-finite state or derivative at t={t:.6g}", t=t, h=h)
    if status == ST_MAXSTEPS:
        raise IntegrationError(f"step budget of {max_steps} exhausted at t={t:.6g}", t=t, h=h)
    if status == ST_NOMEM:
        raise MemoryError("dense output buffer")
    return samples, y.copy(), h, nacc, nrej, dense_data


def eval_program(prog, t_values, states):
    """Evaluate ``prog`` at each row of ``states``; returns ``(K, n_out)``."""
    cdef cnp.ndarray[int, ndim=1, mode="c"] code = np.ascontiguousarray(prog.code, dtype=np.int32)
    cdef cnp.ndarray[double, ndim=1, mode="c"] consts = np.ascontiguousarray(prog.consts, dtype=np.float64)
    if consts.shape[0] == 0:
        consts = np.zeros(1)
    cdef cnp.ndarray[double, ndim=2, mode="c"] S = np.ascontiguousarray(states, dtype=np.float64).reshape(len(t_values), prog.n_state)
    cdef cnp.ndarray[double, ndim=1, mode="c"] T = np.ascontiguousarray(t_values, dtype=np.float64)
    cdef Py_ssize_t K = T.shape[0], n = prog.n_state, nout = prog.n_out
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((K, max(nout, 1)))
    cdef cnp.ndarray[double, ndim=1, mode="c"] var = np.zeros(prog.n_vars)
    cdef Py_ssize_t k, i
    cdef const int* cp = &code[0] if code.shape[0] > 0 else NULL
    with nogil:
        for k in range(K):
            var[0] = T[k]
            for i in range(n):
                var[1 + i] = S[k, i]
            run_program(cp, code.shape[0], &consts[0], &var[0], &out[k, 0])
    return out[:, :nout]
