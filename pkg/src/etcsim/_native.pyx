# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled RK4 + event loop for the built-in systems.

Same algorithm as ``_loop.run_loop``; the plant is chosen by an integer
code and gamma_bar is passed as a matrix of polynomial pieces
(row i holds the coefficients of s, s^2, ... of piece i; the gain is the
row-wise maximum).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite, INFINITY

cnp.import_array()

cdef enum:
    NMAX = 8

cdef enum:
    SCALAR_DEMO = 1
    BENCHMARK = 2
    INTERCONNECTED_DEMO = 3


cdef struct Plant:
    int kind
    int n
    double p0
    double p1


cdef inline double horner_max(const double[:, ::1] P, double s) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double best = 0.0, val
    if s == 0.0:
        return 0.0
    for i in range(P.shape[0]):
        val = 0.0
        for j in range(P.shape[1] - 1, -1, -1):
            val = (val + P[i, j]) * s
        if i == 0 or val > best:
            best = val
    return best


cdef inline double feedback(Plant* pl, double* x) noexcept nogil:
    cdef double y
    if pl.kind == SCALAR_DEMO:
        return -pl.p0 * x[0]
    if pl.kind == BENCHMARK:
        y = x[3] + 2.5 * x[1]
        return -(0.3 * y * y + 5.0) * y
    return -pl.p1 * x[1]


cdef inline void rhs(Plant* pl, double* x, double u, double* fx, double* xi) noexcept nogil:
    # fx = f(x, u); xi = grad_g(x) . fx
    cdef double y, d
    if pl.kind == SCALAR_DEMO:
        fx[0] = u
        xi[0] = (-pl.p0) * fx[0]
    elif pl.kind == BENCHMARK:
        fx[0] = -(x[0] * x[0] * x[0])
        fx[1] = pl.p0 * x[0] + x[3]
        fx[2] = -x[2] + x[1]
        fx[3] = -pl.p1 * x[1] * x[3] + x[1] + 3.0 * u
        y = x[3] + 2.5 * x[1]
        d = -(0.9 * y * y + 5.0)
        xi[0] = 0.0 * fx[0] + (2.5 * d) * fx[1] + 0.0 * fx[2] + d * fx[3]
    else:
        fx[0] = -x[0] + x[1]
        fx[1] = pl.p0 * x[0] + u
        xi[0] = 0.0 * fx[0] + (-pl.p1) * fx[1]


cdef double rk4(Plant* pl, double* x, double* cx, double r, double cr, double u, double h,
                double* xn, double* cxn, double* rn, double* crn) noexcept nogil:
    """One RK4 step of (x, r); returns the largest |r| over stages and endpoint.

    The state updates are Kahan-compensated; cx and cr hold the lost bits.
    """
    cdef double k1[NMAX]
    cdef double k2[NMAX]
    cdef double k3[NMAX]
    cdef double k4[NMAX]
    cdef double tmp[NMAX]
    cdef double q1, q2, q3, q4, r2, r3, r4, sup, y, s
    cdef int i, n = pl.n
    rhs(pl, x, u, k1, &q1)
    r2 = r + 0.5 * h * q1
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k1[i]
    rhs(pl, tmp, u, k2, &q2)
    r3 = r + 0.5 * h * q2
    for i in range(n):
        tmp[i] = x[i] + 0.5 * h * k2[i]
    rhs(pl, tmp, u, k3, &q3)
    r4 = r + h * q3
    for i in range(n):
        tmp[i] = x[i] + h * k3[i]
    rhs(pl, tmp, u, k4, &q4)
    for i in range(n):
        y = (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) - cx[i]
        s = x[i] + y
        cxn[i] = (s - x[i]) - y
        xn[i] = s
    y = (h / 6.0) * (q1 + 2.0 * q2 + 2.0 * q3 + q4) - cr
    s = r + y
    crn[0] = (s - r) - y
    rn[0] = s
    sup = sqrt(r2 * r2)
    if sqrt(r3 * r3) > sup:
        sup = sqrt(r3 * r3)
    if sqrt(r4 * r4) > sup:
        sup = sqrt(r4 * r4)
    if sqrt(rn[0] * rn[0]) > sup:
        sup = sqrt(rn[0] * rn[0])
    return sup


cdef inline double vnorm(double* x, int n) noexcept nogil:
    cdef double acc = 0.0
    cdef int i
    for i in range(n):
        acc += x[i] * x[i]
    return sqrt(acc)


def run_native(int kind, double[::1] params, double[:, ::1] pieces, double[::1] x0,
               double step, double horizon, double loc_tol, long record_every=1,
               double dual_r_factor=10.0, double dual_r_abort=1e-6,
               double divergence_limit=1e6):
    cdef Plant pl
    pl.kind = kind
    pl.n = x0.shape[0]
    pl.p0 = params[0]
    pl.p1 = params[1] if params.shape[0] > 1 else 0.0
    if pl.n > NMAX:
        raise ValueError("state too large for the native kernel")

    cdef double x[NMAX]
    cdef double xn[NMAX]
    cdef double cx[NMAX]
    cdef double cxn[NMAX]
    cdef double cr = 0.0, crn = 0.0, crm
    cdef double r = 0.0, rn = 0.0, R = 0.0, Rn, Rm, rm, sup, sm
    cdef double t = 0.0, t_k = 0.0, h, lo, hi, mid, u, g_k, nx, d, ratio
    cdef double bound = dual_r_factor * step * step * step * step
    cdef double end_eps = 1e-12 * (horizon if horizon > 1.0 else 1.0)
    cdef double dual_max = 0.0, dual_ratio = 0.0, h_max = -INFINITY, hv
    cdef long steps = 0, dual_viol = 0, dual_checks = 0
    cdef int status = 0, i, n = pl.n
    cdef bint event, last_recorded

    for i in range(n):
        x[i] = x0[i]
        cx[i] = 0.0
    u = feedback(&pl, x)
    g_k = u

    rows = []
    ev = []

    rows.append((t, [x[i] for i in range(n)], u, sqrt(r * r), R, 0))
    last_recorded = True
    while horizon - t > end_eps:
        h = step if step < horizon - t else horizon - t
        sup = rk4(&pl, x, cx, r, cr, u, h, xn, cxn, &rn, &crn)
        Rn = R if R > sup else sup
        event = Rn > 0.0 and (t + h - t_k) * horner_max(pieces, Rn) - Rn >= 0.0
        if event:
            lo = 0.0
            hi = h
            with nogil:
                while hi - lo > loc_tol:
                    mid = 0.5 * (lo + hi)
                    sm = rk4(&pl, x, cx, r, cr, u, mid, xn, cxn, &rm, &crm)
                    Rm = R if R > sm else sm
                    if Rm > 0.0 and (t + mid - t_k) * horner_max(pieces, Rm) - Rm >= 0.0:
                        hi = mid
                    else:
                        lo = mid
            # always re-take the accepted substep (xn was overwritten above)
            sup = rk4(&pl, x, cx, r, cr, u, hi, xn, cxn, &rn, &crn)
            Rn = R if R > sup else sup
            t = t + hi
        else:
            t = t + h
        for i in range(n):
            x[i] = xn[i]
            cx[i] = cxn[i]
        r = rn
        cr = crn
        R = Rn

        nx = vnorm(x, n)
        for i in range(n):
            if not isfinite(x[i]):
                status = 1
                break
        if status:
            break
        if nx > divergence_limit:
            status = 2
            break
        d = r - (feedback(&pl, x) - g_k)
        d = sqrt(d * d)
        dual_checks += 1
        if d > dual_max:
            dual_max = d
        ratio = d / (bound * (1.0 + nx))
        if ratio > dual_ratio:
            dual_ratio = ratio
        if ratio > 1.0:
            dual_viol += 1
        if d > dual_r_abort * (1.0 + nx):
            status = 3
            break

        if event:
            ev.append((t, t - t_k, R))
            rows.append((t, [x[i] for i in range(n)], u, sqrt(r * r), R, 1))
            t_k = t
            u = feedback(&pl, x)
            g_k = u
            r = 0.0
            cr = 0.0
            R = 0.0
            last_recorded = True
        else:
            steps += 1
            if R > 0.0:
                hv = (t - t_k) * horner_max(pieces, R) - R
                if hv > h_max:
                    h_max = hv
            last_recorded = steps % record_every == 0
            if last_recorded:
                rows.append((t, [x[i] for i in range(n)], u, sqrt(r * r), R, 0))
    if not last_recorded or status != 0:
        rows.append((t, [x[i] for i in range(n)], u, sqrt(r * r), R, 0))

    nrow = len(rows)
    ev_arr = np.array(ev, dtype=float).reshape(len(ev), 3)
    return {
        "t": np.array([row[0] for row in rows]),
        "x": np.array([row[1] for row in rows], dtype=float).reshape(nrow, n),
        "u": np.array([row[2] for row in rows], dtype=float).reshape(nrow, 1),
        "r_norm": np.array([row[3] for row in rows]),
        "R": np.array([row[4] for row in rows]),
        "event": np.array([row[5] for row in rows], dtype=np.int8),
        "ev_t": ev_arr[:, 0].copy(),
        "ev_interval": ev_arr[:, 1].copy(),
        "ev_R": ev_arr[:, 2].copy(),
        "steps": steps,
        "status": status,
        "t_end": t,
        "dual_r_max": dual_max,
        "dual_r_ratio": dual_ratio,
        "dual_r_violations": dual_viol,
        "dual_r_checks": dual_checks,
        "h_max": h_max,
    }
