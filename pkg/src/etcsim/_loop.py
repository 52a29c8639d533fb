"""Pure-Python RK4 + event loop (reference backend).

Works for any :class:`~etcsim.dynamics.ControlledSystem` and any gain.
The compiled backend in ``_native.pyx`` follows exactly the same steps for
the built-in systems.
"""

from __future__ import annotations

import math

import numpy as np

STATUS_OK = 0
STATUS_NONFINITE = 1
STATUS_BOUND = 2
STATUS_DUAL_R = 3


def run_loop(sys, gamma_bar, x0, step, horizon, loc_tol, record_every=1,
             dual_r_factor=10.0, dual_r_abort=1e-6, divergence_limit=1e6):
    f, g, jac = sys.f, sys.g, sys.grad_g
    gb = gamma_bar.scalar

    def rhs(x, u):
        fx = np.asarray(f(x, u), dtype=float)
        return fx, np.atleast_2d(jac(x)) @ fx

    def rk4(x, cx, r, cr, u, h):
        # the state updates use compensated summation: (value, lost low-order bits)
        k1x, k1r = rhs(x, u)
        r2 = r + 0.5 * h * k1r
        k2x, k2r = rhs(x + 0.5 * h * k1x, u)
        r3 = r + 0.5 * h * k2r
        k3x, k3r = rhs(x + 0.5 * h * k2x, u)
        r4 = r + h * k3r
        k4x, k4r = rhs(x + h * k3x, u)
        xn, cxn = _compensated_add(x, cx, (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x))
        rn, crn = _compensated_add(r, cr, (h / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r))
        sup = max(_norm(r2), _norm(r3), _norm(r4), _norm(rn))
        return xn, cxn, rn, crn, sup

    x = np.array(x0, dtype=float)
    t = 0.0
    t_k = 0.0
    u = np.asarray(g(x), dtype=float).copy()
    g_k = u.copy()
    r = np.zeros(sys.m)
    cx = np.zeros(sys.n)
    cr = np.zeros(sys.m)
    R = 0.0

    rows_t, rows_x, rows_u, rows_rn, rows_R, rows_ev = [], [], [], [], [], []

    def record(ev):
        rows_t.append(t)
        rows_x.append(x.copy())
        rows_u.append(u.copy())
        rows_rn.append(_norm(r))
        rows_R.append(R)
        rows_ev.append(ev)

    ev_t, ev_dt, ev_R = [], [], []
    steps = 0
    dual_max = 0.0
    dual_ratio = 0.0
    dual_viol = 0
    dual_checks = 0
    h_max = -math.inf
    status = STATUS_OK
    bound = dual_r_factor * step ** 4
    end_eps = 1e-12 * max(1.0, horizon)

    record(0)
    last_recorded = True
    while horizon - t > end_eps:
        h = min(step, horizon - t)
        xn, cxn, rn, crn, sup = rk4(x, cx, r, cr, u, h)
        Rn = max(R, sup)
        event = Rn > 0.0 and (t + h - t_k) * gb(Rn) - Rn >= 0.0
        if event:
            lo, hi = 0.0, h
            while hi - lo > loc_tol:
                mid = 0.5 * (lo + hi)
                sm = rk4(x, cx, r, cr, u, mid)[4]
                Rm = max(R, sm)
                if Rm > 0.0 and (t + mid - t_k) * gb(Rm) - Rm >= 0.0:
                    hi = mid
                else:
                    lo = mid
            if hi < h:
                xn, cxn, rn, crn, sup = rk4(x, cx, r, cr, u, hi)
                Rn = max(R, sup)
            t = t + hi
        else:
            t = t + h
        x, cx, r, cr, R = xn, cxn, rn, crn, Rn

        nx = _norm(x)
        if not np.all(np.isfinite(x)):
            status = STATUS_NONFINITE
            break
        if nx > divergence_limit:
            status = STATUS_BOUND
            break
        d = _norm(r - (np.asarray(g(x), dtype=float) - g_k))
        dual_checks += 1
        dual_max = max(dual_max, d)
        ratio = d / (bound * (1.0 + nx))
        dual_ratio = max(dual_ratio, ratio)
        if ratio > 1.0:
            dual_viol += 1
        if d > dual_r_abort * (1.0 + nx):
            status = STATUS_DUAL_R
            break

        if event:
            ev_t.append(t)
            ev_dt.append(t - t_k)
            ev_R.append(R)
            record(1)
            t_k = t
            u = np.asarray(g(x), dtype=float).copy()
            g_k = u.copy()
            r = np.zeros(sys.m)
            cr = np.zeros(sys.m)
            R = 0.0
            last_recorded = True
        else:
            steps += 1
            if R > 0.0:
                h_max = max(h_max, (t - t_k) * gb(R) - R)
            last_recorded = steps % record_every == 0
            if last_recorded:
                record(0)
    if not last_recorded or status != STATUS_OK:
        record(0)

    return {
        "t": np.array(rows_t),
        "x": np.array(rows_x).reshape(len(rows_t), sys.n),
        "u": np.array(rows_u).reshape(len(rows_t), sys.m),
        "r_norm": np.array(rows_rn),
        "R": np.array(rows_R),
        "event": np.array(rows_ev, dtype=np.int8),
        "ev_t": np.array(ev_t),
        "ev_interval": np.array(ev_dt),
        "ev_R": np.array(ev_R),
        "steps": steps,
        "status": status,
        "t_end": t,
        "dual_r_max": dual_max,
        "dual_r_ratio": dual_ratio,
        "dual_r_violations": dual_viol,
        "dual_r_checks": dual_checks,
        "h_max": h_max,
    }


def _compensated_add(s, c, inc):
    """Kahan update of ``s + inc``; ``c`` carries the rounding error."""
    y = inc - c
    t = s + y
    return t, (t - s) - y


def _norm(v) -> float:
    return math.sqrt(float(np.dot(v, v)))
