# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event-triggered loop for the Lur'e plant.

Mirrors ``engine.HybridLoop.run`` statement by statement with the plant,
certificate and class-K functions written out in closed form: linear or zero
``alpha1``/``alpha2`` and the constant, exponential, staircase and
enlargement schedules.
"""

import numpy as np

from libc.math cimport sqrt, pow, exp, log, lgamma, floor, ceil, fabs, isfinite, INFINITY

cdef enum:
    S_CONST = 0
    S_EXP = 1
    S_STAIR = 2
    S_ENLARGE = 3

cdef struct Params:
    double h_star
    double wc
    double mc1s
    double c2
    double lam
    double p
    int kbar
    double k1
    double k2
    double a1
    double a2
    int designed
    int phi3
    double lambda2
    double delta_bar
    double s_k
    int r_kind
    double r0
    double r_ratio
    int rh_kind
    double rh0
    double rh_ratio
    int sk
    double s_level
    double s_D
    double s_rate
    double s_nbar
    double s_dstar
    double s_T
    int s_after_zero
    double tau_hat
    double dwell
    int check5
    double a5
    double b5

cdef struct Ctx:
    double xh0
    double xh1
    double u
    int pinned
    double floor_now
    double piece


cdef inline double lure_H(double r, double hs) noexcept nogil:
    if fabs(r) <= hs:
        return 2.0 * r
    if r > 0:
        return r + hs
    return r - hs


cdef inline double powp(double x, double p) noexcept nogil:
    if p == 2.0:
        return x * x
    return pow(x, p)


cdef inline double stair(const Params* P, double n) noexcept nogil:
    return P.s_D * exp(n * log(P.s_rate) - lgamma(n + 1.0))


cdef inline double after_value(const Params* P) noexcept nogil:
    if P.s_after_zero:
        return 0.0
    return P.delta_bar


cdef inline double sched_value(const Params* P, double t) noexcept nogil:
    # continuous kinds only
    if P.sk == S_EXP:
        return P.s_D * exp(-P.s_rate * t)
    return P.s_level


cdef double sched_left(const Params* P, double t) noexcept nogil:
    cdef double n
    if P.sk == S_STAIR:
        n = ceil(t / P.s_nbar)
        if n * P.s_nbar < t:
            n += 1
        if n > 0 and (n - 1) * P.s_nbar >= t:
            n -= 1
        if n < 0:
            n = 0
        return stair(P, n)
    if P.sk == S_ENLARGE:
        if t <= P.s_T:
            return P.s_dstar
        return after_value(P)
    return sched_value(P, t)


cdef double sched_right(const Params* P, double t) noexcept nogil:
    cdef double n
    if P.sk == S_STAIR:
        n = floor(t / P.s_nbar) + 1
        if n * P.s_nbar <= t:
            n += 1
        if (n - 1) * P.s_nbar > t:
            n -= 1
        return stair(P, n)
    if P.sk == S_ENLARGE:
        if t < P.s_T:
            return P.s_dstar
        return after_value(P)
    return sched_value(P, t)


cdef double sched_next_jump(const Params* P, double t) noexcept nogil:
    cdef double j
    if P.sk == S_STAIR:
        j = floor(t / P.s_nbar) + 1
        if j * P.s_nbar <= t:
            j += 1
        return j * P.s_nbar
    if P.sk == S_ENLARGE:
        if P.s_T > t:
            return P.s_T
        return INFINITY
    return INFINITY


cdef inline double cfg_floor(const Params* P, double t) noexcept nogil:
    if not P.designed:
        return 0.0
    if P.sk == S_ENLARGE:
        if t < P.s_T:
            return P.s_dstar
        return after_value(P)
    return P.delta_bar


cdef inline double s_value(const Params* P, double t) noexcept nogil:
    cdef double f
    if not P.designed:
        return P.s_k
    f = cfg_floor(P, t)
    return P.s_k if P.s_k >= f else f


cdef inline double reset_r(const Params* P, long k) noexcept nogil:
    if P.r_kind == 1:
        return P.r0 * pow(P.r_ratio, <double>k)
    return 0.0


cdef inline double reset_r_hat(const Params* P, long k, double current) noexcept nogil:
    if P.rh_kind == 1:
        return P.rh0 * pow(P.rh_ratio, <double>k)
    if P.rh_kind == 2:
        return current
    return 0.0


cdef double varphi(const Params* P, double x1, double x2, double e1, double e2) noexcept nogil:
    cdef double nx = sqrt(x1 * x1 + x2 * x2)
    cdef double ne = sqrt(e1 * e1 + e2 * e2)
    cdef double out = P.mc1s * powp(nx, P.p) + P.c2 * powp(ne, P.p)
    cdef double du, g0, g1
    if P.phi3 == 0:
        if ne > 0:
            du = (-(x2 + e2)) - (-x2)
            out += P.lam * ((P.wc * (x1 + 2.0 * x2)) * du)
    elif P.phi3 == 1:
        g0 = P.wc * ((x1 + x2) + 2.0 * lure_H(x1, P.h_star))
        g1 = P.wc * (x1 + 2.0 * x2)
        out += P.lambda2 * P.lam * sqrt(g0 * g0 + g1 * g1) * ne
    return out


cdef inline double Phi(const Params* P, const Ctx* C, const double* y) noexcept nogil:
    cdef double vp = 0.0
    if P.kbar:
        vp = varphi(P, y[0], y[1], C.xh0 - y[0], C.xh1 - y[1])
    return P.kbar * vp - P.k1 * y[2] - P.k2 * y[3]


cdef inline void deriv(const Params* P, const Ctx* C, double t, const double* y, double d,
                       double* out) noexcept nogil:
    cdef double vp, phi2
    out[0] = y[1]
    out[1] = (-lure_H(y[0], P.h_star) + d) + C.u
    vp = varphi(P, y[0], y[1], C.xh0 - y[0], C.xh1 - y[1])
    if C.pinned:
        if P.sk == S_CONST or P.sk == S_EXP:
            phi2 = sched_value(P, t)
        else:
            phi2 = C.piece
        out[3] = 0.0
    else:
        phi2 = y[3]
        out[3] = -(P.a2 * phi2) + P.a2 * C.floor_now
    out[2] = (-(P.a1 * y[2]) + P.k2 * phi2) - vp


cdef void rk4(const Params* P, const Ctx* C, double t, const double* y, double dt, double d,
              double* y1) noexcept nogil:
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double tmp[4]
    cdef double h2 = dt / 2.0
    cdef double c6 = dt / 6.0
    cdef int i
    deriv(P, C, t, y, d, k1)
    for i in range(4):
        tmp[i] = y[i] + h2 * k1[i]
    deriv(P, C, t + h2, tmp, d, k2)
    for i in range(4):
        tmp[i] = y[i] + h2 * k2[i]
    deriv(P, C, t + h2, tmp, d, k3)
    for i in range(4):
        tmp[i] = y[i] + dt * k3[i]
    deriv(P, C, t + dt, tmp, d, k4)
    for i in range(4):
        y1[i] = y[i] + c6 * (((k1[i] + 2.0 * k2[i]) + 2.0 * k3[i]) + k4[i])
    if C.pinned:
        y1[3] = sched_left(P, t + dt)


cdef inline void set_context(const Params* P, Ctx* C, double t, double xh0, double xh1, int post) noexcept nogil:
    C.xh0 = xh0
    C.xh1 = xh1
    C.u = -xh1
    C.pinned = P.designed and post
    C.floor_now = cfg_floor(P, t)
    if C.pinned and not (P.sk == S_CONST or P.sk == S_EXP):
        C.piece = sched_right(P, t)


cdef inline bint crossed(double a, double b) noexcept nogil:
    return (a < 0.0 and b >= 0.0) or (a >= 0.0 and b > 0.0)


cdef struct Mon:
    double phi1_min
    double phi2_margin_min
    double pin_err_max
    long l5_intervals
    long l5_violations
    double l5_min_slack
    double int_z
    double int_d
    double int_xi
    double sum_r
    double sum_r_hat
    double int_delta
    double xi_max
    double resid_max


cdef struct Acc:
    double eps
    double xi
    double d


cdef inline void close_error_bound(const Params* P, Mon* M, Acc* L, double tol) noexcept nogil:
    cdef double slack
    if not P.check5:
        return
    M.l5_intervals += 1
    slack = P.a5 * L.xi + P.b5 * L.d - L.eps
    if slack < M.l5_min_slack:
        M.l5_min_slack = slack
    if slack + tol < 0.0:
        M.l5_violations += 1


cdef inline void accumulate(const Params* P, const Ctx* C, Mon* M, Acc* L, int pre, double ta,
                            const double* ya, double tb, const double* yb, double d) noexcept nogil:
    cdef double dt = tb - ta
    cdef double p = P.p
    cdef double nxa = sqrt(ya[0] * ya[0] + ya[1] * ya[1])
    cdef double nxb = sqrt(yb[0] * yb[0] + yb[1] * yb[1])
    cdef double za = powp(fabs(ya[0]), p)
    cdef double zb = powp(fabs(yb[0]), p)
    cdef double dp = powp(fabs(d), p)
    cdef double ea, eb, e0, e1, err
    M.int_z += 0.5 * (za + zb) * dt
    M.int_d += dp * dt
    M.int_xi += 0.5 * (powp(nxa, p) + powp(nxb, p)) * dt
    if pre:
        e0 = C.xh0 - ya[0]
        e1 = C.xh1 - ya[1]
        ea = powp(sqrt(e0 * e0 + e1 * e1), p)
        e0 = C.xh0 - yb[0]
        e1 = C.xh1 - yb[1]
        eb = powp(sqrt(e0 * e0 + e1 * e1), p)
        L.eps += 0.5 * (ea + eb) * dt
        L.xi += 0.5 * (powp(nxa, p) + powp(nxb, p)) * dt
        L.d += dp * dt
    if C.pinned:
        M.int_delta += 0.5 * (ya[3] + yb[3]) * dt
        err = fabs(yb[3] - sched_left(P, tb))
        if err > M.pin_err_max:
            M.pin_err_max = err
    else:
        if yb[3] - C.floor_now < M.phi2_margin_min:
            M.phi2_margin_min = yb[3] - C.floor_now
    if yb[2] < M.phi1_min:
        M.phi1_min = yb[2]
    if nxb > M.xi_max:
        M.xi_max = nxb


cdef inline void record(const Params* P, const Ctx* C, double[:, ::1] traj, long row, double t,
                        const double* y, double d) noexcept nogil:
    cdef double e0 = C.xh0 - y[0]
    cdef double e1 = C.xh1 - y[1]
    traj[row, 0] = t
    traj[row, 1] = y[0]
    traj[row, 2] = y[1]
    traj[row, 3] = C.u
    traj[row, 4] = sqrt(e0 * e0 + e1 * e1)
    traj[row, 5] = y[2]
    traj[row, 6] = y[3]
    traj[row, 7] = Phi(P, C, y)
    traj[row, 8] = d
    traj[row, 9] = y[0]


cdef inline double slot(const double[::1] dv, long hold, long cell) noexcept nogil:
    cdef long j = cell // hold
    if j < dv.shape[0]:
        return dv[j]
    return 0.0


cdef int simulate(const Params* P, double* y, double duration, double h, double event_tol,
                  double min_gap, long max_events, long stride, double l5_tol, double div_norm,
                  const double[::1] dv, long hold, double[::1] ev_t, double[::1] ev_x,
                  signed char[::1] ev_c, long* n_events, double[:, ::1] traj, long* n_rows,
                  Mon* M, double* t_out, int* aborted) noexcept nogil:
    cdef Ctx C
    cdef Acc L
    cdef double t = 0.0, t_k = 0.0, t_hat = P.tau_hat, gate = P.dwell
    cdef double xh0 = y[0], xh1 = y[1]
    cdef long cell = 0, k = 0, nev = 0, nrow = 0
    cdef int post = 0, gate_open, event, special, gate_now, grid_hit, i
    cdef double t_grid, tb, nj, d, phi_cur, phi_end, te, lo, hi, mid, vp, scale, r, gap, r_hat
    cdef double y1[4]
    cdef double ye[4]
    cdef double ym[4]
    cdef bint have_hi

    L.eps = 0.0
    L.xi = 0.0
    L.d = 0.0
    set_context(P, &C, t, xh0, xh1, post)
    phi_cur = Phi(P, &C, y)
    if y[2] < M.phi1_min:
        M.phi1_min = y[2]
    M.xi_max = sqrt(y[0] * y[0] + y[1] * y[1])
    if stride:
        record(P, &C, traj, nrow, t, y, slot(dv, hold, cell))
        nrow += 1
    aborted[0] = 0

    while t < duration and not aborted[0]:
        t_grid = (cell + 1) * h
        tb = t_grid if t_grid < duration else duration
        if not post and t_hat < tb:
            tb = t_hat
        if gate > t and gate < tb:
            tb = gate
        nj = sched_next_jump(P, t) if P.designed else INFINITY
        if nj < tb:
            tb = nj
        gate_open = not gate > t
        d = slot(dv, hold, cell)
        set_context(P, &C, t, xh0, xh1, post)
        rk4(P, &C, t, y, tb - t, d, y1)
        if not (isfinite(y1[0]) and isfinite(y1[1]) and isfinite(y1[2]) and isfinite(y1[3])
                and sqrt(y1[0] * y1[0] + y1[1] * y1[1]) <= div_norm):
            for i in range(4):
                y[i] = y1[i]
            t_out[0] = tb
            return -1
        phi_end = Phi(P, &C, y1)

        event = -1
        if gate_open and crossed(phi_cur, phi_end):
            if phi_end == 0.0 and phi_cur < 0.0:
                te = tb
                for i in range(4):
                    ye[i] = y1[i]
            else:
                lo = 0.0
                hi = tb - t
                have_hi = False
                while hi - lo > event_tol:
                    mid = 0.5 * (lo + hi)
                    rk4(P, &C, t, y, mid, d, ym)
                    if crossed(phi_cur, Phi(P, &C, ym)):
                        hi = mid
                        have_hi = True
                        for i in range(4):
                            ye[i] = ym[i]
                    else:
                        lo = mid
                if not have_hi:
                    rk4(P, &C, t, y, hi, d, ye)
                te = t + hi
            accumulate(P, &C, M, &L, not post, t, y, te, ye, d)
            t = te
            for i in range(4):
                y[i] = ye[i]
            vp = 0.0
            if P.kbar:
                vp = varphi(P, y[0], y[1], xh0 - y[0], xh1 - y[1])
            scale = fabs(P.kbar * vp) + P.k1 * y[2] + P.k2 * y[3] + 1.0
            r = fabs(Phi(P, &C, y)) / scale
            if r > M.resid_max:
                M.resid_max = r
            event = 0
            grid_hit = t == t_grid
        else:
            accumulate(P, &C, M, &L, not post, t, y, tb, y1, d)
            t = tb
            for i in range(4):
                y[i] = y1[i]
            grid_hit = t == t_grid
            special = 0
            gate_now = 0
            if not post and t >= t_hat:
                close_error_bound(P, M, &L, l5_tol)
                post = 1
                r_hat = reset_r_hat(P, k, y[2])
                y[2] = r_hat
                M.sum_r_hat += r_hat
                if P.designed:
                    y[3] = sched_right(P, t)
                special = 1
            if gate == t:
                gate_now = 1
                special = 1
            if t == nj:
                if P.designed and post:
                    y[3] = sched_right(P, t)
                special = 1
            if special:
                set_context(P, &C, t, xh0, xh1, post)
                phi_cur = Phi(P, &C, y)
                if not gate > t and (phi_cur > 0.0 or (phi_cur >= 0.0 and phi_end < 0.0)):
                    event = 1 if gate_now else 0
            else:
                phi_cur = phi_end

        if grid_hit:
            cell += 1
        if event >= 0:
            gap = t - t_k
            ev_t[nev] = t
            ev_x[nev] = sqrt(y[0] * y[0] + y[1] * y[1])
            ev_c[nev] = <signed char>event
            nev += 1
            if not post:
                close_error_bound(P, M, &L, l5_tol)
            L.eps = 0.0
            L.xi = 0.0
            L.d = 0.0
            k += 1
            xh0 = y[0]
            xh1 = y[1]
            r = reset_r(P, k)
            y[2] = r
            M.sum_r += r
            y[3] = s_value(P, t)
            post = 0
            t_k = t
            t_hat = t + P.tau_hat
            gate = t + P.dwell
            set_context(P, &C, t, xh0, xh1, post)
            phi_cur = Phi(P, &C, y)
            if y[2] < M.phi1_min:
                M.phi1_min = y[2]
            if gap < min_gap or nev >= max_events:
                aborted[0] = 1
        if grid_hit and stride and cell % stride == 0:
            record(P, &C, traj, nrow, t, y, slot(dv, hold, cell))
            nrow += 1

    if not post and t > t_k and not aborted[0]:
        close_error_bound(P, M, &L, l5_tol)
    n_events[0] = nev
    n_rows[0] = nrow
    t_out[0] = t
    return 0


def run_lure(dict params, xi0, double duration, double h, double event_tol, double min_gap,
             long max_events, long stride, double l5_tol, double div_norm, dvals, long hold):
    """Simulate the Lur'e loop; ``params`` is built by ``etc_lab.sim.kernel_params``.

    Returns ``(status, t_final, y_final, events, trajectory, monitors, aborted)``
    where ``status`` is ``-1`` on divergence.
    """
    cdef Params P
    cdef Mon M
    cdef double y[4]
    cdef long n_events = 0, n_rows = 0, ncells, nrec
    cdef double t_out = 0.0
    cdef int aborted = 0, status
    P.h_star = params["h_star"]
    P.wc = params["wc"]
    P.mc1s = params["mc1s"]
    P.c2 = params["c2"]
    P.lam = params["lam"]
    P.p = params["p"]
    P.kbar = params["kbar"]
    P.k1 = params["k1"]
    P.k2 = params["k2"]
    P.a1 = params["a1"]
    P.a2 = params["a2"]
    P.designed = params["designed"]
    P.phi3 = params["phi3"]
    P.lambda2 = params["lambda2"]
    P.delta_bar = params["delta_bar"]
    P.s_k = params["s_k"]
    P.r_kind = params["r_kind"]
    P.r0 = params["r0"]
    P.r_ratio = params["r_ratio"]
    P.rh_kind = params["rh_kind"]
    P.rh0 = params["rh0"]
    P.rh_ratio = params["rh_ratio"]
    P.sk = params["sk"]
    P.s_level = params["s_level"]
    P.s_D = params["s_D"]
    P.s_rate = params["s_rate"]
    P.s_nbar = params["s_nbar"]
    P.s_dstar = params["s_dstar"]
    P.s_T = params["s_T"]
    P.s_after_zero = params["s_after_zero"]
    P.tau_hat = params["tau_hat"]
    P.dwell = params["dwell"]
    P.check5 = params["check5"]
    P.a5 = params["a5"]
    P.b5 = params["b5"]

    M.phi1_min = INFINITY
    M.phi2_margin_min = INFINITY
    M.pin_err_max = 0.0
    M.l5_intervals = 0
    M.l5_violations = 0
    M.l5_min_slack = INFINITY
    M.int_z = 0.0
    M.int_d = 0.0
    M.int_xi = 0.0
    M.sum_r = 0.0
    M.sum_r_hat = 0.0
    M.int_delta = 0.0
    M.xi_max = 0.0
    M.resid_max = 0.0

    y[0] = xi0[0]
    y[1] = xi0[1]
    y[2] = reset_r(&P, 0)
    y[3] = s_value(&P, 0.0)
    M.sum_r = y[2]

    ev_t = np.empty(max_events, dtype=np.float64)
    ev_x = np.empty(max_events, dtype=np.float64)
    ev_c = np.empty(max_events, dtype=np.int8)
    ncells = <long>ceil(duration / h) + 2
    nrec = ncells // stride + 2 if stride else 1
    traj = np.empty((nrec, 10), dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(dvals, dtype=np.float64)
    cdef double[::1] evt = ev_t
    cdef double[::1] evx = ev_x
    cdef signed char[::1] evc = ev_c
    cdef double[:, ::1] tr = traj

    with nogil:
        status = simulate(&P, y, duration, h, event_tol, min_gap, max_events, stride, l5_tol,
                          div_norm, dv, hold, evt, evx, evc, &n_events, tr, &n_rows, &M,
                          &t_out, &aborted)

    monitors = dict(
        phi1_min=M.phi1_min,
        phi2_pre_margin_min=M.phi2_margin_min,
        pin_error_max=M.pin_err_max,
        error_bound_intervals=M.l5_intervals,
        error_bound_violations=M.l5_violations,
        error_bound_min_slack=M.l5_min_slack,
        int_z_p=M.int_z,
        int_d_p=M.int_d,
        int_xi_p=M.int_xi,
        sum_r=M.sum_r,
        sum_r_hat=M.sum_r_hat,
        int_delta=M.int_delta,
        xi_norm_max=M.xi_max,
        event_residual_max=M.resid_max,
    )
    y_final = np.array([y[0], y[1], y[2], y[3]])
    events = (ev_t[:n_events].copy(), ev_x[:n_events].copy(), ev_c[:n_events].copy())
    trajectory = traj[:n_rows].copy() if stride else None
    return status, t_out, y_final, events, trajectory, monitors, bool(aborted)
