"""Independent reference computations used by the tests.

Nothing here imports the formulas under test: the error envelope and the
inter-event time bound are recomputed by adaptive quadrature, and triggered
closed loops are re-simulated with an adaptive Runge-Kutta solver and its own
root finder.
"""

import math

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq


def psi_quadrature(t, lambda2, p):
    """``2^p Q(t) P(t)`` with both factors integrated numerically."""
    q = p / (p - 1.0)
    inner, _ = quad(lambda s: math.exp(lambda2 * q / 2.0 * (t - s)), 0.0, t, epsabs=0, epsrel=1e-13)
    Q = inner ** (p / q)
    P, _ = quad(lambda s: math.exp(lambda2 * p / 2.0 * s), 0.0, t, epsabs=0, epsrel=1e-13)
    return 2.0**p * Q * P


def tau_star_quadrature(chi, kappa, lambda2, m1):
    """Time for ``chi' = (1 + m1 chi / 2)(kappa + lambda2 chi)`` to go from 0 to ``chi``."""
    val, _ = quad(lambda l: 1.0 / ((1.0 + m1 * l / 2.0) * (kappa + lambda2 * l)), 0.0, chi,
                  epsabs=0, epsrel=1e-13)
    return val


def chi_ode_time(chi, kappa, lambda2, m1):
    """Same time by integrating the comparison ODE to the level ``chi``."""
    ev = lambda t, y: y[0] - chi
    ev.terminal = True
    sol = solve_ivp(lambda t, y: [(1.0 + m1 * y[0] / 2.0) * (kappa + lambda2 * y[0])], (0.0, 1e6), [0.0],
                    events=ev, rtol=1e-12, atol=1e-14)
    return float(sol.t_events[0][0])


# ---------------------------------------------------------------------------
# Lur'e loop, written out from its definition

_P = np.array([[1.0, 1.0], [1.0, 2.0]])


def sector(r, h_star):
    if abs(r) <= h_star:
        return 2.0 * r
    return r + math.copysign(h_star, r)


def lure_rhs(x, u, d, h_star):
    return np.array([x[1], -sector(x[0], h_star) + u + d])


def lure_varphi(x, e, consts, n2, h_star):
    """Triggering function of the Lur'e loop with control ``u = -x2``."""
    grad = (_P @ x + np.array([2.0 * sector(x[0], h_star), 0.0])) / (1.0 - n2)
    # g = [0, 1]', gamma(x + e) - gamma(x) = -e2
    phi3 = consts.lam * grad[1] * (-e[1])
    return -consts.c1 * consts.sigma * float(x @ x) + consts.c2 * float(e @ e) + phi3


def lure_varphi_many(X, held, consts, n2, h_star):
    """:func:`lure_varphi` for states stacked in the columns of ``X``."""
    x1, x2 = X[0], X[1]
    # second gradient component; the sector term only enters the first
    g2 = (x1 + 2.0 * x2) / (1.0 - n2)
    e1, e2 = held[0] - x1, held[1] - x2
    return -consts.c1 * consts.sigma * (x1 * x1 + x2 * x2) + consts.c2 * (e1 * e1 + e2 * e2) - consts.lam * g2 * e2


def simulate_rule(rule, consts, n2, h_star, xi0, d_values, hold, duration, level=0.0, scan=1e-5):
    """Event times of a triggered Lur'e loop by adaptive integration.

    ``rule`` is ``"static"`` (``varphi`` reaches 0), ``"level"`` (``varphi``
    reaches ``level``) or ``"integral"`` (the integral of ``varphi`` since the
    last event reaches 0). ``d_values[j]`` holds on ``[j hold, (j+1) hold)``.
    Crossings are found by scanning the dense solution on a ``scan`` grid,
    so brief excursions inside one solver step are not missed, and refined
    with Brent's method.
    """
    t, x = 0.0, np.asarray(xi0, dtype=float).copy()
    held = x.copy()
    acc = 0.0
    events = []
    nseg = int(math.ceil(duration / hold - 1e-9))
    for j in range(nseg):
        t_end = min((j + 1) * hold, duration)
        d = float(d_values[j]) if j < len(d_values) else 0.0
        while t < t_end - 1e-15:
            def rhs(s, y, held=held, d=d):
                xs = y[:2]
                vp = lure_varphi(xs, held - xs, consts, n2, h_star)
                return np.concatenate([lure_rhs(xs, -held[1], d, h_star), [vp]])

            sol = solve_ivp(rhs, (t, t_end), np.concatenate([x, [acc]]), method="DOP853", dense_output=True,
                            rtol=1e-12, atol=[1e-14, 1e-14, 1e-24])

            def cond(s, held=held, sol=sol):
                y = sol.sol(s)
                if rule == "integral":
                    return y[2]
                return lure_varphi_many(y[:2], held, consts, n2, h_star) - (level if rule == "level" else 0.0)

            grid = np.append(np.arange(t, t_end, scan), t_end)
            vals = cond(grid)
            # upward crossing strictly after the restart instant
            up = np.nonzero((vals[:-1] < 0) & (vals[1:] >= 0))[0]
            if up.size:
                i = up[0]
                te = brentq(cond, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps)
                events.append(te)
                x = sol.sol(te)[:2].copy()
                t, held, acc = te, x.copy(), 0.0
            else:
                t, x, acc = t_end, sol.y[:2, -1].copy(), float(sol.y[2, -1])
    return np.array(events)
