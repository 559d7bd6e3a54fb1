"""Fixed-step hybrid simulator for an event-triggered loop, pure Python.

The augmented state ``y = [xi, phi1, phi2]`` is advanced by classical RK4 with
step ``h`` on the global grid ``n*h``. Steps are split at the phase switch
``t_hat_k``, at the opening of a dwell gate and at discontinuities of the
``phi2`` schedule, so every step sees a constant disturbance and constant
mode. A sign change of ``Phi`` inside a step is located by bisection, each
trial re-integrating one RK4 sub-step from the step start.

The compiled kernel in ``_lure_kernel`` follows this module line by line for
the Lur'e plant; keep the two in sync.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import DivergenceError, DomainError
from ..trigger import TriggerConfig, TriggerState, _norm, varphi

__all__ = [
    "IntegratorConfig",
    "EventLog",
    "Monitors",
    "RunResult",
    "SimState",
    "HybridLoop",
    "step",
    "locate_event",
    "simulate",
    "CAUSES",
]

CAUSES = ("threshold", "dwell-forced")
THRESHOLD, DWELL_FORCED = 0, 1


@dataclass(frozen=True)
class IntegratorConfig:
    """Step, event tolerance and guards.

    ``record_stride`` keeps every ``record_stride``-th grid point of the
    trajectory (0 disables recording).
    """

    h: float = 1e-4
    event_tol: float = 1e-9
    min_gap: float = 1e-7
    max_events: int = 100_000
    record_stride: int = 0
    error_bound_slack: float = 1e-9
    divergence_norm: float = 1e12

    def __post_init__(self):
        if not self.h > 0:
            raise DomainError("step h must be positive")
        if not 0 < self.event_tol < self.h:
            raise DomainError("event tolerance must lie in (0, h)")
        if not (self.min_gap > 0 and self.max_events > 0):
            raise DomainError("zeno guard thresholds must be positive")
        if self.record_stride < 0:
            raise DomainError("record_stride must be nonnegative")


@dataclass
class EventLog:
    """Sampling instants after the initial sample at ``t0``."""

    times: np.ndarray
    xi_norms: np.ndarray
    causes: np.ndarray
    t0: float = 0.0

    @property
    def N(self) -> int:
        return int(self.times.size)

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(np.concatenate([[self.t0], self.times]))

    @property
    def tau_m(self) -> Optional[float]:
        return float(self.gaps.min()) if self.N else None

    @property
    def mean_gap(self) -> Optional[float]:
        return float(self.gaps.mean()) if self.N else None

    def rows(self):
        for k, (t, gap, c) in enumerate(zip(self.times, self.gaps, self.causes), start=1):
            yield k, float(t), float(gap), CAUSES[int(c)]


@dataclass
class Monitors:
    phi1_min: float = math.inf
    phi2_pre_margin_min: float = math.inf
    pin_error_max: float = 0.0
    error_bound_intervals: int = 0
    error_bound_violations: int = 0
    error_bound_min_slack: float = math.inf
    int_z_p: float = 0.0
    int_d_p: float = 0.0
    int_xi_p: float = 0.0
    sum_r: float = 0.0
    sum_r_hat: float = 0.0
    int_delta: float = 0.0
    xi_norm_max: float = 0.0
    event_residual_max: float = 0.0
    budget_flags: tuple = ()


@dataclass
class RunResult:
    events: EventLog
    monitors: Monitors
    trajectory: Optional[np.ndarray]
    columns: tuple
    aborted: Optional[str]
    t_final: float
    xi_final: np.ndarray
    backend: str = "python"

    @property
    def N(self) -> int:
        return self.events.N

    @property
    def tau_m(self) -> Optional[float]:
        return self.events.tau_m


@dataclass
class SimState:
    """Simulator state between steps; ``eps = xi_held - xi``."""

    t: float
    xi: np.ndarray
    xi_held: np.ndarray
    u: np.ndarray
    trig: TriggerState

    @property
    def eps(self) -> np.ndarray:
        return self.xi_held - self.xi


def trajectory_columns(plant) -> tuple:
    cols = ["t"]
    cols += [f"xi{i + 1}" for i in range(plant.n)]
    cols += [f"u{i + 1}" for i in range(plant.m)]
    cols += ["eps_norm", "phi1", "phi2", "Phi"]
    cols += [f"d{i + 1}" for i in range(plant.q)]
    cols += [f"z{i + 1}" for i in range(plant.s)]
    return tuple(cols)


class HybridLoop:
    """Closed loop of a plant, its certificate and a triggering rule.

    ``tau_hat`` may be ``inf``; ``dwell`` is the gate length (0 for none).
    ``error_coeffs`` is the ``(a, b)`` pair to check on ``[t_k, t_hat_k]`` or None.
    """

    def __init__(self, plant, consts, lyap, cfg: TriggerConfig, disturbance, integ: IntegratorConfig,
                 tau_hat: float, dwell: float = 0.0, error_coeffs=None):
        if not tau_hat > 0:
            raise DomainError("tau_hat must be positive")
        if dwell < 0:
            raise DomainError("dwell must be nonnegative")
        if disturbance.q != plant.q:
            raise DomainError("disturbance dimension does not match the plant")
        if not math.isclose(disturbance.h, integ.h, rel_tol=1e-12):
            raise DomainError("disturbance was realised on a different grid")
        self.plant, self.consts, self.lyap, self.cfg = plant, consts, lyap, cfg
        self.dist, self.integ = disturbance, integ
        self.tau_hat, self.dwell, self.error_coeffs = float(tau_hat), float(dwell), error_coeffs
        self.n = plant.n
        self.p = consts.p
        self.designed = cfg.phi_bar == "designed"
        self.sched = cfg.schedule
        # per-step context
        self.xi_held = np.zeros(self.n)
        self.u = np.zeros(plant.m)
        self.pinned = False
        self.floor_now = 0.0
        self.piece = 0.0

    # vector field and triggering function -------------------------------
    def varphi(self, xi, eps) -> float:
        return varphi(xi, eps, self.consts, self.lyap, self.plant, self.cfg.phi3, self.cfg.lambda2)

    def Phi(self, y) -> float:
        n, cfg = self.n, self.cfg
        vp = self.varphi(y[:n], self.xi_held - y[:n]) if cfg.k_bar else 0.0
        return cfg.k_bar * vp - cfg.k1 * y[n] - cfg.k2 * y[n + 1]

    def _pin(self, t) -> float:
        if self.sched.continuous:
            return self.sched.value(t, self.cfg.delta_bar)
        return self.piece

    def deriv(self, t, y, d):
        n, cfg = self.n, self.cfg
        xi = y[:n]
        out = np.empty(n + 2)
        out[:n] = self.plant.f_u(xi, d, self.u)
        vp = self.varphi(xi, self.xi_held - xi)
        if self.pinned:
            phi2 = self._pin(t)
            out[n + 1] = 0.0
        else:
            phi2 = y[n + 1]
            out[n + 1] = -cfg.alpha2(phi2) + cfg.alpha2(self.floor_now)
        out[n] = -cfg.alpha1(y[n]) + cfg.k2 * phi2 - vp
        return out

    def rk4(self, t, y, dt, d):
        h2 = dt / 2.0
        k1 = self.deriv(t, y, d)
        k2 = self.deriv(t + h2, y + h2 * k1, d)
        k3 = self.deriv(t + h2, y + h2 * k2, d)
        k4 = self.deriv(t + dt, y + dt * k3, d)
        y1 = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if self.pinned:
            y1[self.n + 1] = self.sched.left(t + dt, self.cfg.delta_bar)
        return y1

    def set_context(self, t, xi_held, u, phase):
        """Freeze the held sample and the mode for steps starting at ``t``."""
        self.xi_held = np.asarray(xi_held, dtype=float)
        self.u = np.asarray(u, dtype=float).reshape(self.plant.m)
        self.pinned = self.designed and phase == "post_hat"
        self.floor_now = self.cfg.floor(t)
        if self.pinned and not self.sched.continuous:
            self.piece = self.sched.right(t, self.cfg.delta_bar)

    @staticmethod
    def crossed(phi_start, phi_end) -> bool:
        return (phi_start < 0.0 and phi_end >= 0.0) or (phi_start >= 0.0 and phi_end > 0.0)

    def bisect(self, t0, y0, dt, d, phi_start, tol):
        """Earliest sub-step end in ``(0, dt]`` at which :meth:`crossed` holds."""
        lo, hi = 0.0, dt
        y_hi = None
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            y_mid = self.rk4(t0, y0, mid, d)
            if self.crossed(phi_start, self.Phi(y_mid)):
                hi, y_hi = mid, y_mid
            else:
                lo = mid
        if y_hi is None:
            y_hi = self.rk4(t0, y0, hi, d)
        return t0 + hi, y_hi

    # main loop ------------------------------------------------------------
    def run(self, xi0, duration: float) -> RunResult:
        plant, cfg, integ, sched = self.plant, self.cfg, self.integ, self.sched
        n, p, h = self.n, self.p, integ.h
        xi0 = np.asarray(xi0, dtype=float).reshape(-1)
        if xi0.shape != (n,):
            raise DomainError(f"xi0 has shape {xi0.shape}, expected ({n},)")
        if not (duration >= 0 and math.isfinite(duration)):
            raise DomainError("duration must be finite and nonnegative")
        a5, b5 = self.error_coeffs if self.error_coeffs is not None else (0.0, 0.0)
        mon = Monitors()
        ev_t, ev_x, ev_c = [], [], []
        rows = []
        stride = integ.record_stride

        trig = cfg.reset_r.value(0, 0.0)
        y = np.concatenate([xi0, [trig, cfg.s_value(0.0)]])
        mon.sum_r = trig
        xi_held = xi0.copy()
        u = np.asarray(plant.gamma(xi_held), dtype=float).reshape(plant.m)
        phase = "pre_hat"
        k = 0
        t = 0.0
        t_k = 0.0
        t_hat = self.tau_hat
        gate = self.dwell
        cell = 0
        aborted = None
        l5 = [0.0, 0.0, 0.0]  # int |eps|^p, |xi|^p, |d|^p on the current pre-hat interval

        self.set_context(t, xi_held, u, phase)
        phi_cur = self.Phi(y)
        mon.phi1_min = min(mon.phi1_min, y[n])
        mon.xi_norm_max = float(np.linalg.norm(xi0))

        def record(tt, yy):
            d = self.dist.slot_value(cell)
            z = np.atleast_1d(plant.h(yy[:n], d))
            rows.append(np.concatenate([[tt], yy[:n], u, [np.linalg.norm(xi_held - yy[:n]), yy[n], yy[n + 1], self.Phi(yy)], d, z]))

        if stride:
            record(t, y)

        def close_error_bound():
            if self.error_coeffs is None:
                return
            mon.error_bound_intervals += 1
            slack = a5 * l5[1] + b5 * l5[2] - l5[0]
            mon.error_bound_min_slack = min(mon.error_bound_min_slack, slack)
            if slack + integ.error_bound_slack < 0.0:
                mon.error_bound_violations += 1

        def accumulate(ta, ya, tb, yb, d):
            dt = tb - ta
            xa, xb = ya[:n], yb[:n]
            nxa, nxb = _norm(xa), _norm(xb)
            za = _norm(plant.h(xa, d)) ** p
            zb = _norm(plant.h(xb, d)) ** p
            dp = _norm(d) ** p
            mon.int_z_p += 0.5 * (za + zb) * dt
            mon.int_d_p += dp * dt
            mon.int_xi_p += 0.5 * (nxa**p + nxb**p) * dt
            if phase == "pre_hat":
                ea = _norm(xi_held - xa) ** p
                eb = _norm(xi_held - xb) ** p
                l5[0] += 0.5 * (ea + eb) * dt
                l5[1] += 0.5 * (nxa**p + nxb**p) * dt
                l5[2] += dp * dt
            if self.pinned:
                mon.int_delta += 0.5 * (ya[n + 1] + yb[n + 1]) * dt
                mon.pin_error_max = max(mon.pin_error_max, abs(yb[n + 1] - sched.left(tb, cfg.delta_bar)))
            else:
                mon.phi2_pre_margin_min = min(mon.phi2_pre_margin_min, yb[n + 1] - self.floor_now)
            mon.phi1_min = min(mon.phi1_min, yb[n])
            mon.xi_norm_max = max(mon.xi_norm_max, nxb)

        while t < duration and aborted is None:
            t_grid = (cell + 1) * h
            tb = min(t_grid, duration)
            if phase == "pre_hat" and t_hat < tb:
                tb = t_hat
            if gate > t and gate < tb:
                tb = gate
            nj = sched.next_jump(t) if self.designed else math.inf
            if nj < tb:
                tb = nj
            gate_open = not gate > t
            d = self.dist.slot_value(cell)
            self.set_context(t, xi_held, u, phase)
            y1 = self.rk4(t, y, tb - t, d)
            if not (np.all(np.isfinite(y1)) and np.linalg.norm(y1[:n]) <= integ.divergence_norm):
                raise DivergenceError(f"non-finite or unbounded state at t={tb}", t=tb, state=y1)
            phi_end = self.Phi(y1)

            event = None
            if gate_open and self.crossed(phi_cur, phi_end):
                if phi_end == 0.0 and phi_cur < 0.0:
                    te, ye = tb, y1
                else:
                    te, ye = self.bisect(t, y, tb - t, d, phi_cur, integ.event_tol)
                accumulate(t, y, te, ye, d)
                t, y = te, ye
                phi_e = self.Phi(ye)
                vp = self.varphi(ye[:n], xi_held - ye[:n]) if cfg.k_bar else 0.0
                scale = abs(cfg.k_bar * vp) + cfg.k1 * ye[n] + cfg.k2 * ye[n + 1] + 1.0
                mon.event_residual_max = max(mon.event_residual_max, abs(phi_e) / scale)
                event = THRESHOLD
                grid_hit = t == t_grid
            else:
                accumulate(t, y, tb, y1, d)
                t, y = tb, y1
                grid_hit = t == t_grid
                special = False
                gate_now = False
                if phase == "pre_hat" and t >= t_hat:
                    close_error_bound()
                    phase = "post_hat"
                    r_hat = cfg.reset_r_hat.value(k, y[n])
                    y[n] = r_hat
                    mon.sum_r_hat += r_hat
                    if self.designed:
                        y[n + 1] = sched.right(t, cfg.delta_bar)
                    special = True
                if gate == t:
                    gate_now = True
                    special = True
                if t == nj:
                    if self.designed and phase == "post_hat":
                        y[n + 1] = sched.right(t, cfg.delta_bar)
                    special = True
                if special:
                    self.set_context(t, xi_held, u, phase)
                    phi_cur = self.Phi(y)
                    if not gate > t and (phi_cur > 0.0 or (phi_cur >= 0.0 and phi_end < 0.0)):
                        event = DWELL_FORCED if gate_now else THRESHOLD
                else:
                    phi_cur = phi_end

            if grid_hit:
                cell += 1
            if event is not None:
                gap = t - t_k
                ev_t.append(t)
                ev_x.append(float(np.linalg.norm(y[:n])))
                ev_c.append(event)
                if phase == "pre_hat":
                    close_error_bound()
                l5 = [0.0, 0.0, 0.0]
                k += 1
                xi_held = y[:n].copy()
                u = np.asarray(plant.gamma(xi_held), dtype=float).reshape(plant.m)
                r = cfg.reset_r.value(k, y[n])
                y[n] = r
                mon.sum_r += r
                y[n + 1] = cfg.s_value(t)
                phase = "pre_hat"
                t_k = t
                t_hat = t + self.tau_hat
                gate = t + self.dwell
                self.set_context(t, xi_held, u, phase)
                phi_cur = self.Phi(y)
                mon.phi1_min = min(mon.phi1_min, y[n])
                if gap < integ.min_gap or len(ev_t) >= integ.max_events:
                    aborted = "zeno"
            if grid_hit and stride and cell % stride == 0:
                record(t, y)

        if phase == "pre_hat" and t > t_k and aborted is None:
            close_error_bound()
        flags = []
        if mon.int_delta > cfg.theta1:
            flags.append("theta1")
        if mon.sum_r > cfg.theta2:
            flags.append("theta2")
        if mon.sum_r_hat > cfg.theta3:
            flags.append("theta3")
        mon.budget_flags = tuple(flags)
        traj = np.array(rows) if stride else None
        return RunResult(
            events=EventLog(np.array(ev_t, dtype=float), np.array(ev_x, dtype=float), np.array(ev_c, dtype=np.int8)),
            monitors=mon,
            trajectory=traj,
            columns=trajectory_columns(plant),
            aborted=aborted,
            t_final=t,
            xi_final=y[:n].copy(),
            backend="python",
        )


def _y_of(sim: SimState):
    return np.concatenate([sim.xi, [sim.trig.phi1, sim.trig.phi2]])


def step(loop: HybridLoop, sim: SimState, dt: float, d) -> SimState:
    """One RK4 step of length ``dt`` with the disturbance value ``d``.

    The mode is taken from ``sim``; the caller checks for events.
    """
    loop.set_context(sim.t, sim.xi_held, sim.u, sim.trig.phase)
    y1 = loop.rk4(sim.t, _y_of(sim), dt, np.atleast_1d(np.asarray(d, dtype=float)))
    if not np.all(np.isfinite(y1)):
        raise DivergenceError(f"non-finite state at t={sim.t + dt}", t=sim.t + dt, state=y1)
    n = loop.n
    trig = sim.trig.copy()
    trig.phi1, trig.phi2 = float(y1[n]), float(y1[n + 1])
    return SimState(sim.t + dt, y1[:n].copy(), sim.xi_held, sim.u, trig)


def locate_event(loop: HybridLoop, sim: SimState, dt: float, d, tol: float):
    """Event instant inside ``(t, t + dt]`` and the state there.

    Raises :class:`DomainError` when ``Phi`` does not cross zero over the step.
    """
    loop.set_context(sim.t, sim.xi_held, sim.u, sim.trig.phase)
    d = np.atleast_1d(np.asarray(d, dtype=float))
    y0 = _y_of(sim)
    phi0 = loop.Phi(y0)
    y1 = loop.rk4(sim.t, y0, dt, d)
    phi1 = loop.Phi(y1)
    if not loop.crossed(phi0, phi1):
        raise DomainError("Phi does not cross zero over the step")
    if phi1 == 0.0 and phi0 < 0.0:
        te, ye = sim.t + dt, y1
    else:
        te, ye = loop.bisect(sim.t, y0, dt, d, phi0, tol)
    n = loop.n
    trig = sim.trig.copy()
    trig.phi1, trig.phi2 = float(ye[n]), float(ye[n + 1])
    return te, SimState(te, ye[:n].copy(), sim.xi_held, sim.u, trig)


def simulate(plant, consts, lyap, cfg, disturbance, xi0, duration, integ=None, tau_hat=None,
             dwell=0.0, error_coeffs=None) -> RunResult:
    """Run the pure-Python engine (see :func:`etc_lab.sim.run` for backend selection)."""
    integ = integ or IntegratorConfig()
    th = tau_hat if tau_hat is not None else cfg.tau_hat
    if th is None:
        raise DomainError("tau_hat is not set")
    th = math.inf if not isinstance(th, (int, float)) else float(th)
    loop = HybridLoop(plant, consts, lyap, cfg, disturbance, integ, th, dwell, error_coeffs)
    return loop.run(xi0, duration)
