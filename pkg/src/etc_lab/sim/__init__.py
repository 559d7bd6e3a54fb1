"""Hybrid simulation of event-triggered loops.

Two backends share one semantics: the compiled Lur'e kernel (``_lure_kernel``)
and the pure-Python engine (``engine``), which handles any plant. The kernel
is used when it was built, the loop fits it and ``ETC_LAB_PURE_PYTHON`` is not
set; otherwise the engine runs.
"""

from __future__ import annotations

import math
import os

import numpy as np

from ..errors import DivergenceError, DomainError
from .engine import (
    CAUSES,
    EventLog,
    HybridLoop,
    IntegratorConfig,
    Monitors,
    RunResult,
    SimState,
    locate_event,
    simulate,
    step,
    trajectory_columns,
)

try:
    if os.environ.get("ETC_LAB_PURE_PYTHON"):
        raise ImportError("pure Python backend requested")
    from . import _lure_kernel
except ImportError:
    _lure_kernel = None

BACKEND = "compiled" if _lure_kernel is not None else "python"

__all__ = [
    "BACKEND",
    "CAUSES",
    "EventLog",
    "HybridLoop",
    "IntegratorConfig",
    "Monitors",
    "RunResult",
    "SimState",
    "kernel_params",
    "locate_event",
    "run",
    "simulate",
    "step",
    "trajectory_columns",
]

_SCHEDULE_CODES = {"constant": 0, "exponential": 1, "staircase": 2, "enlargement": 3}
_RESET_CODES = {"zero": 0, "geometric": 1, "carryover": 2}
_PHI3_CODES = {"affine": 0, "nonaffine": 1, "zero": 2}


def _slope(spec):
    if spec.kind == "linear":
        return spec.slope
    if spec.kind == "zero":
        return 0.0
    return None


def kernel_params(plant, consts, lyap, cfg, tau_hat, dwell, error_coeffs):
    """Flat parameter dict for the compiled kernel, or None if the loop does not fit it."""
    pk, lk = plant.kernel or {}, lyap.kernel or {}
    if pk.get("kind") != "lure" or lk.get("kind") != "lure" or pk["h_star"] != lk["h_star"]:
        return None
    a1, a2 = _slope(cfg.alpha1), _slope(cfg.alpha2)
    sched = cfg.schedule
    if a1 is None or a2 is None or sched.kind not in _SCHEDULE_CODES:
        return None
    return dict(
        h_star=pk["h_star"],
        wc=lk["grad_scale"],
        mc1s=-consts.c1 * consts.sigma,
        c2=consts.c2,
        lam=consts.lam,
        p=consts.p,
        kbar=cfg.k_bar,
        k1=cfg.k1,
        k2=cfg.k2,
        a1=a1,
        a2=a2,
        designed=int(cfg.phi_bar == "designed"),
        phi3=_PHI3_CODES[cfg.phi3],
        lambda2=cfg.lambda2,
        delta_bar=cfg.delta_bar,
        s_k=cfg.s_k,
        r_kind=_RESET_CODES[cfg.reset_r.kind],
        r0=cfg.reset_r.r0,
        r_ratio=cfg.reset_r.ratio,
        rh_kind=_RESET_CODES[cfg.reset_r_hat.kind],
        rh0=cfg.reset_r_hat.r0,
        rh_ratio=cfg.reset_r_hat.ratio,
        sk=_SCHEDULE_CODES[sched.kind],
        s_level=cfg.delta_bar if sched.level is None else sched.level,
        s_D=sched.D,
        s_rate=sched.rate,
        s_nbar=sched.nbar,
        s_dstar=sched.delta_star,
        s_T=sched.T,
        s_after_zero=int(sched.after == "zero"),
        tau_hat=tau_hat,
        dwell=dwell,
        check5=int(error_coeffs is not None),
        a5=error_coeffs[0] if error_coeffs is not None else 0.0,
        b5=error_coeffs[1] if error_coeffs is not None else 0.0,
    )


def _resolve_tau_hat(cfg, tau_hat):
    th = cfg.tau_hat if tau_hat is None else tau_hat
    if th is None:
        raise DomainError("tau_hat is not set; compute it with bounds.tau_hat")
    if not isinstance(th, (int, float)):
        if str(th) != "unbounded":
            raise DomainError(f"invalid tau_hat {th!r}")
        return math.inf
    return float(th)


def _resolve_dwell(cfg, dwell):
    if dwell is not None:
        return float(dwell)
    if cfg.dwell is None:
        return 0.0
    if isinstance(cfg.dwell, str):
        raise DomainError("the dwell gate 'tau_m' must be resolved to a number before simulating")
    return float(cfg.dwell)


def run(plant, consts, lyap, cfg, disturbance, xi0, duration, integ=None, tau_hat=None,
        dwell=None, error_coeffs=None, backend="auto") -> RunResult:
    """Simulate one closed-loop run.

    Parameters
    ----------
    plant, consts, lyap, cfg
        Plant, certificate constants, Lyapunov pair and trigger configuration.
    disturbance : plants.Disturbance
        Realisation on the integrator grid.
    xi0 : array_like
        Initial state; ``t0 = 0`` is the initial sampling instant.
    duration : float
        Horizon in seconds.
    tau_hat, dwell : float, optional
        Override ``cfg.tau_hat`` and the dwell gate.
    error_coeffs : tuple of float, optional
        ``(a, b)`` to check the sampling-error integral on every ``[t_k, t_hat_k]``.
    backend : {"auto", "compiled", "python"}
    """
    integ = integ or IntegratorConfig()
    th = _resolve_tau_hat(cfg, tau_hat)
    dw = _resolve_dwell(cfg, dwell)
    if dw < 0:
        raise DomainError("dwell must be nonnegative")
    if not (duration >= 0 and math.isfinite(duration)):
        raise DomainError("duration must be finite and nonnegative")
    if backend not in ("auto", "compiled", "python"):
        raise DomainError(f"unknown backend {backend!r}")
    params = None
    if backend != "python" and _lure_kernel is not None:
        params = kernel_params(plant, consts, lyap, cfg, th, dw, error_coeffs)
    if backend == "compiled" and params is None:
        raise DomainError("the compiled kernel is unavailable or does not fit this loop")
    if params is None:
        return HybridLoop(plant, consts, lyap, cfg, disturbance, integ, th, dw, error_coeffs).run(xi0, duration)

    xi0 = np.asarray(xi0, dtype=float).reshape(-1)
    if xi0.shape != (2,):
        raise DomainError(f"xi0 has shape {xi0.shape}, expected (2,)")
    if disturbance.q != 1 or not math.isclose(disturbance.h, integ.h, rel_tol=1e-12):
        raise DomainError("disturbance does not match the plant or the integrator grid")
    status, t_final, y, (ev_t, ev_x, ev_c), traj, mon, aborted = _lure_kernel.run_lure(
        params, xi0, float(duration), integ.h, integ.event_tol, integ.min_gap, int(integ.max_events),
        int(integ.record_stride), integ.error_bound_slack, integ.divergence_norm,
        disturbance.values[:, 0], int(disturbance.hold_steps),
    )
    if status < 0:
        raise DivergenceError(f"non-finite or unbounded state at t={t_final}", t=t_final, state=y)
    flags = []
    if mon["int_delta"] > cfg.theta1:
        flags.append("theta1")
    if mon["sum_r"] > cfg.theta2:
        flags.append("theta2")
    if mon["sum_r_hat"] > cfg.theta3:
        flags.append("theta3")
    return RunResult(
        events=EventLog(ev_t, ev_x, ev_c),
        monitors=Monitors(budget_flags=tuple(flags), **mon),
        trajectory=traj,
        columns=trajectory_columns(plant),
        aborted="zeno" if aborted else None,
        t_final=t_final,
        xi_final=y[:2].copy(),
        backend="compiled",
    )
