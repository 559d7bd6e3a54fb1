"""Dynamic triggering condition with two auxiliary variables.

The condition is ``Phi = k_bar * varphi(xi, eps) - k1 * phi1 - k2 * phi2`` and
an event fires when ``Phi`` reaches zero from below. ``phi1`` is a filtered
integral of ``-varphi``; ``phi2`` is a positive threshold that relaxes to
``delta_bar`` during ``[t_k, t_k + tau_hat)`` and follows the schedule
``delta_k(t)`` afterwards.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .bounds import Marker
from .errors import DomainError, UnknownPresetError

__all__ = [
    "ClassKSpec",
    "DeltaSchedule",
    "ResetRule",
    "TriggerConfig",
    "TriggerState",
    "varphi",
    "Phi",
    "dynamics",
    "initial_state",
    "on_sample",
    "on_hat_transition",
    "preset",
    "PRESETS",
]


@dataclass(frozen=True)
class ClassKSpec:
    """A class-K function of one of four shapes.

    ``linear``: ``slope * r``; ``power``: ``coefficient * r**exponent``;
    ``zero``: identically zero; ``table``: piecewise-linear interpolation of
    ``(table_r, table_v)`` extended linearly beyond the last point.
    """

    kind: str = "linear"
    slope: float = 1.0
    coefficient: float = 1.0
    exponent: float = 1.0
    table_r: tuple = ()
    table_v: tuple = ()

    def __post_init__(self):
        if self.kind == "linear":
            if not self.slope > 0:
                raise DomainError("linear class-K slope must be positive")
        elif self.kind == "power":
            if not (self.coefficient > 0 and self.exponent > 0):
                raise DomainError("power class-K needs positive coefficient and exponent")
        elif self.kind == "table":
            r = np.asarray(self.table_r, dtype=float)
            v = np.asarray(self.table_v, dtype=float)
            if r.size < 2 or r.shape != v.shape or r[0] != 0 or v[0] != 0:
                raise DomainError("table class-K needs >= 2 points starting at (0, 0)")
            if np.any(np.diff(r) <= 0) or np.any(np.diff(v) <= 0):
                raise DomainError("table class-K must be strictly increasing")
        elif self.kind != "zero":
            raise DomainError(f"unknown class-K kind {self.kind!r}")

    @classmethod
    def linear(cls, slope: float = 1.0):
        return cls("linear", slope=slope)

    @classmethod
    def power(cls, coefficient: float, exponent: float):
        return cls("power", coefficient=coefficient, exponent=exponent)

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def table(cls, r, v):
        return cls("table", table_r=tuple(map(float, r)), table_v=tuple(map(float, v)))

    def __call__(self, r: float) -> float:
        if self.kind == "linear":
            return self.slope * r
        if self.kind == "zero":
            return 0.0
        if self.kind == "power":
            return self.coefficient * math.copysign(abs(r) ** self.exponent, r)
        rr, vv = self.table_r, self.table_v
        if r >= rr[-1]:
            return vv[-1] + (vv[-1] - vv[-2]) / (rr[-1] - rr[-2]) * (r - rr[-1])
        if r <= 0:
            return (vv[1] / rr[1]) * r
        return float(np.interp(r, rr, vv))


@dataclass(frozen=True)
class DeltaSchedule:
    """Threshold schedule ``delta_k(t)`` used after ``t_hat_k``.

    Variants: ``constant`` (``level``, default ``delta_bar``), ``exponential``
    ``D e^{-rate t}``, ``staircase`` ``D rate^n / n!`` with ``n = ceil(t/nbar)``
    in global time, ``enlargement`` (``delta_star`` before ``T``, then
    ``delta_bar`` or zero per ``after``) and ``table`` (piecewise constant).
    """

    kind: str = "constant"
    level: Optional[float] = None
    D: float = 0.0
    rate: float = 0.0
    nbar: float = 1.0
    delta_star: float = 0.0
    T: float = 0.0
    after: str = "delta_bar"
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        k = self.kind
        if k == "exponential":
            if not (self.D > 0 and self.rate >= 0):
                raise DomainError("exponential schedule needs D > 0, rate >= 0")
        elif k == "staircase":
            if not (self.D > 0 and self.rate > 0 and self.nbar > 0):
                raise DomainError("staircase schedule needs D, rate, nbar > 0")
        elif k == "enlargement":
            if not (self.delta_star > 0 and self.T > 0) or self.after not in ("delta_bar", "zero"):
                raise DomainError("enlargement schedule needs delta_star, T > 0 and after in {delta_bar, zero}")
        elif k == "table":
            t = np.asarray(self.times, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if t.size == 0 or t.shape != v.shape or t[0] != 0 or np.any(np.diff(t) <= 0) or np.any(v <= 0):
                raise DomainError("table schedule needs increasing times from 0 and positive values")
        elif k == "constant":
            if self.level is not None and not self.level > 0:
                raise DomainError("constant schedule level must be positive")
        else:
            raise DomainError(f"unknown schedule kind {k!r}")

    @classmethod
    def constant(cls, level: Optional[float] = None):
        return cls("constant", level=level)

    @classmethod
    def exponential(cls, D: float, rate: float):
        return cls("exponential", D=D, rate=rate)

    @classmethod
    def staircase(cls, D: float, rate: float, nbar: float):
        return cls("staircase", D=D, rate=rate, nbar=nbar)

    @classmethod
    def enlargement(cls, delta_star: float, T: float, after: str = "delta_bar"):
        return cls("enlargement", delta_star=delta_star, T=T, after=after)

    @classmethod
    def table(cls, times, values):
        return cls("table", times=tuple(map(float, times)), values=tuple(map(float, values)))

    def value(self, t: float, delta_bar: float) -> float:
        k = self.kind
        if k == "constant":
            return delta_bar if self.level is None else self.level
        if k == "exponential":
            return self.D * math.exp(-self.rate * t)
        if k == "staircase":
            return self._stair(max(math.ceil(t / self.nbar), 0))
        if k == "enlargement":
            if t < self.T:
                return self.delta_star
            return delta_bar if self.after == "delta_bar" else 0.0
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.values[max(i, 0)]

    @property
    def continuous(self) -> bool:
        return self.kind in ("constant", "exponential")

    def _stair(self, n: int) -> float:
        return self.D * math.exp(n * math.log(self.rate) - math.lgamma(n + 1.0))

    def left(self, t: float, delta_bar: float) -> float:
        """Left limit ``delta_k(t-)`` (value on the piece ending at ``t``)."""
        k = self.kind
        if k == "staircase":
            n = math.ceil(t / self.nbar)
            if n * self.nbar < t:
                n += 1
            if n > 0 and (n - 1) * self.nbar >= t:
                n -= 1
            return self._stair(max(n, 0))
        if k == "enlargement":
            if t <= self.T:
                return self.delta_star
            return delta_bar if self.after == "delta_bar" else 0.0
        if k == "table":
            i = int(np.searchsorted(self.times, t, side="left")) - 1
            return self.values[max(i, 0)]
        return self.value(t, delta_bar)

    def right(self, t: float, delta_bar: float) -> float:
        """Right limit ``delta_k(t+)`` (value on the piece starting at ``t``)."""
        if self.kind == "staircase":
            n = math.floor(t / self.nbar) + 1
            if n * self.nbar <= t:
                n += 1
            if (n - 1) * self.nbar > t:
                n -= 1
            return self._stair(n)
        return self.value(t, delta_bar)

    def next_jump(self, t: float) -> float:
        """First discontinuity strictly after ``t`` (``inf`` if none)."""
        k = self.kind
        if k == "staircase":
            j = math.floor(t / self.nbar) + 1
            if j * self.nbar <= t:
                j += 1
            return j * self.nbar
        if k == "enlargement":
            return self.T if self.T > t else math.inf
        if k == "table":
            i = int(np.searchsorted(self.times, t, side="right"))
            return self.times[i] if i < len(self.times) else math.inf
        return math.inf

    def rate_of_change(self, t: float, delta_bar: float) -> float:
        if self.kind == "exponential":
            return -self.rate * self.value(t, delta_bar)
        return 0.0

    def floor(self, t: float, delta_bar: float) -> float:
        """Level ``phi2`` relaxes to before ``t_hat_k``."""
        if self.kind == "enlargement":
            if t < self.T:
                return self.delta_star
            return delta_bar if self.after == "delta_bar" else 0.0
        return delta_bar

    def sup(self, delta_bar: float) -> float:
        k = self.kind
        if k == "constant":
            return self.value(0.0, delta_bar)
        if k == "exponential":
            return self.D
        if k == "staircase":
            # D rate^n / n! peaks at n = floor(rate)
            best = 0.0
            for n in range(0, int(self.rate) + 2):
                best = max(best, self.D * math.exp(n * math.log(self.rate) - math.lgamma(n + 1.0)))
            return best
        if k == "enlargement":
            return max(self.delta_star, delta_bar if self.after == "delta_bar" else 0.0)
        return max(self.values)


@dataclass(frozen=True)
class ResetRule:
    """Reset values for ``phi1``: ``zero``, ``geometric`` (``r0 * ratio**k``) or
    ``carryover`` (keep the current value; only meaningful at ``t_hat_k``)."""

    kind: str = "zero"
    r0: float = 0.0
    ratio: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "geometric", "carryover"):
            raise DomainError(f"unknown reset rule {self.kind!r}")
        if self.kind == "geometric" and not (self.r0 >= 0 and 0 <= self.ratio < 1):
            raise DomainError("geometric reset needs r0 >= 0 and ratio in [0, 1)")

    def value(self, k: int, current: float) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "geometric":
            return self.r0 * self.ratio**k
        return current


PHI3_MODES = ("affine", "nonaffine", "zero")


@dataclass(frozen=True)
class TriggerConfig:
    k_bar: int = 1
    k1: float = 1.0
    k2: float = 1.0
    alpha1: ClassKSpec = field(default_factory=ClassKSpec.linear)
    alpha2: ClassKSpec = field(default_factory=ClassKSpec.linear)
    delta_bar: float = 10.0
    schedule: DeltaSchedule = field(default_factory=DeltaSchedule.constant)
    s_k: float = 12.5
    reset_r: ResetRule = field(default_factory=ResetRule)
    reset_r_hat: ResetRule = field(default_factory=lambda: ResetRule("carryover"))
    theta1: float = 1e3
    theta2: float = 1.0
    theta3: float = 1e3
    tau_hat: Union[float, Marker, None] = None
    # dwell gate: None, a duration, or "tau_m" (resolved from the bounds)
    dwell: Union[float, str, None] = None
    # "designed": phi2 follows delta_bar / delta_k; "zero": phi2' = -alpha2(phi2)
    phi_bar: str = "designed"
    phi3: str = "affine"
    lambda2: float = 1.0  # used by phi3 = "nonaffine"
    name: str = "custom"

    def __post_init__(self):
        if self.k_bar not in (0, 1):
            raise DomainError("k_bar must be 0 or 1")
        if self.k1 < 0 or self.k2 < 0:
            raise DomainError("k1 and k2 must be nonnegative")
        if self.phi_bar not in ("designed", "zero"):
            raise DomainError("phi_bar must be 'designed' or 'zero'")
        if self.phi3 not in PHI3_MODES:
            raise DomainError(f"phi3 must be one of {PHI3_MODES}")
        if self.phi_bar == "designed":
            if not self.delta_bar > 0:
                raise DomainError("delta_bar must be positive")
            if not self.s_k >= self.delta_bar:
                raise DomainError(f"s_k={self.s_k} must be >= delta_bar={self.delta_bar}")
        elif self.s_k < 0 or self.delta_bar < 0:
            raise DomainError("s_k and delta_bar must be nonnegative")
        if self.reset_r.kind == "carryover":
            raise DomainError("r_k cannot be a carryover rule")
        for name in ("theta1", "theta2", "theta3"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if isinstance(self.dwell, str) and self.dwell != "tau_m":
            raise DomainError("dwell must be a number, None or 'tau_m'")
        if isinstance(self.dwell, (int, float)) and self.dwell < 0:
            raise DomainError("dwell must be nonnegative")

    def replace(self, **changes) -> "TriggerConfig":
        return dataclasses.replace(self, **changes)

    def alpha1_dominates(self, nu: float, r_max: float = 1e3) -> bool:
        """``alpha1(r) >= nu r``: exact for linear/zero, sampled otherwise."""
        a = self.alpha1
        if a.kind == "linear":
            return a.slope >= nu
        if a.kind == "zero":
            return nu <= 0
        grid = np.concatenate([np.geomspace(1e-9, r_max, 400)])
        return bool(all(a(r) >= nu * r for r in grid))

    def floor(self, t: float) -> float:
        """Level ``phi2`` relaxes to before ``t_hat_k`` (zero without a designed threshold)."""
        if self.phi_bar == "zero":
            return 0.0
        return self.schedule.floor(t, self.delta_bar)

    def phi2_sup(self) -> float:
        if self.phi_bar == "zero":
            return self.s_k
        return max(self.s_k, self.schedule.sup(self.delta_bar), self.delta_bar)

    def s_value(self, t: float) -> float:
        """``phi2`` reset value at a sampling instant ``t``."""
        if self.phi_bar == "zero":
            return self.s_k
        return max(self.s_k, self.floor(t))


@dataclass
class TriggerState:
    phi1: float
    phi2: float
    t_k: float
    t_hat_k: float
    phase: str = "pre_hat"
    k: int = 0
    sum_r: float = 0.0
    sum_r_hat: float = 0.0
    int_delta: float = 0.0
    flags: set = field(default_factory=set)

    def copy(self) -> "TriggerState":
        return dataclasses.replace(self, flags=set(self.flags))


def _tau_hat_value(cfg: TriggerConfig) -> float:
    th = cfg.tau_hat
    if th is None:
        raise DomainError("TriggerConfig.tau_hat is not set; compute it with bounds.tau_hat")
    if th is Marker.UNBOUNDED:
        return math.inf
    if isinstance(th, Marker) or not th > 0:
        raise DomainError(f"invalid tau_hat {th!r}")
    return float(th)


def _norm(v) -> float:
    v = np.asarray(v, dtype=float).reshape(-1)
    return math.sqrt(float(v @ v))


def varphi(xi, eps, consts, lyap, plant, phi3: str = "affine", lambda2: float = 1.0) -> float:
    """``-c1 sigma |xi|^p + c2 |eps|^p + phi3(xi, eps)``.

    ``phi3`` is ``lam grad V_c(xi) . g(xi) (gamma(xi+eps) - gamma(xi))`` in the
    affine form, ``lambda2 lam |grad V_c(xi)| |eps|`` in the non-affine form.
    """
    p = consts.p
    nx = _norm(xi)
    ne = _norm(eps)
    out = -consts.c1 * consts.sigma * nx**p + consts.c2 * ne**p
    if phi3 == "affine":
        if ne > 0:
            du = np.asarray(plant.gamma(xi + eps), dtype=float) - np.asarray(plant.gamma(xi), dtype=float)
            gx = np.asarray(plant.g(xi), dtype=float).reshape(plant.n, plant.m)
            out += consts.lam * float(lyap.grad_V_c(xi) @ (gx @ du.reshape(plant.m)))
    elif phi3 == "nonaffine":
        out += lambda2 * consts.lam * _norm(lyap.grad_V_c(xi)) * ne
    return out


def Phi(state: TriggerState, xi, eps, cfg: TriggerConfig, consts, lyap, plant) -> float:
    vp = varphi(xi, eps, consts, lyap, plant, cfg.phi3, cfg.lambda2) if cfg.k_bar else 0.0
    return cfg.k_bar * vp - cfg.k1 * state.phi1 - cfg.k2 * state.phi2


def dynamics(state: TriggerState, xi, eps, cfg: TriggerConfig, consts, lyap, plant, t: float):
    """``(phi1', phi2')``. After ``t_hat_k`` ``phi2`` equals ``delta_k(t)`` and
    the returned rate is the schedule's own derivative."""
    vp = varphi(xi, eps, consts, lyap, plant, cfg.phi3, cfg.lambda2)
    dphi1 = -cfg.alpha1(state.phi1) + cfg.k2 * state.phi2 - vp
    if cfg.phi_bar == "zero" or state.phase == "pre_hat":
        dphi2 = -cfg.alpha2(state.phi2) + cfg.alpha2(cfg.floor(t))
    else:
        dphi2 = cfg.schedule.rate_of_change(t, cfg.delta_bar)
    return dphi1, dphi2


def _flag_budgets(state: TriggerState, cfg: TriggerConfig) -> None:
    if state.sum_r > cfg.theta2:
        state.flags.add("theta2")
    if state.sum_r_hat > cfg.theta3:
        state.flags.add("theta3")
    if state.int_delta > cfg.theta1:
        state.flags.add("theta1")


def initial_state(cfg: TriggerConfig, t0: float = 0.0) -> TriggerState:
    r0 = cfg.reset_r.value(0, 0.0)
    st = TriggerState(
        phi1=r0,
        phi2=cfg.s_value(t0),
        t_k=t0,
        t_hat_k=t0 + _tau_hat_value(cfg),
        sum_r=r0,
    )
    _flag_budgets(st, cfg)
    return st


def on_sample(state: TriggerState, cfg: TriggerConfig, t_new: float) -> TriggerState:
    """Reset after the sampling instant ``t_new`` (the error reset is the
    simulator's job)."""
    if not t_new > state.t_k:
        raise DomainError(f"sampling time {t_new} does not follow t_k={state.t_k}")
    st = state.copy()
    st.k += 1
    r = cfg.reset_r.value(st.k, st.phi1)
    st.t_k = t_new
    st.t_hat_k = t_new + _tau_hat_value(cfg)
    st.phase = "pre_hat"
    st.phi1 = r
    st.phi2 = cfg.s_value(t_new)
    st.sum_r += r
    _flag_budgets(st, cfg)
    return st


def on_hat_transition(state: TriggerState, cfg: TriggerConfig, t: float) -> TriggerState:
    if state.phase != "pre_hat" or t < state.t_hat_k:
        raise DomainError("hat transition requires the pre_hat phase and t >= t_hat_k")
    st = state.copy()
    st.phase = "post_hat"
    r_hat = cfg.reset_r_hat.value(st.k, st.phi1)
    st.phi1 = r_hat
    if cfg.phi_bar == "designed":
        st.phi2 = cfg.schedule.right(t, cfg.delta_bar)
    st.sum_r_hat += r_hat
    _flag_budgets(st, cfg)
    return st


def _static(**kw):
    return TriggerConfig(k1=0.0, k2=0.0, name="static", **kw)


def _mixed(delta_bar=10.0, **kw):
    return TriggerConfig(
        k1=0.0,
        delta_bar=delta_bar,
        s_k=delta_bar,
        schedule=DeltaSchedule.constant(delta_bar),
        name="mixed",
        **kw,
    )


def _floor_reset(delta_bar=10.0, **kw):
    return TriggerConfig(k1=0.0, delta_bar=delta_bar, s_k=delta_bar, name="floor_reset", **kw)


def _dynamic(**kw):
    return TriggerConfig(k2=0.0, name="dynamic", **kw)


def _integral(**kw):
    return TriggerConfig(k_bar=0, k1=1.0, k2=0.0, alpha1=ClassKSpec.zero(), name="integral", **kw)


def _regularized_integral(**kw):
    return TriggerConfig(
        k_bar=0, k1=1.0, k2=0.0, alpha1=ClassKSpec.zero(), dwell="tau_m", name="regularized_integral", **kw
    )


def _regularized_static(**kw):
    return TriggerConfig(k1=0.0, k2=0.0, dwell="tau_m", name="regularized_static", **kw)


def _free_threshold(s_k=1.0, **kw):
    return TriggerConfig(k1=0.0, phi_bar="zero", delta_bar=0.0, s_k=s_k, name="free_threshold", **kw)


PRESETS = {
    "floor_reset": _floor_reset,
    "mixed": _mixed,
    "dynamic": _dynamic,
    "integral": _integral,
    "static": _static,
    "regularized_integral": _regularized_integral,
    "regularized_static": _regularized_static,
    "free_threshold": _free_threshold,
}

_ALIASES = {"event_separation": "mixed"}


def preset(name: str, **overrides) -> TriggerConfig:
    """Trigger configuration reproducing a known triggering rule.

    ``static``: ``varphi = 0``. ``mixed``: ``varphi = k2 delta_bar``.
    ``dynamic``: ``varphi = k1 phi1`` with ``phi1' = -alpha1(phi1) - varphi``.
    ``integral``: ``int varphi = 0`` since the last event.
    ``regularized_integral`` and ``regularized_static`` add a dwell gate of
    ``tau_m`` to the integral and static rules. ``free_threshold`` uses a
    freely decaying ``phi2`` threshold. ``floor_reset`` is ``k1 = 0`` with
    ``s_k = delta_bar``.
    """
    key = _ALIASES.get(name, name)
    if key not in PRESETS:
        raise UnknownPresetError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    return PRESETS[key](**overrides)
