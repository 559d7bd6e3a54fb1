import math

import numpy as np
import pytest

from etc_lab import trigger
from etc_lab.bounds import Marker
from etc_lab.errors import DomainError, UnknownPresetError
from etc_lab.trigger import ClassKSpec, DeltaSchedule, ResetRule, TriggerConfig


def test_class_k_shapes():
    assert ClassKSpec.linear(2.0)(3.0) == 6.0
    assert ClassKSpec.zero()(5.0) == 0.0
    assert ClassKSpec.power(2.0, 0.5)(4.0) == pytest.approx(4.0)
    tab = ClassKSpec.table([0, 1, 2], [0, 2, 3])
    assert tab(0.5) == 1.0 and tab(3.0) == 4.0 and tab(-1.0) == -2.0
    for bad in (lambda: ClassKSpec.linear(0.0), lambda: ClassKSpec.table([0, 1], [0, -1]), lambda: ClassKSpec("cubic")):
        with pytest.raises(DomainError):
            bad()


def test_exponential_schedule():
    s = DeltaSchedule.exponential(12.5, 0.2)
    assert s.value(5.0, 10.0) == pytest.approx(12.5 * math.exp(-1.0))
    assert s.left(5.0, 10.0) == s.right(5.0, 10.0) == s.value(5.0, 10.0)
    assert s.rate_of_change(5.0, 10.0) == pytest.approx(-0.2 * s.value(5.0, 10.0))
    assert s.next_jump(1.0) == math.inf and s.sup(10.0) == 12.5 and s.continuous


def test_staircase_schedule():
    s = DeltaSchedule.staircase(12.5, 3.0, 0.5)
    # n = ceil(t / nbar)
    assert s.value(0.0, 10.0) == 12.5
    assert s.value(0.3, 10.0) == pytest.approx(12.5 * 3.0)
    assert s.value(1.2, 10.0) == pytest.approx(12.5 * 27.0 / 6.0)
    # at a boundary the left limit belongs to the piece ending there
    assert s.left(1.0, 10.0) == pytest.approx(12.5 * 9.0 / 2.0)
    assert s.right(1.0, 10.0) == pytest.approx(12.5 * 27.0 / 6.0)
    assert s.next_jump(1.0) == pytest.approx(1.5) and s.next_jump(0.9) == pytest.approx(1.0)
    assert s.sup(10.0) == pytest.approx(12.5 * 4.5)
    assert not s.continuous


def test_staircase_boundaries_are_float_robust():
    s = DeltaSchedule.staircase(1.0, 2.0, 0.1)
    for j in range(1, 60):
        t = j * 0.1
        assert s.next_jump(t) > t
        assert s.right(t, 1.0) == pytest.approx(s.value(t + 1e-9, 1.0))
        assert s.left(t, 1.0) == pytest.approx(s.value(t - 1e-9, 1.0))


def test_enlargement_and_table_schedules():
    e = DeltaSchedule.enlargement(100.0, 5.0)
    assert e.value(4.9, 10.0) == 100.0 and e.value(5.0, 10.0) == 10.0 and e.left(5.0, 10.0) == 100.0
    assert e.floor(1.0, 10.0) == 100.0 and e.next_jump(6.0) == math.inf
    assert DeltaSchedule.enlargement(100.0, 5.0, after="zero").value(6.0, 10.0) == 0.0
    t = DeltaSchedule.table([0.0, 1.0], [3.0, 2.0])
    assert t.value(1.0, 10.0) == 2.0 and t.left(1.0, 10.0) == 3.0 and t.next_jump(0.5) == 1.0 and t.sup(0) == 3.0
    for bad in (
        lambda: DeltaSchedule.table([0.5], [1.0]),
        lambda: DeltaSchedule.exponential(-1.0, 1.0),
        lambda: DeltaSchedule.staircase(1.0, 0.0, 1.0),
        lambda: DeltaSchedule.enlargement(1.0, 1.0, after="never"),
        lambda: DeltaSchedule.constant(-2.0),
        lambda: DeltaSchedule("wave"),
    ):
        with pytest.raises(DomainError):
            bad()


def test_reset_rules():
    assert ResetRule().value(3, 7.0) == 0.0
    assert ResetRule("geometric", 2.0, 0.5).value(3, 7.0) == 0.25
    assert ResetRule("carryover").value(3, 7.0) == 7.0
    with pytest.raises(DomainError):
        ResetRule("geometric", 1.0, 1.0)
    with pytest.raises(DomainError):
        TriggerConfig(reset_r=ResetRule("carryover"))


def test_config_validation():
    for kw in (dict(k_bar=2), dict(k1=-1.0), dict(s_k=5.0), dict(delta_bar=0.0), dict(theta1=0.0),
               dict(dwell="always"), dict(dwell=-1.0), dict(phi3="cubic"), dict(phi_bar="free")):
        with pytest.raises(DomainError):
            TriggerConfig(**kw)


def test_floor_sup_and_reset_level():
    cfg = TriggerConfig(schedule=DeltaSchedule.exponential(12.5, 0.1))
    assert cfg.floor(3.0) == 10.0 and cfg.phi2_sup() == 12.5 and cfg.s_value(3.0) == 12.5
    z = trigger.preset("free_threshold", s_k=2.0)
    assert z.floor(3.0) == 0.0 and z.s_value(1.0) == 2.0
    assert TriggerConfig().alpha1_dominates(0.5) and not TriggerConfig().alpha1_dominates(2.0)


def test_sample_and_hat_transitions():
    cfg = TriggerConfig(tau_hat=0.1, schedule=DeltaSchedule.staircase(12.5, 3.0, 0.5),
                        reset_r=ResetRule("geometric", 1.0, 0.5), theta2=1.2)
    st = trigger.initial_state(cfg)
    assert st.phi1 == 1.0 and st.phi2 == 12.5 and st.t_hat_k == pytest.approx(0.1)
    st.phi1, st.phi2 = 3.0, 11.0
    with pytest.raises(DomainError):
        trigger.on_hat_transition(st, cfg, 0.05)
    post = trigger.on_hat_transition(st, cfg, 1.0)
    assert post.phase == "post_hat" and post.phi1 == 3.0  # carryover
    assert post.phi2 == cfg.schedule.right(1.0, cfg.delta_bar)
    nxt = trigger.on_sample(post, cfg, 1.2)
    assert (nxt.k, nxt.phi1, nxt.phi2, nxt.phase) == (1, 0.5, cfg.s_value(1.2), "pre_hat")
    assert nxt.t_hat_k == pytest.approx(1.3) and "theta2" in nxt.flags
    assert post.k == 0  # states are copied, not mutated
    with pytest.raises(DomainError):
        trigger.on_sample(nxt, cfg, 1.2)


def test_tau_hat_must_be_set():
    with pytest.raises(DomainError):
        trigger.initial_state(TriggerConfig())
    st = trigger.initial_state(TriggerConfig(tau_hat=Marker.UNBOUNDED))
    assert st.t_hat_k == math.inf


def test_varphi_forms(lure):
    k, lyap, plant = lure["consts"], lure["lyap"], lure["plant"]
    xi, eps = np.array([0.3, -0.4]), np.array([0.05, 0.02])
    base = -k.c1 * k.sigma * 0.25 + k.c2 * float(eps @ eps)
    assert trigger.varphi(xi, eps, k, lyap, plant, "zero") == pytest.approx(base)
    # u = -(xi2 + eps2), g = [0, 1]
    aff = base + k.lam * lyap.grad_V_c(xi)[1] * (-eps[1])
    assert trigger.varphi(xi, eps, k, lyap, plant, "affine") == pytest.approx(aff)
    non = base + 2.0 * k.lam * np.linalg.norm(lyap.grad_V_c(xi)) * np.linalg.norm(eps)
    assert trigger.varphi(xi, eps, k, lyap, plant, "nonaffine", 2.0) == pytest.approx(non)
    assert trigger.varphi(xi, eps, k, lyap, plant, "nonaffine", 1.0) >= trigger.varphi(xi, eps, k, lyap, plant)


def test_Phi_and_dynamics(lure):
    k, lyap, plant = lure["consts"], lure["lyap"], lure["plant"]
    cfg = TriggerConfig(k1=2.0, k2=0.5, tau_hat=0.01, schedule=DeltaSchedule.exponential(12.5, 0.1))
    st = trigger.initial_state(cfg)
    st.phi1 = 0.3
    xi, eps = np.array([0.3, -0.4]), np.array([0.05, 0.02])
    vp = trigger.varphi(xi, eps, k, lyap, plant)
    assert trigger.Phi(st, xi, eps, cfg, k, lyap, plant) == pytest.approx(vp - 0.6 - 0.5 * 12.5)
    d1, d2 = trigger.dynamics(st, xi, eps, cfg, k, lyap, plant, 0.0)
    assert d1 == pytest.approx(-0.3 + 0.5 * 12.5 - vp) and d2 == pytest.approx(-(12.5 - 10.0))
    post = trigger.on_hat_transition(st, cfg, 0.01)
    _, d2 = trigger.dynamics(post, xi, eps, cfg, k, lyap, plant, 0.01)
    assert d2 == pytest.approx(cfg.schedule.rate_of_change(0.01, 10.0))
    st0 = trigger.initial_state(cfg.replace(k_bar=0))
    assert trigger.Phi(st0, xi, eps, cfg.replace(k_bar=0), k, lyap, plant) == pytest.approx(-2.0 * 0 - 0.5 * 12.5)


def test_presets():
    assert set(trigger.PRESETS) >= {"static", "mixed", "dynamic", "integral", "regularized_integral",
                                    "regularized_static", "free_threshold", "floor_reset"}
    s = trigger.preset("static")
    assert (s.k1, s.k2, s.k_bar) == (0.0, 0.0, 1)
    m = trigger.preset("mixed", delta_bar=2.0)
    assert (m.k1, m.delta_bar, m.s_k, m.schedule.value(9.0, 2.0)) == (0.0, 2.0, 2.0, 2.0)
    i = trigger.preset("integral")
    assert i.k_bar == 0 and i.alpha1.kind == "zero" and i.k2 == 0.0
    assert trigger.preset("regularized_integral").dwell == "tau_m" and trigger.preset("regularized_static").dwell == "tau_m"
    assert trigger.preset("event_separation").name == "mixed"
    assert trigger.preset("dynamic", tau_hat=0.1).tau_hat == 0.1
    with pytest.raises(UnknownPresetError):
        trigger.preset("nonsense")
