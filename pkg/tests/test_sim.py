import math
import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from etc_lab import bounds, plants, sim, trigger
from etc_lab.certificate import CertificateConstants, LyapunovPair
from etc_lab.errors import DivergenceError, DomainError
from etc_lab.sim import HybridLoop, IntegratorConfig, SimState

H = 1e-4


def _dist(duration, seed=0, kind="gaussian", hold=0.01):
    spec = plants.DisturbanceSpec(kind, hold=hold) if kind != "zero" else plants.DisturbanceSpec()
    return plants.realize_disturbance(spec, duration, H, rng=seed)


def _case(lure, name="i"):
    sched = {"i": trigger.DeltaSchedule.exponential(12.5, 0.2),
             "ii": trigger.DeltaSchedule.staircase(12.5, 3.0, 0.5)}.get(name, trigger.DeltaSchedule.constant())
    k1, k2 = {"i": (1, 1), "ii": (1, 1), "iii": (1, 0), "vi": (0, 0)}[name]
    return trigger.TriggerConfig(k1=k1, k2=k2, schedule=sched, tau_hat=lure["tau_hat"])


def _scalar_loop(a=-1.0, gain=0.0):
    plant = plants.linear_plant([[a]], [[1.0]], [[gain]], E=[[1.0]])
    lyap = LyapunovPair(V_s=lambda x: float(x @ x), V_c=lambda x: float(x @ x), grad_V_c=lambda x: 2 * x)
    consts = CertificateConstants.unchecked(c1=1.0, c2=1.0, c3=1.0, cbar1=1.0, cbar2=1.0, cbar3=2.0, mu=1.0,
                                            mu_d=2.0, p=2.0, sigma=0.5, lam=0.1)
    return plant, consts, lyap


def test_rk4_step_local_error():
    plant, consts, lyap = _scalar_loop()
    cfg = trigger.TriggerConfig(k1=0.0, k2=0.0, tau_hat=1.0)
    loop = HybridLoop(plant, consts, lyap, cfg, _dist(1.0, kind="zero"), IntegratorConfig(), 1.0)
    st = SimState(0.0, np.array([1.0]), np.array([1.0]), np.zeros(1), trigger.initial_state(cfg))
    for h in (1e-2, 1e-3):
        out = sim.step(loop, st, h, [0.0])
        err = abs(out.xi[0] - math.exp(-h))
        assert err == pytest.approx(h**5 / 120, rel=0.05)


def test_flow_between_events_matches_reference_solver(lure):
    cfg = _case(lure, "i")
    dist = _dist(1.0, kind="zero")
    loop = HybridLoop(lure["plant"], lure["consts"], lure["lyap"], cfg, dist, IntegratorConfig(), lure["tau_hat"])
    xi0 = np.array([0.6, -0.8])
    held = xi0 + np.array([0.01, -0.02])
    u = np.asarray(lure["plant"].gamma(held), dtype=float)
    st = SimState(0.0, xi0.copy(), held, u, trigger.initial_state(cfg))
    st.trig.phase = "post_hat"  # pinned phi2 follows the schedule
    for _ in range(2000):
        st = sim.step(loop, st, H, [0.0])

    def rhs(t, y):
        xi = y[:2]
        eps = held - xi
        vp = trigger.varphi(xi, eps, lure["consts"], lure["lyap"], lure["plant"])
        phi2 = cfg.schedule.value(t, cfg.delta_bar)
        return np.concatenate([lure["plant"].f_u(xi, np.zeros(1), u), [-y[2] + phi2 - vp]])

    ref = solve_ivp(rhs, (0.0, 0.2), np.concatenate([xi0, [trigger.initial_state(cfg).phi1]]),
                    method="DOP853", rtol=1e-12, atol=1e-14)
    assert np.allclose(st.xi, ref.y[:2, -1], atol=1e-11)
    assert st.trig.phi1 == pytest.approx(ref.y[2, -1], abs=1e-9)
    assert st.trig.phi2 == pytest.approx(cfg.schedule.left(0.2, cfg.delta_bar), rel=1e-12)


def test_locate_event():
    plant, consts, lyap = _scalar_loop()
    cfg = trigger.TriggerConfig(k1=0.0, k2=0.0, tau_hat=1.0)
    loop = HybridLoop(plant, consts, lyap, cfg, _dist(1.0, kind="zero"), IntegratorConfig(), 1.0)
    # Phi = -0.5 x^2 + (1 - x)^2 with x(t) = e^{-t}: zero at x = 1 / (1 + sqrt(0.5))
    st = SimState(0.0, np.array([1.0]), np.array([1.0]), np.zeros(1), trigger.initial_state(cfg))
    t_exact = -math.log(1 / (1 + math.sqrt(0.5)))
    te, out = sim.locate_event(loop, st, 0.6, [0.0], 1e-12)
    assert te == pytest.approx(t_exact, abs=2e-3)  # RK4 error over one coarse sub-step
    # the located instant brackets the crossing of the discrete flow
    y0 = np.array([1.0, 0.0, st.trig.phi2])
    assert loop.Phi(loop.rk4(0.0, y0, te - 2e-12, np.zeros(1))) < 0.0 <= loop.Phi(loop.rk4(0.0, y0, te, np.zeros(1)))
    assert out.t == te and out.xi[0] == loop.rk4(0.0, y0, te, np.zeros(1))[0]
    with pytest.raises(DomainError):
        sim.locate_event(loop, st, 0.1, [0.0], 1e-12)


@pytest.mark.skipif(sim.BACKEND != "compiled", reason="compiled kernel not built")
@pytest.mark.parametrize("name", ["i", "ii", "iii", "vi"])
def test_backends_agree(lure, name):
    cfg = _case(lure, name)
    dist = _dist(2.0, seed=4)
    integ = IntegratorConfig(record_stride=100)
    rep = bounds.miet(lure["consts"], lure["lip"], cfg.k2, cfg.delta_bar)
    args = (lure["plant"], lure["consts"], lure["lyap"], cfg, dist, np.array([0.6, 0.8]), 2.0, integ)
    a = sim.run(*args, error_coeffs=(rep.a, rep.b), backend="compiled")
    b = sim.run(*args, error_coeffs=(rep.a, rep.b), backend="python")
    assert (a.backend, b.backend) == ("compiled", "python")
    assert a.N == b.N and a.aborted == b.aborted
    assert np.allclose(a.events.times, b.events.times, rtol=0, atol=1e-12)
    assert np.array_equal(a.events.causes, b.events.causes)
    assert a.trajectory.shape == b.trajectory.shape
    assert np.allclose(a.trajectory, b.trajectory, rtol=1e-9, atol=1e-12)
    ma, mb = a.monitors, b.monitors
    for f in ("phi1_min", "int_z_p", "int_d_p", "error_bound_min_slack", "int_delta"):
        assert getattr(ma, f) == pytest.approx(getattr(mb, f), rel=1e-8, abs=1e-12), f
    assert ma.error_bound_intervals == mb.error_bound_intervals


def test_pure_python_switch():
    env = dict(os.environ, ETC_LAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import etc_lab.sim as s; print(s.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_compiled_backend_rejects_unfit_loops(lure):
    plant, consts, lyap = _scalar_loop()
    cfg = trigger.TriggerConfig(k1=0.0, k2=0.0, tau_hat=1.0)
    with pytest.raises(DomainError):
        sim.run(plant, consts, lyap, cfg, _dist(0.1, kind="zero"), [1.0], 0.1, backend="compiled")
    with pytest.raises(DomainError):
        sim.run(plant, consts, lyap, cfg, _dist(0.1, kind="zero"), [1.0], 0.1, backend="gpu")


def test_zero_state_without_disturbance_never_samples(lure):
    res = sim.run(lure["plant"], lure["consts"], lure["lyap"], _case(lure, "vi"), _dist(1.0, kind="zero"),
                  np.zeros(2), 1.0)
    assert res.N == 0 and res.tau_m is None and np.all(res.xi_final == 0)


def test_zeno_guard(lure):
    args = (lure["plant"], lure["consts"], lure["lyap"], _case(lure, "vi"), _dist(5.0), np.array([1.0, 0.0]), 5.0)
    res = sim.run(*args, IntegratorConfig(max_events=5))
    assert res.aborted == "zeno" and res.N == 5 and res.t_final < 5.0
    res = sim.run(*args, IntegratorConfig(min_gap=0.3))
    assert res.aborted == "zeno" and res.N == 1 and res.t_final == res.events.times[0]


def test_divergence_is_reported():
    plant, consts, lyap = _scalar_loop(a=5.0, gain=0.0)
    cfg = trigger.TriggerConfig(k1=0.0, k2=0.0, tau_hat=1.0, phi3="zero")
    with pytest.raises(DivergenceError):
        sim.run(plant, consts, lyap, cfg, _dist(10.0, kind="zero"), [1.0], 10.0, IntegratorConfig(divergence_norm=1e3))


def test_monitors_and_invariants(lure):
    cfg = _case(lure, "ii")
    rep = bounds.miet(lure["consts"], lure["lip"], 1.0, 10.0)
    res = sim.run(lure["plant"], lure["consts"], lure["lyap"], cfg, _dist(20.0, seed=2), np.array([0.0, 1.0]),
                  20.0, error_coeffs=(rep.a, rep.b))
    m = res.monitors
    assert res.N > 0 and res.aborted is None
    assert m.phi1_min >= -1e-9 and m.phi2_pre_margin_min >= -1e-9 and m.pin_error_max == 0.0
    assert m.error_bound_intervals >= res.N and m.error_bound_violations == 0
    assert np.all(res.events.gaps >= rep.tau_m - 1e-9)
    assert m.int_d_p > 0 and m.int_z_p > 0 and m.event_residual_max < 1e-6


def test_dwell_gate_holds_samples(lure):
    cfg = trigger.preset("regularized_static", tau_hat=lure["tau_hat"])
    res = sim.run(lure["plant"], lure["consts"], lure["lyap"], cfg, _dist(3.0, seed=1), np.array([1.0, 0.0]), 3.0,
                  dwell=0.3)
    assert res.N > 3
    assert np.all(res.events.gaps >= 0.3 - 1e-12)
    assert "dwell-forced" in {c for _, _, _, c in res.events.rows()}
    with pytest.raises(DomainError):
        sim.run(lure["plant"], lure["consts"], lure["lyap"], cfg, _dist(1.0), np.array([1.0, 0.0]), 1.0)


def test_trajectory_recording(lure):
    res = sim.run(lure["plant"], lure["consts"], lure["lyap"], _case(lure, "i"), _dist(0.5),
                  np.array([1.0, 0.0]), 0.5, IntegratorConfig(record_stride=10), backend="python")
    assert res.trajectory.shape == (501, len(res.columns))
    assert res.columns[:3] == ("t", "xi1", "xi2")
    assert res.trajectory[-1, 0] == pytest.approx(0.5)


def test_input_validation(lure):
    args = (lure["plant"], lure["consts"], lure["lyap"], _case(lure, "i"), _dist(0.5))
    with pytest.raises(DomainError):
        sim.run(*args, np.zeros(3), 0.5)
    with pytest.raises(DomainError):
        sim.run(*args, np.zeros(2), -1.0)
    with pytest.raises(DomainError):
        sim.run(*args, np.zeros(2), 0.5, IntegratorConfig(h=1e-3))
    with pytest.raises(DomainError):
        IntegratorConfig(event_tol=1e-3)
    with pytest.raises(DomainError):
        sim.run(lure["plant"], lure["consts"], lure["lyap"], trigger.TriggerConfig(), _dist(0.5), np.zeros(2), 0.5)
