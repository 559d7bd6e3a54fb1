import math

import numpy as np
import pytest

from etc_lab import bounds
from etc_lab.config import default_config
from etc_lab.errors import UnachievableFloorError
from etc_lab.experiments import (
    CASES,
    build_setup,
    run_case,
    run_enlargement,
    run_inputs,
    run_table2,
    seeds,
    trigger_config,
)


@pytest.fixture(scope="module")
def small():
    return default_config().with_overrides(mc_count=3, duration=5.0)


def test_case_definitions(small):
    setup = build_setup(small)
    assert setup.tau_hat == pytest.approx(1.7898e-3, rel=1e-4)
    for label, spec in CASES.items():
        t = trigger_config(setup, label)
        assert (t.k1, t.k2) == (spec.k1, spec.k2)
        assert t.tau_hat == setup.tau_hat and t.theta1 == 500.0
    assert trigger_config(setup, "i").schedule.kind == "exponential"
    assert trigger_config(setup, "v").schedule.kind == "staircase"
    s = trigger_config(setup, "ii").schedule
    assert (s.D, s.rate, s.nbar) == (2.0, 3.0, 10.0)


def test_inputs_are_shared_across_cases(small):
    setup = build_setup(small)
    a = [run_inputs(setup, ss) for ss in seeds(small)]
    b = [run_inputs(setup, ss) for ss in seeds(small)]
    for (x1, d1), (x2, d2) in zip(a, b):
        assert np.array_equal(x1, x2) and np.array_equal(d1.values, d2.values)
        assert np.linalg.norm(x1) == pytest.approx(1.0)
    assert not np.array_equal(a[0][0], a[1][0])


def test_disk_initial_conditions_keep_the_disturbance_stream():
    cfg = default_config().with_overrides(mc_count=2, duration=1.0)
    import dataclasses

    disk = dataclasses.replace(cfg, experiment=dataclasses.replace(cfg.experiment, initial="disk"))
    (xa, da), (xb, db) = (run_inputs(build_setup(c), seeds(c)[0]) for c in (cfg, disk))
    assert np.linalg.norm(xb) < 1.0 and np.array_equal(da.values, db.values)


def test_run_case_is_deterministic(small):
    a = run_case(small, "i")
    b = run_case(small, "i")
    assert a.as_dict() == b.as_dict()
    assert a.runs == 3 and a.config_hash == small.digest()
    assert a.gap_violations == 0 and not a.failed
    assert a.phi1_min >= -1e-9 and a.pin_error_max == 0.0
    assert a.lp_pass_fraction == 1.0
    assert bounds.is_time(a.analytic_tau_m)


def test_backends_give_the_same_summary(small):
    a = run_case(small, "iv", backend="auto")
    b = run_case(small, "iv", backend="python")
    assert a.N_mean == b.N_mean
    assert a.tau_m == pytest.approx(b.tau_m, abs=1e-12)


def test_table_on_a_subset(small):
    res = run_table2(small.with_overrides(cases=["i", "vi"], duration=2.0))
    assert list(res.cases) == ["i", "vi"] and res.ordering is None
    assert res.cases["vi"].analytic_tau_m is bounds.Marker.NO_GUARANTEE
    assert res.as_dict()["cases"]["vi"]["analytic_tau_m"] == "no-guarantee"


def test_enlargement_defaults_and_floor(small):
    cfg = small.with_overrides(duration=3.0)
    res = run_enlargement(cfg, T_circ=2.0)
    assert res.runs == 3 and res.verified and res.T_circ == 2.0
    assert all(ds > 10.0 for ds in res.delta_star)
    setup = build_setup(cfg)
    for rec, tc in zip(res.records, res.tau_circ):
        rep = bounds.miet(setup.consts, setup.lip, 1.0, 10.0, eps=rec.d_inf)
        assert tc == pytest.approx(2.0 * rep.tau_star_1)
    with pytest.raises(UnachievableFloorError):
        run_enlargement(cfg, tau_circ=2 * res.tau_star_max)


def test_no_event_case_reports_none():
    cfg = default_config().with_overrides(mc_count=1, duration=0.1)
    s = run_case(cfg, "i")
    assert s.N_mean == 0.0 and s.tau_m is None and s.mean_gap is None
    assert math.isfinite(s.lp_residual_min)
