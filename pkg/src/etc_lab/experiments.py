"""Monte-Carlo experiments on the Lur'e benchmark.

Every run draws its initial condition and disturbance from its own child of
``SeedSequence(seed)``; run ``j`` uses the same child in every case, so cases
are compared on identical realisations. ``N`` is averaged over runs and
``tau_m`` is the minimum gap over all runs.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import bounds as bnd
from . import sim
from .analysis import OrderingCheck, check_orderings, lp_report
from .config import CASE_LABELS, ExperimentConfig
from .errors import DivergenceError, DomainError
from .plants import lure_certificate, lure_level_lower_bound, lure_plant, realize_disturbance
from .trigger import ClassKSpec, DeltaSchedule, ResetRule, TriggerConfig, preset

__all__ = [
    "CaseSpec",
    "CASES",
    "Setup",
    "RunRecord",
    "CaseSummary",
    "Table2Result",
    "EnlargementResult",
    "build_setup",
    "trigger_config",
    "run_inputs",
    "run_trigger",
    "run_case",
    "simulate_one",
    "seeds",
    "run_table2",
    "run_enlargement",
]


@dataclass(frozen=True)
class CaseSpec:
    label: str
    k1: float
    k2: float
    schedule: Optional[str]
    description: str


CASES = {
    "i": CaseSpec("i", 1.0, 1.0, "exponential", "phi1 and phi2, exponential schedule"),
    "ii": CaseSpec("ii", 1.0, 1.0, "staircase", "phi1 and phi2, staircase schedule"),
    "iii": CaseSpec("iii", 1.0, 0.0, None, "phi1 only (dynamic rule)"),
    "iv": CaseSpec("iv", 0.0, 1.0, "exponential", "phi2 only, exponential schedule"),
    "v": CaseSpec("v", 0.0, 1.0, "staircase", "phi2 only, staircase schedule"),
    "vi": CaseSpec("vi", 0.0, 0.0, None, "static rule"),
}
assert tuple(CASES) == CASE_LABELS


@dataclass(frozen=True)
class Setup:
    cfg: ExperimentConfig
    plant: object
    consts: object
    lyap: object
    lip: bnd.LipschitzCoefficients
    tau_hat: object
    error_coeffs: tuple
    level_lower: Callable[[float], float]


def build_setup(cfg: ExperimentConfig) -> Setup:
    c = cfg.certificate
    plant = lure_plant(cfg.plant.h_star)
    consts, lyap = lure_certificate(
        upsilon1=c.upsilon1, n1=c.n1, n2=c.n2, sigma=c.sigma, mu_d=c.mu_d, lam=c.lam,
        h_star=cfg.plant.h_star, p=c.p,
    )
    lip = bnd.LipschitzCoefficients(*c.lipschitz)
    th = bnd.tau_hat(consts, lip)
    a, b = bnd.lemma5_ab(consts, lip, th)
    return Setup(cfg, plant, consts, lyap, lip, th, (a, b), lure_level_lower_bound(consts, c.upsilon1, c.n2))


def _alpha(slope: float) -> ClassKSpec:
    return ClassKSpec.zero() if slope == 0 else ClassKSpec.linear(slope)


def _schedule(t, name: Optional[str]) -> DeltaSchedule:
    if name == "exponential":
        return DeltaSchedule.exponential(t.D1, t.rho1)
    if name == "staircase":
        return DeltaSchedule.staircase(t.D2, t.rho2, t.nbar)
    return DeltaSchedule.constant()


def trigger_config(setup: Setup, case: Optional[str] = None) -> TriggerConfig:
    """Trigger of a comparison case, of ``[trigger].preset`` or of the explicit gains."""
    t = setup.cfg.trigger
    shared = dict(
        tau_hat=setup.tau_hat,
        theta1=t.theta1,
        theta2=t.theta2,
        theta3=t.theta3,
        phi3=t.phi3,
        lambda2=setup.lip.lambda2,
        reset_r_hat=ResetRule(t.reset_r_hat),
    )
    if case is None and t.preset is not None:
        return preset(t.preset, **shared)
    if case is not None:
        spec = CASES[case]
        k1, k2, sched, name = spec.k1, spec.k2, spec.schedule, f"case {case}"
    else:
        k1, k2, sched, name = t.k1, t.k2, t.schedule, "configured"
    return TriggerConfig(
        k_bar=t.k_bar,
        k1=k1,
        k2=k2,
        alpha1=_alpha(t.alpha1),
        alpha2=_alpha(t.alpha2),
        delta_bar=t.delta_bar,
        s_k=t.s_k,
        schedule=_schedule(t, sched),
        name=name,
        **shared,
    )


def run_inputs(setup: Setup, seed_seq):
    """Initial condition and disturbance of one run."""
    e = setup.cfg.experiment
    rng = np.random.default_rng(seed_seq)
    angle = rng.uniform(0.0, 2.0 * math.pi)
    u = rng.uniform()
    if e.initial == "circle":
        xi0 = e.radius * np.array([math.cos(angle), math.sin(angle)])
    elif e.initial == "disk":
        xi0 = e.radius * math.sqrt(u) * np.array([math.cos(angle), math.sin(angle)])
    else:
        xi0 = np.asarray(e.xi0, dtype=float)
    dist = realize_disturbance(setup.cfg.plant.disturbance, e.duration, setup.cfg.integrator.h, q=1, rng=rng)
    return xi0, dist


def seeds(cfg: ExperimentConfig):
    return np.random.SeedSequence(cfg.experiment.seed).spawn(cfg.experiment.mc_count)


@dataclass
class RunRecord:
    index: int
    xi0: np.ndarray
    d_inf: float
    N: int = 0
    tau_m: Optional[float] = None
    mean_gap: Optional[float] = None
    analytic_tau_m: object = None
    gap_violations: int = 0
    aborted: Optional[str] = None
    lp_residual: float = math.nan
    lp_ratio: Optional[float] = None
    monitors: Optional[sim.Monitors] = None
    events: Optional[sim.EventLog] = None
    failure: Optional[str] = None


def _gap_tol(setup):
    return setup.cfg.integrator.event_tol


def simulate_one(setup: Setup, trig: TriggerConfig, index: int, xi0, dist, dwell=None, backend="auto",
                 keep_trajectory=False):
    """One run plus its analytic guarantee and Lp residual."""
    e = setup.cfg.experiment
    integ = setup.cfg.integrator
    if not keep_trajectory:
        integ = dataclasses.replace(integ, record_stride=0)
    rep = bnd.miet(setup.consts, setup.lip, trig.k2, trig.delta_bar, eps=dist.d_inf)
    if trig.dwell == "tau_m" and dwell is None:
        if not bnd.is_time(rep.tau_m):
            raise DomainError("dwell gate tau_m is not available for this configuration")
        dwell = rep.tau_m
    rec = RunRecord(index=index, xi0=np.asarray(xi0, dtype=float), d_inf=dist.d_inf, analytic_tau_m=rep.tau_m)
    try:
        res = sim.run(setup.plant, setup.consts, setup.lyap, trig, dist, xi0, e.duration, integ,
                      dwell=dwell, error_coeffs=setup.error_coeffs, backend=backend)
    except DivergenceError as exc:
        rec.failure = f"{exc} (t={exc.t})"
        return rec, None
    rec.N = res.N
    rec.tau_m = res.tau_m
    rec.mean_gap = res.events.mean_gap
    rec.aborted = res.aborted
    rec.monitors = res.monitors
    rec.events = res.events
    if bnd.is_time(rep.tau_m) and res.N:
        rec.gap_violations = int(np.sum(res.events.gaps < rep.tau_m - _gap_tol(setup)))
    v0 = setup.lyap.V(rec.xi0, setup.consts.lam)
    lp = lp_report(res.monitors.int_z_p, res.monitors.int_d_p, setup.consts, trig.k2, trig.theta1, trig.theta3, v0)
    rec.lp_residual = lp.residual
    rec.lp_ratio = lp.ratio
    return rec, res


@dataclass
class CaseSummary:
    case: str
    description: str
    k1: float
    k2: float
    schedule: Optional[str]
    runs: int
    N_mean: float
    tau_m: Optional[float]
    mean_gap: Optional[float]
    analytic_tau_m: object
    tau_hat: object
    gap_violations: int
    zeno_aborts: int
    lp_residual_min: float
    lp_ratio_mean: Optional[float]
    lp_pass_fraction: float
    phi1_min: float
    phi2_pre_margin_min: float
    pin_error_max: float
    error_bound_intervals: int
    error_bound_violations: int
    error_bound_min_slack: float
    event_residual_max: float
    xi_norm_max: float
    budget_flags: tuple
    failures: list
    config_hash: str
    records: list = field(default_factory=list, repr=False)

    @property
    def failed(self) -> bool:
        return bool(self.failures)

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "records"}
        d["failed"] = self.failed
        for k in ("analytic_tau_m", "tau_hat"):
            if isinstance(d[k], bnd.Marker):
                d[k] = str(d[k])
        d["budget_flags"] = list(d["budget_flags"])
        return d


def _min_time(values):
    """Minimum of analytic times, where NO_GUARANTEE dominates."""
    out = bnd.Marker.UNBOUNDED
    for v in values:
        out = bnd.tmin(out, v)
    return out


def _schedule_name(trig: TriggerConfig) -> Optional[str]:
    return None if trig.k2 == 0 else trig.schedule.kind


def summarize(setup: Setup, label: str, description: str, trig: TriggerConfig, records: list) -> CaseSummary:
    ok = [r for r in records if r.failure is None]
    mons = [r.monitors for r in ok]
    gaps_total = sum((r.mean_gap or 0.0) * r.N for r in ok)
    n_total = sum(r.N for r in ok)
    taus = [r.tau_m for r in ok if r.tau_m is not None]
    ratios = [r.lp_ratio for r in ok if r.lp_ratio is not None]
    flags = sorted({f for m in mons for f in m.budget_flags})

    def agg(fn, attr, empty):
        vals = [getattr(m, attr) for m in mons]
        return fn(vals) if vals else empty

    return CaseSummary(
        case=label,
        description=description,
        k1=trig.k1,
        k2=trig.k2,
        schedule=_schedule_name(trig),
        runs=len(records),
        N_mean=float(np.mean([r.N for r in ok])) if ok else math.nan,
        tau_m=min(taus) if taus else None,
        mean_gap=gaps_total / n_total if n_total else None,
        analytic_tau_m=_min_time(r.analytic_tau_m for r in records),
        tau_hat=setup.tau_hat,
        gap_violations=sum(r.gap_violations for r in ok),
        zeno_aborts=sum(1 for r in ok if r.aborted),
        lp_residual_min=min((r.lp_residual for r in ok), default=math.nan),
        lp_ratio_mean=float(np.mean(ratios)) if ratios else None,
        lp_pass_fraction=(sum(1 for r in ok if r.lp_residual >= 0) / len(ok)) if ok else 0.0,
        phi1_min=agg(min, "phi1_min", math.nan),
        phi2_pre_margin_min=agg(min, "phi2_pre_margin_min", math.nan),
        pin_error_max=agg(max, "pin_error_max", math.nan),
        error_bound_intervals=agg(sum, "error_bound_intervals", 0),
        error_bound_violations=agg(sum, "error_bound_violations", 0),
        error_bound_min_slack=agg(min, "error_bound_min_slack", math.nan),
        event_residual_max=agg(max, "event_residual_max", math.nan),
        xi_norm_max=agg(max, "xi_norm_max", math.nan),
        budget_flags=tuple(flags),
        failures=[(r.index, r.failure) for r in records if r.failure is not None],
        config_hash=setup.cfg.digest(),
        records=records,
    )


def run_trigger(setup: Setup, trig: TriggerConfig, label: str, description: str = "", backend: str = "auto",
                on_run=None) -> CaseSummary:
    """Monte-Carlo runs of one trigger on the configured seeds.

    ``on_run(record, result)`` is called after every run (``result`` is None
    for a diverged run); trajectories are recorded only when it is given.
    """
    records = []
    for j, ss in enumerate(seeds(setup.cfg)):
        xi0, dist = run_inputs(setup, ss)
        rec, res = simulate_one(setup, trig, j, xi0, dist, backend=backend, keep_trajectory=on_run is not None)
        records.append(rec)
        if on_run is not None:
            on_run(rec, res)
    return summarize(setup, label, description or trig.name, trig, records)


def run_case(cfg: ExperimentConfig, case: str, backend: str = "auto", on_run=None, setup=None) -> CaseSummary:
    """Monte-Carlo runs of one of the six comparison cases."""
    if case not in CASES:
        raise DomainError(f"unknown case {case!r}; known: {list(CASES)}")
    setup = setup or build_setup(cfg)
    return run_trigger(setup, trigger_config(setup, case), case, CASES[case].description, backend, on_run)


@dataclass
class Table2Result:
    cases: dict
    ordering: Optional[OrderingCheck]
    tau_hat: object
    config_hash: str

    def as_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "tau_hat": str(self.tau_hat) if isinstance(self.tau_hat, bnd.Marker) else self.tau_hat,
            "cases": {k: v.as_dict() for k, v in self.cases.items()},
            "ordering": self.ordering.as_dict() if self.ordering is not None else None,
        }


def run_table2(cfg: ExperimentConfig, backend: str = "auto", on_run=None) -> Table2Result:
    """All configured cases on shared seeds, with the rank-order checks when all six ran."""
    setup = build_setup(cfg)
    out = {}
    for case in cfg.experiment.cases:
        cb = None if on_run is None else (lambda rec, res, c=case: on_run(c, rec, res))
        out[case] = run_case(cfg, case, backend=backend, on_run=cb, setup=setup)
    ordering = None
    if set(CASE_LABELS) <= set(out) and bnd.is_time(setup.tau_hat):
        ordering = check_orderings(
            {c: s.N_mean for c, s in out.items()},
            {c: s.tau_m for c, s in out.items()},
            setup.tau_hat,
            {c: s.k2 for c, s in out.items()},
        )
    return Table2Result(out, ordering, setup.tau_hat, cfg.digest())


@dataclass
class EnlargementResult:
    tau_circ: list
    T_circ: float
    delta_star: list
    chi_star: list
    tau_star_max: float
    runs: int
    violations: int
    min_gap_before_T: Optional[float]
    N_mean: float
    N_before_T_mean: float
    failures: list
    config_hash: str
    records: list = field(default_factory=list, repr=False)

    @property
    def verified(self) -> bool:
        return self.violations == 0 and not self.failures

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "records"}
        d["verified"] = self.verified
        return d


def run_enlargement(cfg: ExperimentConfig, tau_circ: Optional[float] = None, T_circ: Optional[float] = None,
                    backend: str = "auto", on_run=None) -> EnlargementResult:
    """Stretch every gap before ``T_circ`` to ``tau_circ`` and verify it in simulation.

    ``tau_circ`` defaults to ``tau_circ_factor * tau_star(1)`` of each run's
    bounds. The design uses the run's disturbance sup-norm and initial state;
    ``rho_bar`` is computed with the ``phi2`` supremum of the configured
    (unenlarged) trigger. Raises :class:`UnachievableFloorError` before any
    simulation when ``tau_circ`` is not below ``tau*_max``.
    """
    setup = build_setup(cfg)
    e, t = cfg.experiment, cfg.trigger
    T = e.T_circ if T_circ is None else float(T_circ)
    base = trigger_config(setup)
    if not base.k2 > 0:
        raise DomainError("enlargement needs k2 > 0")
    c = cfg.certificate
    inputs = [run_inputs(setup, ss) for ss in seeds(cfg)]
    designs = []
    for xi0, dist in inputs:
        rep = bnd.miet(setup.consts, setup.lip, base.k2, base.delta_bar, eps=dist.d_inf)
        rb = bnd.rho_bar(setup.consts, setup.lyap, xi0, dist.d_inf, base.phi2_sup(), base.theta2, base.theta3,
                         setup.level_lower, k2=base.k2)
        rep = dataclasses.replace(rep, rho_bar=rb)
        tc = e.tau_circ_factor * rep.tau_star_1 if tau_circ is None else float(tau_circ)
        designs.append(bnd.enlargement_design(rep, tc, T, base.delta_bar, p=c.p))

    records, violations, gaps_before, n_before = [], 0, [], []
    for j, ((xi0, dist), des) in enumerate(zip(inputs, designs)):
        trig = base.replace(schedule=des.schedule(e.enlargement_after), name="enlargement")
        rec, res = simulate_one(setup, trig, j, xi0, dist, backend=backend, keep_trajectory=on_run is not None)
        records.append(rec)
        if on_run is not None:
            on_run(rec, res)
        if res is None:
            continue
        times, gaps = res.events.times, res.events.gaps
        mask = times <= T
        n_before.append(int(mask.sum()))
        if mask.any():
            gaps_before.append(float(gaps[mask].min()))
            violations += int(np.sum(gaps[mask] < des.tau_circ - setup.cfg.integrator.event_tol))
    ok = [r for r in records if r.failure is None]
    return EnlargementResult(
        tau_circ=[d.tau_circ for d in designs],
        T_circ=T,
        delta_star=[d.delta_star for d in designs],
        chi_star=[d.chi_star for d in designs],
        tau_star_max=designs[0].tau_star_max if designs else math.nan,
        runs=len(records),
        violations=violations,
        min_gap_before_T=min(gaps_before) if gaps_before else None,
        N_mean=float(np.mean([r.N for r in ok])) if ok else math.nan,
        N_before_T_mean=float(np.mean(n_before)) if n_before else math.nan,
        failures=[(r.index, r.failure) for r in records if r.failure is not None],
        config_hash=cfg.digest(),
        records=records,
    )
