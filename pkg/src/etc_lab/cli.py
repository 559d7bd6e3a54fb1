"""Command-line interface ``etc-lab``.

Subcommands
-----------
bounds   analytic constants and guarantees of the configured loop
run      Monte-Carlo runs of one case (``--case``) or of the configured trigger
table2   the six-case comparison with rank-order checks
enlarge  inter-event time enlargement study
presets  list the known triggering rules

Every file written is a deterministic function of the configuration: summaries
are JSON with sorted keys plus CSV, both carrying the configuration hash.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

from . import __version__
from . import bounds as bnd
from .certificate import lambda_range
from .config import CASE_LABELS, default_config, load_config
from .errors import EtcLabError
from .experiments import CASES, build_setup, run_enlargement, run_table2, run_trigger, trigger_config
from .trigger import PRESETS, preset

__all__ = ["main", "build_parser"]

SUMMARY_FIELDS = (
    "case", "k1", "k2", "schedule", "runs", "N_mean", "tau_m", "mean_gap", "analytic_tau_m", "tau_hat",
    "gap_violations", "zeno_aborts", "lp_residual_min", "lp_ratio_mean", "lp_pass_fraction", "phi1_min",
    "phi2_pre_margin_min", "pin_error_max", "error_bound_intervals", "error_bound_violations", "error_bound_min_slack",
    "event_residual_max", "xi_norm_max", "budget_flags", "failed", "config_hash",
)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, bnd.Marker):
        return str(v)
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if hasattr(v, "item"):
        return _jsonable(v.item())
    return v


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def _cell(v) -> str:
    v = _jsonable(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, list):
        return ";".join(str(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])


def _write_text(path: Path, text: str):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _summary_row(s) -> list:
    d = s.as_dict()
    return [d[k] for k in SUMMARY_FIELDS]


def _events_rows(records):
    for rec in records:
        if rec.events is None:
            continue
        for k, t, gap, cause in rec.events.rows():
            yield rec.index, k, t, gap, cause


def _run_rows(records):
    for r in records:
        yield (r.index, r.xi0[0], r.xi0[1], r.d_inf, r.N, r.tau_m, r.mean_gap, r.analytic_tau_m,
               r.gap_violations, r.aborted, r.lp_residual, r.lp_ratio, r.failure)


RUN_FIELDS = ("run", "xi0_1", "xi0_2", "d_inf", "N", "tau_m", "mean_gap", "analytic_tau_m", "gap_violations",
              "aborted", "lp_residual", "lp_ratio", "failure")


def _trajectory_writer(out: Path, enabled: bool, label: str):
    if not enabled:
        return None
    tdir = out / "trajectories"
    tdir.mkdir(parents=True, exist_ok=True)

    def write(rec, res):
        if res is None or res.trajectory is None:
            return
        _write_csv(tdir / f"{label}_run{rec.index:03d}.csv", res.columns, res.trajectory.tolist())

    return write


def _load(args):
    cfg = load_config(args.config) if args.config else default_config()
    cases = None
    if getattr(args, "case", None):
        cases = args.case
    return cfg.with_overrides(seed=args.seed, duration=args.duration, step=args.step, out_dir=args.out_dir,
                              cases=cases, mc_count=getattr(args, "mc_count", None))


def _out_dir(cfg) -> Path:
    out = Path(cfg.experiment.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_bounds(args) -> int:
    cfg = _load(args)
    setup = build_setup(cfg)
    trig = trigger_config(setup)
    rep = bnd.miet(setup.consts, setup.lip, trig.k2, trig.delta_bar, eps=args.eps)
    lo, hi = lambda_range(setup.consts)
    doc = {
        "config_hash": cfg.digest(),
        "constants": setup.consts.as_dict(),
        "lambda_range": [lo, hi],
        "lambda_feasible": lo < setup.consts.lam < hi,
        "bounds": rep.as_dict(),
        "tau_star_max": bnd.tau_star_max(rep.kappa, rep.lambda2, rep.m1) if math.isfinite(rep.kappa) else None,
        "relations": {"a_c": rep.a * rep.c, "b_c": rep.b * rep.c},
    }
    text = _dump_json(doc)
    out = _out_dir(cfg)
    _write_text(out / "bounds.json", text)
    flat = {**rep.as_dict(), "lambda_lo": lo, "lambda_hi": hi, "config_hash": cfg.digest()}
    _write_csv(out / "bounds.csv", list(flat), [list(flat.values())])
    sys.stdout.write(text)
    return 0


def _case_outputs(out: Path, label: str, summary):
    _write_text(out / f"summary_{label}.json", _dump_json(summary.as_dict()))
    _write_csv(out / f"summary_{label}.csv", SUMMARY_FIELDS, [_summary_row(summary)])
    _write_csv(out / f"events_{label}.csv", ("run", "k", "t_k", "gap", "cause"), _events_rows(summary.records))
    _write_csv(out / f"runs_{label}.csv", RUN_FIELDS, _run_rows(summary.records))


def _print_summary(s):
    tau = "-" if s.tau_m is None else f"{s.tau_m:.6g}"
    sys.stdout.write(
        f"case {s.case}: N_mean={s.N_mean:.6g} tau_m={tau} analytic_tau_m={_cell(s.analytic_tau_m)} "
        f"gap_violations={s.gap_violations} zeno_aborts={s.zeno_aborts} "
        f"lp_pass={s.lp_pass_fraction:.3g} failed={s.failed}\n"
    )


def cmd_run(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    setup = build_setup(cfg)
    cases = args.case or [None]
    for case in cases:
        label = case or "configured"
        trig = trigger_config(setup, case)
        desc = CASES[case].description if case else trig.name
        writer = _trajectory_writer(out, args.dump_trajectories, label)
        s = run_trigger(setup, trig, label, desc, on_run=writer)
        _case_outputs(out, label, s)
        _print_summary(s)
    return 0


def cmd_table2(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    writers = {}

    def on_run(case, rec, res):
        if case not in writers:
            writers[case] = _trajectory_writer(out, True, case)
        writers[case](rec, res)

    res = run_table2(cfg, on_run=on_run if args.dump_trajectories else None)
    _write_text(out / "table2.json", _dump_json(res.as_dict()))
    _write_csv(out / "table2.csv", SUMMARY_FIELDS, [_summary_row(s) for s in res.cases.values()])
    for case, s in res.cases.items():
        _write_csv(out / f"events_{case}.csv", ("run", "k", "t_k", "gap", "cause"), _events_rows(s.records))
        _write_csv(out / f"runs_{case}.csv", RUN_FIELDS, _run_rows(s.records))
        _print_summary(s)
    if res.ordering is not None:
        o = res.ordering
        sys.stdout.write(f"N ordering: {o.n_order}; tau_m ordering: {o.tau_order}; "
                         f"tau_m/tau_hat >= 3: {o.tau_ratio_ok}\n")
    return 0


def cmd_enlarge(args) -> int:
    cfg = _load(args)
    out = _out_dir(cfg)
    writer = _trajectory_writer(out, args.dump_trajectories, "enlargement")
    res = run_enlargement(cfg, tau_circ=args.tau_circ, T_circ=args.T_circ, on_run=writer)
    _write_text(out / "enlargement.json", _dump_json(res.as_dict()))
    rows = []
    for rec, tc, ds in zip(res.records, res.tau_circ, res.delta_star):
        rows.append((rec.index, tc, ds, rec.N, rec.tau_m, rec.failure, res.config_hash))
    _write_csv(out / "enlargement.csv", ("run", "tau_circ", "delta_star", "N", "tau_m", "failure", "config_hash"),
               rows)
    _write_csv(out / "events_enlargement.csv", ("run", "k", "t_k", "gap", "cause"), _events_rows(res.records))
    sys.stdout.write(f"enlargement: verified={res.verified} violations={res.violations} "
                     f"min_gap_before_T={_cell(res.min_gap_before_T)} N_mean={res.N_mean:.6g}\n")
    return 0 if res.verified else 1


def cmd_presets(args) -> int:
    for name in sorted(PRESETS):
        c = preset(name)
        sys.stdout.write(
            f"{name}: k_bar={c.k_bar} k1={c.k1} k2={c.k2} delta_bar={c.delta_bar} schedule={c.schedule.kind} "
            f"dwell={c.dwell} phi_bar={c.phi_bar}\n"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration (default: packaged Lur'e benchmark)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--duration", type=float, help="horizon in seconds")
    common.add_argument("--step", type=float, help="integrator step in seconds")
    common.add_argument("--out-dir", help="output directory")
    mc = argparse.ArgumentParser(add_help=False)
    mc.add_argument("--mc-count", type=int, help="Monte-Carlo runs per case")
    mc.add_argument("--dump-trajectories", action="store_true", help="write one trajectory CSV per run")

    p = argparse.ArgumentParser(prog="etc-lab", description="Event-triggered control with dynamic triggering.")
    p.add_argument("--version", action="version", version=f"etc-lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", parents=[common], help="analytic bounds report")
    b.add_argument("--eps", type=float, default=0.0, help="disturbance sup-norm bound")
    b.set_defaults(func=cmd_bounds)

    r = sub.add_parser("run", parents=[common, mc], help="Monte-Carlo runs of one trigger")
    r.add_argument("--case", action="append", choices=CASE_LABELS,
                   help="comparison case (repeatable); default: the configured trigger")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("table2", parents=[common, mc], help="six-case comparison")
    t.add_argument("--case", action="append", choices=CASE_LABELS, help="restrict to these cases (repeatable)")
    t.set_defaults(func=cmd_table2)

    e = sub.add_parser("enlarge", parents=[common, mc], help="inter-event time enlargement study")
    e.add_argument("--tau-circ", type=float, help="target gap (default: factor * tau*(1))")
    e.add_argument("--T-circ", type=float, help="enlargement horizon in seconds")
    e.set_defaults(func=cmd_enlarge)

    ps = sub.add_parser("presets", help="list triggering presets")
    ps.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EtcLabError as exc:
        sys.stderr.write(f"etc-lab: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
