"""Throughput of the compiled kernel against the pure-Python engine.

Runs the same Lur'e loop (case i and the static rule) on both backends and
reports integration steps per second and the speed-up. Usage::

    python benchmarks/bench_kernel.py [--duration 2.0] [--repeat 3]
"""

import argparse
import time

import numpy as np

from etc_lab import bounds, sim
from etc_lab.config import default_config
from etc_lab.experiments import build_setup, run_inputs, seeds, trigger_config


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=2.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    cfg = default_config().with_overrides(duration=args.duration, mc_count=1)
    setup = build_setup(cfg)
    xi0, dist = run_inputs(setup, seeds(cfg)[0])
    integ = cfg.integrator
    steps = int(round(args.duration / integ.h))
    if sim.BACKEND != "compiled":
        print("compiled kernel not built; only the Python engine is timed")
    print(f"{'case':>8} {'backend':>9} {'seconds':>9} {'steps/s':>12} {'events':>7}")
    for case in ("i", "vi"):
        trig = trigger_config(setup, case)
        rows = {}
        for backend in ("compiled", "python"):
            if backend == "compiled" and sim.BACKEND != "compiled":
                continue
            sec, res = _time(lambda: sim.run(setup.plant, setup.consts, setup.lyap, trig, dist, xi0, args.duration,
                                             integ, error_coeffs=setup.error_coeffs, backend=backend), args.repeat)
            rows[backend] = (sec, res)
            print(f"{case:>8} {backend:>9} {sec:9.4f} {steps / sec:12.4g} {res.N:7d}")
        if len(rows) == 2:
            same = np.array_equal(rows["compiled"][1].events.times, rows["python"][1].events.times)
            print(f"{case:>8} speed-up {rows['python'][0] / rows['compiled'][0]:.1f}x, identical events: {same}")


if __name__ == "__main__":
    main()
