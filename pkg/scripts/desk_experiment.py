#!/usr/bin/env python3
"""Desk-scale centered-cylinder experiment: BP baseline vs. INR.

Usage:
  python scripts/desk_experiment.py --seed 0 --noise 0.05
  python scripts/desk_experiment.py --seed 1 --set hidden_width=128 --set omega=4
"""

import argparse
import json
import logging
import time

from implicit_eisp import metrics
from implicit_eisp.inversion import bp_reconstruct, render, train
from implicit_eisp.physics import simulate_measurements
from implicit_eisp.scenes import centered_cylinder, rasterize
from implicit_eisp.system import DESK, Rng


def parse_set(items):
    out = {}
    for item in items:
        k, v = item.split("=", 1)
        out[k] = json.loads(v)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", type=float, default=0.05)
    ap.add_argument("--receivers", type=int, default=None)
    ap.add_argument("--set", action="append", default=[], help="config override key=json")
    ap.add_argument("--every", type=int, default=250, help="print metrics every N iterations")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = DESK.replace(seed=args.seed, noise_level=args.noise, **parse_set(args.set))
    if args.receivers:
        cfg = cfg.replace(n_rx=args.receivers)
    scene = centered_cylinder()
    meas = simulate_measurements(scene, cfg, Rng(cfg.seed, stream=100))
    truth = rasterize(scene, cfg.grid_m)
    bp = bp_reconstruct(meas)
    print("BP ", metrics.evaluate(bp.eps_grid, truth).to_text())

    def cb(it, problem, theta, phi, samples):
        if it % args.every == 0 and it:
            terms = problem.evaluate(theta, phi, samples, grad=False)
            rec = render(problem.checkpoint(theta, phi), cfg.grid_m)
            print(f"{it:5d}", metrics.evaluate(rec.eps_grid, truth).to_text(),
                  f"data={terms.data:.3e} state={terms.state:.3e} tv={terms.tv:.3e}", flush=True)

    t0 = time.time()
    ck, report = train(meas, cfg, Rng(cfg.seed), callback=cb)
    rec = render(ck, cfg.grid_m)
    last = report.history[-1]
    print(f"final loss total={last.total:.4e} data={last.data:.4e} state={last.state:.4e} tv={last.tv:.4e}")
    print("INR", metrics.evaluate(rec.eps_grid, truth).to_text(), f"({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main()
