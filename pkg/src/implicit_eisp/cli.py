"""Command-line interface.

Subcommands compose through files: a scene document feeds ``simulate``, its
measurement document feeds the two reconstructions, a checkpoint feeds
``render``, and value sidecars feed ``evaluate``. ``pipeline`` chains all of
them. Every output goes under ``--out``.

Examples:
  eisp synth-scene --kind centered --out run/
  eisp simulate --scene run/scene.json --noise 0.05 --out run/
  eisp reconstruct-bp --measurements run/measurements.json --out run/
  eisp reconstruct-inr --measurements run/measurements.json --iters 2000 --out run/
  eisp render --checkpoint run/inr.ckpt --resolution 128 --out run/
  eisp evaluate --pred run/bp.csv --truth run/measurements.json --out run/
  eisp pipeline --preset desk-cylinder --seed 7 --out run7/
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io, metrics, scenes
from .inversion import bp_reconstruct, render, train
from .physics import simulate_measurements, subsample_receivers
from .system import PRESETS, Rng, SystemConfig

log = logging.getLogger("eisp")

# Independent RNG streams derived from the one user seed.
SCENE_STREAM = 10
NOISE_STREAM = 100


class CliError(Exception):
    pass


def resolve_config(args, base=None) -> SystemConfig:
    """Preset (or the config embedded in an input measurement file), then the
    --config document, then individual flags; later sources win."""
    if args.preset not in PRESETS:
        raise CliError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
    cfg = PRESETS[args.preset] if base is None else base
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        doc.pop("format_version", None)
        cfg = SystemConfig.from_dict({**cfg.to_dict(), **doc})
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.noise is not None:
        changes["noise_level"] = args.noise
    if args.iters is not None:
        changes["iters"] = args.iters
    return cfg.replace(**changes) if changes else cfg


def log_run(out: Path, name: str, cfg: SystemConfig) -> None:
    log.info("%s: seed=%d", name, cfg.seed)
    log.info("resolved config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
    io.save_config(out / "config.json", cfg)


def make_scene(kind: str, cfg: SystemConfig, bitmap=None) -> scenes.Scene:
    if kind == "centered":
        return scenes.centered_cylinder(roi_side=cfg.roi_side)
    if kind == "empty":
        return scenes.empty_scene(cfg.roi_side)
    if kind == "random":
        return scenes.random_cylinders(Rng(cfg.seed, SCENE_STREAM), roi_side=cfg.roi_side)
    if kind == "bitmap":
        if bitmap is None:
            raise CliError("--kind bitmap needs --bitmap PATH (a .pgm or .csv grid in [0, 1])")
        p = Path(bitmap)
        gray = io.read_pgm(p) if p.suffix == ".pgm" else io.read_values(p)
        return scenes.bitmap_to_scene(gray)
    raise CliError(f"unknown scene kind {kind!r}")


def do_simulate(scene, cfg: SystemConfig, receivers=None):
    meas = simulate_measurements(scene, cfg, Rng(cfg.seed, NOISE_STREAM))
    if receivers is not None and receivers != cfg.n_rx:
        meas = subsample_receivers(meas, receivers)
    return meas


def do_inr(meas, cfg: SystemConfig, out: Path):
    cfg = cfg.replace(n_rx=meas.config.n_rx)
    ck, report = train(meas, cfg, Rng(cfg.seed))
    io.save_checkpoint(out / "inr.ckpt", ck)
    io.write_loss_log(out / "loss_log.csv", report)
    io.write_timing_log(out / "timing_log.csv", report)
    rec = render(ck, cfg.grid_m)
    io.export_image(rec.eps_grid, out / "inr")
    last = report.history[-1]
    log.info("inr: %d iterations, final loss %.4e (data %.4e state %.4e tv %.4e), %.1f s",
             len(report.history), last.total, last.data, last.state, last.tv, sum(report.seconds))
    return ck, rec


def load_truth(path) -> np.ndarray:
    p = Path(path)
    if p.suffix == ".json":
        meas = io.load_measurements(p)
        if meas.ground_truth is None:
            raise CliError(f"{p} carries no ground truth")
        return meas.ground_truth
    return io.read_values(p)


def write_metrics(out: Path, name: str, report: metrics.MetricReport) -> None:
    (out / f"{name}.txt").write_text(report.to_text() + "\n")
    (out / f"{name}.json").write_text(json.dumps(io.metric_doc(report), indent=1, sort_keys=True) + "\n")
    print(f"{name}: {report.to_text()}")


# --- subcommands ---------------------------------------------------------------

def cmd_synth_scene(args, cfg, out):
    scene = make_scene(args.kind, cfg, args.bitmap)
    io.save_scene(out / "scene.json", scene)
    io.export_image(scenes.rasterize(scene, cfg.grid_gen), out / "scene")


def cmd_simulate(args, cfg, out):
    scene = io.load_scene(args.scene)
    meas = do_simulate(scene, cfg, args.receivers)
    io.save_measurements(out / "measurements.json", meas)
    log.info("simulated %d rx x %d tx at noise %.3g", meas.config.n_rx, meas.config.n_tx, cfg.noise_level)


def cmd_reconstruct_bp(args, cfg, out):
    meas = io.load_measurements(args.measurements)
    rec = bp_reconstruct(meas, cfg.replace(n_rx=meas.config.n_rx))
    io.export_image(rec.eps_grid, out / "bp")


def cmd_reconstruct_inr(args, cfg, out):
    meas = io.load_measurements(args.measurements)
    do_inr(meas, cfg, out)


def cmd_render(args, cfg, out):
    ck = io.load_checkpoint(args.checkpoint)
    res = args.resolution or cfg.grid_m
    rec = render(ck, res)
    io.export_image(rec.eps_grid, out / f"render_{res}")


def cmd_evaluate(args, cfg, out):
    pred = io.read_values(args.pred)
    truth = load_truth(args.truth)
    write_metrics(out, "metrics", metrics.evaluate(pred, truth))


def cmd_pipeline(args, cfg, out):
    t0 = time.perf_counter()
    scene = make_scene(args.kind, cfg, args.bitmap)
    io.save_scene(out / "scene.json", scene)
    meas = do_simulate(scene, cfg, args.receivers)
    io.save_measurements(out / "measurements.json", meas)
    truth = meas.ground_truth

    bp = bp_reconstruct(meas, cfg.replace(n_rx=meas.config.n_rx))
    io.export_image(bp.eps_grid, out / "bp")
    ck, rec = do_inr(meas, cfg, out)
    res = args.resolution or cfg.grid_m
    rendered = render(ck, res)
    io.export_image(rendered.eps_grid, out / f"render_{res}")

    m_bp = metrics.evaluate(bp.eps_grid, truth)
    m_inr = metrics.evaluate(rec.eps_grid, truth)
    write_metrics(out, "metrics_bp", m_bp)
    write_metrics(out, "metrics_inr", m_inr)
    summary = {
        "format_version": io.FORMAT_VERSION,
        "seed": cfg.seed,
        "scene": args.kind,
        "noise_level": cfg.noise_level,
        "n_rx": meas.config.n_rx,
        "iters": cfg.iters,
        "metrics": {"bp": io.metric_doc(m_bp), "inr": io.metric_doc(m_inr)},
        "render_resolution": res,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    log.info("pipeline finished in %.1f s", time.perf_counter() - t0)


COMMANDS = {
    "synth-scene": (cmd_synth_scene, "write a scene document"),
    "simulate": (cmd_simulate, "simulate noisy scattered-field measurements"),
    "reconstruct-bp": (cmd_reconstruct_bp, "back-propagation baseline reconstruction"),
    "reconstruct-inr": (cmd_reconstruct_inr, "train the two networks on a measurement set"),
    "render": (cmd_render, "sample a trained checkpoint on an N x N grid"),
    "evaluate": (cmd_evaluate, "RRMSE / PSNR / SSIM of a value grid against ground truth"),
    "pipeline": (cmd_pipeline, "scene -> simulate -> BP and INR -> render -> evaluate"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config document (overrides the preset)")
    common.add_argument("--preset", default="desk", help=f"base configuration: {', '.join(PRESETS)}")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed")
    common.add_argument("--noise", type=float, metavar="FRACTION", help="relative noise level")
    common.add_argument("--receivers", type=int, metavar="N", help="keep N evenly spaced receivers")
    common.add_argument("--resolution", type=int, metavar="N", help="render grid size")
    common.add_argument("--iters", type=int, metavar="N", help="training iterations")
    common.add_argument("--out", metavar="DIR", required=True, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="eisp", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    parsers = {name: sub.add_parser(name, parents=[common], help=h) for name, (_, h) in COMMANDS.items()}
    for name in ("synth-scene", "pipeline"):
        parsers[name].add_argument("--kind", default="centered", choices=["centered", "random", "empty", "bitmap"])
        parsers[name].add_argument("--bitmap", metavar="PATH", help="grayscale .pgm/.csv for --kind bitmap")
    parsers["simulate"].add_argument("--scene", metavar="PATH", required=True)
    for name in ("reconstruct-bp", "reconstruct-inr"):
        parsers[name].add_argument("--measurements", metavar="PATH", required=True)
    parsers["render"].add_argument("--checkpoint", metavar="PATH", required=True)
    parsers["evaluate"].add_argument("--pred", metavar="PATH", required=True, help="value sidecar (.csv)")
    parsers["evaluate"].add_argument("--truth", metavar="PATH", required=True,
                                     help="measurement document with ground truth, or a .csv grid")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        for flag in ("receivers", "resolution", "iters"):
            v = getattr(args, flag)
            if v is not None and v < 1:
                raise CliError(f"--{flag} must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise CliError("--seed must be an unsigned 64-bit integer")
        base = None
        if getattr(args, "measurements", None):
            base = io.load_measurements(args.measurements).config
        cfg = resolve_config(args, base)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        log_run(out, args.command, cfg)
        COMMANDS[args.command][0](args, cfg, out)
    except (CliError, OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"eisp {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
