"""File formats: configs, scenes, measurements, checkpoints, images, logs.

Structured documents are JSON with an explicit ``format_version``. Floats are
written with Python's shortest round-trip representation, so every value
reads back bit-exactly. The documented schemas live in ``schemas/``.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .inr import MlpArch
from .inversion import InrCheckpoint, TrainingReport
from .physics import MeasurementSet
from .scenes import Cylinder, Scene, SceneError
from .system import ConfigError, SystemConfig

FORMAT_VERSION = 1
CHECKPOINT_MAGIC = b"EISPINR1"


class FormatError(ValueError):
    """Malformed or inconsistent file; ``offset`` is a byte/char position when known."""

    def __init__(self, msg: str, offset=None):
        super().__init__(msg if offset is None else f"{msg} (at offset {offset})")
        self.offset = offset


def _read_json(path, kind: str) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed {kind} document: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{kind} document must be a JSON object", offset=0)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported {kind} format_version {version!r}, expected {FORMAT_VERSION}")
    return doc


def _write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def _grid_from(rows, name: str) -> np.ndarray:
    try:
        g = np.array(rows, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{name} is not a numeric grid") from exc
    if g.ndim != 2:
        raise FormatError(f"{name} must be a 2-D grid")
    return g


# --- config -----------------------------------------------------------------

def config_to_doc(cfg: SystemConfig) -> dict:
    return {"format_version": FORMAT_VERSION, **cfg.to_dict()}


def config_from_doc(doc: dict) -> SystemConfig:
    d = {k: v for k, v in doc.items() if k != "format_version"}
    try:
        return SystemConfig.from_dict(d)
    except (ConfigError, TypeError) as exc:
        raise FormatError(f"invalid config: {exc}") from exc


def save_config(path, cfg: SystemConfig) -> None:
    _write_json(path, config_to_doc(cfg))


def load_config(path) -> SystemConfig:
    return config_from_doc(_read_json(path, "config"))


# --- measurements -------------------------------------------------------------

def save_measurements(path, meas: MeasurementSet) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "config": config_to_doc(meas.config),
        "noise_level_applied": meas.noise_level_applied,
        "e_s": [[[z.real, z.imag] for z in row] for row in meas.e_s.tolist()],
        "ground_truth": None if meas.ground_truth is None else meas.ground_truth.tolist(),
    }
    _write_json(path, doc)


def load_measurements(path) -> MeasurementSet:
    doc = _read_json(path, "measurement")
    try:
        cfg = config_from_doc(doc["config"])
        pairs = np.array(doc["e_s"], dtype=np.float64)
        noise = float(doc["noise_level_applied"])
        gt = doc.get("ground_truth")
    except KeyError as exc:
        raise FormatError(f"measurement document lacks field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise FormatError(f"measurement document has malformed values: {exc}") from exc
    if pairs.ndim != 3 or pairs.shape[2] != 2:
        raise FormatError("e_s must be an Nr x Nt array of [re, im] pairs")
    if pairs.shape[:2] != (cfg.n_rx, cfg.n_tx):
        raise FormatError(f"e_s is {pairs.shape[0]}x{pairs.shape[1]} but the config "
                          f"implies {cfg.n_rx}x{cfg.n_tx}")
    e_s = np.empty(pairs.shape[:2], dtype=np.complex128)
    e_s.real, e_s.imag = pairs[..., 0], pairs[..., 1]  # keeps signed zeros
    truth = None if gt is None else _grid_from(gt, "ground_truth")
    try:
        return MeasurementSet(cfg, e_s, noise, truth)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


# --- scenes -----------------------------------------------------------------

def save_scene(path, scene: Scene) -> None:
    doc = {"format_version": FORMAT_VERSION, "kind": scene.kind, "roi_side": scene.roi_side}
    if scene.kind == "cylinders":
        doc["cylinders"] = [{"x": c.x, "y": c.y, "radius": c.radius, "eps": c.eps} for c in scene.cylinders]
    else:
        doc["raster"] = scene.raster.tolist()
    _write_json(path, doc)


def load_scene(path) -> Scene:
    doc = _read_json(path, "scene")
    kind = doc.get("kind")
    try:
        if kind == "cylinders":
            cyls = tuple(Cylinder(float(c["x"]), float(c["y"]), float(c["radius"]), float(c["eps"]))
                         for c in doc.get("cylinders", []))
            return Scene("cylinders", float(doc.get("roi_side", 2.0)), cyls)
        if kind == "raster":
            return Scene("raster", float(doc.get("roi_side", 2.0)), raster=_grid_from(doc["raster"], "raster"))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed scene document: {exc}") from exc
    raise SceneError(f"unknown scene kind {kind!r}")


# --- checkpoints ---------------------------------------------------------------

def save_checkpoint(path, ck: InrCheckpoint) -> None:
    """Layout: magic (8 bytes) | uint32 LE header length | UTF-8 JSON header |
    float64 LE parameters of the permittivity net, then the current net."""
    header = {
        "format_version": FORMAT_VERSION,
        "arch_f": ck.arch_f.to_dict(),
        "arch_h": None if ck.arch_h is None else ck.arch_h.to_dict(),
        "omega": ck.omega,
        "roi_side": ck.roi_side,
        "ring_radius": ck.ring_radius,
        "roi_scale": ck.roi_scale,
        "tx_scale": ck.tx_scale,
        "meta": ck.meta,
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    blobs = [np.asarray(ck.theta, dtype="<f8").tobytes()]
    if ck.phi is not None:
        blobs.append(np.asarray(ck.phi, dtype="<f8").tobytes())
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(hb)))
        f.write(hb)
        for b in blobs:
            f.write(b)


def load_checkpoint(path) -> InrCheckpoint:
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise FormatError("not a checkpoint file (bad magic tag)", offset=0)
    if len(data) < 12:
        raise FormatError("truncated checkpoint header", offset=len(data))
    (hlen,) = struct.unpack("<I", data[8:12])
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError("malformed checkpoint header", offset=12) from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint format_version {header.get('format_version')!r}")
    arch_f = MlpArch(**header["arch_f"])
    arch_h = MlpArch(**header["arch_h"]) if header.get("arch_h") else None
    n_f = arch_f.n_params
    n_h = arch_h.n_params if arch_h else 0
    blob = data[12 + hlen:]
    if len(blob) != 8 * (n_f + n_h):
        raise FormatError(f"parameter blob has {len(blob)} bytes, architecture needs {8 * (n_f + n_h)}",
                          offset=12 + hlen)
    params = np.frombuffer(blob, dtype="<f8").astype(np.float64)
    return InrCheckpoint(arch_f, params[:n_f].copy(), int(header["omega"]), float(header["roi_side"]),
                         float(header["ring_radius"]), arch_h,
                         params[n_f:].copy() if arch_h else None, header.get("meta", {}))


# --- images and value grids ---------------------------------------------------------

def format_value(v: float) -> str:
    return format(float(v), ".17g")


def write_values(path, grid) -> None:
    g = np.asarray(grid, dtype=np.float64)
    lines = [",".join(format_value(v) for v in row) for row in g]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_values(path) -> np.ndarray:
    rows = [line.split(",") for line in Path(path).read_text().splitlines() if line.strip()]
    try:
        return _grid_from([[float(v) for v in r] for r in rows], str(path))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def to_pixels(grid, lo: float, hi: float) -> np.ndarray:
    """Linear map [lo, hi] -> [0, 65535], clipped; lo == hi maps everything to 0."""
    g = np.asarray(grid, dtype=np.float64)
    if hi == lo:
        return np.zeros(g.shape, dtype=np.uint16)
    t = np.clip((g - lo) / (hi - lo), 0.0, 1.0)
    return np.rint(t * 65535).astype(np.uint16)


def export_image(grid, path, scale="minmax"):
    """Write ``<path>.pgm`` (16-bit graymap) and ``<path>.csv`` (raw values).

    ``scale`` is "minmax" or a (lo, hi) pair. Returns the two paths.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.ndim != 2 or not np.all(np.isfinite(g)):
        raise ValueError("image grid must be a finite 2-D array")
    if isinstance(scale, str):
        if scale != "minmax":
            raise ValueError(f"unknown scale {scale!r}")
        lo, hi = float(g.min()), float(g.max())
    else:
        lo, hi = map(float, scale)
    base = Path(path)
    pgm, csv = base.with_suffix(".pgm"), base.with_suffix(".csv")
    pix = to_pixels(g, lo, hi)
    head = f"P5\n# lo={format_value(lo)} hi={format_value(hi)}\n{g.shape[1]} {g.shape[0]}\n65535\n"
    with open(pgm, "wb") as f:
        f.write(head.encode("ascii"))
        f.write(pix.astype(">u2").tobytes())
    write_values(csv, g)
    return pgm, csv


def read_pgm(path) -> np.ndarray:
    """Read a P2/P5 graymap (8 or 16 bit) as floats in [0, 1]."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError("truncated graymap header", offset=pos)
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P5":
        dtype = ">u2" if maxval > 255 else "u1"
        body = data[pos + 1:]
        need = w * h * np.dtype(dtype).itemsize
        if len(body) < need:
            raise FormatError("truncated graymap pixel data", offset=len(data))
        pix = np.frombuffer(body[:need], dtype=dtype).astype(np.float64)
    elif magic == b"P2":
        pix = np.array(data[pos:].split(), dtype=np.float64)
        if pix.size < w * h:
            raise FormatError("truncated graymap pixel data", offset=len(data))
        pix = pix[:w * h]
    else:
        raise FormatError(f"unsupported graymap magic {magic!r}", offset=0)
    return pix.reshape(h, w) / maxval


# --- logs ---------------------------------------------------------------------

def write_loss_log(path, report: TrainingReport) -> None:
    lines = ["iteration,total,data,state,tv"]
    for i, h in enumerate(report.history):
        lines.append(",".join([str(i)] + [format_value(v) for v in (h.total, h.data, h.state, h.tv)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def write_timing_log(path, report: TrainingReport) -> None:
    lines = ["iteration,seconds"] + [f"{i},{s:.6f}" for i, s in enumerate(report.seconds)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def metric_doc(report) -> dict:
    d = report.to_dict()
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}
