"""Ground-truth scatterers and their rasterization onto ROI grids.

Raster grids follow the same row-major convention as ``grid_centers``: row i
holds cells at y = -L/2 + (i + 1/2) h, column j cells at x = -L/2 + (j + 1/2) h.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .system import Rng, grid_centers


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class Cylinder:
    x: float
    y: float
    radius: float
    eps: float


@dataclass(frozen=True)
class Scene:
    kind: str  # "cylinders" | "raster"
    roi_side: float = 2.0
    cylinders: tuple = ()
    raster: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("cylinders", "raster"):
            raise SceneError(f"unknown scene kind {self.kind!r}")
        if self.roi_side <= 0:
            raise SceneError("roi_side must be > 0")
        half = self.roi_side / 2
        for c in self.cylinders:
            if c.radius <= 0:
                raise SceneError(f"cylinder radius must be > 0, got {c.radius}")
            if c.eps < 1:
                raise SceneError(f"cylinder permittivity must be >= 1, got {c.eps}")
            if abs(c.x) > half or abs(c.y) > half:
                raise SceneError(f"cylinder center ({c.x}, {c.y}) lies outside the ROI")
        if self.kind == "raster":
            r = self.raster
            if r is None or r.ndim != 2 or r.size == 0:
                raise SceneError("raster scene needs a non-empty 2-D grid")
            if not np.all(np.isfinite(r)) or r.min() < 1:
                raise SceneError("raster permittivity must be finite and >= 1")

    @property
    def max_eps(self) -> float:
        if self.kind == "raster":
            return float(self.raster.max())
        return max([1.0] + [c.eps for c in self.cylinders])


def empty_scene(roi_side: float = 2.0) -> Scene:
    return Scene("cylinders", roi_side)


def centered_cylinder(radius: float = 0.3, eps: float = 1.5, roi_side: float = 2.0) -> Scene:
    return Scene("cylinders", roi_side, (Cylinder(0.0, 0.0, radius, eps),))


def random_cylinders(rng: Rng, count_range=(1, 3), radius_range=(0.15, 0.4),
                     eps_range=(1.0, 1.5), roi_side: float = 2.0) -> Scene:
    """Random disks; centers are uniform in the ROI shrunk by each radius."""
    lo_n, hi_n = count_range
    lo_r, hi_r = radius_range
    lo_e, hi_e = eps_range
    if not 1 <= lo_n <= hi_n:
        raise SceneError("count_range must satisfy 1 <= lo <= hi")
    if not 0 < lo_r <= hi_r:
        raise SceneError("radius_range must be positive and ordered")
    if hi_r >= roi_side / 2:
        raise SceneError(f"radius up to {hi_r} m cannot fit in a {roi_side} m ROI")
    if not 1 <= lo_e <= hi_e:
        raise SceneError("eps_range must lie in [1, inf) and be ordered")
    cyls = []
    for _ in range(rng.integers(lo_n, hi_n)):
        r = rng.uniform(low=lo_r, high=hi_r)
        span = roi_side / 2 - r
        x = rng.uniform(low=-span, high=span)
        y = rng.uniform(low=-span, high=span)
        eps = rng.uniform(low=lo_e, high=hi_e)
        cyls.append(Cylinder(float(x), float(y), float(r), float(eps)))
    return Scene("cylinders", roi_side, tuple(cyls))


def bitmap_to_scene(gray, eps_min: float = 2.0, eps_max: float = 2.5,
                    threshold: float = 0.1, roi_side: float = 2.0) -> Scene:
    """Map gray levels in [0, 1] to permittivity; pixels at or below
    ``threshold`` become background (eps = 1)."""
    g = np.asarray(gray, dtype=np.float64)
    if g.ndim != 2 or g.size == 0:
        raise SceneError("bitmap must be a non-empty 2-D grid")
    if not eps_max >= eps_min >= 1:
        raise SceneError("need eps_max >= eps_min >= 1")
    if not 0 <= threshold < 1:
        raise SceneError("threshold must be in [0, 1)")
    g = np.clip(g, 0.0, 1.0)
    eps = eps_min + (eps_max - eps_min) * (g - threshold) / (1 - threshold)
    eps = np.where(g > threshold, eps, 1.0)
    return Scene("raster", roi_side, raster=eps)


def resample_nearest(values: np.ndarray, m: int) -> np.ndarray:
    """Nearest-neighbour resampling of a grid covering the ROI onto m x m."""
    src = np.asarray(values, dtype=np.float64)
    rows = np.minimum(((np.arange(m) + 0.5) * src.shape[0] / m).astype(int), src.shape[0] - 1)
    cols = np.minimum(((np.arange(m) + 0.5) * src.shape[1] / m).astype(int), src.shape[1] - 1)
    return src[np.ix_(rows, cols)]


def rasterize(scene: Scene, m: int, roi_side: Optional[float] = None) -> np.ndarray:
    """Relative permittivity on an m x m grid; background is 1."""
    if m < 2:
        raise ValueError("m must be >= 2")
    if scene.kind == "raster":
        return resample_nearest(scene.raster, m)
    side = scene.roi_side if roi_side is None else roi_side
    pts = grid_centers(m, side).centers
    eps = np.ones(m * m)
    for c in scene.cylinders:  # later cylinders overwrite earlier ones
        inside = (pts[:, 0] - c.x) ** 2 + (pts[:, 1] - c.y) ** 2 < c.radius ** 2
        eps[inside] = c.eps
    return eps.reshape(m, m)
