"""RRMSE, PSNR and SSIM on raw relative-permittivity maps."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .scenes import resample_nearest

PSNR_CAP = 99.0


def _pair(pred, truth):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    return p, t


def rrmse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    if np.any(t == 0):
        raise ValueError("truth has a zero entry")
    return float(np.sqrt(np.mean(np.abs((p - t) / t) ** 2)))


def psnr(pred, truth) -> float:
    """10 log10(peak^2 / MSE) with peak = max(truth); inf when identical."""
    p, t = _pair(pred, truth)
    mse = float(np.mean((p - t) ** 2))
    if mse == 0:
        return math.inf
    return 10 * math.log10(float(t.max()) ** 2 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(pred, truth, data_range: Optional[float] = None, k1: float = 0.01, k2: float = 0.03):
    p, t = _pair(pred, truth)
    if p.ndim != 2 or min(p.shape) < 11:
        raise ValueError("SSIM needs at least an 11 x 11 grid; upsample the inputs first")
    L = max(float(t.max() - t.min()), 1e-6) if data_range is None else data_range
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    w = gaussian_window()
    # Moments from deviations about the local means, so that flat regions give
    # exactly zero variance even when C1 and C2 are tiny.
    wp = sliding_window_view(p, w.shape)
    wt = sliding_window_view(t, w.shape)
    mu_p = np.einsum("ijkl,kl->ij", wp, w)
    mu_t = np.einsum("ijkl,kl->ij", wt, w)
    dp = wp - mu_p[:, :, None, None]
    dt = wt - mu_t[:, :, None, None]
    var_p = np.einsum("ijkl,kl->ij", dp * dp, w)
    var_t = np.einsum("ijkl,kl->ij", dt * dt, w)
    cov = np.einsum("ijkl,kl->ij", dp * dt, w)
    return ((2 * mu_p * mu_t + c1) * (2 * cov + c2)) / ((mu_p ** 2 + mu_t ** 2 + c1) * (var_p + var_t + c2))


def ssim(pred, truth, data_range: Optional[float] = None) -> float:
    """Mean SSIM over all 11x11 Gaussian (sigma 1.5) windows fully inside the grid."""
    return float(ssim_map(pred, truth, data_range).mean())


@dataclass
class MetricReport:
    rrmse: float
    psnr: float
    ssim: float

    def to_text(self) -> str:
        p = min(self.psnr, PSNR_CAP)
        return f"rrmse={self.rrmse:.6f},psnr={p:.2f},ssim={self.ssim:.6f}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["psnr"] = min(self.psnr, PSNR_CAP)
        return d


def evaluate(pred, truth) -> MetricReport:
    """All three metrics; ``pred`` is nearest-neighbour resampled onto the
    truth grid when the resolutions differ."""
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        p = resample_nearest(p, t.shape[0]) if t.shape[0] == t.shape[1] else None
        if p is None:
            raise ValueError("truth grid must be square")
    return MetricReport(rrmse(p, t), psnr(p, t), ssim(p, t))
