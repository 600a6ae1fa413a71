"""Method-of-moments discretization of the 2D TM scattering equations.

Pulse basis, delta testing. The free-space kernel is g(r) = (i/4) H0(k0 r);
the singular self-cell term uses the equal-area circle approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numerics
from .scenes import Scene, rasterize
from .system import Grid, Rng, SystemConfig, grid_centers, rx_positions, tx_positions, wavenumber


def _green(k0: float, dist: np.ndarray) -> np.ndarray:
    return 0.25j * numerics.hankel1(0, k0 * dist)


def self_term(k0: float, cell_area: float) -> complex:
    """Integral of k0^2 g over an equal-area disk, observed at its center."""
    a = math.sqrt(cell_area / math.pi)
    return 0.5j * math.pi * k0 * a * numerics.hankel1(1, k0 * a) - 1.0


class GreensOperators:
    """Discrete domain (G_D) and receiver (G_S) Green's operators.

    On a uniform grid G_D(n, n') depends only on the row/column offsets of the
    two cells, so entries are looked up in an m x m table. The full
    M^2 x M^2 matrix is only materialized when ``g_d`` is accessed.
    """

    def __init__(self, grid: Grid, k0: float, rx: np.ndarray):
        self.grid = grid
        self.k0 = k0
        self.cell_area = grid.cell_area
        self.equiv_radius = math.sqrt(grid.cell_area / math.pi)
        self.rx = np.asarray(rx, dtype=np.float64)

        m, h = grid.m, grid.cell_side
        di, dj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        dist = h * np.hypot(di, dj)
        table = np.empty((m, m), dtype=np.complex128)
        off = dist > 0
        table[off] = k0 ** 2 * self.cell_area * _green(k0, dist[off])
        table[0, 0] = self_term(k0, self.cell_area)
        self._table = table
        self._row = np.arange(grid.n_cells) // m
        self._col = np.arange(grid.n_cells) % m
        self._g_d: Optional[np.ndarray] = None

        half = grid.roi_side / 2
        if np.any((np.abs(self.rx[:, 0]) <= half) & (np.abs(self.rx[:, 1]) <= half)):
            raise ValueError("receivers must lie strictly outside the ROI")
        d = np.linalg.norm(self.rx[:, None, :] - grid.centers[None, :, :], axis=2)
        if np.any(d == 0):
            raise ValueError("a receiver coincides with a grid center")
        self.g_s = k0 ** 2 * self.cell_area * _green(k0, d)

    def g_d_block(self, rows, cols) -> np.ndarray:
        rows = np.arange(self.grid.n_cells) if rows is None else np.asarray(rows)
        cols = np.arange(self.grid.n_cells) if cols is None else np.asarray(cols)
        di = np.abs(self._row[rows][:, None] - self._row[cols][None, :])
        dj = np.abs(self._col[rows][:, None] - self._col[cols][None, :])
        return self._table[di, dj]

    @property
    def g_d(self) -> np.ndarray:
        if self._g_d is None:
            self._g_d = self.g_d_block(None, None)
        return self._g_d

    def subset_receivers(self, keep) -> "GreensOperators":
        out = object.__new__(GreensOperators)
        out.__dict__.update(self.__dict__)
        out.rx = self.rx[keep]
        out.g_s = self.g_s[keep]
        return out


def build_greens(config: SystemConfig, grid: Grid, rx: Optional[np.ndarray] = None) -> GreensOperators:
    rx = rx_positions(config) if rx is None else rx
    return GreensOperators(grid, wavenumber(config), rx)


def incident_fields(config: SystemConfig, tx: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Line-source incident field (i/4) H0(k0 |x - x_p|), shape (points, n_tx)."""
    d = np.linalg.norm(np.asarray(points)[:, None, :] - np.asarray(tx)[None, :, :], axis=2)
    if np.any(d == 0):
        raise ValueError("an evaluation point coincides with a transmitter")
    return _green(wavenumber(config), d)


def forward_solve(greens: GreensOperators, xi, e_i: np.ndarray, total_field: bool = True):
    """Solve (I - G_D Diag(xi)) E^t = E^i for every transmitter column.

    Returns (E^t, J, E^s) with J = Diag(xi) E^t and E^s = G_S J. Only cells
    with nonzero contrast couple, so the dense solve is restricted to them.
    With ``total_field=False`` E^t is only filled in on the support (the
    off-support part needs an M^2 x |support| block) and is E^i elsewhere.
    """
    xi = np.asarray(xi, dtype=np.float64).ravel()
    e_i = numerics.as_cmatrix(e_i)
    n = greens.grid.n_cells
    if xi.shape != (n,) or e_i.shape[0] != n:
        raise ValueError(f"contrast/incident field do not match the {n}-cell grid")
    if np.any(xi < 0):
        raise ValueError("contrast must be >= 0 (relative permittivity >= 1)")
    support = np.flatnonzero(xi)
    j = np.zeros_like(e_i)
    if support.size == 0:
        return e_i.copy(), j, np.zeros((greens.g_s.shape[0], e_i.shape[1]), dtype=np.complex128)
    g_ss = greens.g_d_block(support, support)
    a = np.eye(support.size, dtype=np.complex128) - g_ss * xi[support][None, :]
    e_t_s = numerics.lu_solve(a, e_i[support])
    j[support] = xi[support][:, None] * e_t_s
    if total_field:
        e_t = e_i + greens.g_d_block(None, support) @ j[support]
    else:
        e_t = e_i.copy()
    e_t[support] = e_t_s
    e_s = greens.g_s[:, support] @ j[support]
    return e_t, j, e_s


def add_noise(e_s: np.ndarray, level: float, rng: Rng) -> np.ndarray:
    """Additive circular complex Gaussian noise, calibrated so that
    E||noise||_F ~ level * ||e_s||_F."""
    if level < 0:
        raise ValueError("noise level must be >= 0")
    e_s = np.asarray(e_s, dtype=np.complex128)
    if level == 0:
        return e_s.copy()
    std = level * np.linalg.norm(e_s) / math.sqrt(2 * e_s.size)
    z = rng.normal((2,) + e_s.shape)
    return e_s + std * (z[0] + 1j * z[1])


@dataclass
class MeasurementSet:
    config: SystemConfig
    e_s: np.ndarray  # (n_rx, n_tx)
    noise_level_applied: float = 0.0
    ground_truth: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.e_s = np.asarray(self.e_s, dtype=np.complex128)
        want = (self.config.n_rx, self.config.n_tx)
        if self.e_s.shape != want:
            raise ValueError(f"scattered field has shape {self.e_s.shape}, config implies {want}")
        if self.ground_truth is not None:
            self.ground_truth = np.asarray(self.ground_truth, dtype=np.float64)
            if self.ground_truth.ndim != 2 or np.any(self.ground_truth < 1):
                raise ValueError("ground truth must be a 2-D grid with eps >= 1")


def simulate_clean(scene: Scene, config: SystemConfig):
    """Noise-free scattered field on the generation grid, plus its eps grid."""
    eps = rasterize(scene, config.grid_gen, config.roi_side)
    grid = grid_centers(config.grid_gen, config.roi_side)
    greens = build_greens(config, grid)
    e_i = incident_fields(config, tx_positions(config), grid.centers)
    _, _, e_s = forward_solve(greens, eps.ravel() - 1.0, e_i, total_field=False)
    return e_s, eps


def simulate_measurements(scene: Scene, config: SystemConfig, rng: Rng) -> MeasurementSet:
    e_s, eps = simulate_clean(scene, config)
    noisy = add_noise(e_s, config.noise_level, rng)
    return MeasurementSet(config, noisy, config.noise_level, eps)


def subsample_receivers(meas: MeasurementSet, n_keep: int) -> MeasurementSet:
    """Keep every k-th receiver (k = n_rx / n_keep). The kept receivers form an
    equally spaced ring with the same phase, so the config stays consistent."""
    n_rx = meas.config.n_rx
    if n_keep < 1 or n_rx % n_keep:
        raise ValueError(f"{n_keep} receivers cannot be taken evenly from {n_rx}")
    k = n_rx // n_keep
    return MeasurementSet(meas.config.replace(n_rx=n_keep), meas.e_s[::k],
                          meas.noise_level_applied, meas.ground_truth)
