"""Joint optimization of the permittivity and current networks, the BP
baseline, and resolution-free rendering."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import inr
from .inr import AdamState, MlpArch, MlpParams
from .physics import GreensOperators, MeasurementSet, build_greens, incident_fields
from .system import Rng, SystemConfig, grid_centers, jitter_samples, rx_positions, tx_positions

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Losses and physics-coupled predictions
# ---------------------------------------------------------------------------

def predict_scattered(j_all: np.ndarray, g_s: np.ndarray) -> np.ndarray:
    if j_all.shape[0] != g_s.shape[1]:
        raise ValueError(f"current has {j_all.shape[0]} cells, G_S expects {g_s.shape[1]}")
    return g_s @ j_all


def predict_current(xi, e_i_all: np.ndarray, g_d: np.ndarray, j_all: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=np.float64).ravel()
    if not (xi.shape[0] == e_i_all.shape[0] == g_d.shape[0] == j_all.shape[0]) or e_i_all.shape != j_all.shape:
        raise ValueError("contrast, incident field, G_D and current dimensions disagree")
    return xi[:, None] * (e_i_all + g_d @ j_all)


def data_loss(e_s_pred: np.ndarray, e_s_meas: np.ndarray) -> float:
    if e_s_pred.shape != e_s_meas.shape:
        raise ValueError("shape mismatch")
    den = np.vdot(e_s_meas, e_s_meas).real
    if den == 0:
        raise ValueError("measured scattered field is identically zero")
    r = e_s_pred - e_s_meas
    return float(np.vdot(r, r).real / den)


def state_loss(j_hat, j, xi, e_i_all, delta: float) -> float:
    if j_hat.shape != j.shape:
        raise ValueError("shape mismatch")
    r = j_hat - j
    born = np.asarray(xi).ravel()[:, None] * e_i_all
    return float(np.vdot(r, r).real / (np.vdot(born, born).real + delta))


def tv_loss(xi_grid: np.ndarray) -> float:
    """Anisotropic L1 total variation, normalized by the number of cells."""
    g = np.asarray(xi_grid, dtype=np.float64)
    return float((np.abs(np.diff(g, axis=0)).sum() + np.abs(np.diff(g, axis=1)).sum()) / g.size)


def tv_grad(xi_grid: np.ndarray) -> np.ndarray:
    g = np.asarray(xi_grid, dtype=np.float64)
    out = np.zeros_like(g)
    s0 = np.sign(np.diff(g, axis=0))
    s1 = np.sign(np.diff(g, axis=1))
    out[1:, :] += s0
    out[:-1, :] -= s0
    out[:, 1:] += s1
    out[:, :-1] -= s1
    return out / g.size


# ---------------------------------------------------------------------------
# The optimization problem
# ---------------------------------------------------------------------------

@dataclass
class LossTerms:
    total: float
    data: float
    state: float
    tv: float


def roi_scale(roi_side: float) -> float:
    """Maps the ROI square onto [-pi, pi] per axis."""
    return math.pi / (roi_side / 2)


def tx_scale(ring_radius: float) -> float:
    """Maps the transmitter ring onto [-pi/2, pi/2] per axis. A full [-pi, pi]
    range would give diametrically opposite transmitters identical encodings."""
    return math.pi / (2 * ring_radius)


@dataclass
class InrCheckpoint:
    arch_f: MlpArch
    theta: np.ndarray
    omega: int
    roi_side: float
    ring_radius: float
    arch_h: Optional[MlpArch] = None
    phi: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def roi_scale(self) -> float:
        return roi_scale(self.roi_side)

    @property
    def tx_scale(self) -> float:
        return tx_scale(self.ring_radius)


@dataclass
class TrainingReport:
    seed: int
    history: list = field(default_factory=list)  # LossTerms per iteration
    seconds: list = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        return np.array([[h.total, h.data, h.state, h.tv] for h in self.history]).reshape(-1, 4)


@dataclass
class Reconstruction:
    eps_grid: np.ndarray
    source: str  # "bp" | "inr"

    @property
    def resolution(self) -> int:
        return self.eps_grid.shape[0]


class InrProblem:
    """Fixed physics on the inversion grid plus the two networks' inputs.

    Incident and measured fields are divided by the RMS incident field over
    the ROI; both normalized losses are invariant to this common rescaling,
    and it keeps the current network's outputs at order one.
    """

    def __init__(self, meas: MeasurementSet, config: Optional[SystemConfig] = None):
        cfg = meas.config if config is None else config
        self.config = cfg
        self.grid = grid_centers(cfg.grid_m, cfg.roi_side)
        self.greens = build_greens(cfg, self.grid, rx_positions(meas.config))
        self.tx = tx_positions(cfg)
        e_i = incident_fields(cfg, self.tx, self.grid.centers)
        self.field_scale = 1.0 / math.sqrt(np.mean(np.abs(e_i) ** 2))
        self.e_i = e_i * self.field_scale
        self.e_s = meas.e_s * self.field_scale
        self.g_d = self.greens.g_d
        self.g_s = self.greens.g_s
        self.es_norm2 = float(np.vdot(self.e_s, self.e_s).real)
        if self.es_norm2 == 0:
            raise ValueError("measured scattered field is identically zero")
        self.ei_pow = (np.abs(self.e_i) ** 2).sum(axis=1)  # per cell, over transmitters
        self.roi_scale = roi_scale(cfg.roi_side)
        self.tx_scale = tx_scale(cfg.ring_radius)
        self.enc_tx = inr.positional_encode(self.tx * self.tx_scale, cfg.omega)
        enc_dim = 4 * cfg.omega
        self.arch_f = MlpArch(enc_dim, cfg.hidden_width, cfg.depth, 1)
        self.arch_h = MlpArch(2 * enc_dim, cfg.hidden_width, cfg.depth, 2)

    @property
    def n_cells(self) -> int:
        return self.grid.n_cells

    @property
    def n_tx(self) -> int:
        return self.tx.shape[0]

    def encode_samples(self, samples: np.ndarray):
        enc_x = inr.positional_encode(samples * self.roi_scale, self.config.omega)
        n, p = self.n_cells, self.n_tx
        h_in = np.concatenate([np.repeat(enc_x, p, axis=0), np.tile(self.enc_tx, (n, 1))], axis=1)
        return enc_x, h_in

    def evaluate(self, theta: MlpParams, phi: MlpParams, samples: np.ndarray, grad: bool = True):
        """Total loss at the given sample positions and, optionally, its
        gradients w.r.t. both flat parameter vectors."""
        cfg = self.config
        enc_x, h_in = self.encode_samples(samples)
        raw, cache_f = inr.mlp_forward(theta, enc_x)
        raw = raw[:, 0]
        xi = inr.softplus(raw)
        out_h, cache_h = inr.mlp_forward(phi, h_in)
        n, p = self.n_cells, self.n_tx
        j = (out_h[:, 0] + 1j * out_h[:, 1]).reshape(n, p)

        r_data = self.g_s @ j - self.e_s
        l_data = float(np.vdot(r_data, r_data).real) / self.es_norm2

        u = self.e_i + self.g_d @ j
        r_state = xi[:, None] * u - j
        rr = float(np.vdot(r_state, r_state).real)
        den = float(xi @ (xi * self.ei_pow)) + cfg.delta
        l_state = rr / den

        xi_grid = xi.reshape(self.grid.m, self.grid.m)
        l_tv = tv_loss(xi_grid)
        total = cfg.lambda_data * l_data + cfg.lambda_state * l_state + cfg.lambda_tv * l_tv
        terms = LossTerms(total, l_data, l_state, l_tv)
        if not grad:
            return terms

        # complex gradients use the convention dL/dRe + i dL/dIm
        g_j = (2 * cfg.lambda_data / self.es_norm2) * (self.g_s.conj().T @ r_data)
        g_j += (2 * cfg.lambda_state / den) * (self.g_d.conj().T @ (xi[:, None] * r_state) - r_state)
        g_xi = (2 * cfg.lambda_state / den) * (np.conj(r_state) * u).real.sum(axis=1)
        g_xi -= (2 * cfg.lambda_state * rr / den ** 2) * xi * self.ei_pow
        g_xi += cfg.lambda_tv * tv_grad(xi_grid).ravel()

        d_raw = (g_xi * inr.sigmoid(raw))[:, None]
        g_theta = inr.mlp_backward(theta, cache_f, d_raw)
        d_h = np.stack([g_j.real.ravel(), g_j.imag.ravel()], axis=1)
        g_phi = inr.mlp_backward(phi, cache_h, d_h)
        return terms, g_theta, g_phi

    def checkpoint(self, theta: MlpParams, phi: Optional[MlpParams] = None, **meta) -> InrCheckpoint:
        cfg = self.config
        return InrCheckpoint(theta.arch, theta.flat.copy(), cfg.omega, cfg.roi_side, cfg.ring_radius,
                             phi.arch if phi is not None else None,
                             phi.flat.copy() if phi is not None else None, dict(meta))


def init_networks(problem: InrProblem, rng: Rng):
    theta = inr.init_params(rng.spawn(1), problem.arch_f)
    phi = inr.init_params(rng.spawn(2), problem.arch_h)
    if problem.config.out_gain != 1.0:
        theta.layers()[-1][0][:] *= problem.config.out_gain
        phi.layers()[-1][0][:] *= problem.config.out_gain
    if problem.config.xi_init is not None:
        theta.layers()[-1][1][:] = math.log(math.expm1(problem.config.xi_init))
    return theta, phi


def train(meas: MeasurementSet, config: Optional[SystemConfig] = None, rng: Optional[Rng] = None,
          callback=None):
    """Run the joint optimization; returns (checkpoint, report).

    ``callback(iteration, problem, theta, phi, samples)``, if given, is called
    before each update and may be used for diagnostics.
    """
    cfg = meas.config if config is None else config
    rng = Rng(cfg.seed) if rng is None else rng
    problem = InrProblem(meas, cfg)
    theta, phi = init_networks(problem, rng)
    sampler = rng.spawn(3)
    opt_kw = dict(lr0=cfg.lr0, decay_target=cfg.lr_decay_target, total_iters=cfg.iters)
    adam_f = AdamState.zeros(theta.arch.n_params, **opt_kw)
    adam_h = AdamState.zeros(phi.arch.n_params, **opt_kw)
    report = TrainingReport(seed=rng.seed)
    sigma = cfg.sample_sigma
    log.info("training %d iterations, grid %d, %d tx, %d rx, seed %d",
             cfg.iters, cfg.grid_m, cfg.n_tx, meas.config.n_rx, rng.seed)
    for it in range(cfg.iters):
        t0 = time.perf_counter()
        samples = jitter_samples(problem.grid, sigma, sampler)
        if callback is not None:
            callback(it, problem, theta, phi, samples)
        terms, g_theta, g_phi = problem.evaluate(theta, phi, samples)
        if not math.isfinite(terms.total):
            raise TrainingError(f"non-finite loss at iteration {it}: {terms}")
        try:
            inr.adam_step(theta, g_theta, adam_f)
            inr.adam_step(phi, g_phi, adam_h)
        except FloatingPointError as exc:
            raise TrainingError(f"non-finite gradient at iteration {it}") from exc
        report.history.append(terms)
        report.seconds.append(time.perf_counter() - t0)
        if it % 100 == 0 or it == cfg.iters - 1:
            log.debug("iter %d total %.4e data %.4e state %.4e tv %.4e",
                      it, terms.total, terms.data, terms.state, terms.tv)
    ck = problem.checkpoint(theta, phi, seed=rng.seed, iters=cfg.iters, grid_m=cfg.grid_m)
    return ck, report


# ---------------------------------------------------------------------------
# Rendering and the BP baseline
# ---------------------------------------------------------------------------

def query_permittivity(ck: InrCheckpoint, points: np.ndarray) -> np.ndarray:
    params = MlpParams(ck.arch_f, ck.theta)
    enc = inr.positional_encode(np.asarray(points) * ck.roi_scale, ck.omega)
    raw, _ = inr.mlp_forward(params, enc)
    return inr.permittivity_head(raw[:, 0])


def render(ck: InrCheckpoint, resolution: int) -> Reconstruction:
    """Permittivity at the cell centers of a resolution x resolution grid."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    grid = grid_centers(resolution, ck.roi_side)
    eps = query_permittivity(ck, grid.centers).reshape(resolution, resolution)
    return Reconstruction(eps, "inr")


def bp_reconstruct(meas: MeasurementSet, config: Optional[SystemConfig] = None,
                   greens: Optional[GreensOperators] = None) -> Reconstruction:
    """Non-iterative back-propagation estimate on the inversion grid."""
    cfg = meas.config if config is None else config
    grid = grid_centers(cfg.grid_m, cfg.roi_side)
    if greens is None:
        greens = build_greens(cfg, grid, rx_positions(meas.config))
    e_i = incident_fields(cfg, tx_positions(cfg), grid.centers)
    g_s = greens.g_s
    e_s = meas.e_s
    back = g_s.conj().T @ e_s  # (cells, tx)
    v = g_s @ back
    vv = np.sum(np.abs(v) ** 2, axis=0)
    if not np.any(vv > 0):
        return Reconstruction(np.ones((cfg.grid_m, cfg.grid_m)), "bp")
    gamma = np.where(vv > 0, np.sum(np.conj(v) * e_s, axis=0) / np.where(vv > 0, vv, 1.0), 0.0)
    j = back * gamma[None, :]
    e_t = e_i + greens.g_d @ j
    num = np.sum(j * np.conj(e_t), axis=1).real
    den = np.sum(np.abs(e_t) ** 2, axis=1)
    xi = np.maximum(num / den, 0.0)
    return Reconstruction((1.0 + xi).reshape(cfg.grid_m, cfg.grid_m), "bp")
