"""Coordinate MLPs with hand-written reverse mode and Adam.

Parameter layout (flat float64 vector): for each layer in order, the weight
matrix of shape (fan_in, fan_out) in row-major order followed by its bias of
length fan_out. Inputs are batches of rows; ``y = relu(x @ W + b)`` for the
hidden layers and a plain affine map for the last one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .system import Rng


@dataclass(frozen=True)
class MlpArch:
    input_dim: int
    hidden_width: int = 256
    depth: int = 8
    output_dim: int = 1

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError("depth must be >= 2")
        if min(self.input_dim, self.hidden_width, self.output_dim) < 1:
            raise ValueError("layer widths must be >= 1")

    @property
    def dims(self) -> list:
        return [self.input_dim] + [self.hidden_width] * (self.depth - 1) + [self.output_dim]

    @property
    def n_params(self) -> int:
        d = self.dims
        return sum(a * b + b for a, b in zip(d[:-1], d[1:]))

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden_width": self.hidden_width,
                "depth": self.depth, "output_dim": self.output_dim}


@dataclass
class MlpParams:
    arch: MlpArch
    flat: np.ndarray
    version: int = 0

    def __post_init__(self):
        self.flat = np.ascontiguousarray(self.flat, dtype=np.float64)
        if self.flat.shape != (self.arch.n_params,):
            raise ValueError(f"expected {self.arch.n_params} parameters, got {self.flat.shape}")

    def layers(self, vec=None) -> list:
        """(W, b) views into ``vec`` (default: the parameters themselves)."""
        vec = self.flat if vec is None else vec
        out, pos = [], 0
        d = self.arch.dims
        for a, b in zip(d[:-1], d[1:]):
            w = vec[pos:pos + a * b].reshape(a, b)
            pos += a * b
            out.append((w, vec[pos:pos + b]))
            pos += b
        return out

    def bump(self) -> None:
        self.version += 1


@dataclass
class ForwardCache:
    params_id: int
    version: int
    inputs: list = field(repr=False)  # input of every layer
    preacts: list = field(repr=False)  # pre-activation of every hidden layer


def positional_encode(x, omega: int) -> np.ndarray:
    """[sin(2^k x), cos(2^k x)] for k = 0..omega-1, each block over all dims.

    ``x`` is (n, d) or a 1-D vector of length d; output is (n, 2*omega*d).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    blocks = []
    for k in range(omega):
        s = (2.0 ** k) * x
        blocks.append(np.sin(s))
        blocks.append(np.cos(s))
    out = np.concatenate(blocks, axis=1)
    return out[0] if single else out


def init_params(rng: Rng, arch: MlpArch) -> MlpParams:
    p = MlpParams(arch, np.zeros(arch.n_params))
    for w, _ in p.layers():
        bound = math.sqrt(6.0 / w.shape[0])
        w[:] = rng.uniform(w.shape, low=-bound, high=bound)
    return p


def mlp_forward(params: MlpParams, x: np.ndarray):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.arch.input_dim:
        raise ValueError(f"input has shape {x.shape}, network expects (*, {params.arch.input_dim})")
    layers = params.layers()
    inputs, preacts = [], []
    a = x
    for i, (w, b) in enumerate(layers):
        inputs.append(a)
        z = a @ w + b
        if i < len(layers) - 1:
            preacts.append(z)
            a = np.maximum(z, 0.0)
        else:
            a = z
    return a, ForwardCache(id(params), params.version, inputs, preacts)


def mlp_backward(params: MlpParams, cache: ForwardCache, dout: np.ndarray, input_grad: bool = False):
    """Gradient of a scalar loss w.r.t. the flat parameters, given dL/d(output)."""
    if cache.params_id != id(params) or cache.version != params.version:
        raise ValueError("forward cache does not belong to these parameters (stale or mismatched)")
    layers = params.layers()
    dout = np.asarray(dout, dtype=np.float64)
    if dout.shape != (cache.inputs[0].shape[0], params.arch.output_dim):
        raise ValueError(f"output gradient has shape {dout.shape}")
    grad = np.zeros_like(params.flat)
    glayers = params.layers(grad)
    dz = dout
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        gw, gb = glayers[i]
        np.matmul(cache.inputs[i].T, dz, out=gw)
        gb[:] = dz.sum(axis=0)
        if i == 0 and not input_grad:
            break
        da = dz @ w.T
        if i > 0:
            dz = da * (cache.preacts[i - 1] > 0)
    if input_grad:
        return grad, da
    return grad


def softplus(raw):
    return np.logaddexp(0.0, raw)


def sigmoid(raw):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(raw, dtype=np.float64)))


def permittivity_head(raw):
    """eps_r = 1 + softplus(raw): smooth, monotone and strictly above 1."""
    return 1.0 + softplus(raw)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr0: float = 5e-4
    decay_target: float = 0.1
    total_iters: int = 4000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, n: int, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), **kw)

    def lr(self, t=None) -> float:
        """Exponential schedule lr0 * decay_target**(t / total_iters); the
        update with index t (0-based) uses lr(t)."""
        t = self.t if t is None else t
        return self.lr0 * self.decay_target ** (t / self.total_iters)


def adam_step(params: MlpParams, grads: np.ndarray, state: AdamState) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    if grads.shape != params.flat.shape:
        raise ValueError("gradient and parameter shapes differ")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient")
    lr = state.lr()
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1 - b1) * grads
    state.v *= b2
    state.v += (1 - b2) * grads * grads
    m_hat = state.m / (1 - b1 ** state.t)
    v_hat = state.v / (1 - b2 ** state.t)
    params.flat -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    params.bump()
