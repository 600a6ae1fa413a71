import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from implicit_eisp import inr
from implicit_eisp.inr import AdamState, MlpArch, MlpParams, adam_step, init_params, mlp_backward, mlp_forward
from implicit_eisp.system import Rng


def test_encoding_examples():
    assert np.allclose(inr.positional_encode([0.0], 2), [0, 1, 0, 1])
    assert np.allclose(inr.positional_encode([math.pi / 2], 1), [1, 0], atol=1e-15)
    assert inr.positional_encode(np.zeros((5, 2)), 6).shape == (5, 24)


@given(st.integers(1, 10), st.integers(1, 4), st.integers(1, 7))
def test_encoding_length(omega, dim, n):
    x = Rng(omega).uniform((n, dim), -math.pi, math.pi)
    assert inr.positional_encode(x, omega).shape == (n, 2 * omega * dim)


def test_init_params():
    arch = MlpArch(8, 16, 4, 2)
    p = init_params(Rng(0), arch)
    for w, b in p.layers():
        assert np.all(b == 0)
        assert np.all(np.abs(w) <= math.sqrt(6 / w.shape[0]))
    assert np.array_equal(p.flat, init_params(Rng(0), arch).flat)
    assert p.flat.size == arch.n_params == 8 * 16 + 16 + 2 * (16 * 16 + 16) + 16 * 2 + 2


def test_full_size_parameter_count():
    # Two eight-layer, 256-wide MLPs; input widths follow the encoding.
    f = MlpArch(4 * 6, 256, 8, 1)
    assert f.n_params == 24 * 256 + 256 + 6 * (256 * 256 + 256) + 256 + 1


def test_forward_constant_and_affine():
    arch = MlpArch(3, 4, 2, 1)
    p = MlpParams(arch, np.zeros(arch.n_params))
    p.layers()[-1][1][:] = 2.5
    out, _ = mlp_forward(p, np.ones((6, 3)))
    assert np.all(out == 2.5)
    # Hand-computed 2-layer case with all hidden pre-activations positive.
    w1 = np.array([[1.0, 2.0, 0.5, 1.0], [0.0, 1.0, 1.0, 3.0], [2.0, 0.0, 1.0, 1.0]])
    b1 = np.array([0.1, 0.2, 0.3, 0.4])
    w2 = np.array([[1.0], [-1.0], [2.0], [0.5]])
    b2 = np.array([0.25])
    p.flat[:] = np.concatenate([w1.ravel(), b1, w2.ravel(), b2])
    x = np.array([[1.0, 2.0, 3.0]])
    expect = (x @ w1 + b1) @ w2 + b2
    out, _ = mlp_forward(p, x)
    assert np.allclose(out, expect, rtol=0, atol=1e-14)


def test_forward_order_and_shape_errors():
    arch = MlpArch(2, 8, 3, 1)
    p = init_params(Rng(1), arch)
    x = Rng(2).uniform((10, 2))
    out, _ = mlp_forward(p, x)
    single = np.array([mlp_forward(p, x[i:i + 1])[0][0] for i in range(10)])
    assert np.allclose(out, single, rtol=1e-14)
    with pytest.raises(ValueError):
        mlp_forward(p, np.ones((3, 5)))
    o2, _ = mlp_forward(p, x)
    assert np.array_equal(out, o2)


def fd_check(f, flat, idx, rel_step=1e-6):
    g = np.empty(len(idx))
    for k, i in enumerate(idx):
        h = rel_step * max(1.0, abs(flat[i]))
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        g[k] = (fp - fm) / (2 * h)
    return g


def test_backward_matches_finite_differences():
    arch = MlpArch(4, 16, 4, 2)
    p = init_params(Rng(3), arch)
    p.flat += 0.05 * Rng(4).normal(p.flat.shape)  # non-zero biases
    x = Rng(5).uniform((12, 4), -2, 2)
    target = Rng(6).normal((12, 2))

    def loss():
        out, _ = mlp_forward(p, x)
        return 0.5 * np.sum((out - target) ** 2)

    out, cache = mlp_forward(p, x)
    g = mlp_backward(p, cache, out - target)
    idx = np.arange(arch.n_params)
    fd = fd_check(loss, p.flat, idx)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) <= 1e-6


def test_input_gradient():
    arch = MlpArch(3, 8, 3, 1)
    p = init_params(Rng(7), arch)
    x = Rng(8).uniform((1, 3), -1, 1)
    out, cache = mlp_forward(p, x)
    _, gx = mlp_backward(p, cache, np.ones((1, 1)), input_grad=True)
    h = 1e-6
    fd = [(mlp_forward(p, x + h * e)[0][0, 0] - mlp_forward(p, x - h * e)[0][0, 0]) / (2 * h) for e in np.eye(3)]
    assert np.allclose(gx[0], fd, atol=1e-8)


def test_backward_zero_and_linearity():
    arch = MlpArch(2, 8, 3, 1)
    p = init_params(Rng(9), arch)
    x = Rng(10).uniform((7, 2))
    _, cache = mlp_forward(p, x)
    assert np.all(mlp_backward(p, cache, np.zeros((7, 1))) == 0)
    a, b = Rng(11).normal((7, 1)), Rng(12).normal((7, 1))
    ga, gb = mlp_backward(p, cache, a), mlp_backward(p, cache, b)
    assert np.max(np.abs(mlp_backward(p, cache, a + b) - ga - gb)) <= 1e-12


def test_stale_cache_rejected():
    arch = MlpArch(2, 4, 2, 1)
    p = init_params(Rng(0), arch)
    _, cache = mlp_forward(p, np.ones((1, 2)))
    adam_step(p, np.ones(arch.n_params), AdamState.zeros(arch.n_params))
    with pytest.raises(ValueError):
        mlp_backward(p, cache, np.ones((1, 1)))
    other = init_params(Rng(0), arch)
    _, cache = mlp_forward(other, np.ones((1, 2)))
    with pytest.raises(ValueError):
        mlp_backward(p, cache, np.ones((1, 1)))


def test_permittivity_head():
    assert inr.permittivity_head(0.0) == pytest.approx(1 + math.log(2))
    assert abs(inr.permittivity_head(-20.0) - 1) <= 1e-8
    assert np.all(inr.permittivity_head(np.array([-800.0, 0.0, 800.0])) >= 1)
    assert np.isfinite(inr.permittivity_head(800.0))


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_head_monotone_and_bounded(a, b):
    ea, eb = inr.permittivity_head(a), inr.permittivity_head(b)
    assert ea >= 1 and eb >= 1
    if a < b:
        assert ea <= eb


def test_sigmoid_is_softplus_derivative():
    x = np.linspace(-10, 10, 41)
    h = 1e-6
    fd = (inr.softplus(x + h) - inr.softplus(x - h)) / (2 * h)
    assert np.allclose(inr.sigmoid(x), fd, atol=1e-9)


def test_adam_first_step_and_zero_gradient():
    arch = MlpArch(1, 1, 2, 1)
    p = MlpParams(arch, np.full(arch.n_params, 0.3))
    st_ = AdamState.zeros(arch.n_params, lr0=1e-3)
    g = np.array([2.0, -0.5, 1e-3, -7.0])
    adam_step(p, g, st_)
    assert np.allclose(p.flat - 0.3, -1e-3 * np.sign(g), rtol=0, atol=1e-3 * 1e-5)
    q = MlpParams(arch, np.full(arch.n_params, 0.3))
    s2 = AdamState.zeros(arch.n_params)
    for _ in range(5):
        adam_step(q, np.zeros(arch.n_params), s2)
    assert np.all(q.flat == 0.3)


def test_adam_schedule_endpoint_and_nonfinite():
    s = AdamState.zeros(3, lr0=5e-4, decay_target=0.1, total_iters=4000)
    assert s.lr(0) == 5e-4
    assert s.lr(4000) == pytest.approx(5e-5, rel=1e-12)
    p = MlpParams(MlpArch(1, 1, 2, 1), np.zeros(4))
    with pytest.raises(FloatingPointError):
        adam_step(p, np.array([0.0, np.nan, 0.0, 0.0]), AdamState.zeros(4))
