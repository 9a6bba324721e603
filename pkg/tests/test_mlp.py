import math

import numpy as np
import pytest

from gridsec.mlp import (
    MlpArchitecture,
    StandardizationStats,
    evaluate,
    fit_standardization,
    forward,
    init_params,
    load_checkpoint,
    loss_and_gradient,
    param_layout,
    predict,
    save_checkpoint,
    unpack,
)


def small_arch(activation="tanh"):
    return MlpArchitecture(layer_sizes=(4, 6, 3, 2), activation=activation)


def test_n_params():
    arch = small_arch()
    assert arch.n_params == (4 * 6 + 6) + (6 * 3 + 3) + (3 * 2 + 2)


def test_param_layout_covers_theta():
    arch = small_arch()
    layout = param_layout(arch)
    total = sum((fan_in + 1) * fan_out for _, fan_in, fan_out in layout)
    assert total == arch.n_params
    assert layout[0][0] == 0


def test_init_deterministic_and_bounded():
    arch = small_arch()
    a = init_params(arch, seed=12)
    b = init_params(arch, seed=12)
    c = init_params(arch, seed=13)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    for (w, b_vec), (fan_in, fan_out) in zip(unpack(a, arch), [(4, 6), (6, 3), (3, 2)]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        assert w.shape == (fan_in, fan_out)
        assert np.abs(w).max() <= bound
        assert np.all(b_vec == 0.0)


def test_forward_zero_params_uniform():
    arch = small_arch()
    theta = np.zeros(arch.n_params)
    p = forward(theta, arch, np.ones(4))
    assert np.allclose(p, [0.5, 0.5], atol=1e-12)


def test_forward_rows_sum_to_one():
    arch = small_arch("relu")
    theta = init_params(arch, seed=0)
    x = np.random.default_rng(1).normal(size=(9, 4))
    p = forward(theta, arch, x)
    assert p.shape == (9, 2)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p >= 0)


def test_softmax_translation_invariance():
    """Shifting the last linear layer's biases by a constant leaves the
    softmax output unchanged."""
    arch = small_arch()
    theta = init_params(arch, seed=4)
    x = np.random.default_rng(2).normal(size=(5, 4))
    p0 = forward(theta, arch, x)
    shifted = theta.copy()
    offset, fan_in, fan_out = param_layout(arch)[-1]
    shifted[offset + fan_in * fan_out:offset + (fan_in + 1) * fan_out] += 7.3
    p1 = forward(shifted, arch, x)
    assert np.allclose(p0, p1, atol=1e-12)


def test_loss_at_zero_params_is_ln2():
    arch = small_arch()
    theta = np.zeros(arch.n_params)
    x = np.random.default_rng(3).normal(size=(8, 4))
    y = np.random.default_rng(4).integers(0, 2, size=8)
    loss, _ = loss_and_gradient(theta, arch, x, y)
    assert loss == pytest.approx(math.log(2.0), abs=1e-12)


def _numeric_gradient(theta, arch, x, y, h=1e-5):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        g[i] = (loss_and_gradient(up, arch, x, y)[0]
                - loss_and_gradient(down, arch, x, y)[0]) / (2 * h)
    return g


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_gradient_matches_central_differences(activation):
    arch = MlpArchitecture((3, 5, 2), activation)
    rng = np.random.default_rng(17)
    theta = init_params(arch, seed=17)
    x = rng.normal(size=(6, 3))
    y = rng.integers(0, 2, size=6)
    _, g = loss_and_gradient(theta, arch, x, y)
    g_num = _numeric_gradient(theta, arch, x, y)
    denom = np.maximum(np.abs(g_num), 1e-8)
    assert np.max(np.abs(g - g_num) / denom) <= 1e-5


def test_gradient_step_decreases_loss():
    arch = small_arch()
    rng = np.random.default_rng(8)
    theta = init_params(arch, seed=8)
    x = rng.normal(size=(16, 4))
    y = rng.integers(0, 2, size=16)
    loss0, g = loss_and_gradient(theta, arch, x, y)
    loss1, _ = loss_and_gradient(theta - 1e-3 * g, arch, x, y)
    assert loss1 < loss0


def test_predict_and_evaluate_zero_params():
    arch = small_arch()
    theta = np.zeros(arch.n_params)
    x = np.random.default_rng(5).normal(size=(10, 4))
    y = np.zeros(10, dtype=int)
    # uniform output ties break toward class 0
    assert np.all(predict(theta, arch, x) == 0)
    stats = evaluate(theta, arch, x, y)
    assert stats["accuracy"] == 1.0
    assert stats["loss"] == pytest.approx(math.log(2.0), abs=1e-12)


def test_standardization_round_trip():
    rng = np.random.default_rng(6)
    x = rng.normal(3.0, 2.0, size=(200, 7))
    x[:, 3] = 5.0  # constant column
    stats = fit_standardization(x)
    z = stats.apply(x)
    assert np.allclose(z.mean(axis=0), 0.0, atol=1e-9)
    live = [c for c in range(7) if c != 3]
    assert np.allclose(z[:, live].std(axis=0), 1.0, atol=1e-9)
    assert np.allclose(z[:, 3], 0.0, atol=1e-12)
    assert stats.std[3] == 1.0  # zero-variance columns are pinned


def test_checkpoint_round_trip(tmp_path):
    arch = small_arch("relu")
    theta = init_params(arch, seed=9)
    stats = StandardizationStats(mean=np.arange(4.0), std=np.full(4, 2.0))
    path = tmp_path / "model.npz"
    extra = {"m": np.ones(3), "v": np.zeros(3)}
    save_checkpoint(path, theta, arch, stats, epoch=120, extra_arrays=extra)
    theta2, arch2, stats2, epoch, extra2 = load_checkpoint(path)
    assert np.array_equal(theta, theta2)
    assert arch2 == arch
    assert np.array_equal(stats.mean, stats2.mean)
    assert np.array_equal(stats.std, stats2.std)
    assert epoch == 120
    assert set(extra2) == {"m", "v"}
    assert np.array_equal(extra2["m"], np.ones(3))
