from __future__ import annotations

import math

import numpy as np
import pytest

from stragglersim.errors import ConfigurationError
from stragglersim.learners.mlp import (
    INIT_SPAN,
    MlpModel,
    TrainConfig,
    load_mlp,
    mlp_equal,
    mlp_forward,
    mlp_gradients,
    mlp_init,
    mlp_train,
    save_mlp,
    training_mse,
)


def xor_rows():
    """Jittered XOR: four corners, four offsets each, 16 rows total."""
    rows = []
    for cx, cy, t in ((0, 0, 0.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 0.0)):
        for dx in (-0.05, 0.05):
            for dy in (-0.05, 0.05):
                rows.append(((cx + dx, cy + dy), (t,)))
    return rows


def test_init_is_deterministic_and_bounded():
    a = mlp_init((3, 8, 2), seed=11)
    b = mlp_init((3, 8, 2), seed=11)
    c = mlp_init((3, 8, 2), seed=12)
    assert mlp_equal(a, b)
    assert not mlp_equal(a, c)
    for w in a.weights + a.biases:
        assert np.all(np.abs(w) <= INIT_SPAN)
    assert a.weights[0].shape == (3, 8)
    assert a.weights[1].shape == (8, 2)
    assert a.biases[0].shape == (8,)


def test_init_rejects_bad_shapes():
    with pytest.raises(ConfigurationError):
        mlp_init((3,), seed=0)
    with pytest.raises(ConfigurationError):
        mlp_init((3, 0, 1), seed=0)


def test_forward_single_neuron_analytic():
    # One input, one sigmoid unit: out = 1 / (1 + exp(-(w x + b)))
    model = MlpModel(
        layer_sizes=(1, 1),
        weights=(np.array([[2.0]]),),
        biases=(np.array([-1.0]),),
        seed=0,
    )
    for x in (-1.0, 0.0, 0.5, 3.0):
        expected = 1.0 / (1.0 + math.exp(-(2.0 * x - 1.0)))
        assert mlp_forward(model, [x])[0] == pytest.approx(expected, abs=1e-15)


def test_forward_matches_nested_loop_reference():
    model = mlp_init((3, 8, 2), seed=5)
    x = [0.2, 0.7, 0.1]

    # Independent reference: explicit per-neuron loops, no numpy.
    acts = list(x)
    for w, b in zip(model.weights, model.biases):
        nxt = []
        for j in range(w.shape[1]):
            z = b[j] + sum(acts[i] * w[i, j] for i in range(w.shape[0]))
            nxt.append(1.0 / (1.0 + math.exp(-z)))
        acts = nxt

    out = mlp_forward(model, x)
    assert out == pytest.approx(acts, abs=1e-12)
    assert np.all((out > 0) & (out < 1))


def test_gradients_match_finite_differences():
    model = mlp_init((2, 3, 1), seed=3)
    rng = np.random.default_rng(0)
    features = rng.uniform(0, 1, size=(5, 2))
    targets = rng.uniform(0.2, 0.8, size=(5, 1))
    grad_w, grad_b = mlp_gradients(model, features, targets)

    def total_error(m):
        out = np.array([mlp_forward(m, f) for f in features])
        return float(((out - targets) ** 2).sum())

    h = 1e-5
    for layer in range(len(model.weights)):
        for idx in np.ndindex(model.weights[layer].shape):
            w_plus = [w.copy() for w in model.weights]
            w_minus = [w.copy() for w in model.weights]
            w_plus[layer][idx] += h
            w_minus[layer][idx] -= h
            up = MlpModel(model.layer_sizes, tuple(w_plus), model.biases, model.seed)
            dn = MlpModel(model.layer_sizes, tuple(w_minus), model.biases, model.seed)
            numeric = (total_error(up) - total_error(dn)) / (2 * h)
            analytic = grad_w[layer][idx]
            assert numeric == pytest.approx(analytic, rel=1e-4, abs=1e-8)
        for j in range(model.biases[layer].shape[0]):
            b_plus = [b.copy() for b in model.biases]
            b_minus = [b.copy() for b in model.biases]
            b_plus[layer][j] += h
            b_minus[layer][j] -= h
            up = MlpModel(model.layer_sizes, model.weights, tuple(b_plus), model.seed)
            dn = MlpModel(model.layer_sizes, model.weights, tuple(b_minus), model.seed)
            numeric = (total_error(up) - total_error(dn)) / (2 * h)
            assert numeric == pytest.approx(grad_b[layer][j], rel=1e-4, abs=1e-8)


def test_training_learns_xor():
    rows = xor_rows()
    config = TrainConfig(learning_rate=0.05, epochs=5000, tolerance=1e-9)
    trained, err = mlp_train(mlp_init((2, 8, 1), seed=7), rows, config)
    assert err < 0.005
    for features, (target,) in rows:
        out = mlp_forward(trained, features)[0]
        assert (out > 0.5) == (target > 0.5)

    # bitwise determinism of the whole training loop
    again, err2 = mlp_train(mlp_init((2, 8, 1), seed=7), rows, config)
    assert err == err2
    assert mlp_equal(trained, again)


def test_training_reduces_error():
    rows = xor_rows()
    start = mlp_init((2, 8, 1), seed=7)
    features = np.array([f for f, _ in rows])
    targets = np.array([t for _, t in rows])
    before = training_mse(start, features, targets)
    _, after = mlp_train(start, rows, TrainConfig(learning_rate=0.05, epochs=200, tolerance=1e-9))
    assert after < before


def test_tolerance_stops_training_early():
    rows = [((0.0, 0.0), (0.5,))]
    model = mlp_init((2, 2, 1), seed=1)
    loose, err_loose = mlp_train(model, rows, TrainConfig(epochs=5000, tolerance=0.5))
    assert mlp_equal(loose, model) or err_loose <= 0.5


def test_train_validates_dataset():
    model = mlp_init((2, 2, 1), seed=0)
    with pytest.raises(ValueError):
        mlp_train(model, [], TrainConfig())
    with pytest.raises(ConfigurationError):
        mlp_train(model, [((1.0,), (0.5,))], TrainConfig())
    with pytest.raises(ValueError):
        mlp_train(model, [((math.nan, 0.0), (0.5,))], TrainConfig())


def test_save_load_roundtrip(tmp_path):
    model, _ = mlp_train(
        mlp_init((3, 4, 2), seed=9),
        [((0.1, 0.5, 0.9), (0.3, 0.7)), ((0.9, 0.2, 0.1), (0.6, 0.4))],
        TrainConfig(epochs=50),
    )
    path = tmp_path / "model.mlp"
    save_mlp(model, path)
    assert path.read_text().startswith("mlp v1 3 4 2")
    loaded = load_mlp(path)
    assert loaded.layer_sizes == model.layer_sizes
    probe = (0.25, 0.5, 0.75)
    assert mlp_forward(loaded, probe) == pytest.approx(mlp_forward(model, probe), abs=0)

    # re-saving the loaded model reproduces the bytes
    path2 = tmp_path / "model2.mlp"
    save_mlp(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_corrupt_files(tmp_path):
    bad = tmp_path / "bad.mlp"
    bad.write_text("not a model\n")
    with pytest.raises(ConfigurationError):
        load_mlp(bad)
    truncated = tmp_path / "trunc.mlp"
    truncated.write_text("mlp v1 2 2 1\n0.1 0.2\n")
    with pytest.raises(ConfigurationError):
        load_mlp(truncated)
