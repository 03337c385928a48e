"""Network plumbing: init, gradients vs finite differences, persistence, training."""
import math

import numpy as np
import pytest

from star154.predictor import (
    DEFAULT_HIDDEN,
    DESK_HIDDEN,
    DivergenceDetected,
    EvalReport,
    MLPArchitecture,
    TASKS,
    TrainConfig,
    denormalize_target,
    evaluate,
    forward,
    gradient_check,
    init_model,
    load_model,
    normalize_inputs,
    normalize_target,
    save_model,
    train,
)

SMALL = MLPArchitecture(input_dim=4, hidden=(5, 4, 3), output_dim=1)


def _toy_data(n, seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    X = rng.uniform(0.0, 1.0, size=(n, 4))
    y = 2.0 * X[:, 0] - X[:, 1] + 0.5 * X[:, 2] * X[:, 3] + 3.0
    return X, y


def test_task_table():
    assert TASKS["n"] == (("r", "L", "PS", "TVS"), "N")
    assert TASKS["ps"] == (("r", "L", "N", "TVS"), "PS")
    assert TASKS["tvs"] == (("r", "L", "PS", "N"), "TVS")
    assert DEFAULT_HIDDEN["n"] == (100, 80, 50)
    assert DEFAULT_HIDDEN["ps"] == DEFAULT_HIDDEN["tvs"] == (80, 50, 30)
    assert DESK_HIDDEN == (32, 24, 16)


def test_init_shapes_and_bounds():
    arch = MLPArchitecture(hidden=(100, 80, 50))
    m = init_model(arch, seed=0)
    assert [w.shape for w in m.weights] == [(4, 100), (100, 80), (80, 50), (50, 1)]
    assert [b.shape for b in m.biases] == [(100,), (80,), (50,), (1,)]
    assert sum(w.size for w in m.weights) == 12450
    assert sum(b.size for b in m.biases) == 231
    assert all(not b.any() for b in m.biases)
    for w, fan_in in zip(m.weights, (4, 100, 80, 50)):
        assert np.abs(w).max() <= 1.0 / math.sqrt(fan_in)


def test_init_is_deterministic():
    a = init_model(SMALL, seed=9)
    b = init_model(SMALL, seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))
    c = init_model(SMALL, seed=10)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_zero_weight_model_outputs_denormalized_bias():
    m = init_model(SMALL, seed=0)
    for w in m.weights:
        w[:] = 0.0
    # all-sigmoid hidden collapses to 0.5, linear head gives its zero bias,
    # and denormalizing 0.0 from the [0.1, 0.9] band gives -0.125
    assert forward(m, [0.3, 0.7, 0.1, 0.9]) == pytest.approx(-0.125, abs=1e-15)


def test_normalization_round_trip():
    m = init_model(SMALL, seed=1)
    m.in_min = np.array([0.0, 30.0, 0.5, 300.0])
    m.in_max = np.array([0.13, 127.0, 1.0, 900.0])
    m.out_min, m.out_max = 2.0, 20.0
    X = np.array([[0.0, 30.0, 0.5, 300.0], [0.13, 127.0, 1.0, 900.0]])
    Xn = normalize_inputs(m, X)
    assert np.allclose(Xn[0], 0.1) and np.allclose(Xn[1], 0.9)
    y = np.array([2.0, 7.5, 20.0])
    back = denormalize_target(m, normalize_target(m, y))
    assert np.allclose(back, y, atol=1e-12)


def test_forward_rejects_wrong_arity():
    m = init_model(SMALL, seed=0)
    with pytest.raises(ValueError):
        forward(m, [1.0, 2.0, 3.0])


def test_gradient_check_fresh_models():
    for seed in (0, 1, 2):
        m = init_model(SMALL, seed=seed)
        err = gradient_check(m, [0.3, 0.6, 0.2, 0.8], y_target=0.4)
        assert err < 1e-5


def test_gradient_check_zero_weight_model():
    m = init_model(SMALL, seed=0)
    for w in m.weights:
        w[:] = 0.0
    assert gradient_check(m, [0.5, 0.5, 0.5, 0.5], y_target=0.2) < 1e-5


def test_gradient_check_after_training_steps():
    X, y = _toy_data(64, seed=5)
    m = init_model(SMALL, seed=5)
    train(m, X, y, TrainConfig(epochs=20, seed=5, validation_fraction=0.0))
    assert gradient_check(m, [0.4, 0.1, 0.9, 0.5], y_target=0.7) < 1e-4


def test_training_is_deterministic():
    X, y = _toy_data(120, seed=7)
    cfg = TrainConfig(epochs=30, seed=7)
    m1, rep1 = train(init_model(SMALL, seed=7), X, y, cfg)
    m2, rep2 = train(init_model(SMALL, seed=7), X, y, cfg)
    assert rep1 == rep2
    assert all(np.array_equal(a, b) for a, b in zip(m1.weights, m2.weights))
    assert all(np.array_equal(a, b) for a, b in zip(m1.biases, m2.biases))


def test_full_batch_loss_decreases():
    X, y = _toy_data(40, seed=3)
    losses = []
    cfg = TrainConfig(
        epochs=200, batch_size=64, learning_rate=0.05, seed=3,
        validation_fraction=0.0,
    )
    train(init_model(SMALL, seed=3), X, y, cfg, on_epoch=lambda e, mse: losses.append(mse))
    assert len(losses) == 200
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0] / 2


def test_overfit_small_dataset_early_stop():
    # single-sample batches take enough steps per epoch to interpolate fast;
    # the full capacity check to 1e-6 lives in the acceptance suite
    X, y = _toy_data(10, seed=0)
    cfg = TrainConfig(
        epochs=1500, batch_size=1, learning_rate=0.6, seed=0,
        validation_fraction=0.0, target_mse=1e-3,
    )
    losses = []
    m, _ = train(
        init_model(MLPArchitecture(hidden=(8, 6, 4)), seed=0),
        X, y, cfg, on_epoch=lambda e, mse: losses.append(mse),
    )
    assert losses[-1] <= 1e-3
    assert len(losses) < 1500  # early stop actually triggered


def test_divergence_is_reported():
    X, y = _toy_data(64, seed=13)
    cfg = TrainConfig(epochs=200, learning_rate=1e6, seed=13, validation_fraction=0.0)
    with pytest.raises(DivergenceDetected):
        train(init_model(SMALL, seed=13), X, y, cfg)


def test_train_input_validation():
    X, y = _toy_data(8, seed=1)
    with pytest.raises(ValueError):
        train(init_model(SMALL, seed=1), X, y, TrainConfig())
    X, y = _toy_data(32, seed=1)
    y[3] = math.nan
    with pytest.raises(ValueError):
        train(init_model(SMALL, seed=1), X, y, TrainConfig())


def test_evaluate_perfect_predictions():
    m = init_model(SMALL, seed=2)
    m.out_min, m.out_max = 0.0, 10.0
    X = np.random.Generator(np.random.PCG64(2)).uniform(0, 1, size=(50, 4))
    y = np.array([forward(m, row) for row in X])
    rep = evaluate(m, X, y)
    assert rep.n == 50
    assert rep.R == pytest.approx(1.0, abs=1e-12)
    assert rep.MSE == pytest.approx(0.0, abs=1e-24)


def test_evaluate_rejects_degenerate_sets():
    m = init_model(SMALL, seed=2)
    with pytest.raises(ValueError):
        evaluate(m, np.empty((0, 4)), np.empty(0))
    X = np.ones((5, 4))
    with pytest.raises(ValueError):
        evaluate(m, X, np.ones(5))


def test_save_load_round_trip(tmp_path):
    m = init_model(SMALL, seed=21)
    m.in_min = np.array([0.001, 30.0, 0.2, 250.0])
    m.in_max = np.array([0.13, 127.0, 1.0, 1500.0])
    m.out_min, m.out_max = 2.0, 20.0
    path = tmp_path / "m.txt"
    save_model(m, str(path))
    back = load_model(str(path))
    assert back.arch == m.arch
    assert all(np.array_equal(a, b) for a, b in zip(back.weights, m.weights))
    assert all(np.array_equal(a, b) for a, b in zip(back.biases, m.biases))
    assert np.array_equal(back.in_min, m.in_min)
    assert back.out_min == m.out_min and back.out_max == m.out_max
    x = [0.05, 100.0, 0.9, 700.0]
    assert forward(back, x) == forward(m, x)
    # saving the loaded model reproduces the file byte for byte
    path2 = tmp_path / "m2.txt"
    save_model(back, str(path2))
    assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_foreign_files(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("png-v9 4 5 4 3 1\n")
    with pytest.raises(ValueError):
        load_model(str(bad))
    m = init_model(SMALL, seed=0)
    good = tmp_path / "good.txt"
    save_model(m, str(good))
    truncated = tmp_path / "trunc.txt"
    truncated.write_text("".join(good.read_text().splitlines(keepends=True)[:-2]))
    with pytest.raises((ValueError, IndexError)):
        load_model(str(truncated))
    padded = tmp_path / "padded.txt"
    padded.write_text(good.read_text() + "0.5\n")
    with pytest.raises(ValueError):
        load_model(str(padded))


def test_eval_report_fields():
    rep = EvalReport(R=0.99, MSE=1e-4, n=1000)
    assert rep.R == 0.99 and rep.MSE == 1e-4 and rep.n == 1000
