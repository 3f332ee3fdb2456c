import numpy as np
import pytest

from rfqkd import classifier as C


def _blobs(n=40, d=8, seed=0, gap=2.0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((2 * n, d))
    X[n:, 0] += gap
    y = np.repeat([0, 1], n)
    return X, y


def test_default_architecture():
    m = C.init_model(seed=0)
    assert m.layer_dims == (256, 128, 64, 32, 16, 8, 1)
    assert len(m.weights) == 6
    assert all(w.shape == (a, b) for w, a, b in zip(m.weights, m.layer_dims[:-1], m.layer_dims[1:]))
    # 1/sqrt(fan_in) initialization
    assert np.std(m.weights[0]) == pytest.approx(1 / 16, rel=0.05)


def test_forward_range_and_batch_shape():
    m = C.init_model((8, 5, 1), seed=1)
    X = np.random.default_rng(0).standard_normal((10, 8)) * 50
    p = C.forward(m, X)
    assert p.shape == (10,)
    assert np.all((p >= 0) & (p <= 1))
    assert isinstance(C.forward(m, X[0]), float)
    with pytest.raises(ValueError):
        C.forward(m, np.zeros(7))


def test_loss_is_stable_for_large_logits():
    m = C.init_model((2, 1), seed=0)
    m.weights[0][:] = 1e4
    X = np.array([[1.0, 1.0], [-1.0, -1.0]])
    assert np.isfinite(C.loss(m, X, [0, 1]))
    assert C.loss(m, X, [1, 0]) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("act", ["relu", "tanh"])
def test_gradient_check(act):
    rng = np.random.default_rng(5)
    for trial in range(5):
        dims = (6,) + tuple(rng.integers(2, 6, size=2)) + (1,)
        m = C.init_model(dims, seed=trial, hidden_activation=act)
        # random biases keep pre-activations off the ReLU kink at exactly zero
        m.biases = [rng.normal(0, 0.5, b.shape) for b in m.biases]
        X = rng.standard_normal((7, 6))
        y = rng.integers(0, 2, 7)
        assert C.gradient_check(m, X, y) < 1e-5


def test_backprop_layout_matches_params():
    m = C.init_model((4, 3, 1), seed=0)
    grads = C.backprop(m, np.ones((2, 4)), [0, 1])
    assert [g.shape for g in grads] == [p.shape for p in m.params()]


@pytest.mark.parametrize("opt", ["adam", "gd"])
def test_training_reduces_loss(opt):
    X, y = _blobs()
    m0 = C.init_model((8, 6, 1), seed=2)
    lr = 1e-2 if opt == "adam" else 0.5
    m, hist = C.train(m0, X, y, C.TrainConfig(learning_rate=lr, epochs=200, optimizer=opt,
                                              target_loss=None))
    assert hist[-1] < C.loss(m0, X, y)
    assert C.evaluate(m, X, y).accuracy > 0.9
    # train returns a copy
    assert np.array_equal(m0.weights[0], C.init_model((8, 6, 1), seed=2).weights[0])


def test_training_is_deterministic():
    X, y = _blobs()
    cfg = C.TrainConfig(epochs=20, batch_size=16, seed=3)
    a, ha = C.train(C.init_model((8, 4, 1), seed=1), X, y, cfg)
    b, hb = C.train(C.init_model((8, 4, 1), seed=1), X, y, cfg)
    assert ha == hb and np.array_equal(a.weights[0], b.weights[0])


def test_early_stopping():
    X, y = _blobs(gap=8.0)
    _, hist = C.train(C.init_model((8, 4, 1), seed=0), X, y,
                      C.TrainConfig(learning_rate=0.05, epochs=2000, target_loss=1e-2))
    assert len(hist) < 2000 and hist[-1] < 1e-2
    _, hist = C.train(C.init_model((8, 4, 1), seed=0), X, y,
                      C.TrainConfig(learning_rate=1e-9, epochs=500, target_loss=None,
                                    patience=5, min_delta=1e-3))
    assert len(hist) == 6  # first epoch sets the baseline, then 5 stale epochs


@pytest.mark.parametrize("X, y", [
    (np.zeros((0, 8)), np.zeros(0)),
    (np.zeros((4, 8)), np.zeros(4)),
    (np.zeros((4, 8)), np.array([0, 1, 2, 0])),
])
def test_train_rejects_bad_datasets(X, y):
    with pytest.raises(ValueError):
        C.train(C.init_model((8, 2, 1)), X, y)


def test_evaluate_confusion():
    m = C.init_model((1, 1), seed=0)
    m.weights[0][:] = 10.0
    rep = C.evaluate(m, np.array([[1.0], [-1.0], [1.0], [-1.0]]), [1, 0, 0, 1])
    assert rep.accuracy == 0.5
    assert rep.confusion.tolist() == [[1, 1], [1, 1]]
    assert rep.total == 4


def test_model_validation():
    with pytest.raises(ValueError):
        C.init_model((4, 2))
    with pytest.raises(ValueError):
        C.init_model((4, 1), hidden_activation="gelu")
    with pytest.raises(ValueError):
        C.init_model((4, 1), input_len=5)
    with pytest.raises(ValueError):
        C.TrainConfig(optimizer="sgd")
