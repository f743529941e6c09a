import math

import numpy as np
import pytest

from crowdbp.classifier import (ClassifierModel, TrainingError, clip_probs, fit_weighted, init_model,
                                loss_and_grad, loss_weighted, predict_proba)


def numeric_grad(model, X, q, h=1e-5):
    out = {}
    for k, v in model.params.items():
        g = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + h
            lp = loss_weighted(model, X, q)
            v[idx] = old - h
            lm = loss_weighted(model, X, q)
            v[idx] = old
            g[idx] = (lp - lm) / (2 * h)
        out[k] = g
    return out


def grad_rel_error(model, X, q):
    _, ga = loss_and_grad(model, X, q)
    gn = numeric_grad(model, X, q)
    a = np.concatenate([ga[k].ravel() for k in sorted(ga)])
    n = np.concatenate([gn[k].ravel() for k in sorted(gn)])
    return np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)


def test_predict_examples(rng):
    m = init_model("logistic", 3, 4, init_scale=0.0)
    assert np.allclose(predict_proba(m, rng.normal(size=(5, 3))), 0.25)
    m = init_model("logistic", 2, 2, init_scale=0.0)
    m.params["W"][:] = [[1.0, -1.0], [1.0, -1.0]]
    assert np.allclose(predict_proba(m, np.array([[1.0, -1.0]])), [[0.5, 0.5]])
    for kind in ("logistic", "mlp1"):
        mm = init_model(kind, 3, 3, seed=1, init_scale=2.0)
        assert np.allclose(predict_proba(mm, rng.normal(size=(50, 3)) * 5).sum(axis=1), 1.0, atol=1e-9)
    with pytest.raises(ValueError, match="width"):
        predict_proba(m, np.zeros((1, 3)))


def test_clip_examples():
    assert np.allclose(clip_probs([[0.97, 0.03]], 0.9), [[0.9, 0.1]])
    assert np.array_equal(clip_probs([[0.5, 0.5]], 0.9), [[0.5, 0.5]])
    assert np.allclose(clip_probs([[0.95, 0.04, 0.01]], 0.9), [[0.9, 0.065, 0.035]], atol=1e-15)
    with pytest.raises(ValueError):
        clip_probs([[0.5, 0.5]], 0.5)
    rows = np.array([[0.3, 0.7], [0.99, 0.01]])
    assert np.array_equal(clip_probs(rows, 1.0), rows)


def test_clip_cascade():
    # spreading the excess can push another class over the cap
    out = clip_probs([[0.5, 0.39, 0.11]], 0.4)
    assert np.all(out <= 0.4 + 1e-12) and math.isclose(out.sum(), 1.0)
    assert np.allclose(out, [[0.4, 0.4, 0.2]])


def test_loss_examples():
    m = init_model("logistic", 1, 2, init_scale=0.0)
    assert math.isclose(loss_weighted(m, np.zeros((1, 1)), np.array([[1.0, 0.0]])), math.log(2))
    mm = init_model("mlp1", 2, 3, seed=3, l2_lambda=0.01, init_scale=0.5)
    X = np.random.default_rng(0).normal(size=(6, 2))
    p = predict_proba(mm, X)
    ent = -np.sum(p * np.log(p))
    l2 = 0.01 * sum(np.sum(v * v) for v in mm.params.values())
    assert math.isclose(loss_weighted(mm, X, p), ent + l2, rel_tol=1e-12)


@pytest.mark.parametrize("kind,tol", [("logistic", 1e-4), ("mlp1", 1e-3)])
def test_gradient_check(kind, tol):
    rng = np.random.default_rng(5)
    for t in range(10):
        m = init_model(kind, 3, 3, seed=t, hidden=5, l2_lambda=0.05, init_scale=1.0)
        X = rng.normal(size=(7, 3))
        q = rng.dirichlet(np.ones(3), size=7)
        assert grad_rel_error(m, X, q) < tol


def test_fit_separable_blobs():
    rng = np.random.default_rng(0)
    y = rng.integers(2, size=200)
    X = rng.normal(size=(200, 2)) * 0.5 + np.where(y[:, None] == 0, -2.0, 2.0)
    m = fit_weighted(init_model("logistic", 2, 2, seed=0), X, np.eye(2)[y], epochs=500, learning_rate=0.1)
    assert np.mean(predict_proba(m, X).argmax(1) == y) == 1.0


def test_uniform_targets_shrink_weights():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 3))
    m0 = init_model("logistic", 3, 2, seed=0, l2_lambda=0.5, init_scale=1.0)
    m = fit_weighted(m0, X, np.full((100, 2), 0.5), epochs=2000, learning_rate=0.5)
    assert np.abs(m.params["W"]).max() < 0.05 * np.abs(m0.params["W"]).max()
    assert np.allclose(predict_proba(m, X), 0.5, atol=0.02)


def test_backtracking_monotone():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 3)) * 3
    q = rng.dirichlet(np.ones(3), size=40)
    m = init_model("mlp1", 3, 3, seed=0, hidden=8, l2_lambda=1e-3)
    last = loss_weighted(m, X, q)
    for _ in range(20):
        m = fit_weighted(m, X, q, epochs=1, learning_rate=5.0, backtracking=True)
        cur = loss_weighted(m, X, q)
        assert cur <= last + 1e-12
        last = cur


def test_fit_deterministic_and_adam():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 2))
    q = rng.dirichlet(np.ones(2), size=30)
    a = fit_weighted(init_model("mlp1", 2, 2, seed=4), X, q, epochs=30)
    b = fit_weighted(init_model("mlp1", 2, 2, seed=4), X, q, epochs=30)
    for k in a.params:
        assert np.array_equal(a.params[k], b.params[k])
    c = fit_weighted(init_model("logistic", 2, 2, seed=4), X, q, epochs=30, optimizer="adam",
                     learning_rate=0.05)
    assert np.all(np.isfinite(c.params["W"]))


def test_nonfinite_loss_raises():
    m = init_model("logistic", 1, 2, init_scale=0.0)
    with pytest.raises(TrainingError, match="non-finite"):
        fit_weighted(m, np.array([[np.nan]]), np.array([[1.0, 0.0]]), epochs=1)


def test_model_dict_roundtrip():
    m = init_model("mlp1", 2, 3, seed=1)
    m2 = ClassifierModel.from_dict(m.to_dict())
    for k in m.params:
        assert np.array_equal(m.params[k], m2.params[k])


def test_zero_output_gives_uniform_predictions(rng):
    for kind in ("logistic", "mlp1"):
        m = init_model(kind, 4, 3, seed=0, zero_output=True)
        assert np.allclose(predict_proba(m, rng.normal(size=(10, 4)) * 10), 1 / 3)
    assert np.any(init_model("mlp1", 4, 3, seed=0, zero_output=True).params["W1"] != 0)
