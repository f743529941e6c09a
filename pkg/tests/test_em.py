from dataclasses import replace

import numpy as np
import pytest

from crowdbp.bp import FactorEvalConfig
from crowdbp.classifier import predict_proba
from crowdbp.core import CrowdDataset, DataError, argmax_labels, denoised_accuracy
from crowdbp.em import (ClassifierConfig, EMConfig, cl_estep, cl_mstep, run_algorithm, run_cl,
                        run_deep_bp, run_deep_mf, run_featureless, run_mv, run_trace, trace_mstep)
from crowdbp.meanfield import soft_counts
from crowdbp.oracle import enumerate_posterior
from crowdbp.priors import WorkerPrior
from crowdbp.synth import ScenarioSpec, generate_scenario


def small_dataset(seed=0, N=40, M=30, l=3, r=4, s=3.0, prior=None):
    spec = ScenarioSpec(N, M, 2, l, r, prior or WorkerPrior.one_coin(3.0, 1.0), feature_separation=s, n_test=200)
    return generate_scenario(spec, seed)


def test_mv_examples():
    ds = CrowdDataset(3, 3, 2, [0, 0, 0, 1, 1], [0, 1, 2, 0, 1], [0, 0, 1, 0, 1])
    q = run_mv(ds)
    assert np.allclose(q, [[2 / 3, 1 / 3], [0.5, 0.5], [0.5, 0.5]])
    assert argmax_labels(q)[1] == 0


def test_featureless_single_perfect_worker():
    ds = CrowdDataset(2, 1, 2, [0, 1], [0, 0], [0, 1])
    cfg = EMConfig(algorithm="bp", prior=WorkerPrior.one_coin(1e6, 1.0),
                   factor=FactorEvalConfig(mode="exact_enum"))
    q = run_featureless(ds, cfg).q
    assert argmax_labels(q).tolist() == [0, 1]
    assert q[0, 0] > 0.99 and q[1, 1] > 0.99


def test_featureless_symmetric_prior_uniform():
    sc = small_dataset(1)
    cfg = EMConfig(algorithm="bp", prior=WorkerPrior.one_coin(1.0, 1.0))
    assert np.allclose(run_featureless(sc.dataset, cfg).q, 0.5, atol=1e-12)


def test_featureless_tree_bp_matches_oracle_mf_loose():
    # path: task t and t+1 share worker t
    ds = CrowdDataset(5, 4, 2, [0, 1, 1, 2, 2, 3, 3, 4], [0, 0, 1, 1, 2, 2, 3, 3],
                      [0, 0, 1, 0, 0, 0, 1, 1])
    prior = WorkerPrior.one_coin(2.0, 1.0)
    f = np.full((5, 2), 0.5)
    exact = enumerate_posterior(ds.graph, f, prior)
    qb = run_featureless(ds, EMConfig(algorithm="bp", prior=prior, bp_max_sweeps=100, bp_tol=1e-14)).q
    qm = run_featureless(ds, EMConfig(algorithm="mf", prior=prior)).q
    assert np.max(np.abs(qb - exact)) < 1e-8
    assert np.mean(0.5 * np.abs(qm - exact).sum(axis=1)) < 0.15


@pytest.mark.parametrize("algo", ["deepmf", "deepbp"])
def test_reduction_identity(algo):
    sc = small_dataset(2)
    cfg = EMConfig(algorithm=algo, outer_rounds=1, classifier=ClassifierConfig(epochs=0))
    deep = run_algorithm(sc.dataset, cfg).q
    flat = run_featureless(sc.dataset, cfg).q
    assert np.array_equal(deep, flat)
    # more rounds change nothing: the classifier output never moves
    assert np.array_equal(run_algorithm(sc.dataset, replace(cfg, outer_rounds=5)).q, flat)


def test_trace_lambda_zero_equals_cl():
    sc = small_dataset(3)
    cfg = EMConfig(algorithm="cl", outer_rounds=5, seed=7)
    a = run_cl(sc.dataset, cfg)
    b = run_trace(sc.dataset, replace(cfg, algorithm="trace", trace_lambda=0.0))
    assert np.array_equal(a.q, b.q) and np.array_equal(a.theta, b.theta)
    for k in a.model.params:
        assert np.array_equal(a.model.params[k], b.model.params[k])


def test_trace_large_lambda_pushes_diagonal_down(rng):
    counts = rng.uniform(0, 5, size=(6, 2, 2)) + np.eye(2) * 10
    theta = cl_mstep(counts)
    plain = trace_mstep(counts, theta, 0.0, 20, 0.01)
    heavy = trace_mstep(counts, theta, 1e3, 20, 0.01)
    assert np.all(np.diagonal(heavy, axis1=1, axis2=2) < np.diagonal(plain, axis1=1, axis2=2))
    assert np.allclose(heavy.sum(axis=2), 1.0)
    with pytest.raises(ValueError):
        EMConfig(algorithm="trace", trace_lambda=-1.0)


def test_cl_uniform_theta_returns_f(rng):
    sc = small_dataset(4)
    f = rng.dirichlet(np.ones(2), size=sc.dataset.num_tasks)
    theta = np.full((sc.dataset.num_workers, 2, 2), 0.5)
    assert np.allclose(cl_estep(sc.dataset, f, theta), f, atol=1e-12)


def test_cl_mstep_floor():
    th = cl_mstep(np.array([[[3.0, 0.0], [0.0, 0.0]]]))
    assert np.allclose(th.sum(axis=2), 1.0)
    assert th[0, 0, 1] > 0 and np.allclose(th[0, 1], 0.5)


@pytest.mark.parametrize("algo", ["deepmf", "deepbp", "cl"])
def test_perfect_workers_separable_features(algo):
    spec = ScenarioSpec(200, 150, 2, 3, 4, WorkerPrior.one_coin(1e6, 1.0), feature_separation=4.0,
                        n_test=500)
    sc = generate_scenario(spec, 11)
    res = run_algorithm(sc.dataset, EMConfig(algorithm=algo, prior=WorkerPrior.one_coin(1e6, 1.0),
                                             outer_rounds=10))
    assert denoised_accuracy(res.q, sc.dataset.truth) == 1.0
    if algo == "deepmf":
        pred = argmax_labels(predict_proba(res.model, sc.test_features))
        assert np.mean(pred == sc.test_truth) >= 0.95


def test_missing_features_error():
    ds = CrowdDataset(2, 1, 2, [0, 1], [0, 0], [0, 1])
    for algo in ("deepmf", "deepbp", "cl", "trace"):
        with pytest.raises(DataError, match="features"):
            run_algorithm(ds, EMConfig(algorithm=algo))


def test_drivers_deterministic():
    sc = small_dataset(5)
    for algo in ("deepmf", "deepbp", "trace"):
        cfg = EMConfig(algorithm=algo, outer_rounds=4, seed=3, trace_lambda=0.5,
                       factor=FactorEvalConfig(mode="monte_carlo", samples=50, seed=3))
        a, b = run_algorithm(sc.dataset, cfg), run_algorithm(sc.dataset, cfg)
        assert np.array_equal(a.q, b.q)


def test_config_validation():
    with pytest.raises(ValueError):
        EMConfig(algorithm="nope")
    with pytest.raises(ValueError):
        EMConfig(outer_rounds=0)
    assert EMConfig(algorithm="cl").clip_value == 1.0
    assert EMConfig(algorithm="deepbp").clip_value == 0.9
    assert EMConfig(algorithm="cl", clip=0.8).clip_value == 0.8


def test_soft_counts_shape_matches_theta():
    sc = small_dataset(6)
    q = run_mv(sc.dataset)
    c = soft_counts(q, sc.dataset.graph)
    assert c.shape == (sc.dataset.num_workers, 2, 2)
    assert np.isclose(c.sum(), sc.dataset.num_answers)
