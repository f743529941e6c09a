import math

import numpy as np

from crowdbp.cli import random_tree_dataset
from crowdbp.core import CrowdDataset
from crowdbp.meanfield import (mf_elbo, mf_infer, mf_update_beta, mf_update_q, smoothed_majority,
                               soft_counts)
from crowdbp.oracle import enumerate_posterior
from crowdbp.priors import WorkerPrior


def one_worker(labels, N=None):
    n = len(labels)
    return CrowdDataset(N or n, 1, 2, list(range(n)), [0] * n, labels).graph


def test_beta_update_examples():
    pr = WorkerPrior.dirichlet([[2, 1], [1, 2]])
    g = one_worker([0, 0])
    assert np.allclose(mf_update_beta(np.array([[1.0, 0], [1.0, 0]]), g, pr)[0], [[4, 1], [1, 2]])
    assert np.allclose(mf_update_beta(np.full((2, 2), 0.5), g, pr)[0], [[3, 1], [2, 2]])
    g2 = CrowdDataset(2, 2, 2, [0, 1], [0, 0], [0, 0]).graph
    assert np.allclose(mf_update_beta(np.full((2, 2), 0.5), g2, pr)[1], [[2, 1], [1, 2]])


def test_q_update_examples():
    g = one_worker([0])
    q = mf_update_q(g, np.full((1, 2), 0.5), np.array([[[2.0, 1], [1, 2]]]))
    assert math.isclose(q[0, 0], 1 / (1 + math.exp(-1)), rel_tol=1e-12)
    g = CrowdDataset(2, 1, 2, [0], [0], [1]).graph
    f = np.array([[0.5, 0.5], [0.8, 0.2]])
    assert np.allclose(mf_update_q(g, f, np.array([[[2.0, 1], [1, 2]]]))[1], [0.8, 0.2])
    q = mf_update_q(one_worker([1]), np.full((1, 2), 0.5), np.array([[[3.0, 3], [3, 3]]]))
    assert np.allclose(q, 0.5)


def test_elbo_examples():
    g = CrowdDataset(0, 0, 2, [], [], []).graph
    pr = WorkerPrior.one_coin(2, 1)
    assert mf_elbo(np.zeros((0, 2)), np.zeros((0, 2, 2)) + 1, g, np.zeros((0, 2)), pr) == 0.0
    g = one_worker([0])
    alpha = np.array([[[2.0, 1], [1, 2]]])
    f = np.array([[0.3, 0.7]])
    val = mf_elbo(f, alpha, g, f, WorkerPrior.dirichlet(alpha[0]))
    assert math.isclose(val, 0.3 * -0.5 + 0.7 * -1.5, rel_tol=1e-12)


def test_infer_limits_and_symmetry():
    g = one_worker([1])
    st = mf_infer(g, np.full((1, 2), 0.5), WorkerPrior.one_coin(1e6, 1))
    assert st.q[0, 1] > 0.99
    # two spammer-like workers disagreeing everywhere keep q uniform
    ds = CrowdDataset(2, 2, 2, [0, 0, 1, 1], [0, 1, 0, 1], [0, 1, 1, 0])
    st = mf_infer(ds.graph, np.full((2, 2), 0.5), WorkerPrior.one_coin(2, 2))
    assert np.allclose(st.q, 0.5)


def test_trace_nondecreasing_and_beta_soft_counts(rng):
    for seed in range(10):
        ds = random_tree_dataset(6, 2, seed)
        f = rng.dirichlet(np.ones(2), size=6)
        st = mf_infer(ds.graph, f, WorkerPrior.one_coin(2, 1), tol=1e-10)
        assert np.all(np.diff(st.elbo_trace) >= -1e-9)
        counts = st.beta - 0.0
        diff = st.beta - mf_update_beta(np.zeros_like(st.q), ds.graph, WorkerPrior.one_coin(2, 1))
        assert np.all(diff >= 0) and math.isclose(diff.sum(), ds.num_answers)
        assert np.allclose(diff, soft_counts(st.q, ds.graph))
        assert counts.shape == (ds.num_workers, 2, 2)


def test_mf_vs_enumeration_on_small_tree():
    for seed in range(40):
        ds = random_tree_dataset(6, 2, seed)
        f = np.full((6, 2), 0.5)
        pr = WorkerPrior.one_coin(2, 1)
        exact = enumerate_posterior(ds.graph, f, pr)
        q = mf_infer(ds.graph, f, pr, tol=1e-10, max_iters=500).q
        # mean over tasks of the per-task total variation distance
        assert np.mean(0.5 * np.abs(q - exact).sum(axis=1)) < 0.15


def test_smoothed_majority():
    g = CrowdDataset(2, 2, 2, [0, 0], [0, 1], [1, 1], ).graph
    assert np.allclose(smoothed_majority(g), [[1 / 4, 3 / 4], [0.5, 0.5]])
