import math

import numpy as np
import pytest

from crowdbp.bp import factor_message_exact
from crowdbp.core import CrowdDataset
from crowdbp.oracle import (OracleLimitError, OracleLimits, enumerate_posterior,
                            moment_factor_message, moment_factor_oracle)
from crowdbp.priors import WorkerPrior

ONE = WorkerPrior.one_coin(2, 1)


def test_single_task_single_worker():
    ds = CrowdDataset(1, 1, 2, [0], [0], [0])
    assert np.allclose(enumerate_posterior(ds.graph, np.full((1, 2), 0.5), ONE), [[2 / 3, 1 / 3]])


def test_no_workers_returns_f():
    f = np.array([[0.2, 0.8], [0.6, 0.4]])
    ds = CrowdDataset(2, 0, 2, [], [], [])
    assert np.allclose(enumerate_posterior(ds.graph, f, ONE), f)


def test_two_tasks_one_worker():
    ds = CrowdDataset(2, 1, 2, [0, 1], [0, 0], [0, 0])
    q = enumerate_posterior(ds.graph, np.full((2, 2), 0.5), ONE)
    assert np.allclose(q[0], [2 / 3, 1 / 3], atol=1e-14)


def test_limits():
    ds = CrowdDataset(13, 0, 2, [], [], [])
    with pytest.raises(OracleLimitError):
        enumerate_posterior(ds.graph, np.full((13, 2), 0.5), ONE)
    with pytest.raises(OracleLimitError):
        moment_factor_oracle(ONE, [0] * 13, np.full((13, 2), 0.5), 0, 0)
    with pytest.raises(OracleLimitError):
        moment_factor_oracle(ONE, [0] * 5, np.full((5, 2), 0.5), 0, 0, OracleLimits(max_degree=4))


def test_moment_degree_one():
    m = np.full((1, 2), 0.5)
    assert math.isclose(moment_factor_oracle(ONE, [0], m, 0, 0), 2 / 3, rel_tol=1e-14)
    assert math.isclose(moment_factor_oracle(ONE, [0], m, 0, 1), 1 / 3, rel_tol=1e-14)


def test_moment_symmetry():
    pr = WorkerPrior.one_coin(1, 1)
    m = np.full((3, 2), 0.5)
    assert np.allclose(moment_factor_message(pr, [0, 1, 1], m, 1), 0.5)


def test_moment_matches_exact_degree4(rng):
    for prior in (ONE, WorkerPrior.dirichlet(rng.uniform(0.5, 3, (3, 3))), WorkerPrior.two_coin(1.5, 0.7)):
        lab = rng.integers(3, size=4)
        m = rng.dirichlet(np.ones(3), size=4)
        assert np.allclose(moment_factor_message(prior, lab, m, 2),
                           factor_message_exact(prior, lab, m, 2), atol=1e-10, rtol=0)


def test_enumeration_normalised_and_equivariant(rng):
    ds = CrowdDataset(4, 3, 3, [0, 1, 1, 2, 3, 0], [0, 0, 1, 1, 2, 2], [0, 1, 2, 2, 1, 0])
    f = rng.dirichlet(np.ones(3), size=4)
    pr = WorkerPrior.diagonal_dirichlet(3, 2.0, 0.7)
    q = enumerate_posterior(ds.graph, f, pr)
    assert np.allclose(q.sum(axis=1), 1.0, atol=1e-12)
    perm = np.array([2, 0, 1])  # class k becomes perm[k]
    inv = np.argsort(perm)
    ds2 = CrowdDataset(4, 3, 3, ds.tasks, ds.workers, perm[ds.labels])
    q2 = enumerate_posterior(ds2.graph, f[:, inv], pr)
    assert np.allclose(q2, q[:, inv], atol=1e-12)
