"""Synthetic crowdsourcing scenarios: regular assignment graphs, workers drawn
from a confusion-matrix prior, uniform spammers and Gaussian class features."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import AssignmentGraph, CrowdDataset, DataError
from .priors import WorkerPrior, sample_confusions

MAX_REJECTIONS = 10_000


class GraphSamplingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    num_tasks: int = 1000
    num_workers: int = 750
    num_classes: int = 2
    l: int = 3
    r: int = 4
    prior: WorkerPrior = field(default_factory=lambda: WorkerPrior.one_coin(2.0, 1.0))
    n_spammers: int = 0
    feature_dim: int = 2
    feature_separation: float = 3.0
    n_test: int = 1000

    def __post_init__(self):
        if self.num_tasks * self.l != self.num_workers * self.r:
            raise ValueError(f"N*l = {self.num_tasks * self.l} differs from "
                             f"M*r = {self.num_workers * self.r}")
        if self.n_spammers < 0 or self.feature_separation < 0 or self.n_test < 0:
            raise ValueError("n_spammers, feature_separation and n_test must be >= 0")


@dataclass
class Scenario:
    dataset: CrowdDataset
    test_features: np.ndarray
    test_truth: np.ndarray
    theta: np.ndarray
    spec: Optional[ScenarioSpec] = None


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gen_bipartite(num_tasks: int, l: int, num_workers: int, r: int, seed=None,
                  num_classes: int = 2) -> AssignmentGraph:
    """(l, r)-regular bipartite graph by the configuration model.

    Worker stubs are shuffled against task stubs; every duplicate edge is
    then repaired by swapping its worker with a random edge's worker, which
    keeps both degree sequences exact.
    """
    N, M = num_tasks, num_workers
    if N * l != M * r:
        raise ValueError(f"infeasible degrees: {N}*{l} != {M}*{r}")
    if l < 0 or r < 0 or (N * l > 0 and (l > M or r > N)):
        raise ValueError("degrees exceed the opposite side")
    rng = _rng(seed)
    tasks = np.repeat(np.arange(N, dtype=np.int64), l)
    workers = rng.permutation(np.repeat(np.arange(M, dtype=np.int64), r))
    E = tasks.size
    seen = {}
    dups = []
    for e in range(E):
        key = (int(tasks[e]), int(workers[e]))
        if key in seen:
            dups.append(e)
        else:
            seen[key] = e
    rejections = 0
    for e in dups:
        if seen.get((int(tasks[e]), int(workers[e]))) == e:
            continue  # already repaired as the partner of an earlier swap
        while True:
            e2 = int(rng.integers(E))
            t1, w1, t2, w2 = int(tasks[e]), int(workers[e]), int(tasks[e2]), int(workers[e2])
            new1, new2 = (t1, w2), (t2, w1)
            if e2 != e and t1 != t2 and new1 not in seen and new2 not in seen:
                break
            rejections += 1
            if rejections > MAX_REJECTIONS:
                raise GraphSamplingError(f"more than {MAX_REJECTIONS} rejected repairs")
        for key, owner in (((t1, w1), e), ((t2, w2), e2)):
            if seen.get(key) == owner:
                del seen[key]
        workers[e], workers[e2] = w2, w1
        seen[new1] = e
        seen[new2] = e2
    labels = np.zeros(E, dtype=np.int64)
    return AssignmentGraph.from_triples(tasks, workers, labels, N, M, num_classes)


def sample_truth(num_tasks: int, num_classes: int, seed=None) -> np.ndarray:
    return _rng(seed).integers(num_classes, size=num_tasks).astype(np.int64)


def _categorical(rng, probs):
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    return np.minimum((u[:, None] >= cdf).sum(axis=1), probs.shape[1] - 1).astype(np.int64)


def sample_answers(graph: AssignmentGraph, truth, prior: WorkerPrior, seed=None,
                   theta: Optional[np.ndarray] = None):
    """Draw one confusion matrix per worker, then one answer per edge.

    Returns ``(tasks, workers, labels, theta)``.
    """
    truth = np.asarray(truth, dtype=np.int64)
    if truth.shape != (graph.num_tasks,):
        raise DataError(f"truth must have length {graph.num_tasks}")
    rng = _rng(seed)
    K = graph.num_classes
    if theta is None:
        theta = sample_confusions(prior, K, graph.num_workers, rng)
    rows = theta[graph.edge_worker, truth[graph.edge_task]]
    labels = _categorical(rng, rows)
    return graph.edge_task.copy(), graph.edge_worker.copy(), labels, theta


def inject_spammers(dataset: CrowdDataset, n: int, seed=None) -> CrowdDataset:
    """Append ``n`` workers who answer every task uniformly at random."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return dataset
    rng = _rng(seed)
    N, M = dataset.num_tasks, dataset.num_workers
    tasks = np.tile(np.arange(N, dtype=np.int64), n)
    workers = np.repeat(np.arange(M, M + n, dtype=np.int64), N)
    labels = rng.integers(dataset.num_classes, size=N * n).astype(np.int64)
    return dataset.with_answers(np.concatenate([dataset.tasks, tasks]),
                                np.concatenate([dataset.workers, workers]),
                                np.concatenate([dataset.labels, labels]), M + n)


def gen_features(truth, d: int, s: float, seed=None, num_classes: Optional[int] = None) -> np.ndarray:
    """Unit-variance Gaussian blobs centred at ``s * e_k`` for class k."""
    truth = np.asarray(truth, dtype=np.int64)
    K = num_classes if num_classes is not None else (int(truth.max()) + 1 if truth.size else 1)
    if d < 1 or s < 0:
        raise ValueError("need d >= 1 and s >= 0")
    if d < K and s > 0:
        raise ValueError(f"feature_dim {d} must be at least the number of classes {K}")
    X = _rng(seed).standard_normal((truth.size, d))
    if s > 0:
        X[np.arange(truth.size), truth] += s
    return X


def generate_scenario(spec: ScenarioSpec, seed) -> Scenario:
    """Full pipeline; each stage draws from its own child of ``SeedSequence(seed)``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = [np.random.default_rng(s) for s in ss.spawn(7)]
    K = spec.num_classes
    graph = gen_bipartite(spec.num_tasks, spec.l, spec.num_workers, spec.r, streams[0], K)
    truth = sample_truth(spec.num_tasks, K, streams[1])
    tasks, workers, labels, theta = sample_answers(graph, truth, spec.prior, streams[2])
    X = gen_features(truth, spec.feature_dim, spec.feature_separation, streams[3], K)
    ds = CrowdDataset(spec.num_tasks, spec.num_workers, K, tasks, workers, labels, X, truth)
    ds = inject_spammers(ds, spec.n_spammers, streams[4])
    test_truth = sample_truth(spec.n_test, K, streams[5])
    test_X = gen_features(test_truth, spec.feature_dim, spec.feature_separation, streams[6], K)
    return Scenario(ds, test_X, test_truth, theta, spec)
