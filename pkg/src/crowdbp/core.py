"""Domain data model: crowdsourced datasets, assignment graphs, posteriors."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent crowdsourcing data."""


@dataclass(frozen=True)
class AssignmentGraph:
    """Bipartite task/worker graph with one answer per edge.

    Edges are stored sorted by (worker, task). ``worker_ptr`` indexes the
    contiguous edge range of each worker; ``task_edges[task_ptr[i]:task_ptr[i+1]]``
    lists the edge ids touching task ``i``.
    """

    num_tasks: int
    num_workers: int
    num_classes: int
    edge_task: np.ndarray
    edge_worker: np.ndarray
    edge_label: np.ndarray
    worker_ptr: np.ndarray
    task_ptr: np.ndarray
    task_edges: np.ndarray

    @classmethod
    def from_triples(cls, tasks, workers, labels, num_tasks, num_workers, num_classes):
        tasks = np.asarray(tasks, dtype=np.int64)
        workers = np.asarray(workers, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        order = np.lexsort((tasks, workers))
        et, ew, el = tasks[order], workers[order], labels[order]
        worker_ptr = np.zeros(num_workers + 1, dtype=np.int64)
        np.cumsum(np.bincount(ew, minlength=num_workers), out=worker_ptr[1:])
        task_edges = np.argsort(et, kind="stable").astype(np.int64)
        task_ptr = np.zeros(num_tasks + 1, dtype=np.int64)
        np.cumsum(np.bincount(et, minlength=num_tasks), out=task_ptr[1:])
        for arr in (et, ew, el, worker_ptr, task_ptr, task_edges):
            arr.setflags(write=False)
        return cls(num_tasks, num_workers, num_classes, et, ew, el,
                   worker_ptr, task_ptr, task_edges)

    @property
    def num_edges(self) -> int:
        return int(self.edge_task.shape[0])

    def tasks_of(self, worker: int) -> np.ndarray:
        return self.edge_task[self.worker_ptr[worker]:self.worker_ptr[worker + 1]]

    def labels_of(self, worker: int) -> np.ndarray:
        return self.edge_label[self.worker_ptr[worker]:self.worker_ptr[worker + 1]]

    def workers_of(self, task: int) -> np.ndarray:
        return self.edge_worker[self.task_edges[self.task_ptr[task]:self.task_ptr[task + 1]]]

    def task_degrees(self) -> np.ndarray:
        return np.diff(self.task_ptr)

    def worker_degrees(self) -> np.ndarray:
        return np.diff(self.worker_ptr)

    def vote_counts(self) -> np.ndarray:
        """N x K matrix of raw answer counts per task."""
        votes = np.zeros((self.num_tasks, self.num_classes))
        np.add.at(votes, (self.edge_task, self.edge_label), 1.0)
        return votes


@dataclass(frozen=True)
class CrowdDataset:
    """Tasks, workers and their answers, with optional features and truth.

    ``truth`` is kept for evaluation only; inference engines receive the
    ``graph`` and ``features`` and never the truth vector.
    """

    num_tasks: int
    num_workers: int
    num_classes: int
    tasks: np.ndarray
    workers: np.ndarray
    labels: np.ndarray
    features: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        tasks = np.asarray(self.tasks, dtype=np.int64).reshape(-1)
        workers = np.asarray(self.workers, dtype=np.int64).reshape(-1)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if not (tasks.shape == workers.shape == labels.shape):
            raise DataError("answer arrays must have equal length")
        if self.num_tasks < 0 or self.num_workers < 0 or self.num_classes < 1:
            raise DataError("dataset sizes must be non-negative and K >= 1")
        if tasks.size:
            for name, arr, hi in (("task_id", tasks, self.num_tasks),
                                  ("worker_id", workers, self.num_workers),
                                  ("label", labels, self.num_classes)):
                bad = np.flatnonzero((arr < 0) | (arr >= hi))
                if bad.size:
                    raise DataError(f"answer {bad[0]}: {name}={arr[bad[0]]} out of range [0, {hi})")
            key = tasks * max(self.num_workers, 1) + workers
            uniq, first, counts = np.unique(key, return_index=True, return_counts=True)
            if np.any(counts > 1):
                dup = np.flatnonzero(key == uniq[counts > 1][0])
                raise DataError(f"duplicate (task, worker) pair at answers {dup[0]} and {dup[1]}")
        object.__setattr__(self, "tasks", tasks)
        object.__setattr__(self, "workers", workers)
        object.__setattr__(self, "labels", labels)
        if self.features is not None:
            feats = np.asarray(self.features, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[0] != self.num_tasks:
                raise DataError(f"features must have {self.num_tasks} rows, got shape {feats.shape}")
            object.__setattr__(self, "features", feats)
        if self.truth is not None:
            truth = np.asarray(self.truth, dtype=np.int64).reshape(-1)
            if truth.shape[0] != self.num_tasks:
                raise DataError(f"truth must have length {self.num_tasks}")
            if truth.size and (truth.min() < 0 or truth.max() >= self.num_classes):
                raise DataError("truth label out of range")
            object.__setattr__(self, "truth", truth)

    @property
    def num_answers(self) -> int:
        return int(self.tasks.shape[0])

    @cached_property
    def graph(self) -> AssignmentGraph:
        return AssignmentGraph.from_triples(self.tasks, self.workers, self.labels,
                                            self.num_tasks, self.num_workers, self.num_classes)

    def with_answers(self, tasks, workers, labels, num_workers) -> "CrowdDataset":
        return CrowdDataset(self.num_tasks, num_workers, self.num_classes,
                            tasks, workers, labels, self.features, self.truth, dict(self.meta))


def check_posterior(q: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Validate an N x K posterior (rows on the simplex) and return it as float."""
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2:
        raise ValueError("posterior must be a 2-d array")
    if np.any(q < -atol) or np.any(q > 1 + atol) or not np.allclose(q.sum(axis=1), 1.0, atol=atol):
        raise ValueError("posterior rows must lie on the probability simplex")
    return q


def argmax_labels(q: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. ties go to the lowest class
    return np.argmax(np.asarray(q), axis=1).astype(np.int64)


def denoised_accuracy(q: np.ndarray, truth: Optional[np.ndarray]) -> float:
    if truth is None:
        raise DataError("denoised accuracy needs ground-truth labels")
    truth = np.asarray(truth, dtype=np.int64)
    pred = argmax_labels(q)
    if pred.shape != truth.shape:
        raise DataError(f"truth has {truth.shape[0]} entries, posterior has {pred.shape[0]} rows")
    if truth.size == 0:
        return 1.0
    return float(np.mean(pred == truth))


@dataclass
class MetricsReport:
    denoised_accuracy: float
    test_accuracy: Optional[float] = None
    per_seed: dict = field(default_factory=dict)
    marginal_histogram: Optional[np.ndarray] = None
    sorted_worst_accuracies: Optional[np.ndarray] = None

    def __post_init__(self):
        for acc in (self.denoised_accuracy, self.test_accuracy):
            if acc is not None and not 0.0 <= acc <= 1.0:
                raise ValueError(f"accuracy {acc} outside [0, 1]")
