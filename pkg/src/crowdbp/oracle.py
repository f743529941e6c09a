"""Brute-force references for small instances.

Nothing here shares factor-evaluation code with :mod:`crowdbp.bp`:
``enumerate_posterior`` sums the full joint over every label assignment, and
``moment_factor_oracle`` expands the factor-message integrand into
monomials whose expectations are exact Dirichlet/Beta moments.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import AssignmentGraph
from .priors import WorkerPrior, log_marginal


class OracleLimitError(ValueError):
    pass


@dataclass(frozen=True)
class OracleLimits:
    max_tasks: int = 12
    max_enum_states: int = 10 ** 6
    max_degree: int = 12


def enumerate_posterior(graph: AssignmentGraph, f_values: np.ndarray, prior: WorkerPrior,
                        limits: OracleLimits = OracleLimits()) -> np.ndarray:
    N, K = graph.num_tasks, graph.num_classes
    if N > limits.max_tasks or K ** N > limits.max_enum_states:
        raise OracleLimitError(f"{K}^{N} states exceed the enumeration limits")
    f_values = np.asarray(f_values, dtype=np.float64)
    z = np.array(list(itertools.product(range(K), repeat=N)), dtype=np.int64).reshape(-1, N)
    with np.errstate(divide="ignore"):
        log_f = np.log(f_values)
    log_joint = log_f[np.arange(N)[None, :], z].sum(axis=1)
    for u in range(graph.num_workers):
        tasks, labels = graph.tasks_of(u), graph.labels_of(u)
        if tasks.size == 0:
            continue
        gamma = np.zeros((z.shape[0], K, K))
        for t, y in zip(tasks, labels):
            gamma[np.arange(z.shape[0]), z[:, t], y] += 1.0
        log_joint = log_joint + log_marginal(prior, gamma)
    q = np.empty((N, K))
    for i in range(N):
        for k in range(K):
            q[i, k] = logsumexp(log_joint[z[:, i] == k])
    q = np.exp(q - logsumexp(log_joint))
    return q / q.sum(axis=1, keepdims=True)


def _log_moment(prior: WorkerPrior, counts: np.ndarray) -> float:
    """log E[prod theta^counts] under the prior, straight from Gamma functions."""
    K = counts.shape[0]
    lg = math.lgamma
    if prior.family == "dirichlet":
        total = 0.0
        for k in range(K):
            a = prior.alpha[k]
            total += lg(a.sum()) - lg(a.sum() + counts[k].sum())
            total += sum(lg(a[j] + counts[k, j]) - lg(a[j]) for j in range(K))
        return total
    a1, a2 = prior.alpha
    per_row = [(counts[k, k], counts[k].sum() - counts[k, k]) for k in range(K)]
    if prior.family == "onecoin":
        per_row = [(sum(c for c, _ in per_row), sum(w for _, w in per_row))]
    total = 0.0
    for c, w in per_row:
        total += (lg(a1 + c) + lg(a2 + w) - lg(a1 + a2 + c + w)
                  + lg(a1 + a2) - lg(a1) - lg(a2))
        if w:
            total -= w * math.log(K - 1)
    return total


def moment_factor_oracle(prior: WorkerPrior, labels, messages, target: int, target_class: int,
                         limits: OracleLimits = OracleLimits()) -> float:
    """E[theta[target_class, y_target] * prod_{j != target} <theta[:, y_j], m_j>]."""
    labels = [int(y) for y in labels]
    messages = np.asarray(messages, dtype=np.float64)
    n, K = messages.shape
    if n > limits.max_degree:
        raise OracleLimitError(f"degree {n} exceeds the oracle limit {limits.max_degree}")
    # polynomial in the K*K entries of theta: exponent tuple -> coefficient
    poly = {(target_class * K + labels[target],): 1.0}
    for j in range(n):
        if j == target:
            continue
        nxt = defaultdict(float)
        for mono, coef in poly.items():
            for z in range(K):
                if messages[j, z] == 0.0:
                    continue
                nxt[tuple(sorted(mono + (z * K + labels[j],)))] += coef * messages[j, z]
        poly = nxt
    value = 0.0
    for mono, coef in poly.items():
        counts = np.zeros((K, K))
        for idx in mono:
            counts[idx // K, idx % K] += 1
        value += coef * math.exp(_log_moment(prior, counts))
    return value


def moment_factor_message(prior: WorkerPrior, labels, messages, target: int,
                          limits: OracleLimits = OracleLimits()) -> np.ndarray:
    K = np.asarray(messages).shape[1]
    vals = np.array([moment_factor_oracle(prior, labels, messages, target, k, limits)
                     for k in range(K)])
    return vals / vals.sum()
