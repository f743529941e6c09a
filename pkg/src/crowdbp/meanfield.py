"""Mean-field coordinate ascent over q(z) and Dirichlet q(theta; beta)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AssignmentGraph
from .priors import WorkerPrior, dirichlet_rows, expected_log_theta, kl_dirichlet

LOG_FLOOR = 1e-300


@dataclass
class MFState:
    q: np.ndarray
    beta: np.ndarray
    elbo_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def smoothed_majority(graph: AssignmentGraph) -> np.ndarray:
    """q_i(z) proportional to 1 + votes_i(z)."""
    votes = graph.vote_counts() + 1.0
    return votes / votes.sum(axis=1, keepdims=True)


def soft_counts(q: np.ndarray, graph: AssignmentGraph) -> np.ndarray:
    """Per-worker soft count matrices, shape (M, K, K)."""
    M, K = graph.num_workers, graph.num_classes
    qe = q[graph.edge_task]
    counts = np.zeros((M, K, K))
    for k1 in range(K):
        flat = (graph.edge_worker * K + k1) * K + graph.edge_label
        counts += np.bincount(flat, weights=qe[:, k1], minlength=M * K * K).reshape(M, K, K)
    return counts


def mf_update_beta(q: np.ndarray, graph: AssignmentGraph, prior: WorkerPrior) -> np.ndarray:
    alpha = dirichlet_rows(prior, graph.num_classes)
    return alpha[None, :, :] + soft_counts(q, graph)


def _log_f(f_values: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(f_values, LOG_FLOOR))


def _edge_evidence(graph: AssignmentGraph, beta: np.ndarray) -> np.ndarray:
    elog = expected_log_theta(beta)
    return elog[graph.edge_worker, :, graph.edge_label]


def mf_update_q(graph: AssignmentGraph, f_values: np.ndarray, beta: np.ndarray) -> np.ndarray:
    K = graph.num_classes
    # shifting log f per row leaves q unchanged and makes every constant row exactly 0
    logq = _log_f(f_values)
    logq = logq - logq.max(axis=1, keepdims=True)
    evid = _edge_evidence(graph, beta)
    for k in range(K):
        logq[:, k] += np.bincount(graph.edge_task, weights=evid[:, k], minlength=graph.num_tasks)
    logq -= logq.max(axis=1, keepdims=True)
    q = np.exp(logq)
    return q / q.sum(axis=1, keepdims=True)


def mf_elbo(q: np.ndarray, beta: np.ndarray, graph: AssignmentGraph,
            f_values: np.ndarray, prior: WorkerPrior) -> float:
    alpha = dirichlet_rows(prior, graph.num_classes)
    expected_ll = float(np.sum(q[graph.edge_task] * _edge_evidence(graph, beta))) if graph.num_edges else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_terms = np.where(q > 0, q * (np.log(np.where(q > 0, q, 1.0)) - _log_f(f_values)), 0.0)
    kl_theta = float(kl_dirichlet(beta, alpha[None, :, :]).sum()) if beta.size else 0.0
    return expected_ll - float(kl_terms.sum()) - kl_theta


def mf_infer(graph: AssignmentGraph, f_values: np.ndarray, prior: WorkerPrior,
             tol: float = 1e-6, max_iters: int = 100, q_init=None) -> MFState:
    """Alternate beta and q updates until the largest q change falls below ``tol``.

    The returned ``beta`` is the closed-form update for the returned ``q``.
    """
    prior.check_classes(graph.num_classes)
    q = smoothed_majority(graph) if q_init is None else np.array(q_init, dtype=np.float64)
    state = MFState(q=q, beta=mf_update_beta(q, graph, prior))
    for it in range(max_iters):
        beta = mf_update_beta(q, graph, prior)
        q_new = mf_update_q(graph, f_values, beta)
        state.elbo_trace.append(mf_elbo(q_new, beta, graph, f_values, prior))
        delta = float(np.max(np.abs(q_new - q))) if q.size else 0.0
        q = q_new
        state.iterations = it + 1
        if delta < tol:
            state.converged = True
            break
    state.q = q
    state.beta = mf_update_beta(q, graph, prior)
    return state
