"""Sum-product belief propagation on the task/worker factor graph.

Worker factors integrate the confusion matrix out against the prior, so a
worker-to-task message marginalises over the worker's other tasks. Three
evaluators are available: brute-force enumeration (any prior, small degree),
an exact Poisson-binomial dynamic program (one-coin prior, any degree) and a
Monte-Carlo average over sampled confusion matrices (any prior).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .core import AssignmentGraph
from .priors import WorkerPrior, log_marginal, sample_confusions

MODES = ("auto", "exact_enum", "onecoin_dp", "monte_carlo")
FLOOR = 1e-300


@dataclass(frozen=True)
class FactorEvalConfig:
    mode: str = "auto"
    samples: int = 400
    exact_degree_cap: int = 10
    damping: float = 0.0
    seed: int = 0
    max_enum_states: int = 1 << 16

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown factor mode {self.mode!r}")
        if self.samples < 1 or self.exact_degree_cap < 1:
            raise ValueError("samples and exact_degree_cap must be >= 1")
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")


@dataclass
class MessageState:
    task_to_worker: np.ndarray
    worker_to_task: np.ndarray
    feature_messages: np.ndarray
    iterations: int = 0
    converged: bool = False
    max_change: float = float("inf")


class DegreeTooLargeError(ValueError):
    pass


def _check_messages(labels, messages):
    labels = np.asarray(labels, dtype=np.int64)
    messages = np.asarray(messages, dtype=np.float64)
    if messages.ndim != 2 or messages.shape[0] != labels.shape[0]:
        raise ValueError("need one incoming message row per answer")
    return labels, messages


def exact_worker_messages(prior: WorkerPrior, labels, messages, degree_cap: int = 10,
                          max_states: int = 1 << 20) -> np.ndarray:
    """Messages to every task of one worker by enumerating all joint labels."""
    labels, messages = _check_messages(labels, messages)
    n, K = messages.shape
    if n > degree_cap or K ** n > max_states:
        raise DegreeTooLargeError(
            f"worker degree {n} too large for enumeration (cap {degree_cap}); "
            "use mode='onecoin_dp' or mode='monte_carlo'")
    z = np.array(list(itertools.product(range(K), repeat=n)), dtype=np.int64).reshape(-1, n)
    gamma = np.zeros((z.shape[0], K * K))
    rows = np.arange(z.shape[0])
    for j in range(n):
        np.add.at(gamma, (rows, z[:, j] * K + labels[j]), 1.0)
    log_g = log_marginal(prior, gamma.reshape(-1, K, K))
    log_m = np.log(np.maximum(messages, FLOOR))[np.arange(n)[None, :], z]
    total = log_g + log_m.sum(axis=1)
    out = np.empty((n, K))
    for i in range(n):
        rest = total - log_m[:, i]
        for k in range(K):
            out[i, k] = logsumexp(rest[z[:, i] == k])
    out = np.exp(out - out.max(axis=1, keepdims=True))
    return out / out.sum(axis=1, keepdims=True)


def factor_message_exact(prior: WorkerPrior, labels, messages, target: int,
                         degree_cap: int = 10) -> np.ndarray:
    """Message from a worker to its ``target``-th task by enumeration.

    ``labels[j]`` is the worker's answer on its j-th task and
    ``messages[j]`` the incoming task-to-worker message (the target's own
    row is ignored).
    """
    return exact_worker_messages(prior, labels, messages, degree_cap)[target]


def factor_message_onecoin_dp(prior: WorkerPrior, labels, messages, target: int) -> np.ndarray:
    if prior.family != "onecoin":
        raise ValueError("the Poisson-binomial evaluator needs a one-coin prior")
    labels, messages = _check_messages(labels, messages)
    ptr = np.array([0, labels.shape[0]], dtype=np.int64)
    out = kernels.onecoin_dp_messages(ptr, labels, messages, prior.alpha[0], prior.alpha[1],
                                      messages.shape[1])
    return out[target]


def factor_message_mc(prior: WorkerPrior, labels, messages, target: int,
                      samples: int = 400, seed=None) -> np.ndarray:
    labels, messages = _check_messages(labels, messages)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    theta = sample_confusions(prior, messages.shape[1], samples, seed)
    return kernels.mc_worker_messages(theta, messages, labels)[target]


def _normalize_log(logm: np.ndarray) -> np.ndarray:
    m = np.exp(logm - logm.max(axis=1, keepdims=True))
    return m / m.sum(axis=1, keepdims=True)


class _WorkerPlan:
    """Per-worker choice of factor evaluator, with presampled confusion matrices."""

    def __init__(self, graph: AssignmentGraph, prior: WorkerPrior, config: FactorEvalConfig):
        self.use_dp = False
        self.exact = []
        self.mc = []
        self.samples = {}
        mode = config.mode
        K = graph.num_classes
        if mode == "onecoin_dp" and prior.family != "onecoin":
            raise ValueError("mode 'onecoin_dp' needs a one-coin prior")
        if mode == "onecoin_dp" or (mode == "auto" and prior.family == "onecoin"):
            self.use_dp = True
            return
        deg = graph.worker_degrees()
        for u in range(graph.num_workers):
            n = int(deg[u])
            if n == 0:
                continue
            fits = n <= config.exact_degree_cap and K ** n <= config.max_enum_states
            if mode == "exact_enum":
                if n > config.exact_degree_cap:
                    raise DegreeTooLargeError(
                        f"worker {u} has degree {n} > exact_degree_cap {config.exact_degree_cap}")
                self.exact.append(u)
            elif mode == "auto" and fits:
                self.exact.append(u)
            else:
                self.mc.append(u)
                rng = np.random.default_rng(np.random.SeedSequence([config.seed, u]))
                self.samples[u] = sample_confusions(prior, K, config.samples, rng)


def _worker_to_task(graph, prior, plan, t2w, config):
    if plan.use_dp:
        return kernels.onecoin_dp_messages(graph.worker_ptr, graph.edge_label, t2w,
                                           prior.alpha[0], prior.alpha[1], graph.num_classes)
    out = np.full_like(t2w, 1.0 / graph.num_classes)
    ptr = graph.worker_ptr
    for u in plan.exact:
        sl = slice(ptr[u], ptr[u + 1])
        out[sl] = exact_worker_messages(prior, graph.edge_label[sl], t2w[sl],
                                        degree_cap=max(config.exact_degree_cap, ptr[u + 1] - ptr[u]),
                                        max_states=max(config.max_enum_states, 1 << 20))
    for u in plan.mc:
        sl = slice(ptr[u], ptr[u + 1])
        out[sl] = kernels.mc_worker_messages(plan.samples[u], np.ascontiguousarray(t2w[sl]),
                                             np.ascontiguousarray(graph.edge_label[sl]))
    return out


def _log_beliefs(graph, log_f, log_w2t):
    belief = log_f.copy()
    for k in range(graph.num_classes):
        belief[:, k] += np.bincount(graph.edge_task, weights=log_w2t[:, k],
                                    minlength=graph.num_tasks)
    return belief


def bp_run(graph: AssignmentGraph, f_values: np.ndarray, prior: WorkerPrior,
           config: FactorEvalConfig | None = None, max_sweeps: int = 50, tol: float = 1e-6,
           state: MessageState | None = None):
    """Synchronous sum-product sweeps; returns ``(q, MessageState)``.

    Passing the ``state`` of an earlier run warm-starts the worker-to-task
    messages; otherwise they start uniform.
    """
    config = config or FactorEvalConfig()
    prior.check_classes(graph.num_classes)
    N, K, E = graph.num_tasks, graph.num_classes, graph.num_edges
    f_values = np.asarray(f_values, dtype=np.float64)
    if f_values.shape != (N, K):
        raise ValueError(f"feature messages must have shape {(N, K)}")
    log_f = np.log(np.maximum(f_values, FLOOR))
    log_f = log_f - log_f.max(axis=1, keepdims=True)
    if state is None or state.worker_to_task.shape != (E, K):
        w2t = np.full((E, K), 1.0 / K)
    else:
        w2t = state.worker_to_task.copy()
    t2w = np.full((E, K), 1.0 / K)
    plan = _WorkerPlan(graph, prior, config)
    new_state = MessageState(t2w, w2t, f_values.copy())
    for sweep in range(max_sweeps):
        log_w2t = np.log(np.maximum(w2t, FLOOR))
        belief = _log_beliefs(graph, log_f, log_w2t)
        t2w = _normalize_log(belief[graph.edge_task] - log_w2t)
        new = _worker_to_task(graph, prior, plan, t2w, config)
        if config.damping > 0.0:
            new = (1.0 - config.damping) * new + config.damping * w2t
        new = np.maximum(new, FLOOR)
        new /= new.sum(axis=1, keepdims=True)
        change = float(np.max(np.abs(new - w2t))) if E else 0.0
        w2t = new
        new_state.iterations = sweep + 1
        new_state.max_change = change
        if change < tol:
            new_state.converged = True
            break
    new_state.task_to_worker = t2w
    new_state.worker_to_task = w2t
    q = _normalize_log(_log_beliefs(graph, log_f, np.log(np.maximum(w2t, FLOOR))))
    return q, new_state
