"""Label aggregation drivers: majority vote, featureless MF/BP, the joint
classifier/aggregation EM loops (deepMF, deepBP) and the point-estimate
confusion-matrix variants (CL, Trace)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bp import FactorEvalConfig, bp_run
from .classifier import ClassifierModel, clip_probs, fit_weighted, init_model, predict_proba
from .core import CrowdDataset, DataError
from .meanfield import mf_infer, soft_counts
from .priors import WorkerPrior

ALGORITHMS = ("mv", "mf", "bp", "deepmf", "deepbp", "cl", "trace")
CL_FLOOR = 1e-6


@dataclass
class ClassifierConfig:
    kind: str = "logistic"
    hidden: int = 16
    l2_lambda: float = 1e-4
    init_scale: float = 0.1
    zero_output: bool = True
    epochs: int = 100
    learning_rate: float = 0.5
    optimizer: str = "gd"
    backtracking: bool = False


@dataclass
class EMConfig:
    algorithm: str = "deepbp"
    prior: WorkerPrior = field(default_factory=lambda: WorkerPrior.one_coin(2.0, 1.0))
    clip: Optional[float] = None  # None: 0.9 for deepmf/deepbp, 1.0 (no clipping) for cl/trace
    outer_rounds: int = 50
    outer_tol: float = 1e-4
    mf_tol: float = 1e-6
    mf_max_iters: int = 100
    bp_tol: float = 1e-6
    bp_max_sweeps: int = 50
    bp_cold_start: bool = False
    factor: FactorEvalConfig = field(default_factory=FactorEvalConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    trace_lambda: float = 0.0
    trace_init: float = 2.0
    trace_steps: int = 20
    trace_lr: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.outer_rounds < 1:
            raise ValueError("outer_rounds must be >= 1")
        if self.trace_lambda < 0:
            raise ValueError("trace_lambda must be >= 0")
        if self.trace_init <= 0:
            raise ValueError("trace_init must be > 0")

    @property
    def clip_value(self) -> float:
        if self.clip is not None:
            return float(self.clip)
        return 1.0 if self.algorithm in ("cl", "trace") else 0.9


@dataclass
class RunResult:
    q: np.ndarray
    model: Optional[ClassifierModel] = None
    beta: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    trace: list = field(default_factory=list)
    rounds: int = 0
    converged: bool = False
    wall_time: float = 0.0


def run_mv(dataset: CrowdDataset) -> np.ndarray:
    votes = dataset.graph.vote_counts().astype(np.float64)
    tot = votes.sum(axis=1, keepdims=True)
    K = dataset.num_classes
    return np.where(tot > 0, votes / np.maximum(tot, 1.0), 1.0 / K)


def uniform_f(dataset: CrowdDataset) -> np.ndarray:
    return np.full((dataset.num_tasks, dataset.num_classes), 1.0 / dataset.num_classes)


def run_featureless(dataset: CrowdDataset, config: EMConfig) -> RunResult:
    t0 = time.perf_counter()
    graph, f = dataset.graph, uniform_f(dataset)
    if config.algorithm in ("mf", "deepmf"):
        st = mf_infer(graph, f, config.prior, tol=config.mf_tol, max_iters=config.mf_max_iters)
        res = RunResult(st.q, beta=st.beta, trace=[st.elbo_trace[-1] if st.elbo_trace else 0.0])
    elif config.algorithm in ("bp", "deepbp"):
        q, st = bp_run(graph, f, config.prior, config.factor, config.bp_max_sweeps, config.bp_tol)
        res = RunResult(q, trace=[st.max_change])
    else:
        raise ValueError(f"no featureless variant of {config.algorithm!r}")
    res.rounds, res.converged = 1, True
    res.wall_time = time.perf_counter() - t0
    return res


def _need_features(dataset: CrowdDataset) -> np.ndarray:
    if dataset.features is None:
        raise DataError("this algorithm needs task features")
    return dataset.features


def _init_classifier(dataset: CrowdDataset, config: EMConfig) -> ClassifierModel:
    cc = config.classifier
    return init_model(cc.kind, dataset.features.shape[1], dataset.num_classes, seed=config.seed,
                      hidden=cc.hidden, l2_lambda=cc.l2_lambda, init_scale=cc.init_scale,
                      zero_output=cc.zero_output)


def _m_step(model, X, q, config):
    cc = config.classifier
    return fit_weighted(model, X, q, epochs=cc.epochs, learning_rate=cc.learning_rate,
                        optimizer=cc.optimizer, backtracking=cc.backtracking)


def _deep_loop(dataset, config, model, e_step):
    """Shared outer loop: clipped classifier output -> E-step -> classifier fit.

    Stops after ``outer_rounds``, when q moves less than ``outer_tol``, or
    when the clipped classifier output repeats exactly (the E-step would
    then return the same q).
    """
    X = _need_features(dataset)
    t0 = time.perf_counter()
    res = RunResult(q=None, model=model)
    f_prev = None
    for rnd in range(config.outer_rounds):
        f = clip_probs(predict_proba(model, X), config.clip_value)
        if f_prev is not None and np.array_equal(f, f_prev):
            res.converged = True
            break
        q, extra = e_step(f)
        delta = float(np.max(np.abs(q - res.q))) if res.q is not None else np.inf
        res.q = q
        for k, v in extra.items():
            setattr(res, k, v)
        model = _m_step(model, X, q, config)
        res.model = model
        res.trace.append(delta)
        res.rounds = rnd + 1
        f_prev = f
        if delta < config.outer_tol:
            res.converged = True
            break
    res.wall_time = time.perf_counter() - t0
    return res


def run_deep_mf(dataset: CrowdDataset, config: EMConfig,
                model: Optional[ClassifierModel] = None) -> RunResult:
    _need_features(dataset)
    graph = dataset.graph
    box = {"q": None}

    def e_step(f):
        st = mf_infer(graph, f, config.prior, tol=config.mf_tol, max_iters=config.mf_max_iters,
                      q_init=box["q"])
        box["q"] = st.q
        return st.q, {"beta": st.beta}

    return _deep_loop(dataset, config, model or _init_classifier(dataset, config), e_step)


def run_deep_bp(dataset: CrowdDataset, config: EMConfig,
                model: Optional[ClassifierModel] = None) -> RunResult:
    _need_features(dataset)
    graph = dataset.graph
    box = {"state": None}

    def e_step(f):
        state = None if config.bp_cold_start else box["state"]
        q, st = bp_run(graph, f, config.prior, config.factor, config.bp_max_sweeps,
                       config.bp_tol, state=state)
        box["state"] = st
        return q, {}

    return _deep_loop(dataset, config, model or _init_classifier(dataset, config), e_step)


def initial_theta(num_workers: int, num_classes: int, delta: float) -> np.ndarray:
    """Row-softmax of delta * I for every worker."""
    logits = np.broadcast_to(delta * np.eye(num_classes), (num_workers, num_classes, num_classes))
    return _softmax_rows(logits)


def _softmax_rows(logits):
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def cl_estep(dataset: CrowdDataset, f: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """q_i(z) proportional to f_i(z) * prod_u theta_u[z, y_iu]."""
    g = dataset.graph
    logq = np.log(np.maximum(f, 1e-300))
    logq = logq - logq.max(axis=1, keepdims=True)
    ev = np.log(np.maximum(theta[g.edge_worker, :, g.edge_label], 1e-300))
    for k in range(dataset.num_classes):
        logq[:, k] += np.bincount(g.edge_task, weights=ev[:, k], minlength=g.num_tasks)
    q = np.exp(logq - logq.max(axis=1, keepdims=True))
    return q / q.sum(axis=1, keepdims=True)


def cl_mstep(counts: np.ndarray) -> np.ndarray:
    theta = counts + CL_FLOOR
    return theta / theta.sum(axis=2, keepdims=True)


def trace_mstep(counts: np.ndarray, theta: np.ndarray, lam: float, steps: int, lr: float) -> np.ndarray:
    """Gradient ascent on row-softmax logits of sum(counts * log theta) - lam * sum_k log theta_kk."""
    if lam == 0.0:
        return cl_mstep(counts)
    K = counts.shape[-1]
    eye = np.eye(K)
    logits = np.log(np.maximum(theta, 1e-300))
    rows = counts.sum(axis=2, keepdims=True)
    for _ in range(steps):
        th = _softmax_rows(logits)
        grad = counts - rows * th - lam * (eye - th)
        logits = logits + lr * grad
    return _softmax_rows(logits)


def _point_theta_loop(dataset: CrowdDataset, config: EMConfig, lam: float,
                      model: Optional[ClassifierModel]) -> RunResult:
    _need_features(dataset)
    graph = dataset.graph
    box = {"theta": initial_theta(dataset.num_workers, dataset.num_classes, config.trace_init)}
    lr = config.trace_lr if config.trace_lr is not None else config.classifier.learning_rate

    def e_step(f):
        q = cl_estep(dataset, f, box["theta"])
        box["theta"] = trace_mstep(soft_counts(q, graph), box["theta"], lam, config.trace_steps, lr)
        return q, {"theta": box["theta"]}

    return _deep_loop(dataset, config, model or _init_classifier(dataset, config), e_step)


def run_cl(dataset: CrowdDataset, config: EMConfig, model=None) -> RunResult:
    return _point_theta_loop(dataset, config, 0.0, model)


def run_trace(dataset: CrowdDataset, config: EMConfig, model=None) -> RunResult:
    if config.trace_lambda < 0:
        raise ValueError("trace_lambda must be >= 0")
    return _point_theta_loop(dataset, config, float(config.trace_lambda), model)


def run_algorithm(dataset: CrowdDataset, config: EMConfig) -> RunResult:
    algo = config.algorithm
    if algo == "mv":
        return RunResult(q=run_mv(dataset), rounds=1, converged=True)
    if algo in ("mf", "bp"):
        return run_featureless(dataset, config)
    return {"deepmf": run_deep_mf, "deepbp": run_deep_bp,
            "cl": run_cl, "trace": run_trace}[algo](dataset, config)


__all__ = [
    "ALGORITHMS", "ClassifierConfig", "EMConfig", "RunResult", "run_mv", "run_featureless",
    "run_deep_mf", "run_deep_bp", "run_cl", "run_trace", "run_algorithm", "cl_estep",
    "cl_mstep", "trace_mstep", "initial_theta", "uniform_f",
]
