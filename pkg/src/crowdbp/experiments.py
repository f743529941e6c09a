"""Seeded experiment sweeps, confidence intervals and overconfidence diagnostics."""

from __future__ import annotations

import io as _io
import csv
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .classifier import predict_proba
from .core import argmax_labels, denoised_accuracy
from .em import EMConfig, RunResult, run_algorithm
from .io import atomic_write_text, dump_json, fmt_float
from .priors import WorkerPrior, posterior_mean_diagonal
from .synth import ScenarioSpec, generate_scenario

SWEEP_KINDS = ("prior_sweep", "spammer_sweep", "clip_sweep", "budget_sweep",
               "sample_size_sweep", "trace_lambda_sweep")
MODEL_ALGOS = ("deepmf", "deepbp", "cl", "trace")
Z99 = 2.5758293035489004  # two-sided 99% normal quantile
CI_METHOD = "normal approximation, mean +/- 2.5758 * sd / sqrt(n), sd with ddof=1"
DEFAULT_SEEDS = 10
FULL_SEEDS = 50


@dataclass
class SweepSpec:
    kind: str
    grid: tuple
    algorithms: tuple = ("mv", "mf", "bp", "deepmf", "deepbp")
    seeds: tuple = tuple(range(DEFAULT_SEEDS))
    output: Optional[str] = None
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    config: EMConfig = field(default_factory=EMConfig)
    model_prior: Optional[WorkerPrior] = None
    budget: int = 2000
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ValueError(f"unknown sweep kind {self.kind!r}; choose from {SWEEP_KINDS}")
        if not self.grid or not self.seeds:
            raise ValueError("grid and seeds must be non-empty")
        self.grid = tuple(self.grid)
        self.algorithms = tuple(self.algorithms)
        self.seeds = tuple(int(s) for s in self.seeds)


def run_seed(master_seed: int, grid_idx: int, seed: int) -> np.random.SeedSequence:
    """Counter-based split: the stream of run (grid_idx, seed) is a fixed child of the master."""
    return np.random.SeedSequence(master_seed, spawn_key=(grid_idx, seed))


def point_setup(spec: SweepSpec, x):
    """Scenario and driver config for grid value ``x``."""
    sc, cfg = spec.scenario, spec.config
    model_prior = spec.model_prior
    if spec.kind == "prior_sweep":
        true = WorkerPrior.one_coin(float(x), float(x) / 2.0)
        sc = replace(sc, prior=true)
        cfg = replace(cfg, prior=model_prior or true)
    elif spec.kind == "spammer_sweep":
        sc = replace(sc, n_spammers=int(x))
    elif spec.kind == "clip_sweep":
        cfg = replace(cfg, clip=float(x))
    elif spec.kind == "budget_sweep":
        l = int(x)
        n = budget_tasks(spec.budget, l, sc.r)
        sc = replace(sc, l=l, num_tasks=n, num_workers=n * l // sc.r)
    elif spec.kind == "sample_size_sweep":
        cfg = replace(cfg, factor=replace(cfg.factor, mode="monte_carlo", samples=int(x)))
    elif spec.kind == "trace_lambda_sweep":
        cfg = replace(cfg, trace_lambda=float(x))
    if spec.kind != "prior_sweep" and model_prior is not None:
        cfg = replace(cfg, prior=model_prior)
    return sc, cfg


def budget_tasks(budget: int, l: int, r: int) -> int:
    """round(budget / l), lowered until N * l is a multiple of r."""
    n = int(round(budget / l))
    while n > 0 and (n * l) % r:
        n -= 1
    if n <= 0:
        raise ValueError(f"no feasible task count for budget {budget}, l={l}, r={r}")
    return n


def heldout_accuracy(result: RunResult, test_X, test_y) -> Optional[float]:
    if result.model is None or len(test_y) == 0:
        return None
    return float(np.mean(argmax_labels(predict_proba(result.model, test_X)) == test_y))


def _one_point(args):
    spec, grid_idx, seed = args
    x = spec.grid[grid_idx]
    sc, cfg = point_setup(spec, x)
    ss = run_seed(spec.master_seed, grid_idx, seed)
    out = []
    try:
        scen = generate_scenario(sc, ss)
    except Exception as exc:  # recorded, sweep continues
        return [(grid_idx, seed, a, None, None, f"scenario: {exc!r}") for a in spec.algorithms]
    run_int = int(ss.generate_state(1)[0])
    for algo in spec.algorithms:
        try:
            res = run_algorithm(scen.dataset, replace(cfg, algorithm=algo, seed=run_int))
            out.append((grid_idx, seed, algo, denoised_accuracy(res.q, scen.dataset.truth),
                        heldout_accuracy(res, scen.test_features, scen.test_truth), None))
        except Exception as exc:
            out.append((grid_idx, seed, algo, None, None,
                        f"{exc!r}\n{traceback.format_exc(limit=3)}"))
    return out


def _n_workers(requested: int) -> int:
    env = os.environ.get("CROWDBP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return max(1, int(requested))


def collect_runs(spec: SweepSpec) -> list:
    jobs = [(spec, g, s) for g in range(len(spec.grid)) for s in spec.seeds]
    nw = min(_n_workers(spec.workers), len(jobs))
    if nw <= 1:
        chunks = [_one_point(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            chunks = list(ex.map(_one_point, jobs))
    # job order is fixed, so results are independent of scheduling
    return [r for chunk in chunks for r in chunk]


def mean_ci(values) -> tuple:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return (math.nan, math.nan, math.nan)
    m = float(v.mean())
    half = Z99 * float(v.std(ddof=1)) / math.sqrt(v.size) if v.size > 1 else 0.0
    return m, m - half, m + half


def summarize(spec: SweepSpec, runs: list) -> dict:
    results = []
    for metric, col in (("denoised_accuracy", 3), ("test_accuracy", 4)):
        for g, x in enumerate(spec.grid):
            for algo in spec.algorithms:
                vals = [r[col] for r in runs if r[0] == g and r[2] == algo and r[col] is not None]
                if not vals:
                    continue
                m, lo, hi = mean_ci(vals)
                results.append({"metric": metric, "x": x, "algo": algo, "mean": m,
                                "ci_lo": lo, "ci_hi": hi, "n": len(vals), "values": vals})
    failures = [{"x": spec.grid[r[0]], "seed": r[1], "algo": r[2], "error": r[5]}
                for r in runs if r[5] is not None]
    return {
        "kind": spec.kind,
        "grid": list(spec.grid),
        "algorithms": list(spec.algorithms),
        "seeds": list(spec.seeds),
        "master_seed": spec.master_seed,
        "seed_split": "SeedSequence(master_seed, spawn_key=(grid_index, seed))",
        "ci_method": CI_METHOD,
        "scenario": scenario_dict(spec.scenario),
        "results": results,
        "failures": failures,
    }


def scenario_dict(sc: ScenarioSpec) -> dict:
    return {"num_tasks": sc.num_tasks, "num_workers": sc.num_workers, "num_classes": sc.num_classes,
            "l": sc.l, "r": sc.r, "prior": str(sc.prior), "n_spammers": sc.n_spammers,
            "feature_dim": sc.feature_dim, "feature_separation": sc.feature_separation,
            "n_test": sc.n_test}


def metric_csv(summary: dict, metric: str) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "algo", "mean", "ci_lo", "ci_hi"])
    for row in summary["results"]:
        if row["metric"] == metric:
            w.writerow([row["x"], row["algo"], fmt_float(row["mean"]),
                        fmt_float(row["ci_lo"]), fmt_float(row["ci_hi"])])
    return buf.getvalue()


def write_outputs(summary: dict, out_dir) -> list:
    out_dir = Path(out_dir)
    paths = []
    for metric in ("denoised_accuracy", "test_accuracy"):
        p = out_dir / f"{metric}.csv"
        atomic_write_text(p, metric_csv(summary, metric))
        paths.append(p)
    p = out_dir / "summary.json"
    atomic_write_text(p, dump_json(summary))
    paths.append(p)
    return paths


def run_experiment(spec: SweepSpec) -> dict:
    """Run every grid point x algorithm x seed; write CSV/JSON if ``spec.output`` is set."""
    summary = summarize(spec, collect_runs(spec))
    if spec.output:
        write_outputs(summary, spec.output)
    return summary


def marginal_histogram(q: np.ndarray, bins: int = 10) -> np.ndarray:
    counts, _ = np.histogram(np.asarray(q)[:, 0], bins=bins, range=(0.0, 1.0))
    return counts


def diagonal_histogram(beta=None, theta=None, bins: int = 10) -> np.ndarray:
    if beta is not None:
        diag = posterior_mean_diagonal(beta)
    elif theta is not None:
        diag = np.diagonal(theta, axis1=-2, axis2=-1)
    else:
        return np.zeros(bins, dtype=np.int64)
    counts, _ = np.histogram(np.ravel(diag), bins=bins, range=(0.0, 1.0))
    return counts


def diagnostics(q: np.ndarray, accuracies=None, beta=None, theta=None) -> dict:
    return {
        "bin_edges": [round(0.1 * i, 1) for i in range(11)],
        "marginal_histogram": marginal_histogram(q).tolist(),
        "sorted_accuracies": sorted(float(a) for a in (accuracies if accuracies is not None else [])),
        "diagonal_histogram": diagonal_histogram(beta, theta).tolist(),
    }


def emit_diagnostics(result, out_path, accuracies=None, beta=None, theta=None) -> dict:
    """Write the q(z=0) histogram, sorted per-seed accuracies and confusion-diagonal histogram."""
    q = result.q if isinstance(result, RunResult) else np.asarray(result)
    if isinstance(result, RunResult):
        beta = beta if beta is not None else result.beta
        theta = theta if theta is not None else result.theta
    d = diagnostics(q, accuracies, beta, theta)
    atomic_write_text(out_path, dump_json(d))
    return d
