"""Command-line interface: gen, infer, learn, eval, sweep, oracle-check.

Exit codes: 0 success, 1 usage error, 2 data error, 3 run failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io as cio
from .bp import FactorEvalConfig, bp_run
from .classifier import ClassifierModel, predict_proba
from .core import CrowdDataset, DataError, argmax_labels, denoised_accuracy
from .em import ALGORITHMS, ClassifierConfig, EMConfig, run_algorithm
from .experiments import (DEFAULT_SEEDS, FULL_SEEDS, SWEEP_KINDS, SweepSpec, diagnostics,
                          run_experiment, scenario_dict)
from .meanfield import mf_infer
from .oracle import OracleLimitError, enumerate_posterior
from .priors import WorkerPrior, parse_prior
from .synth import ScenarioSpec, generate_scenario

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUN = 0, 1, 2, 3
DEEP_ALGOS = ("deepmf", "deepbp", "cl", "trace")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _prior(text):
    try:
        return parse_prior(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_scenario(p):
    g = p.add_argument_group("scenario")
    g.add_argument("--tasks", type=int, default=1000)
    g.add_argument("--workers", type=int, default=750)
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--l", type=int, default=3, help="workers per task")
    g.add_argument("--r", type=int, default=4, help="tasks per worker")
    g.add_argument("--true-prior", type=_prior, default=WorkerPrior.one_coin(2.0, 1.0))
    g.add_argument("--spammers", type=int, default=0)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--sep", type=float, default=3.0)
    g.add_argument("--test-size", type=int, default=1000)


def _add_em(p):
    g = p.add_argument_group("inference")
    g.add_argument("--prior", type=_prior, default=WorkerPrior.one_coin(2.0, 1.0),
                   help="model prior, e.g. onecoin:2,1 or diag:2,2,1 or dirichlet:2,1;1,2")
    g.add_argument("--clip", type=float, default=None,
                   help="cap on classifier probabilities (default 0.9; 1 for cl/trace)")
    g.add_argument("--rounds", type=int, default=50)
    g.add_argument("--outer-tol", type=float, default=1e-4)
    g.add_argument("--classifier", choices=("logistic", "mlp1"), default="logistic")
    g.add_argument("--hidden", type=int, default=16)
    g.add_argument("--epochs", type=int, default=100)
    g.add_argument("--lr", type=float, default=0.5)
    g.add_argument("--l2", type=float, default=1e-4)
    g.add_argument("--init-scale", type=float, default=0.1)
    g.add_argument("--optimizer", choices=("gd", "adam"), default="gd")
    g.add_argument("--factor-mode", choices=("auto", "exact_enum", "onecoin_dp", "monte_carlo"),
                   default="auto")
    g.add_argument("--samples", type=int, default=400)
    g.add_argument("--damping", type=float, default=0.0)
    g.add_argument("--bp-sweeps", type=int, default=50)
    g.add_argument("--trace-lambda", type=float, default=0.0)
    g.add_argument("--trace-init", type=float, default=2.0)


def _add_data(p, features=False):
    p.add_argument("--labels", required=True)
    p.add_argument("--features", required=features)
    p.add_argument("--truth")
    p.add_argument("--num-classes", type=int)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="crowdbp", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="file of 'key = value' lines supplying flag defaults")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic scenario")
    _add_scenario(g)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True, help="output directory")

    i = sub.add_parser("infer", help="aggregate labels (mv, mf, bp or a feature-based driver)")
    _add_data(i)
    _add_em(i)
    i.add_argument("--algo", choices=ALGORITHMS, default="bp")
    i.add_argument("--seed", type=int, help="required for feature-based algorithms")
    i.add_argument("--out", required=True)

    le = sub.add_parser("learn", help="jointly aggregate labels and train a classifier")
    _add_data(le, features=True)
    _add_em(le)
    le.add_argument("--algo", choices=DEEP_ALGOS, default="deepbp")
    le.add_argument("--seed", type=int, required=True)
    le.add_argument("--test-features")
    le.add_argument("--test-truth")
    le.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="score a posterior and/or a trained model")
    e.add_argument("--posterior")
    e.add_argument("--truth")
    e.add_argument("--model")
    e.add_argument("--test-features")
    e.add_argument("--test-truth")
    e.add_argument("--out", required=True, help="metrics JSON path")

    s = sub.add_parser("sweep", help="run a seeded experiment sweep")
    s.add_argument("--kind", choices=SWEEP_KINDS, required=True)
    s.add_argument("--grid", type=_floats, required=True)
    s.add_argument("--algos", default="mv,mf,bp,deepmf,deepbp")
    s.add_argument("--seeds", type=int, default=DEFAULT_SEEDS)
    s.add_argument("--full-seeds", action="store_true", help=f"use {FULL_SEEDS} seeds")
    s.add_argument("--master-seed", type=int, default=0)
    s.add_argument("--model-prior", type=_prior)
    s.add_argument("--budget", type=int, default=2000)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True)
    _add_scenario(s)
    _add_em(s)

    o = sub.add_parser("oracle-check", help="compare BP and MF with exact enumeration")
    o.add_argument("--labels")
    o.add_argument("--num-classes", type=int)
    o.add_argument("--prior", type=_prior, default=WorkerPrior.one_coin(2.0, 1.0))
    o.add_argument("--random-tree", type=int, metavar="N",
                   help="check a random tree instance with N tasks instead of a file")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--tol", type=float, help="exit 3 if the BP error exceeds this")
    o.add_argument("--out", required=True)
    return p


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = cio.load_config(known.config)
    sub = None
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            sub = action
    cmd = next((a for a in argv if a in sub.choices), None)
    if cmd is None:
        return
    sp = sub.choices[cmd]
    dests = {a.dest: a for a in sp._actions}
    for key, raw in values.items():
        if key not in dests:
            raise UsageError(f"{known.config}: unknown key {key!r} for '{cmd}'")
        act = dests[key]
        if isinstance(act, argparse._StoreTrueAction):
            val = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                val = act.type(raw) if act.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{known.config}: bad value for {key}: {exc}") from None
        act.required = False
        sp.set_defaults(**{key: val})


def _em_config(a, algo, seed) -> EMConfig:
    cc = ClassifierConfig(kind=a.classifier, hidden=a.hidden, l2_lambda=a.l2, init_scale=a.init_scale,
                          epochs=a.epochs, learning_rate=a.lr, optimizer=a.optimizer)
    fc = FactorEvalConfig(mode=a.factor_mode, samples=a.samples, damping=a.damping, seed=seed or 0)
    return EMConfig(algorithm=algo, prior=a.prior, clip=a.clip, outer_rounds=a.rounds,
                    outer_tol=a.outer_tol, bp_max_sweeps=a.bp_sweeps, factor=fc, classifier=cc,
                    trace_lambda=a.trace_lambda, trace_init=a.trace_init, seed=seed or 0)


def _scenario(a) -> ScenarioSpec:
    return ScenarioSpec(a.tasks, a.workers, a.classes, a.l, a.r, a.true_prior, a.spammers,
                        a.dim, a.sep, a.test_size)


def _load(a) -> CrowdDataset:
    return cio.load_dataset(a.labels, a.features, a.truth, num_classes=a.num_classes)


def _run_metrics(ds, res, algo):
    m = {"algorithm": algo, "num_tasks": ds.num_tasks, "num_workers": ds.num_workers,
         "num_answers": ds.num_answers, "rounds": res.rounds, "converged": bool(res.converged)}
    if ds.truth is not None:
        m["denoised_accuracy"] = denoised_accuracy(res.q, ds.truth)
    return m


def cmd_gen(a):
    scen = generate_scenario(_scenario(a), a.seed)
    out = Path(a.out)
    cio.save_dataset(scen.dataset, out / "labels.csv", out / "features.csv", out / "truth.csv")
    cio.atomic_write_text(out / "test_features.csv", cio.features_csv(scen.test_features))
    cio.atomic_write_text(out / "test_truth.csv", cio.truth_csv(scen.test_truth))
    meta = {"seed": a.seed, "scenario": scenario_dict(scen.spec),
            "num_workers_total": scen.dataset.num_workers}
    cio.save_json(out / "scenario.json", meta)
    return EXIT_OK


def cmd_infer(a):
    if a.algo in DEEP_ALGOS and a.seed is None:
        raise UsageError(f"--seed is required for algorithm {a.algo}")
    ds = _load(a)
    res = run_algorithm(ds, _em_config(a, a.algo, a.seed))
    out = Path(a.out)
    cio.atomic_write_text(out / "posterior.csv", cio.posterior_csv(res.q))
    cio.save_json(out / "metrics.json", _run_metrics(ds, res, a.algo))
    if res.model is not None:
        cio.save_json(out / "model.json", res.model.to_dict())
    return EXIT_OK


def _test_accuracy(model, feat_path, truth_path):
    X = cio.load_features(feat_path)
    y = cio.load_truth(truth_path)
    if X.shape[0] != y.shape[0]:
        raise DataError(f"{feat_path} has {X.shape[0]} rows but {truth_path} has {y.shape[0]}")
    return float(np.mean(argmax_labels(predict_proba(model, X)) == y))


def cmd_learn(a):
    ds = _load(a)
    res = run_algorithm(ds, _em_config(a, a.algo, a.seed))
    out = Path(a.out)
    metrics = _run_metrics(ds, res, a.algo)
    if a.test_features and a.test_truth:
        metrics["test_accuracy"] = _test_accuracy(res.model, a.test_features, a.test_truth)
    cio.atomic_write_text(out / "posterior.csv", cio.posterior_csv(res.q))
    cio.save_json(out / "model.json", res.model.to_dict())
    cio.save_json(out / "metrics.json", metrics)
    diag = diagnostics(res.q, beta=res.beta, theta=res.theta)
    cio.save_json(out / "diagnostics.json", diag)
    return EXIT_OK


def cmd_eval(a):
    metrics = {}
    if a.posterior:
        q = cio.load_posterior(a.posterior)
        if a.truth:
            metrics["denoised_accuracy"] = denoised_accuracy(q, cio.load_truth(a.truth))
        metrics["diagnostics"] = diagnostics(q)
    if a.model:
        if not (a.test_features and a.test_truth):
            raise UsageError("--model needs --test-features and --test-truth")
        model = ClassifierModel.from_dict(cio.load_json(a.model))
        metrics["test_accuracy"] = _test_accuracy(model, a.test_features, a.test_truth)
    if not metrics:
        raise UsageError("nothing to evaluate: pass --posterior and/or --model")
    cio.save_json(a.out, metrics)
    return EXIT_OK


def cmd_sweep(a):
    algos = tuple(x.strip() for x in a.algos.split(",") if x.strip())
    bad = [x for x in algos if x not in ALGORITHMS]
    if bad:
        raise UsageError(f"unknown algorithms {bad}")
    n = FULL_SEEDS if a.full_seeds else a.seeds
    grid = tuple(int(x) if float(x).is_integer() and a.kind in
                 ("spammer_sweep", "budget_sweep", "sample_size_sweep") else x for x in a.grid)
    spec = SweepSpec(a.kind, grid, algos, tuple(range(n)), a.out, _scenario(a),
                     _em_config(a, algos[0], 0), a.model_prior, a.budget, a.master_seed, a.jobs)
    summary = run_experiment(spec)
    if summary["failures"]:
        print(f"{len(summary['failures'])} run(s) failed; see {a.out}/summary.json", file=sys.stderr)
        return EXIT_RUN
    return EXIT_OK


def random_tree_dataset(num_tasks: int, num_classes: int, seed: int) -> CrowdDataset:
    """Random tree: each new task shares one fresh worker with an earlier task,
    plus a few single-task workers."""
    rng = np.random.default_rng(seed)
    tasks, workers = [], []
    w = 0
    for t in range(1, num_tasks):
        parent = int(rng.integers(t))
        tasks += [parent, t]
        workers += [w, w]
        w += 1
    for t in range(num_tasks):
        if rng.random() < 0.5:
            tasks.append(t)
            workers.append(w)
            w += 1
    labels = rng.integers(num_classes, size=len(tasks))
    return CrowdDataset(num_tasks, w, num_classes, tasks, workers, labels)


def cmd_oracle(a):
    if a.random_tree:
        ds = random_tree_dataset(a.random_tree, a.num_classes or 2, a.seed)
    elif a.labels:
        ds = cio.load_dataset(a.labels, num_classes=a.num_classes)
    else:
        raise UsageError("pass --labels or --random-tree")
    K = ds.num_classes
    f = np.full((ds.num_tasks, K), 1.0 / K)
    exact = enumerate_posterior(ds.graph, f, a.prior)
    q_bp, st = bp_run(ds.graph, f, a.prior, FactorEvalConfig(seed=a.seed), max_sweeps=200, tol=1e-12)
    q_mf = mf_infer(ds.graph, f, a.prior, tol=1e-12, max_iters=1000).q
    bp_err = float(np.max(np.abs(q_bp - exact)))
    report = {"num_tasks": ds.num_tasks, "num_workers": ds.num_workers, "prior": str(a.prior),
              "bp_max_abs_error": bp_err, "mf_max_abs_error": float(np.max(np.abs(q_mf - exact))),
              "bp_sweeps": st.iterations, "exact": exact.tolist(), "bp": q_bp.tolist()}
    cio.save_json(a.out, report)
    print(f"bp max abs error {bp_err:.3e}; mf max abs error {report['mf_max_abs_error']:.3e}")
    if a.tol is not None and bp_err > a.tol:
        return EXIT_RUN
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "infer": cmd_infer, "learn": cmd_learn, "eval": cmd_eval,
            "sweep": cmd_sweep, "oracle-check": cmd_oracle}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except UsageError as exc:
        print(f"crowdbp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"crowdbp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"crowdbp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OracleLimitError) as exc:
        print(f"crowdbp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"crowdbp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported as a run failure
        print(f"crowdbp: run failed: {exc!r}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
