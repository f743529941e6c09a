import csv
import json
import math

import numpy as np
import pytest

from crowdbp.em import EMConfig, RunResult
from crowdbp.experiments import (Z99, SweepSpec, budget_tasks, diagnostics, emit_diagnostics,
                                 mean_ci, run_experiment, run_seed)
from crowdbp.synth import ScenarioSpec

TINY = ScenarioSpec(40, 30, 2, 3, 4, n_test=40)


def test_prior_sweep_shape(tmp_path):
    spec = SweepSpec("prior_sweep", (0.2, 1.0, 2.0), ("mv", "mf", "bp", "deepmf", "deepbp"),
                     seeds=(0, 1), output=str(tmp_path), scenario=TINY,
                     config=EMConfig(outer_rounds=3))
    summary = run_experiment(spec)
    for metric in ("denoised_accuracy", "test_accuracy"):
        with open(tmp_path / f"{metric}.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x", "algo", "mean", "ci_lo", "ci_hi"]
        # test accuracy exists only for the two classifier-based algorithms
        assert len(rows) - 1 == (15 if metric == "denoised_accuracy" else 6)
    assert summary["failures"] == []
    assert json.loads((tmp_path / "summary.json").read_text())["ci_method"].startswith("normal")


def test_sweep_failure_recorded():
    spec = SweepSpec("clip_sweep", (0.3,), ("deepbp", "mv"), seeds=(0,), scenario=TINY)
    summary = run_experiment(spec)
    assert len(summary["failures"]) == 1 and summary["failures"][0]["algo"] == "deepbp"


def test_sweep_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        spec = SweepSpec("spammer_sweep", (0, 1), ("mv", "bp"), seeds=(0, 1),
                         output=str(tmp_path / name), scenario=TINY)
        run_experiment(spec)
        outs.append([(tmp_path / name / f).read_bytes()
                     for f in ("denoised_accuracy.csv", "test_accuracy.csv", "summary.json")])
    assert outs[0] == outs[1]


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("nope", (1,))
    with pytest.raises(ValueError):
        SweepSpec("clip_sweep", ())


def test_seed_split_distinct():
    states = {tuple(run_seed(0, g, s).generate_state(2)) for g in range(3) for s in range(5)}
    assert len(states) == 15
    assert np.array_equal(run_seed(4, 1, 2).generate_state(4), run_seed(4, 1, 2).generate_state(4))


def test_budget_tasks():
    assert [budget_tasks(2000, l, 4) for l in (2, 4, 8)] == [1000, 500, 250]
    assert budget_tasks(2000, 3, 4) == 664  # 667 lowered to a multiple of 4 / gcd
    assert (budget_tasks(2000, 3, 4) * 3) % 4 == 0


def test_mean_ci():
    m, lo, hi = mean_ci([0.8, 0.9, 1.0])
    assert math.isclose(m, 0.9)
    assert math.isclose(hi - m, Z99 * 0.1 / math.sqrt(3))
    assert mean_ci([0.5]) == (0.5, 0.5, 0.5)


def test_diagnostics_examples(tmp_path):
    uni = diagnostics(np.full((10, 2), 0.5))["marginal_histogram"]
    assert uni[5] == 10 and sum(uni) == 10
    hot = np.array([[1.0, 0.0]] * 4 + [[0.0, 1.0]] * 6)
    h = diagnostics(hot)["marginal_histogram"]
    assert h[0] == 6 and h[-1] == 4 and sum(h[1:-1]) == 0
    accs = np.random.default_rng(0).uniform(size=100)
    d = emit_diagnostics(RunResult(q=hot, beta=np.array([[[4.0, 1.0], [1.0, 2.0]]])),
                         tmp_path / "d.json", accuracies=accs)
    assert np.all(np.diff(d["sorted_accuracies"]) >= 0)
    assert d["diagonal_histogram"][8] == 1 and d["diagonal_histogram"][6] == 1
    assert json.loads((tmp_path / "d.json").read_text()) == d
