"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeats 5]

Also runs one full-scale spammer scenario through bp_run with each backend.
"""

import argparse
import time

import numpy as np

from crowdbp import kernels
from crowdbp.bp import FactorEvalConfig, bp_run
from crowdbp.priors import WorkerPrior, sample_confusions
from crowdbp.synth import ScenarioSpec, generate_scenario


def best_of(fn, repeats):
    fn()  # warm-up (numba compiles here)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def dp_case(rng, workers, degree, K=2):
    ptr = np.arange(workers + 1, dtype=np.int64) * degree
    labels = rng.integers(K, size=workers * degree).astype(np.int64)
    msgs = rng.dirichlet(np.ones(K), size=workers * degree)
    return ptr, labels, msgs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if kernels.numba_backend is None:
        raise SystemExit("numba backend disabled or missing; unset CROWDBP_DISABLE_NUMBA")
    rng = np.random.default_rng(0)
    backends = {"numba": kernels.numba_backend, "numpy": kernels.numpy_backend}
    rows = []

    for workers, degree in ((750, 4), (5, 1000)):
        ptr, labels, msgs = dp_case(rng, workers, degree)
        res = {}
        for name, be in backends.items():
            out = be.onecoin_dp_messages(ptr, labels, msgs, 2.0, 1.0, 2)
            res[name] = (best_of(lambda: be.onecoin_dp_messages(ptr, labels, msgs, 2.0, 1.0, 2),
                                 args.repeats), out)
        err = float(np.max(np.abs(res["numba"][1] - res["numpy"][1])))
        rows.append((f"one-coin DP, {workers} workers x degree {degree}", res["numba"][0],
                     res["numpy"][0], err))

    for degree, S in ((4, 400), (1000, 400)):
        theta = sample_confusions(WorkerPrior.one_coin(2.0, 1.0), 2, S, 1)
        labels = rng.integers(2, size=degree).astype(np.int64)
        msgs = rng.dirichlet(np.ones(2), size=degree)
        res = {}
        for name, be in backends.items():
            out = be.mc_worker_messages(theta, msgs, labels)
            res[name] = (best_of(lambda: be.mc_worker_messages(theta, msgs, labels), args.repeats), out)
        err = float(np.max(np.abs(res["numba"][1] - res["numpy"][1])))
        rows.append((f"Monte Carlo, degree {degree}, S={S}", res["numba"][0], res["numpy"][0], err))

    print(f"{'kernel':44s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s} {'max diff':>9s}")
    for name, tn, tp, err in rows:
        print(f"{name:44s} {tn:10.5f} {tp:10.5f} {tp / tn:8.1f} {err:9.1e}")

    scen = generate_scenario(ScenarioSpec(n_spammers=5, n_test=0), 0)
    g = scen.dataset.graph
    f = np.full((g.num_tasks, 2), 0.5)
    prior = WorkerPrior.one_coin(2.0, 1.4)
    for mode in ("onecoin_dp", "monte_carlo"):
        for name, be in backends.items():
            saved = kernels.backend
            kernels.backend = be
            try:
                t = best_of(lambda: bp_run(g, f, prior, FactorEvalConfig(mode=mode), 20, 1e-6),
                            max(1, args.repeats // 2))
            finally:
                kernels.backend = saved
            print(f"bp_run {mode:12s} 1000 tasks + 5 spammers, backend {name:5s}: {t:.3f}s")


if __name__ == "__main__":
    main()
