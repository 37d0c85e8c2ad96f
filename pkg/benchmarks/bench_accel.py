"""Compare the numba-compiled kernels with the pure-numpy fallback.

The acceleration switch is read at import time, so each setting runs in its
own interpreter::

    python3 benchmarks/bench_accel.py            # both settings, side by side
    python3 benchmarks/bench_accel.py --repeat 20

Every workload is called once before timing so JIT compilation (or a cold
cache) is excluded; the reported figure is the median of ``--repeat`` calls.
"""
import argparse
import json
import os
import statistics
import subprocess
import sys
import time


def _workloads():
    import numpy as np

    from gpilc import gp, harness, plants
    from gpilc.gp import ARD, SHARED, KernelParams
    from gpilc.models import fit_is_model, io_regressors, is_rollout

    rng = np.random.default_rng(0)
    # IO-sized evidence: three trials of 99 regressors with 100 lags
    U = np.hstack([io_regressors(rng.normal(size=100)) for _ in range(3)])[:, :297]
    io_data = gp.GPDataset.standardized(U, rng.normal(size=U.shape[1]))
    io_params = KernelParams([5.0], 1e-2)
    # IS-sized evidence: ARD over 4 states + input
    V = rng.normal(size=(5, 297))
    is_data = gp.GPDataset.standardized(V, np.sin(V.sum(axis=0)))
    is_params = KernelParams([1.0, 2.0, 0.5, 1.5, 1.0], 1e-2)

    pendu = plants.get_plant("PENDU")
    u_pendu = 0.2 * np.sin(np.arange(pendu.horizon) / 4.0)

    cube = plants.get_plant("CUBE")
    trials = [plants.run_trial(cube, 0.05 * rng.normal(size=cube.horizon), seed=j, index=j + 1).record
              for j in range(2)]
    is_model = fit_is_model(trials, cube.output_row, gp.FitConfig(seed=0, n_starts=1))
    x1 = trials[-1].initial_state
    u_cube = trials[-1].u

    cfg = harness.CampaignConfig(plant="CUBE", variant="is", trials=3, seed=1, e_R=0.05)

    return {
        "sqdist (297 points, D=5)": lambda: gp._sqdist(V.T, V.T),
        "evidence+grad IO (K=297, D=100)":
            lambda: gp.log_marginal_likelihood(io_data, io_params, SHARED),
        "evidence+grad IS (K=297, ARD D=5)":
            lambda: gp.log_marginal_likelihood(is_data, is_params, ARD),
        "PENDU trial (100 samples x 10 RK4)": lambda: plants.simulate(pendu, u_pendu),
        "IS rollout (CUBE, N=100)": lambda: is_rollout(is_model, u_cube, x1),
        "IS campaign (CUBE, 3 trials)": lambda: harness.run_learning(cfg),
    }


def worker(repeat: int) -> dict:
    from gpilc._accel import HAS_NUMBA

    out = {"numba": HAS_NUMBA, "times": {}}
    for name, fn in _workloads().items():
        fn()
        n = max(1, repeat // 10) if "campaign" in name else repeat
        samples = []
        for _ in range(n):
            t0 = time.perf_counter()
            fn()
            samples.append(time.perf_counter() - t0)
        out["times"][name] = statistics.median(samples)
    return out


def run_setting(disable: bool, repeat: int) -> dict:
    env = dict(os.environ, GPILC_DISABLE_NUMBA="1" if disable else "0")
    res = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def fmt_time(t):
    return f"{t * 1e3:9.3f} ms" if t < 1 else f"{t:9.3f} s "


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.worker:
        print(json.dumps(worker(args.repeat)))
        return
    fast = run_setting(False, args.repeat)
    slow = run_setting(True, args.repeat)
    if not fast["numba"]:
        print("numba is not installed; both columns use the numpy path")
    print(f"{'workload':38s} {'numba':>12s} {'numpy':>12s} {'speedup':>8s}")
    for name, t_fast in fast["times"].items():
        t_slow = slow["times"][name]
        print(f"{name:38s} {fmt_time(t_fast)} {fmt_time(t_slow)} {t_slow / t_fast:7.1f}x")


if __name__ == "__main__":
    main()
