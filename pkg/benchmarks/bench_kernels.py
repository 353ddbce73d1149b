"""Time the numba and numpy paths of every hot kernel.

    python benchmarks/bench_kernels.py [--repeat 5]

Also times one RK4 step of the benchmark scenario under each backend; the
backend is fixed at import, so that part runs in a child process per flag.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from entropic_agents import _accel, kernels

STEP_SNIPPET = """
import timeit
from pathlib import Path
from entropic_agents.particles import ParticleEnsemble, rk4_step
from entropic_agents.scenario import ScenarioConfig
cfg = ScenarioConfig.load(Path({root!r}) / "configs" / "benchmark.json")
sysm = cfg.build_system()
X, L = cfg.sample_initial(sysm)
ens = ParticleEnsemble(sysm, X, L)
dt = sysm.theta / 8
rk4_step(ens, dt)
print(min(timeit.repeat(lambda: rk4_step(ens, dt), number=20, repeat={repeat})) / 20)
"""


def cases(rng):
    M, N, d = 16, 256, 2
    w = np.full(M, 1.0 / M)
    X = rng.normal(size=(N, d))
    L = kernels.tilt_project_np(rng.gamma(2.0, size=(N, M)), w, 0.5, 2.0)
    C = rng.random((128, 128))
    return {
        "entropy_drift": (L, w),
        "tilt_project": (np.exp(rng.normal(size=(N, M))), w, 0.5, 2.0),
        "cost_matrix": (X, L, X[::-1].copy(), L[::-1].copy(), w, 2.0),
        "gaussian_gram": (X, X, 1.0),
        "alignment_drift": (X, X, 1.0),
        "hungarian": (C,),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"numba available: {_accel.HAVE_NUMBA}")
    print(f"{'kernel':<18}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, call_args in cases(rng).items():
        f_nb, f_np = kernels.KERNELS[name]
        f_nb(*call_args)  # compile
        t_nb = min(timeit.repeat(lambda: f_nb(*call_args), number=3, repeat=args.repeat)) / 3
        t_np = min(timeit.repeat(lambda: f_np(*call_args), number=3, repeat=args.repeat)) / 3
        print(f"{name:<18}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>10.1f}")
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    code = STEP_SNIPPET.format(root=root, repeat=args.repeat)
    times = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = {**os.environ, "ENTROPIC_AGENTS_NO_NUMBA": flag}
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        times[label] = float(out.stdout.strip())
    print(f"{'rk4 step (N=64)':<18}{1e3 * times['numba']:>12.3f}{1e3 * times['numpy']:>12.3f}"
          f"{times['numpy'] / times['numba']:>10.1f}")


if __name__ == "__main__":
    main()
