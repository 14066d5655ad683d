"""Compare the compiled and pure-Python simulator kernels.

Usage: python benchmarks/bench_kernel.py [--rollouts N] [--steps T]

Checks that both backends return identical trajectories, then reports the
mean time per rollout for each and the speed-up.
"""

import argparse
import timeit

import numpy as np

from groupsps.sim import _kernel_py, load_calibration, preset_fin, preset_media
from groupsps.sim.model import kernel_params

try:
    from groupsps.sim import _kernel
except ImportError:
    _kernel = None


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rollouts", type=int, default=2000)
    ap.add_argument("--steps", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    cal = load_calibration()
    p = kernel_params(preset_media("sand_day1", cal), preset_fin("A", cal), cal.constants)
    rng = np.random.default_rng(0)
    acts = rng.uniform(-2.0, 2.0, (args.rollouts, args.steps, 4))
    noise = rng.standard_normal((args.rollouts, args.steps, 2))
    state = np.zeros(9)

    backends = {"python": _kernel_py.simulate}
    if _kernel is None:
        print("compiled kernel not built; run `python setup.py build_ext --inplace`")
    else:
        backends["cython"] = _kernel.simulate
        for a, g in zip(acts[:50], noise[:50]):
            if not np.array_equal(_kernel_py.simulate(a, g, state, p), _kernel.simulate(a, g, state, p)):
                raise SystemExit("backends disagree")
        print("backends agree bitwise on 50 random rollouts")

    per = {}
    for name, fn in backends.items():
        def run():
            for a, g in zip(acts, noise):
                fn(a, g, state, p)
        best = min(timeit.repeat(run, number=1, repeat=args.repeat))
        per[name] = best / args.rollouts
        print(f"{name:>7}: {per[name] * 1e6:9.2f} us/rollout ({args.steps} steps)")
    if "cython" in per:
        print(f"speed-up: {per['python'] / per['cython']:.1f}x")


if __name__ == "__main__":
    main()
