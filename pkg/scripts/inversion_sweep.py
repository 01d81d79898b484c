"""Grid-operator inversion: dominance margin, conditioning and Neumann iteration count.

    python3 scripts/inversion_sweep.py --ws 4,8,16,32 --ns 4,8,16,32
"""

import argparse
import warnings

import numpy as np

from nnmc.inversion import DominanceWarning, build_grid_matrix, invert_direct, invert_iterative
from nnmc.operators import BoxDomain, OperatorConfig
from nnmc.sigmoid import SigmoidSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", default="logistic", choices=("logistic", "smoothed_ramp"))
    ap.add_argument("--ws", default="4,8,16,32")
    ap.add_argument("--ns", default="4,8,16,32")
    ap.add_argument("--tol", type=float, default=1e-10)
    ap.add_argument("--max-iter", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    print("w,n,margin,cond_inf,rho,iterations,converged,iter_vs_direct,direct_recovery")
    for w in (float(v) for v in args.ws.split(",")):
        for n in (int(v) for v in args.ns.split(",")):
            a = build_grid_matrix(OperatorConfig(BoxDomain.unit(1), n, SigmoidSpec(args.kind, w)))
            f = rng.normal(size=a.size)
            g = a.apply(f)
            direct = invert_direct(a, g)
            rho = np.abs(np.linalg.eigvals(np.eye(a.size) - a.matrix)).max()
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DominanceWarning)
                try:
                    it = invert_iterative(a, g, tol=args.tol, max_iter=args.max_iter)
                    iters, conv = it.iterations, it.converged
                    gap = np.abs(it.values - direct).max() / np.abs(direct).max()
                except Exception as exc:  # divergence is a result here, not a failure
                    iters, conv, gap = type(exc).__name__, False, float("nan")
            print(f"{w:g},{n},{a.dominance_margin:.3e},{np.linalg.cond(a.matrix, np.inf):.3e},{rho:.6f},"
                  f"{iters},{conv},{gap:.2e},{np.abs(direct - f).max() / np.abs(f).max():.2e}")


if __name__ == "__main__":
    main()
