"""Sup-norm error of both operator forms against n, for a few smooth fields.

    python3 scripts/convergence_experiment.py --w 8 --ns 2,4,8,16,32,64
"""

import argparse

import numpy as np

from nnmc.operators import BoxDomain, OperatorConfig, cell_means, operator_eval_many, sample_on_grid
from nnmc.sigmoid import SigmoidSpec

FIELDS = {
    "sin2pi": (1, lambda x: np.sin(2 * np.pi * x)),
    "square": (1, lambda x: x * x),
    "exp": (1, np.exp),
    "sin_cos_2d": (2, lambda x, y: np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)),
}


def sup_error(f, d, n, form, sigmoid, points=101):
    cfg = OperatorConfig(BoxDomain.unit(d), n, sigmoid, form)
    grid = (sample_on_grid if form == "discrete" else cell_means)(f, cfg.index_set)
    t = np.linspace(0, 1, points if d == 1 else 41)
    pts = np.stack([g.ravel() for g in np.meshgrid(*([t] * d), indexing="ij")], axis=1)
    return np.abs(operator_eval_many(cfg, grid, pts) - f(*pts.T)).max()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", default="logistic", choices=("logistic", "smoothed_ramp"))
    ap.add_argument("--w", type=float, default=8.0)
    ap.add_argument("--ns", default="2,4,8,16,32,64")
    args = ap.parse_args()
    ns = [int(v) for v in args.ns.split(",")]
    sigmoid = SigmoidSpec(args.kind, args.w)

    print(f"# sigmoid={args.kind} w={args.w}")
    print("field,form," + ",".join(f"n={n}" for n in ns) + ",observed_rate")
    for name, (d, f) in FIELDS.items():
        for form in ("discrete", "kantorovich"):
            errs = np.array([sup_error(f, d, n, form, sigmoid) for n in ns])
            # least-squares slope of log error against log n
            rate = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
            print(f"{name},{form}," + ",".join(f"{e:.3e}" for e in errs) + f",{rate:.2f}")


if __name__ == "__main__":
    main()
