"""Command-line entry point: ``nnmc <subcommand> [--flag value ...]``.

Every subcommand first prints its effective configuration as ``key = value``
lines between ``# effective config`` and ``# end config``; saved to a file,
that block is a valid ``--config`` file that reproduces the run. Values on the
command line override values from ``--config``.

Failures print a single ``ERROR <code>: <message>`` line to stderr. Exit codes:
0 ok, 2 usage, 10-19 domain errors, 20-29 I/O errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import ChainConfigError, NnmcError, NnmcIOError
from .numfmt import fmt_number

EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _schedule(text: str) -> tuple[tuple[float, int], ...]:
    out = []
    for item in text.replace(" ", "").split(","):
        beta, _, steps = item.partition(":")
        out.append((float(beta), int(steps)))
    return tuple(out)


def _fmt_value(value) -> str:
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], tuple):
            return ",".join(f"{fmt_number(b)}:{s}" for b, s in value)
        return ",".join(fmt_number(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return fmt_number(value)
    return str(value)


def build_parser() -> _Parser:
    parser = _Parser(prog="nnmc", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value file; command-line flags override it")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", help="per-band min / max / mean / std")
    p.add_argument("--input", required=True)
    p.add_argument("--band", type=int, default=-1, help="band index, -1 for all")

    p = sub.add_parser("prep", help="percentile clip + min-max normalisation, per band")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--min-pct", type=float, default=2.0)
    p.add_argument("--max-pct", type=float, default=98.0)

    p = sub.add_parser("rescale", help="resample through a neural-network operator")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--out-width", type=int, required=True)
    p.add_argument("--out-height", type=int, required=True)
    p.add_argument("--form", choices=("discrete", "kantorovich"), default="discrete")
    p.add_argument("--sigmoid", choices=("logistic", "smoothed_ramp"), default="logistic")
    p.add_argument("--w", type=float, default=1.0, help="sigmoid steepness")
    p.add_argument("--band", type=int, default=-1, help="band index, -1 for all")
    p.add_argument("--quad", type=int, default=4, help="quadrature points per axis (kantorovich)")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("invert-demo", help="forward/inverse round trip on a synthetic field")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--d", type=int, default=1, choices=(1, 2, 3))
    p.add_argument("--sigmoid", choices=("logistic", "smoothed_ramp"), default="logistic")
    p.add_argument("--w", type=float, default=16.0)
    p.add_argument("--f-name", choices=tuple(SYNTHETIC_FIELDS), default="sin2pi")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=100000)

    p = sub.add_parser("sample", help="run a Markov chain on a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--method", choices=("pca", "gibbs", "metropolis"), default="pca")
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", help="trace file (step,energy,state_index)")

    p = sub.add_parser("retrieve-ft", help="freeze/thaw retrieval from one band")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--band", type=int, default=0)
    p.add_argument("--method", choices=("threshold", "bayes_pca", "bayes_gibbs"), default="threshold")
    p.add_argument("--min-pct", type=float, default=2.0)
    p.add_argument("--max-pct", type=float, default=98.0)
    p.add_argument("--ref-frozen", type=float, default=0.25)
    p.add_argument("--ref-thaw", type=float, default=0.75)
    p.add_argument("--cutoff", type=float, default=0.5)
    p.add_argument("--noise-sigma", type=float, default=0.15)
    p.add_argument("--smoothness", type=float, default=1.0)
    p.add_argument("--schedule", type=_schedule, default=((0.5, 30), (1.0, 30), (2.0, 30), (4.0, 30)),
                   help="comma-separated beta:steps pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--report", help="also write the report to this file")

    p = sub.add_parser("bench", help="mixing or throughput benchmark")
    p.add_argument("--kind", choices=("mixing", "throughput"), default="mixing")
    p.add_argument("--model", help="model file (mixing); default: 4-spin ring")
    p.add_argument("--methods", default="pca,gibbs,metropolis")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--window", type=int, default=100)
    p.add_argument("--N", type=int, default=10**6, help="components (throughput)")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--beta", type=float, default=0.4)
    p.add_argument("--threads", type=_int_list, default=[1, 2, 8])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also write the report to this file")
    return parser


def _synthetic_fields():
    def const(*xs):
        return np.ones_like(xs[0])

    def linear(*xs):
        return sum(xs)

    def sin2pi(*xs):
        return np.prod([np.sin(2 * np.pi * x) for x in xs], axis=0)

    def gauss_bump(*xs):
        return np.exp(-sum((x - 0.5) ** 2 for x in xs) / (2 * 0.15**2))

    return {"const": const, "linear": linear, "sin2pi": sin2pi, "gauss_bump": gauss_bump}


SYNTHETIC_FIELDS = _synthetic_fields()


def read_config(path) -> list[str]:
    """Turn a ``key = value`` file into ``--key value`` arguments."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise NnmcIOError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    args = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key = key.strip().replace("_", "-")
        if key in ("command", "config"):
            continue
        args += [f"--{key}", value.strip()]
    return args


def _header(args: argparse.Namespace, out):
    print("# effective config", file=out)
    for key, value in vars(args).items():
        if key in ("config", "handler"):
            continue
        if value is None:
            continue
        print(f"{key} = {_fmt_value(value)}", file=out)
    print("# end config", file=out)


def _cmd_stats(args, out):
    from .raster_io import band_stats, load_raster

    field = load_raster(args.input)
    bands = range(field.bands) if args.band < 0 else [args.band]
    print("band,name,min,max,mean,std", file=out)
    for b in bands:
        s = band_stats(field, b)
        name = field.band_names[b] if field.band_names else f"band{b}"
        print(",".join([str(b), name] + [fmt_number(v) for v in (s.min, s.max, s.mean, s.std)]), file=out)


def _cmd_prep(args, out):
    from .raster_io import RasterField, load_raster, preprocess_band, save_raster

    field = load_raster(args.input)
    bands = [preprocess_band(field.band(b), args.min_pct, args.max_pct) for b in range(field.bands)]
    save_raster(RasterField(np.stack(bands), field.band_names), args.output)
    print(f"wrote {args.output} ({field.width}x{field.height}, {field.bands} band(s))", file=out)


def _cmd_rescale(args, out):
    from .operators import rescale_raster
    from .raster_io import RasterField, load_raster, save_raster
    from .sigmoid import SigmoidSpec

    field = load_raster(args.input)
    sig = SigmoidSpec(args.sigmoid, args.w)
    bands = range(field.bands) if args.band < 0 else [args.band]
    layers = [rescale_raster(field, b, args.out_width, args.out_height, args.form, sig, args.threads, args.quad)
              for b in bands]
    names = tuple(n for layer in layers for n in layer.band_names)
    result = RasterField(np.concatenate([layer.samples for layer in layers]), names)
    save_raster(result, args.output)
    print(f"wrote {args.output} ({args.out_width}x{args.out_height}, {result.bands} band(s))", file=out)


def _cmd_invert_demo(args, out):
    from .inversion import roundtrip_error
    from .operators import BoxDomain, OperatorConfig
    from .sigmoid import SigmoidSpec

    config = OperatorConfig(BoxDomain.unit(args.d), args.n, SigmoidSpec(args.sigmoid, args.w))
    f = SYNTHETIC_FIELDS[args.f_name]
    for method in ("direct", "iterative"):
        report = roundtrip_error(config, f, method, tol=args.tol, max_iter=args.max_iter)
        print(f"[{method}]", file=out)
        for line in report.lines():
            print(line, file=out)


def _cmd_sample(args, out):
    from .lattice import LatticeState, load_model
    from .samplers import run_chain

    if args.steps <= args.burn_in:
        raise ChainConfigError("steps must exceed burn_in")
    model, alphabet = load_model(args.model)
    initial = LatticeState.constant(model.N, alphabet)
    diag = run_chain(initial, model, args.method, args.steps, args.burn_in, args.thin, args.seed, args.threads)
    for key, value in diag.summary().items():
        print(f"{key}: {value}", file=out)
    print("final_state: " + "".join(str(int(v)) for v in diag.final.labels[:200])
          + ("..." if diag.final.N > 200 else ""), file=out)
    if args.out:
        steps = args.burn_in + 1 + args.thin * np.arange(diag.recorded)
        idx = diag.state_trace if diag.state_trace is not None else np.full(diag.recorded, -1)
        lines = ["step,energy,state_index"]
        lines += [f"{s},{fmt_number(e)},{i}" for s, e, i in zip(steps, diag.energies, idx)]
        try:
            Path(args.out).write_text("\n".join(lines) + "\n")
        except OSError as exc:
            raise NnmcIOError(f"cannot write {args.out}: {exc.strerror or exc}") from exc


def _cmd_retrieve_ft(args, out):
    from .raster_io import load_raster, save_raster
    from .retrieval import RetrievalParams, format_report, retrieve_ft

    params = RetrievalParams(args.min_pct, args.max_pct, args.ref_frozen, args.ref_thaw, args.cutoff,
                             args.noise_sigma, args.smoothness, args.schedule)
    field = load_raster(args.input)
    result, report = retrieve_ft(field, args.band, args.method, params, args.seed, args.threads)
    save_raster(result, args.output)
    text = format_report(report)
    print(text, file=out)
    if args.report:
        try:
            Path(args.report).write_text(text + "\n")
        except OSError as exc:
            raise NnmcIOError(f"cannot write {args.report}: {exc.strerror or exc}") from exc


def _cmd_bench(args, out):
    from .bench import bench_mixing, bench_throughput
    from .lattice import PairPotential, load_model, ring_coupling

    if args.kind == "mixing":
        if args.model:
            model, alphabet = load_model(args.model)
        else:
            model, alphabet = PairPotential(ring_coupling(4), np.zeros(4), args.beta), (-1.0, 1.0)
        methods = tuple(m for m in args.methods.split(",") if m)
        report = bench_mixing(model, methods, args.steps, args.seed, alphabet, window=args.window)
    else:
        report = bench_throughput(args.N, args.k, tuple(args.threads), args.steps, args.seed, args.beta)
    text = report.emit()
    out.write(text)
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            raise NnmcIOError(f"cannot write {args.out}: {exc.strerror or exc}") from exc


HANDLERS = {
    "stats": _cmd_stats,
    "prep": _cmd_prep,
    "rescale": _cmd_rescale,
    "invert-demo": _cmd_invert_demo,
    "sample": _cmd_sample,
    "retrieve-ft": _cmd_retrieve_ft,
    "bench": _cmd_bench,
}


def parse_args(argv: list[str]) -> argparse.Namespace:
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config and rest:
        # config values go right after the subcommand so explicit flags win
        rest = rest[:1] + read_config(known.config) + rest[1:]
    return build_parser().parse_args(rest)


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        _header(args, out)
        HANDLERS[args.command](args, out)
    except UsageError as exc:
        print(f"ERROR {EXIT_USAGE}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NnmcError as exc:
        print(f"ERROR {exc.code}: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"ERROR {NnmcIOError.code}: {exc}", file=sys.stderr)
        return NnmcIOError.code
    except ValueError as exc:
        print(f"ERROR 10: {exc}", file=sys.stderr)
        return 10
    return 0


if __name__ == "__main__":
    sys.exit(main())
