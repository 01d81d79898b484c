"""Mixing and throughput measurements for the samplers.

Reports are plain text: ``key: value`` lines, then a ``table:`` line followed
by a comma-separated header and rows. Numbers are stored already rounded to
their printed form, so emitting and re-parsing a report is the identity.
"""

from __future__ import annotations

import hashlib
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .lattice import (
    LatticeState,
    PairPotential,
    gibbs_measure_exact,
    grid_coupling,
    pca_stationary_exact,
    pca_transition_matrix,
    ring_coupling,
)
from .numfmt import canonical, fmt_number
from .samplers import run_chain, single_flip_transition_matrix, tv_distance

__all__ = ["BenchReport", "bench_mixing", "bench_throughput", "lattice_model", "WARMUP_STEPS"]

WARMUP_STEPS = 3


def _canon(value):
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return canonical(value)
    return str(value)


def _fmt(value) -> str:
    return fmt_number(value) if isinstance(value, float) else str(value)


def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


@dataclass
class BenchReport:
    fields: dict = field(default_factory=dict)
    columns: list[str] = field(default_factory=list)
    rows: list[list] = field(default_factory=list)

    def __post_init__(self):
        self.fields = {str(k): _canon(v) for k, v in self.fields.items()}
        self.columns = [str(c) for c in self.columns]
        self.rows = [[_canon(v) for v in row] for row in self.rows]

    def column(self, name: str) -> list:
        j = self.columns.index(name)
        return [row[j] for row in self.rows]

    def emit(self) -> str:
        lines = [f"{k}: {_fmt(v)}" for k, v in self.fields.items()]
        lines.append("table:")
        lines.append(",".join(self.columns))
        lines.extend(",".join(_fmt(v) for v in row) for row in self.rows)
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "BenchReport":
        lines = text.splitlines()
        fields = {}
        pos = 0
        while pos < len(lines) and lines[pos] != "table:":
            key, _, value = lines[pos].partition(": ")
            fields[key] = _parse_scalar(value)
            pos += 1
        columns, rows = [], []
        if pos + 1 < len(lines):
            columns = lines[pos + 1].split(",") if lines[pos + 1] else []
            rows = [[_parse_scalar(v) for v in line.split(",")] for line in lines[pos + 2:] if line]
        return cls(fields, columns, rows)

    def __eq__(self, other):
        if not isinstance(other, BenchReport):
            return NotImplemented
        return self.emit() == other.emit()


def _exact_kernel_and_target(model: PairPotential, method: str, alphabet):
    if method == "pca":
        return pca_transition_matrix(model, alphabet), pca_stationary_exact(model, alphabet=alphabet)
    return single_flip_transition_matrix(model, alphabet, method), gibbs_measure_exact(model, alphabet)


def bench_mixing(
    model: PairPotential,
    methods=("pca", "gibbs", "metropolis"),
    steps: int = 2000,
    seed: int = 0,
    alphabet=(-1.0, 1.0),
    initial: LatticeState | None = None,
    window: int = 100,
    exact_steps: int | None = None,
) -> BenchReport:
    """TV distance to each method's own stationary target as a function of steps.

    Two traces per method:

    * ``<method>_law_tv``: TV between the exact law of ``X_t`` (initial point
      mass pushed through the exact kernel) and the target. Non-increasing.
    * ``<method>_emp_tv``: TV between the running empirical distribution of a
      simulated chain and the target, sampled at every ``window`` steps.

    Law traces cover the first ``exact_steps`` steps (default ``min(steps, 200)``);
    the table has one row per ``window`` steps plus the early exact rows.
    """
    alphabet = np.asarray(alphabet, dtype=np.float64)
    initial = initial or LatticeState.constant(model.N, alphabet)
    exact_steps = min(steps, 200) if exact_steps is None else exact_steps
    marks = sorted(set(range(0, exact_steps + 1)) | set(range(window, steps + 1, window)))
    columns = ["step"]
    data = {}
    fields = {"kind": "mixing", "N": model.N, "k": alphabet.size, "steps": steps, "seed": seed,
              "beta": model.beta, "window": window, "threads": 1}
    for method in methods:
        P, target = _exact_kernel_and_target(model, method, alphabet)
        law = np.zeros(target.size)
        law[int(initial.labels @ (alphabet.size ** np.arange(model.N)))] = 1.0
        law_tv = {0: tv_distance(law, target)}
        for t in range(1, exact_steps + 1):
            law = law @ P
            law /= law.sum()
            law_tv[t] = tv_distance(law, target)
        start = time.perf_counter()
        diag = run_chain(initial, model, method, steps, 0, 1, seed)
        elapsed = time.perf_counter() - start
        counts = np.zeros(target.size)
        emp_tv = {}
        trace = diag.state_trace
        for t in range(window, steps + 1, window):
            np.add.at(counts, trace[t - window:t], 1)
            emp_tv[t] = tv_distance(counts / counts.sum(), target)
        data[method] = (law_tv, emp_tv)
        columns += [f"{method}_law_tv", f"{method}_emp_tv"]
        fields[f"{method}_ns_per_step"] = elapsed / steps * 1e9
        fields[f"{method}_final_emp_tv"] = emp_tv[max(emp_tv)] if emp_tv else float("nan")
        steps_to_01 = next((t for t in sorted(law_tv) if law_tv[t] < 0.01), -1)
        fields[f"{method}_law_steps_to_tv_0.01"] = steps_to_01
        if diag.all_touched_step is not None:
            fields[f"{method}_all_touched_step"] = diag.all_touched_step
    rows = []
    for t in marks:
        row = [t]
        for method in methods:
            law_tv, emp_tv = data[method]
            row += [law_tv.get(t, "nan"), emp_tv.get(t, "nan")]
        rows.append(row)
    return BenchReport(fields, columns, rows)


def lattice_model(N: int, beta: float = 0.4, strength: float = 1.0, field_strength: float = 0.0) -> PairPotential:
    """Periodic square lattice when ``N`` is a perfect square, else a ring."""
    side = math.isqrt(N)
    J = grid_coupling(side, side, strength, periodic=True) if side * side == N else ring_coupling(N, strength)
    return PairPotential(J, np.full(N, field_strength), beta)


def _state_digest(labels: np.ndarray) -> str:
    return "sha256:" + hashlib.sha256(np.ascontiguousarray(labels, dtype=np.int64).tobytes()).hexdigest()[:16]


def bench_throughput(
    N: int = 10**6,
    k: int = 2,
    threads=(1, 2, 8),
    steps: int = 100,
    seed: int = 0,
    beta: float = 0.4,
) -> BenchReport:
    """Wall time per PCA step for each thread count, plus the final-state digests.

    ``WARMUP_STEPS`` untimed steps precede the timed ones; all runs share the
    same RNG keys, so the final states must coincide across thread counts.
    """
    alphabet = np.linspace(-1.0, 1.0, k)
    model = lattice_model(N, beta)
    initial = LatticeState(alphabet, np.arange(N) % k)
    timings = []
    digests = set()
    for nthreads in threads:
        warm = run_chain(initial, model, "pca", WARMUP_STEPS, WARMUP_STEPS - 1, 1, seed, nthreads)
        start = time.perf_counter()
        diag = run_chain(warm.final, model, "pca", steps, steps - 1, 1, seed, nthreads,
                         step_offset=WARMUP_STEPS)
        elapsed = time.perf_counter() - start
        digest = _state_digest(diag.final.labels)
        digests.add(digest)
        timings.append((nthreads, elapsed / steps * 1e9, digest))
    base = next((ns for t, ns, _ in timings if t == 1), timings[0][1])
    rows = [[t, ns, base / ns, digest] for t, ns, digest in timings]
    fields = {
        "kind": "throughput",
        "method": "pca",
        "N": N,
        "k": k,
        "steps": steps,
        "seed": seed,
        "beta": beta,
        "warmup_steps": WARMUP_STEPS,
        "hardware_threads": os.cpu_count() or 1,
        "identical_final_states": len(digests) == 1,
    }
    return BenchReport(fields, ["threads", "ns_per_step", "speedup", "state_digest"], rows)
