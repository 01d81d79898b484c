"""Lattice states, pair potentials, model files and exact enumeration.

States are label vectors over a finite alphabet of real spin values. The pair
potential defines local fields ``h_i(s) = sum_j J[i, j] s_j + theta[i]`` and
two targets:

* the Gibbs measure ``pi_G(s) ~ exp(beta (s^T J s / 2 + theta^T s))`` that
  the single-flip samplers leave invariant;
* the PCA stationary measure ``pi(s) ~ exp(beta theta^T s) * Z_s`` with
  ``Z_s = prod_i sum_v exp(beta h_i(s) v)``. With symmetric ``J`` the synchronous
  kernel satisfies detailed balance with respect to it.

Enumeration orders states by ``index = sum_i label_i * k**i``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .errors import DimensionMismatchError, ModelFormatError, NnmcError, NnmcIOError, StateSpaceTooLargeError

__all__ = [
    "LatticeState",
    "PairPotential",
    "local_field",
    "energy",
    "enumerate_labels",
    "state_index",
    "pca_stationary_exact",
    "gibbs_measure_exact",
    "pca_transition_matrix",
    "load_model",
    "save_model",
    "grid_coupling",
    "ring_coupling",
]

MAX_STATES = 2**20


@dataclass(frozen=True, eq=False)
class LatticeState:
    alphabet: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        alphabet = np.array(self.alphabet, dtype=np.float64, copy=True).ravel()
        labels = np.array(self.labels, dtype=np.int64, copy=True).ravel()
        if alphabet.size < 2 or np.unique(alphabet).size != alphabet.size:
            raise NnmcError("alphabet must hold at least two distinct values")
        if labels.size < 1:
            raise NnmcError("state needs at least one component")
        if labels.min() < 0 or labels.max() >= alphabet.size:
            raise NnmcError("label outside the alphabet")
        alphabet.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "labels", labels)

    @property
    def N(self) -> int:
        return self.labels.size

    @property
    def k(self) -> int:
        return self.alphabet.size

    @property
    def spins(self) -> np.ndarray:
        return self.alphabet[self.labels]

    @classmethod
    def constant(cls, N: int, alphabet=(-1.0, 1.0), label: int = 0) -> "LatticeState":
        return cls(alphabet, np.full(N, label))

    def __eq__(self, other):
        if not isinstance(other, LatticeState):
            return NotImplemented
        return np.array_equal(self.alphabet, other.alphabet) and np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PairPotential:
    """Symmetric couplings ``J`` (zero diagonal), field ``theta``, inverse temperature ``beta``."""

    J: sp.csr_matrix
    theta: np.ndarray
    beta: float = 1.0

    def __post_init__(self):
        J = sp.csr_matrix(self.J, dtype=np.float64)
        J.sum_duplicates()
        J.eliminate_zeros()
        J.sort_indices()
        theta = np.array(self.theta, dtype=np.float64, copy=True).ravel()
        if J.shape != (theta.size, theta.size):
            raise DimensionMismatchError(f"J has shape {J.shape} but theta has {theta.size} entries")
        if J.diagonal().any():
            raise NnmcError("J must have a zero diagonal")
        if (J - J.T).count_nonzero():
            raise NnmcError("J must be symmetric")
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise NnmcError(f"beta must be positive, got {self.beta}")
        if not (np.all(np.isfinite(J.data)) and np.all(np.isfinite(theta))):
            raise NnmcError("couplings and field must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def N(self) -> int:
        return self.theta.size

    def with_beta(self, beta: float) -> "PairPotential":
        return PairPotential(self.J, self.theta, beta)

    def energy_bound(self, alphabet) -> float:
        amax = float(np.abs(alphabet).max())
        return float(np.abs(self.J.data).sum()) * amax**2 + float(np.abs(self.theta).sum()) * amax


def local_field(state: LatticeState, model: PairPotential, i: int) -> float:
    """``h_i = sum_j J[i, j] s_j + theta[i]``."""
    if not 0 <= i < model.N:
        raise DimensionMismatchError(f"component {i} out of range")
    lo, hi = model.J.indptr[i], model.J.indptr[i + 1]
    s = state.spins
    return float(model.J.data[lo:hi] @ s[model.J.indices[lo:hi]] + model.theta[i])


def energy(model: PairPotential, spins) -> float:
    """Gibbs-measure energy ``-s^T J s / 2 - theta^T s``."""
    s = np.asarray(spins, dtype=np.float64)
    return float(-0.5 * s @ (model.J @ s) - model.theta @ s)


def _check_enumerable(N: int, k: int, limit: int = MAX_STATES) -> int:
    if N * math.log2(k) > math.log2(limit):
        raise StateSpaceTooLargeError(f"{k}**{N} states exceed the enumeration limit {limit}")
    return k**N


def enumerate_labels(N: int, k: int, limit: int = MAX_STATES) -> np.ndarray:
    """All label vectors, row ``index`` holding the base-k digits of ``index``."""
    return _labels_range(N, k, 0, _check_enumerable(N, k, limit))


def state_index(labels, k: int) -> int:
    labels = np.asarray(labels, dtype=np.int64)
    return int(labels @ (k ** np.arange(labels.size, dtype=np.int64)))


def _log_row_normalizers(model: PairPotential, spins: np.ndarray, alphabet: np.ndarray) -> np.ndarray:
    # log Z_s = sum_i log sum_v exp(beta h_i(s) v), rows of ``spins`` are states
    h = (model.J @ spins.T).T + model.theta
    return logsumexp(model.beta * h[:, :, None] * alphabet[None, None, :], axis=2).sum(axis=1)


def _chunks(total: int, size: int = 1 << 15):
    for start in range(0, total, size):
        yield start, min(start + size, total)


def pca_stationary_exact(model: PairPotential, N: int | None = None, alphabet=(-1.0, 1.0)) -> np.ndarray:
    """Exact stationary law ``pi(s) ~ exp(beta theta^T s) Z_s`` of the PCA chain."""
    alphabet = np.asarray(alphabet, dtype=np.float64)
    N = model.N if N is None else N
    if N != model.N:
        raise DimensionMismatchError(f"model has {model.N} components, N={N} requested")
    total = _check_enumerable(N, alphabet.size)
    logp = np.empty(total)
    for lo, hi in _chunks(total):
        spins = alphabet[_labels_range(N, alphabet.size, lo, hi)]
        logp[lo:hi] = model.beta * spins @ model.theta + _log_row_normalizers(model, spins, alphabet)
    return np.exp(logp - logsumexp(logp))


def _labels_range(N: int, k: int, lo: int, hi: int) -> np.ndarray:
    idx = np.arange(lo, hi, dtype=np.int64)
    return (idx[:, None] // (k ** np.arange(N, dtype=np.int64))[None, :]) % k


def gibbs_measure_exact(model: PairPotential, alphabet=(-1.0, 1.0)) -> np.ndarray:
    """Exact Gibbs measure ``pi_G(s) ~ exp(-beta E(s))``."""
    alphabet = np.asarray(alphabet, dtype=np.float64)
    total = _check_enumerable(model.N, alphabet.size)
    logp = np.empty(total)
    for lo, hi in _chunks(total):
        spins = alphabet[_labels_range(model.N, alphabet.size, lo, hi)]
        logp[lo:hi] = model.beta * (0.5 * np.einsum("si,si->s", spins, (model.J @ spins.T).T) + spins @ model.theta)
    return np.exp(logp - logsumexp(logp))


def pca_transition_matrix(model: PairPotential, alphabet=(-1.0, 1.0)) -> np.ndarray:
    """Full synchronous transition matrix, ``P[s, t] = prod_i p_i(t_i | s)``."""
    alphabet = np.asarray(alphabet, dtype=np.float64)
    total = _check_enumerable(model.N, alphabet.size, limit=2**12)
    labels = enumerate_labels(model.N, alphabet.size)
    spins = alphabet[labels]
    h = (model.J @ spins.T).T + model.theta
    logits = model.beta * h[:, :, None] * alphabet[None, None, :]
    logq = logits - logsumexp(logits, axis=2, keepdims=True)  # (state, component, value)
    comp = np.arange(model.N)
    logP = np.zeros((total, total))
    for t in range(total):
        logP[:, t] = logq[:, comp, labels[t]].sum(axis=1)
    return np.exp(logP)


def ring_coupling(N: int, strength: float = 1.0) -> sp.csr_matrix:
    """Nearest-neighbour couplings on a periodic 1-D ring."""
    if N < 3:
        rows, cols = ([0], [1]) if N == 2 else ([], [])
    else:
        rows = list(range(N))
        cols = [(i + 1) % N for i in range(N)]
    m = sp.coo_matrix((np.full(len(rows), strength), (rows, cols)), shape=(N, N)).tocsr()
    return (m + m.T).tocsr()


def grid_coupling(height: int, width: int, strength: float = 1.0, periodic: bool = False) -> sp.csr_matrix:
    """4-neighbour couplings on an ``height x width`` grid, row-major components."""
    idx = np.arange(height * width).reshape(height, width)
    if periodic:
        pairs = [(idx, np.roll(idx, -1, axis=1)), (idx, np.roll(idx, -1, axis=0))]
        if width < 3:
            pairs[0] = (idx[:, :-1], idx[:, 1:])
        if height < 3:
            pairs[1] = (idx[:-1, :], idx[1:, :])
    else:
        pairs = [(idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])]
    rows = np.concatenate([a.ravel() for a, _ in pairs])
    cols = np.concatenate([b.ravel() for _, b in pairs])
    m = sp.coo_matrix((np.full(rows.size, float(strength)), (rows, cols)), shape=(idx.size, idx.size)).tocsr()
    return (m + m.T).tocsr()


_KEY = re.compile(r"^\s*([A-Za-z_]+)\s*(?:=\s*(.*))?$")


def load_model(path) -> tuple[PairPotential, np.ndarray]:
    """Read a model file; returns the potential and the alphabet.

    Format (``#`` starts a comment)::

        N = 4
        k = 2
        alphabet = -1 1
        beta = 0.5
        theta = 0 0 0.1 0
        J
        0 1 1.0
        1 2 1.0

    Every ``i j value`` triple after the ``J`` line sets both ``J[i, j]`` and
    ``J[j, i]``; listing a pair twice with different values is an error.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise NnmcIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    fields: dict[str, str] = {}
    triples: dict[tuple[int, int], float] = {}
    in_j = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if in_j:
            parts = line.split()
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
                if len(parts) != 3:
                    raise ValueError
            except (ValueError, IndexError):
                raise ModelFormatError(f"line {lineno}: expected 'i j value', got {line!r}") from None
            key = (min(i, j), max(i, j))
            if i == j:
                raise ModelFormatError(f"line {lineno}: diagonal coupling J[{i}][{i}] is not allowed")
            if key in triples and triples[key] != v:
                raise ModelFormatError(f"line {lineno}: conflicting values for J[{i}][{j}]")
            triples[key] = v
            continue
        m = _KEY.match(line)
        if not m:
            raise ModelFormatError(f"line {lineno}: cannot parse {line!r}")
        name, value = m.group(1), m.group(2)
        if name == "J":
            in_j = True
        elif value is None:
            raise ModelFormatError(f"line {lineno}: {name} has no value")
        else:
            fields[name] = value
    missing = {"N", "beta"} - fields.keys()
    if missing:
        raise ModelFormatError(f"missing field(s): {', '.join(sorted(missing))}")
    try:
        N = int(fields["N"])
        beta = float(fields["beta"])
        alphabet = np.array(fields.get("alphabet", "-1 1").replace(",", " ").split(), dtype=np.float64)
        k = int(fields.get("k", alphabet.size))
        theta = np.array(fields.get("theta", " ".join(["0"] * N)).replace(",", " ").split(), dtype=np.float64)
    except ValueError as exc:
        raise ModelFormatError(f"bad numeric field: {exc}") from None
    if k != alphabet.size:
        raise ModelFormatError(f"k={k} but alphabet has {alphabet.size} values")
    if theta.size != N:
        raise ModelFormatError(f"theta has {theta.size} values, expected N={N}")
    for i, j in triples:
        if not (0 <= i < N and 0 <= j < N):
            raise ModelFormatError(f"coupling index ({i}, {j}) out of range for N={N}")
    rows = [i for i, _ in triples] + [j for _, j in triples]
    cols = [j for _, j in triples] + [i for i, _ in triples]
    vals = list(triples.values()) * 2
    J = sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsr()
    try:
        return PairPotential(J, theta, beta), alphabet
    except NnmcError as exc:
        raise ModelFormatError(str(exc)) from None


def save_model(path, model: PairPotential, alphabet=(-1.0, 1.0)) -> None:
    alphabet = np.asarray(alphabet, dtype=np.float64)
    upper = sp.triu(model.J, k=1).tocoo()
    lines = [
        f"N = {model.N}",
        f"k = {alphabet.size}",
        "alphabet = " + " ".join(repr(float(a)) for a in alphabet),
        f"beta = {model.beta!r}",
        "theta = " + " ".join(repr(float(t)) for t in model.theta),
        "J",
    ]
    lines += [f"{i} {j} {float(v)!r}" for i, j, v in zip(upper.row, upper.col, upper.data)]
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise NnmcIOError(f"cannot write {path}: {exc.strerror or exc}") from exc
