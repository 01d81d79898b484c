"""Markov chains on finite-alphabet lattices.

Three steppers share one pair potential:

``pca``
    Synchronous update. Every component draws its new value independently
    from ``p(v) ~ exp(beta h_i(s) v)`` using the *previous* state ``s``.
``gibbs``
    Random-scan heat bath: one uniformly chosen component is redrawn from its
    exact conditional under the Gibbs measure.
``metropolis``
    Random-scan Metropolis-Hastings: a uniformly chosen component proposes a
    new value from a ``k x k`` proposal matrix (uniform over the other values
    by default, which is plain Metropolis) and accepts with
    ``min(1, exp(-beta dE) Q[b, a] / Q[a, b])``.

Random draws at step ``t`` come from :func:`nnmc.rng.uniform` keyed by
``(seed, t, component, lane)``, which makes the PCA step embarrassingly
parallel and its output independent of the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import ChainConfigError, DimensionMismatchError, NnmcError
from .lattice import MAX_STATES, LatticeState, PairPotential
from .numfmt import fmt_number
from .rng import StreamKey, uniform

__all__ = [
    "STEPPERS",
    "ChainDiagnostics",
    "pca_component_probs",
    "pca_step",
    "gibbs_step",
    "metropolis_step",
    "run_chain",
    "tv_distance",
    "default_proposal",
    "single_flip_transition_matrix",
    "state_energy",
]

STEPPERS = ("pca", "gibbs", "metropolis")
_KIND = {name: code for code, name in enumerate(STEPPERS)}

# rng lanes for single-flip steps
_LANE_SITE, _LANE_VALUE, _LANE_ACCEPT = 0, 1, 2


@nb.njit(cache=True, nogil=True)
def _field(indptr, indices, data, theta, alphabet, labels, i):
    h = theta[i]
    for p in range(indptr[i], indptr[i + 1]):
        h += data[p] * alphabet[labels[indices[p]]]
    return h


@nb.njit(cache=True, nogil=True)
def _heat_bath(beta_h, alphabet, u):
    # draw v with probability exp(beta_h * a_v) / sum_w exp(beta_h * a_w)
    k = alphabet.size
    top = beta_h * alphabet[0]
    for v in range(1, k):
        top = max(top, beta_h * alphabet[v])
    total = 0.0
    for v in range(k):
        total += math.exp(beta_h * alphabet[v] - top)
    target = u * total
    acc = 0.0
    for v in range(k - 1):
        acc += math.exp(beta_h * alphabet[v] - top)
        if target < acc:
            return v
    return k - 1


@nb.njit(cache=True, nogil=True)
def _pca_block(start, stop, indptr, indices, data, theta, beta, alphabet, src, dst, seed, step):
    for i in range(start, stop):
        h = _field(indptr, indices, data, theta, alphabet, src, i)
        dst[i] = _heat_bath(beta * h, alphabet, uniform(seed, step, i, 0))


@nb.njit(cache=True, nogil=True)
def _gibbs_site(indptr, indices, data, theta, beta, alphabet, labels, seed, step, i):
    h = _field(indptr, indices, data, theta, alphabet, labels, i)
    labels[i] = _heat_bath(beta * h, alphabet, uniform(seed, step, i, _LANE_VALUE))


@nb.njit(cache=True, nogil=True)
def _metropolis_move(indptr, indices, data, theta, beta, alphabet, labels, seed, step, qcum, qmat):
    N = labels.size
    i = min(int(uniform(seed, step, 0, _LANE_SITE) * N), N - 1)
    a = labels[i]
    u = uniform(seed, step, 0, _LANE_VALUE)
    b = qcum.shape[1] - 1
    for v in range(qcum.shape[1]):
        if u < qcum[a, v]:
            b = v
            break
    if b == a:
        return True
    h = _field(indptr, indices, data, theta, alphabet, labels, i)
    d_energy = -(alphabet[b] - alphabet[a]) * h
    log_ratio = -beta * d_energy + math.log(qmat[b, a]) - math.log(qmat[a, b])
    if log_ratio >= 0.0 or uniform(seed, step, 0, _LANE_ACCEPT) < math.exp(log_ratio):
        labels[i] = b
        return True
    return False


@nb.njit(cache=True, nogil=True)
def _energy(indptr, indices, data, theta, alphabet, labels):
    e = 0.0
    for i in range(labels.size):
        s = alphabet[labels[i]]
        pair = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            pair += data[p] * alphabet[labels[indices[p]]]
        e -= s * (0.5 * pair + theta[i])
    return e


@nb.njit(cache=True, nogil=True)
def _index(labels, k):
    idx = 0
    mult = 1
    for i in range(labels.size):
        idx += labels[i] * mult
        mult *= k
    return idx


@nb.njit(cache=True, nogil=True)
def _chain(kind, indptr, indices, data, theta, beta, alphabet, labels0, seed, steps, burn_in, thin,
           qcum, qmat, n_states, t0):
    N = labels0.size
    k = alphabet.size
    labels = labels0.copy()
    spare = labels0.copy()
    n_rec = (steps - burn_in + thin - 1) // thin
    energies = np.empty(n_rec)
    trace = np.full(n_rec, -1, dtype=np.int64)
    hist = np.zeros(max(n_states, 1), dtype=np.int64)
    touched = np.zeros(N, dtype=np.bool_)
    n_touched = 0
    all_touched = -1
    accepted = 0
    rec = 0
    best = labels0.copy()
    best_e = np.inf
    for s in range(1, steps + 1):
        t = t0 + s
        if kind == 0:
            _pca_block(0, N, indptr, indices, data, theta, beta, alphabet, labels, spare, seed, t)
            labels, spare = spare, labels
        else:
            if kind == 1:
                i = min(int(uniform(seed, t, 0, _LANE_SITE) * N), N - 1)
                _gibbs_site(indptr, indices, data, theta, beta, alphabet, labels, seed, t, i)
                accepted += 1
            else:
                # the site draw inside the move uses the same key, so it is recoverable here
                i = min(int(uniform(seed, t, 0, _LANE_SITE) * N), N - 1)
                if _metropolis_move(indptr, indices, data, theta, beta, alphabet, labels, seed, t, qcum, qmat):
                    accepted += 1
            if not touched[i]:
                touched[i] = True
                n_touched += 1
                if n_touched == N:
                    all_touched = s
        if s > burn_in and (s - burn_in - 1) % thin == 0:
            e = _energy(indptr, indices, data, theta, alphabet, labels)
            energies[rec] = e
            if e < best_e:
                best_e = e
                best[:] = labels
            if n_states > 0:
                idx = _index(labels, k)
                trace[rec] = idx
                hist[idx] += 1
            rec += 1
    return labels, energies, trace, hist, accepted, all_touched, best, best_e


def state_energy(model: PairPotential, state: LatticeState) -> float:
    """Gibbs-measure energy, summed in the same order the chain kernels use."""
    indptr, indices, data, theta = _csr(model)
    return float(_energy(indptr, indices, data, theta, state.alphabet, np.ascontiguousarray(state.labels)))


def _csr(model: PairPotential):
    J = model.J
    return J.indptr.astype(np.int64), J.indices.astype(np.int64), J.data, model.theta


def _check_alphabet(state: LatticeState, model: PairPotential):
    if state.N != model.N:
        raise DimensionMismatchError(f"state has {state.N} components, model has {model.N}")


def pca_component_probs(state: LatticeState, model: PairPotential, i: int) -> np.ndarray:
    """Distribution of component ``i`` after one PCA step from ``state``."""
    _check_alphabet(state, model)
    indptr, indices, data, theta = _csr(model)
    logits = model.beta * _field(indptr, indices, data, theta, state.alphabet, state.labels, i) * state.alphabet
    p = np.exp(logits - logits.max())
    return p / p.sum()


def _blocks(N: int, threads: int):
    size = -(-N // threads)
    return [(s, min(s + size, N)) for s in range(0, N, size)]


def pca_step(state: LatticeState, model: PairPotential, key: StreamKey, threads: int = 1,
             pool: ThreadPoolExecutor | None = None) -> LatticeState:
    """One synchronous update; every component reads the same previous state."""
    _check_alphabet(state, model)
    src = np.ascontiguousarray(state.labels)
    dst = np.empty_like(src)
    _pca_into(model, state.alphabet, src, dst, key.seed, key.step, threads, pool)
    return LatticeState(state.alphabet, dst)


def _pca_into(model, alphabet, src, dst, seed, step, threads, pool=None):
    indptr, indices, data, theta = _csr(model)
    args = (indptr, indices, data, theta, model.beta, alphabet, src, dst, seed, step)
    if threads <= 1:
        _pca_block(0, src.size, *args)
        return
    blocks = _blocks(src.size, threads)
    if pool is None:
        with ThreadPoolExecutor(max_workers=threads) as own:
            list(own.map(lambda b: _pca_block(b[0], b[1], *args), blocks))
    else:
        list(pool.map(lambda b: _pca_block(b[0], b[1], *args), blocks))


def gibbs_step(state: LatticeState, target: PairPotential, key: StreamKey, i: int) -> LatticeState:
    """Redraw component ``i`` from its exact conditional; the others are untouched."""
    _check_alphabet(state, target)
    if not 0 <= i < state.N:
        raise DimensionMismatchError(f"component {i} out of range")
    labels = state.labels.copy()
    indptr, indices, data, theta = _csr(target)
    _gibbs_site(indptr, indices, data, theta, target.beta, state.alphabet, labels, key.seed, key.step, i)
    return LatticeState(state.alphabet, labels)


def default_proposal(k: int) -> np.ndarray:
    """Uniform proposal over the other ``k - 1`` values (plain Metropolis)."""
    q = np.full((k, k), 1.0 / (k - 1))
    np.fill_diagonal(q, 0.0)
    return q


def _proposal_tables(k: int, proposal):
    q = default_proposal(k) if proposal is None else np.asarray(proposal, dtype=np.float64)
    if q.shape != (k, k) or np.any(q < 0) or not np.allclose(q.sum(axis=1), 1.0, atol=1e-12):
        raise NnmcError(f"proposal must be a row-stochastic {k}x{k} matrix")
    if np.any((q > 0) != (q.T > 0)):
        raise NnmcError("proposal must satisfy Q[a, b] > 0 iff Q[b, a] > 0")
    cum = np.cumsum(q, axis=1)
    cum[:, -1] = 1.0
    # zero-probability moves must never be picked: give them an empty interval
    return np.ascontiguousarray(cum), np.where(q > 0, q, 1.0)


def metropolis_step(state: LatticeState, target: PairPotential, key: StreamKey,
                    proposal=None) -> tuple[LatticeState, bool]:
    _check_alphabet(state, target)
    qcum, qmat = _proposal_tables(state.k, proposal)
    labels = state.labels.copy()
    indptr, indices, data, theta = _csr(target)
    accepted = _metropolis_move(indptr, indices, data, theta, target.beta, state.alphabet, labels,
                                key.seed, key.step, qcum, qmat)
    return LatticeState(state.alphabet, labels), bool(accepted)


@dataclass
class ChainDiagnostics:
    stepper: str
    steps: int
    burn_in: int
    thin: int
    final: LatticeState
    energies: np.ndarray
    acceptance_rate: float | None
    empirical: np.ndarray | None = None
    state_trace: np.ndarray | None = None
    all_touched_step: int | None = None
    best: LatticeState | None = None
    best_energy: float = float("inf")

    @property
    def recorded(self) -> int:
        return self.energies.size

    def summary(self) -> dict:
        out = {
            "stepper": self.stepper,
            "steps": self.steps,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "recorded": self.recorded,
            "acceptance_rate": "n/a" if self.acceptance_rate is None else fmt_number(self.acceptance_rate),
            "mean_energy": fmt_number(self.energies.mean()),
            "final_energy": fmt_number(self.energies[-1]),
        }
        if self.all_touched_step is not None:
            out["all_touched_step"] = self.all_touched_step
        return out


def run_chain(
    initial: LatticeState,
    model: PairPotential,
    stepper: str = "pca",
    steps: int = 1000,
    burn_in: int = 0,
    thin: int = 1,
    seed: int = 0,
    threads: int = 1,
    proposal=None,
    step_offset: int = 0,
) -> ChainDiagnostics:
    """Run ``steps`` transitions and record every ``thin``-th state after ``burn_in``.

    Step ``s`` (1-based) uses RNG key ``(seed, step_offset + s)``, so the chain
    equals the matching sequence of ``pca_step`` / ``metropolis_step`` calls,
    and a chain resumed with ``step_offset`` set to the steps already taken
    continues the same stream. The empirical distribution is kept only when
    ``k**N <= 2**20``. The lowest-energy recorded state is returned as ``best``.
    """
    if stepper not in _KIND:
        raise NnmcError(f"unknown stepper {stepper!r}; expected one of {STEPPERS}")
    if steps <= burn_in:
        raise ChainConfigError("steps must exceed burn_in")
    if burn_in < 0 or thin < 1:
        raise ChainConfigError("burn_in must be >= 0 and thin >= 1")
    _check_alphabet(initial, model)
    N, k = initial.N, initial.k
    n_states = k**N if N * math.log2(k) <= math.log2(MAX_STATES) else 0
    qcum, qmat = _proposal_tables(k, proposal if stepper == "metropolis" else None)
    labels0 = np.ascontiguousarray(initial.labels)

    if stepper == "pca" and threads > 1:
        labels, energies, trace, hist, best, best_e = _threaded_pca_chain(
            initial, model, steps, burn_in, thin, seed, threads, n_states, step_offset)
        accepted, touched = None, -1
    else:
        indptr, indices, data, theta = _csr(model)
        labels, energies, trace, hist, accepted, touched, best, best_e = _chain(
            _KIND[stepper], indptr, indices, data, theta, model.beta, initial.alphabet, labels0,
            np.uint64(seed), steps, burn_in, thin, qcum, qmat, n_states, step_offset)

    empirical = hist / hist.sum() if n_states else None
    return ChainDiagnostics(
        stepper=stepper,
        steps=steps,
        burn_in=burn_in,
        thin=thin,
        final=LatticeState(initial.alphabet, labels),
        energies=energies,
        acceptance_rate=None if stepper == "pca" else accepted / steps,
        empirical=empirical,
        state_trace=trace if n_states else None,
        all_touched_step=None if stepper == "pca" or touched < 0 else int(touched),
        best=LatticeState(initial.alphabet, best),
        best_energy=float(best_e),
    )


def _threaded_pca_chain(initial, model, steps, burn_in, thin, seed, threads, n_states, step_offset):
    indptr, indices, data, theta = _csr(model)
    alphabet = initial.alphabet
    cur = np.ascontiguousarray(initial.labels).copy()
    nxt = np.empty_like(cur)
    n_rec = (steps - burn_in + thin - 1) // thin
    energies = np.empty(n_rec)
    trace = np.full(n_rec, -1, dtype=np.int64)
    hist = np.zeros(max(n_states, 1), dtype=np.int64)
    rec = 0
    best, best_e = cur.copy(), np.inf
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for s in range(1, steps + 1):
            _pca_into(model, alphabet, cur, nxt, seed, step_offset + s, threads, pool)
            cur, nxt = nxt, cur
            if s > burn_in and (s - burn_in - 1) % thin == 0:
                e = _energy(indptr, indices, data, theta, alphabet, cur)
                energies[rec] = e
                if e < best_e:
                    best_e = e
                    best[:] = cur
                if n_states:
                    idx = _index(cur, alphabet.size)
                    trace[rec] = idx
                    hist[idx] += 1
                rec += 1
    return cur, energies, trace, hist, best, best_e


def tv_distance(p, q) -> float:
    """Total-variation distance ``sum |p - q| / 2``."""
    p = np.asarray(p, dtype=np.float64).ravel()
    q = np.asarray(q, dtype=np.float64).ravel()
    if p.size != q.size:
        raise DimensionMismatchError(f"support sizes differ: {p.size} vs {q.size}")
    for name, dist in (("p", p), ("q", q)):
        if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
            raise NnmcError(f"{name} is not a probability distribution")
    return float(min(1.0, 0.5 * np.abs(p - q).sum()))


def single_flip_transition_matrix(model: PairPotential, alphabet=(-1.0, 1.0), stepper: str = "gibbs",
                                  proposal=None) -> np.ndarray:
    """Exact one-step kernel of the random-scan ``gibbs`` or ``metropolis`` stepper."""
    from .lattice import _check_enumerable, enumerate_labels

    alphabet = np.asarray(alphabet, dtype=np.float64)
    k, N = alphabet.size, model.N
    total = _check_enumerable(N, k, limit=2**12)
    labels = enumerate_labels(N, k)
    dense = model.J.toarray()
    h = alphabet[labels] @ dense + model.theta  # (state, component)
    powers = k ** np.arange(N)
    q = default_proposal(k) if proposal is None else np.asarray(proposal, dtype=np.float64)
    P = np.zeros((total, total))
    for s in range(total):
        for i in range(N):
            a = labels[s, i]
            logits = model.beta * h[s, i] * alphabet
            if stepper == "gibbs":
                probs = np.exp(logits - logits.max())
                probs /= probs.sum()
            elif stepper == "metropolis":
                probs = np.zeros(k)
                for b in range(k):
                    if b != a and q[a, b] > 0:
                        ratio = math.exp(min(0.0, logits[b] - logits[a] + math.log(q[b, a]) - math.log(q[a, b])))
                        probs[b] = q[a, b] * ratio
                probs[a] = 1.0 - probs.sum()
            else:
                raise NnmcError(f"unknown single-flip stepper {stepper!r}")
            base = s - a * powers[i]
            for b in range(k):
                P[s, base + b * powers[i]] += probs[b] / N
    return P
