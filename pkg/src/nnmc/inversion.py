"""Recovering grid samples from operator values.

Evaluating the discrete operator at the grid nodes themselves is a linear map
``g = A f`` with a row-stochastic matrix ``A``. Inverting it is done two ways:
dense Gaussian elimination (the reference) and the Neumann series
``f = sum_m (I - A)^m g``, run as the Richardson iteration
``f <- f + (g - A f)``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, DivergenceError, SingularMatrixError
from .numfmt import fmt_number
from .operators import OperatorConfig, axis_weights, sample_on_grid

__all__ = [
    "GridOperatorMatrix",
    "build_grid_matrix",
    "invert_direct",
    "invert_iterative",
    "IterativeResult",
    "DominanceWarning",
    "RoundtripReport",
    "roundtrip_error",
]

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-14


class DominanceWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class GridOperatorMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"operator matrix must be square, got {a.shape}")
        object.__setattr__(self, "matrix", a)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def dominance_margin(self) -> float:
        """``min_j (2 A[j, j] - 1)``; positive means strict row diagonal dominance."""
        return float(np.min(2.0 * np.diag(self.matrix) - 1.0))

    def apply(self, f) -> np.ndarray:
        return self.matrix @ np.asarray(f, dtype=np.float64)


def build_grid_matrix(config: OperatorConfig) -> GridOperatorMatrix:
    """Matrix of the discrete operator evaluated at the (clamped) nodes ``j/n``.

    Row and column order follow C-order flattening of the index set.
    """
    iset = config.index_set
    mat = np.ones((1, 1))
    for i, (a, b) in enumerate(config.domain.bounds):
        k = iset.axis(i)
        nodes = np.clip(k / iset.n, a, b)
        mat = np.kron(mat, axis_weights(config.sigmoid, iset.n, nodes, k))
    return GridOperatorMatrix(mat)


def _as_array(a) -> np.ndarray:
    return a.matrix if isinstance(a, GridOperatorMatrix) else np.asarray(a, dtype=np.float64)


def invert_direct(a, g) -> np.ndarray:
    """Solve ``A f = g`` by Gaussian elimination with partial pivoting."""
    m = _as_array(a).copy()
    rhs = np.array(g, dtype=np.float64, copy=True)
    size = m.shape[0]
    if m.shape != (size, size) or rhs.shape != (size,):
        raise DimensionMismatchError(f"incompatible shapes {m.shape} and {rhs.shape}")
    scale = max(np.abs(m).max(), 1.0)
    for col in range(size):
        p = col + int(np.argmax(np.abs(m[col:, col])))
        if abs(m[p, col]) < PIVOT_TOL * scale:
            raise SingularMatrixError(f"matrix is numerically singular (pivot {m[p, col]:.3e} in column {col})")
        if p != col:
            m[[col, p]] = m[[p, col]]
            rhs[[col, p]] = rhs[[p, col]]
        factors = m[col + 1:, col] / m[col, col]
        m[col + 1:, col:] -= factors[:, None] * m[col, col:]
        rhs[col + 1:] -= factors * rhs[col]
    f = np.empty(size)
    for row in range(size - 1, -1, -1):
        f[row] = (rhs[row] - m[row, row + 1:] @ f[row + 1:]) / m[row, row]
    return f


@dataclass
class IterativeResult:
    values: np.ndarray
    iterations: int
    residuals: list[float] = field(default_factory=list)
    converged: bool = False
    dominance_margin: float = float("nan")


def invert_iterative(a, g, tol: float = 1e-10, max_iter: int = 100_000) -> IterativeResult:
    """Neumann-series inversion of ``A f = g``.

    Stops once ``||g - A f||_inf < tol * ||g||_inf``. Convergence needs
    ``rho(I - A) < 1``; strict diagonal dominance of a row-stochastic ``A``
    (every diagonal entry above 1/2) guarantees it and makes the residual
    contract monotonically. Without dominance a ``DominanceWarning`` is issued
    and the iteration runs anyway; a residual that grows tenfold within 20
    iterations raises ``DivergenceError``.
    """
    mat = _as_array(a)
    g = np.asarray(g, dtype=np.float64)
    if mat.shape != (g.size, g.size):
        raise DimensionMismatchError(f"incompatible shapes {mat.shape} and {g.shape}")
    margin = float(np.min(2.0 * np.diag(mat) - 1.0))
    if margin <= 0:
        warnings.warn(
            f"operator matrix is not strictly diagonally dominant (margin {margin:.3e}); "
            "convergence is not guaranteed",
            DominanceWarning,
            stacklevel=2,
        )
    g_norm = float(np.abs(g).max())
    f = np.zeros_like(g)
    residuals: list[float] = []
    if g_norm == 0.0:
        return IterativeResult(f, 0, [0.0], True, margin)
    for it in range(1, max_iter + 1):
        f = f + (g - mat @ f)
        res = float(np.abs(g - mat @ f).max())
        residuals.append(res)
        if res < tol * g_norm:
            return IterativeResult(f, it, residuals, True, margin)
        if it > 20 and res > 10.0 * residuals[-21]:
            raise DivergenceError(f"Neumann iteration diverging (residual {res:.3e} at iteration {it})")
    log.info("Neumann iteration stopped at max_iter=%d, residual %.3e", max_iter, residuals[-1])
    return IterativeResult(f, max_iter, residuals, False, margin)


@dataclass(frozen=True)
class RoundtripReport:
    forward_sup_error: float
    inversion_residual: float
    recovery_error: float
    dominance_margin: float
    iterations: int | None = None

    def lines(self) -> list[str]:
        out = [
            f"forward_sup_error: {fmt_number(self.forward_sup_error)}",
            f"inversion_residual: {fmt_number(self.inversion_residual)}",
            f"recovery_error: {fmt_number(self.recovery_error)}",
            f"dominance_margin: {fmt_number(self.dominance_margin)}",
        ]
        if self.iterations is not None:
            out.append(f"iterations: {self.iterations}")
        return out


def roundtrip_error(
    config: OperatorConfig,
    f: Callable,
    method: str = "direct",
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> RoundtripReport:
    """Sample ``f``, apply the grid operator, invert, and compare.

    ``forward_sup_error`` is ``max |A f - f|`` at the nodes; the recovery error
    is relative to ``max |f|`` (absolute when ``f`` vanishes on the grid).
    """
    samples = sample_on_grid(f, config.index_set).values.ravel()
    a = build_grid_matrix(config)
    g = a.apply(samples)
    iterations = None
    if method == "direct":
        rec = invert_direct(a, g)
    elif method == "iterative":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DominanceWarning)
            result = invert_iterative(a, g, tol=tol, max_iter=max_iter)
        rec, iterations = result.values, result.iterations
    else:
        raise ValueError(f"unknown inversion method {method!r}")
    scale = float(np.abs(samples).max()) or 1.0
    return RoundtripReport(
        forward_sup_error=float(np.abs(g - samples).max()),
        inversion_residual=float(np.abs(a.apply(rec) - g).max()),
        recovery_error=float(np.abs(rec - samples).max()) / scale,
        dominance_margin=a.dominance_margin,
        iterations=iterations,
    )
