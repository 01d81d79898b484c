"""Multivariate neural-network operators on a box and raster rescaling.

Both operator forms evaluate

    sum_k v_k Psi(n x - k) / sum_j Psi(n x - j),     k, j in J_n

and differ only in the grid values ``v_k``: point samples ``f(k/n)`` for the
discrete form, cell means of ``f`` over ``[k/n, (k+1)/n]^d`` for the
Kantorovich form. Because ``Psi`` is a tensor product, the normalised weights
factor per axis, which is what every evaluation path here exploits.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatchError, DomainError, NnmcError
from .raster_io import RasterField
from .sigmoid import SigmoidSpec, phi_eval

__all__ = [
    "BoxDomain",
    "IndexSet",
    "GridFunction",
    "OperatorConfig",
    "build_index_set",
    "sample_on_grid",
    "cell_means",
    "axis_weights",
    "operator_eval",
    "operator_eval_many",
    "raster_grid",
    "rescale_raster",
]

FORMS = ("discrete", "kantorovich")

# weights below this are dropped; far under any representable contribution
TRUNCATION = 1e-300


@dataclass(frozen=True)
class BoxDomain:
    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        if not 1 <= len(bounds) <= 3:
            raise DimensionMismatchError(f"supported dimensions are 1..3, got {len(bounds)}")
        for a, b in bounds:
            if not (a < b and math.isfinite(a) and math.isfinite(b)):
                raise NnmcError(f"invalid interval [{a}, {b}]")
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def unit(cls, d: int) -> "BoxDomain":
        return cls(((0.0, 1.0),) * d)

    @property
    def d(self) -> int:
        return len(self.bounds)

    def contains(self, x) -> bool:
        return all(a <= xi <= b for xi, (a, b) in zip(x, self.bounds))


@dataclass(frozen=True)
class IndexSet:
    """Integer box ``lo[i] <= k_i <= hi[i]`` with ``lo = floor(n a)``, ``hi = ceil(n b)``."""

    n: int
    lo: tuple[int, ...]
    hi: tuple[int, ...]

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(h - l + 1 for l, h in zip(self.lo, self.hi))

    @property
    def count(self) -> int:
        return math.prod(self.shape)

    def axis(self, i: int) -> np.ndarray:
        return np.arange(self.lo[i], self.hi[i] + 1, dtype=np.int64)

    def nodes(self, i: int) -> np.ndarray:
        return self.axis(i) / self.n

    def multi_index(self, flat: int) -> tuple[int, ...]:
        return tuple(int(l + o) for l, o in zip(self.lo, np.unravel_index(flat, self.shape)))


@dataclass(frozen=True, eq=False)
class GridFunction:
    index_set: IndexSet
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.size != self.index_set.count:
            raise DimensionMismatchError(f"{vals.size} values for an index set of {self.index_set.count}")
        vals = vals.reshape(self.index_set.shape)
        if not np.all(np.isfinite(vals)):
            flat = int(np.flatnonzero(~np.isfinite(vals.ravel()))[0])
            raise DomainError(f"non-finite grid value at k={self.index_set.multi_index(flat)}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class OperatorConfig:
    domain: BoxDomain
    n: int
    sigmoid: SigmoidSpec = SigmoidSpec()
    form: str = "discrete"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise NnmcError(f"n must be a positive integer, got {self.n}")
        if self.form not in FORMS:
            raise NnmcError(f"unknown operator form {self.form!r}; expected one of {FORMS}")

    @property
    def index_set(self) -> IndexSet:
        return build_index_set(self.domain, self.n)


def build_index_set(domain: BoxDomain, n: int) -> IndexSet:
    lo = tuple(math.floor(n * a) for a, _ in domain.bounds)
    hi = tuple(math.ceil(n * b) for _, b in domain.bounds)
    return IndexSet(int(n), lo, hi)


def _check_finite(values: np.ndarray, index_set: IndexSet) -> np.ndarray:
    values = np.broadcast_to(np.asarray(values, dtype=np.float64), index_set.shape)
    bad = np.flatnonzero(~np.isfinite(values.ravel()))
    if bad.size:
        raise DomainError(f"f is not finite at k={index_set.multi_index(int(bad[0]))}")
    return values


def sample_on_grid(f: Callable, index_set: IndexSet) -> GridFunction:
    """Point samples ``f(k/n)``.

    ``f`` receives one broadcastable coordinate array per axis.
    """
    coords = np.meshgrid(*(index_set.nodes(i) for i in range(index_set.d)), indexing="ij")
    return GridFunction(index_set, _check_finite(f(*coords), index_set))


def cell_means(f: Callable, index_set: IndexSet, quadrature_points_per_axis: int = 4) -> GridFunction:
    """Means of ``f`` over the cells ``[k/n, (k+1)/n]`` by the tensor midpoint rule."""
    q = int(quadrature_points_per_axis)
    if q < 1:
        raise NnmcError("quadrature_points_per_axis must be >= 1")
    offsets = (np.arange(q) + 0.5) / q
    fine = [((index_set.axis(i)[:, None] + offsets[None, :]) / index_set.n).ravel() for i in range(index_set.d)]
    coords = np.meshgrid(*fine, indexing="ij")
    vals = np.broadcast_to(np.asarray(f(*coords), dtype=np.float64), coords[0].shape)
    split = []
    for m in index_set.shape:
        split.extend((m, q))
    means = vals.reshape(split).mean(axis=tuple(range(1, 2 * index_set.d, 2)))
    return GridFunction(index_set, _check_finite(means, index_set))


def axis_weights(spec: SigmoidSpec, n: int, x, k) -> np.ndarray:
    """Row-normalised ``phi(n x - k)`` for points ``x`` against indices ``k``."""
    w = phi_eval(spec, n * np.asarray(x, dtype=np.float64)[:, None] - np.asarray(k)[None, :])
    w = np.where(w < TRUNCATION, 0.0, w)
    return w / w.sum(axis=1, keepdims=True)


def _check_grid(config: OperatorConfig, grid: GridFunction):
    if grid.index_set != config.index_set:
        raise DimensionMismatchError("grid index set does not match the operator configuration")


def operator_eval_many(config: OperatorConfig, grid: GridFunction, points, clamp: bool = True) -> np.ndarray:
    """Evaluate the operator at each row of ``points`` (shape ``(P, d)``).

    With ``clamp`` the result is clipped to the grid's value range, removing
    rounding overshoot of the convex combination.
    """
    _check_grid(config, grid)
    d = config.domain.d
    pts = np.asarray(points, dtype=np.float64).reshape(-1, d)
    for i, (a, b) in enumerate(config.domain.bounds):
        outside = (pts[:, i] < a) | (pts[:, i] > b) | ~np.isfinite(pts[:, i])
        if outside.any():
            raise DomainError(f"point {pts[int(np.argmax(outside))].tolist()} lies outside the domain")
    iset = grid.index_set
    ws = [axis_weights(config.sigmoid, iset.n, pts[:, i], iset.axis(i)) for i in range(d)]
    if d == 1:
        out = ws[0] @ grid.values
    elif d == 2:
        out = np.einsum("pi,ij,pj->p", ws[0], grid.values, ws[1])
    else:
        out = np.einsum("pi,pj,pk,ijk->p", ws[0], ws[1], ws[2], grid.values)
    if not clamp:
        return out
    return np.clip(out, grid.values.min(), grid.values.max())


def operator_eval(config: OperatorConfig, grid: GridFunction, x) -> float:
    """Operator value at a single point ``x`` of the domain."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.size != config.domain.d:
        raise DimensionMismatchError(f"point has {x.size} coordinates, domain has {config.domain.d}")
    return float(operator_eval_many(config, grid, x[None, :])[0])


def _positions(m: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, m) if m > 1 else np.array([0.5])


def _interp_matrix(sample_pos: np.ndarray, at: np.ndarray) -> np.ndarray:
    """Linear-interpolation weights from samples at ``sample_pos`` to points ``at``.

    Points beyond the first/last sample take the edge value.
    """
    m = sample_pos.size
    mat = np.zeros((at.size, m))
    if m == 1:
        mat[:, 0] = 1.0
        return mat
    at = np.clip(at, sample_pos[0], sample_pos[-1])
    right = np.clip(np.searchsorted(sample_pos, at, side="right"), 1, m - 1)
    left = right - 1
    t = (at - sample_pos[left]) / (sample_pos[right] - sample_pos[left])
    rows = np.arange(at.size)
    mat[rows, left] += 1.0 - t
    mat[rows, right] += t
    return mat


def _axis_grid_matrix(pixels: int, iset_axis: np.ndarray, n: int, form: str, quad: int) -> np.ndarray:
    pos = _positions(pixels)
    if form == "discrete":
        return _interp_matrix(pos, iset_axis / n)
    offsets = (np.arange(quad) + 0.5) / quad
    fine = ((iset_axis[:, None] + offsets[None, :]) / n).ravel()
    return _interp_matrix(pos, fine).reshape(iset_axis.size, quad, pixels).mean(axis=1)


def raster_grid(
    field: RasterField,
    band: int,
    form: str = "discrete",
    sigmoid: SigmoidSpec = SigmoidSpec(),
    quad: int = 4,
) -> tuple[OperatorConfig, GridFunction]:
    """Map one raster band onto an operator grid over ``[0, 1]^2``.

    Pixel ``(i, j)`` of an ``h x w`` band sits at ``(j/(w-1), i/(h-1))`` and
    ``n = max(w, h) - 1``. The band is read as the bilinear interpolant of its
    pixels, edge-replicated outside the unit square; the discrete form samples
    it at ``k/n`` and the Kantorovich form averages it over each cell.
    """
    data = field.band(band)
    h, w = data.shape
    n = max(w, h) - 1
    if n < 1:
        raise NnmcError("a 1x1 band has no grid structure")
    config = OperatorConfig(BoxDomain.unit(2), n, sigmoid, form)
    iset = config.index_set
    ly = _axis_grid_matrix(h, iset.axis(1), n, form, quad)
    lx = _axis_grid_matrix(w, iset.axis(0), n, form, quad)
    # axis 0 of the operator is x (columns), axis 1 is y (rows)
    values = lx @ data.T @ ly.T
    return config, GridFunction(iset, np.clip(values, data.min(), data.max()))


def rescale_raster(
    field: RasterField,
    band: int,
    out_width: int,
    out_height: int,
    form: str = "discrete",
    sigmoid: SigmoidSpec = SigmoidSpec(),
    threads: int = 1,
    quad: int = 4,
) -> RasterField:
    """Resample one band to ``out_height x out_width`` through the operator.

    Output rows are computed independently, so the result does not depend on
    ``threads``.
    """
    if out_width < 1 or out_height < 1:
        raise NnmcError("output dimensions must be >= 1")
    if form not in FORMS:
        raise NnmcError(f"unknown operator form {form!r}")
    data = field.band(band)
    h, w = data.shape
    name = (field.band_names[band],) if field.band_names else ()
    if h == 1 and w == 1:
        if form == "kantorovich":
            raise NnmcError("kantorovich rescaling needs at least two pixels (a 1x1 band has no cells)")
        return RasterField(np.full((1, out_height, out_width), data[0, 0]), name)

    config, grid = raster_grid(field, band, form, sigmoid, quad)
    iset = grid.index_set
    wx = axis_weights(sigmoid, iset.n, _positions(out_width), iset.axis(0))
    wy = axis_weights(sigmoid, iset.n, _positions(out_height), iset.axis(1))
    vals = grid.values  # (x, y)
    out = np.empty((out_height, out_width))

    def fill(rows: range):
        for r in rows:
            out[r] = wx @ (vals @ wy[r])

    threads = max(1, int(threads))
    step = -(-out_height // threads)
    chunks = [range(s, min(s + step, out_height)) for s in range(0, out_height, step)]
    if threads == 1:
        fill(range(out_height))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, chunks))
    np.clip(out, vals.min(), vals.max(), out=out)
    return RasterField(out[np.newaxis], name)
