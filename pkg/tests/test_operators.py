import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nnmc.errors import DimensionMismatchError, DomainError, NnmcError
from nnmc.operators import (
    BoxDomain,
    GridFunction,
    OperatorConfig,
    build_index_set,
    cell_means,
    operator_eval,
    operator_eval_many,
    rescale_raster,
    sample_on_grid,
)
from nnmc.raster_io import RasterField
from nnmc.sigmoid import SigmoidSpec, phi_eval

KINDS = ("logistic", "smoothed_ramp")


def brute_force(config, grid, x):
    """Scalar double loop over the index set, no normalisation shortcuts."""
    iset = grid.index_set
    num = den = 0.0
    for k in itertools.product(*(range(lo, hi + 1) for lo, hi in zip(iset.lo, iset.hi))):
        psi = math.prod(float(phi_eval(config.sigmoid, config.n * xi - ki)) for xi, ki in zip(x, k))
        num += psi * grid.values[tuple(ki - lo for ki, lo in zip(k, iset.lo))]
        den += psi
    return num / den


def test_index_set_examples():
    a = build_index_set(BoxDomain.unit(1), 10)
    assert a.axis(0).tolist() == list(range(11)) and a.count == 11
    assert build_index_set(BoxDomain.unit(2), 4).count == 25
    c = build_index_set(BoxDomain(((-0.5, 0.5),)), 3)
    assert c.axis(0).tolist() == [-2, -1, 0, 1, 2]


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(0.01, 3)), min_size=1, max_size=3), st.integers(1, 20))
def test_index_set_count(boxes, n):
    dom = BoxDomain(tuple((a, a + L) for a, L in boxes))
    iset = build_index_set(dom, n)
    assert iset.count == math.prod(math.ceil(n * b) - math.floor(n * a) + 1 for a, b in dom.bounds)


def test_domain_validation():
    with pytest.raises(NnmcError):
        BoxDomain(((1.0, 0.0),))
    with pytest.raises(DimensionMismatchError):
        BoxDomain(((0, 1),) * 4)


def test_sample_on_grid_examples():
    iset = build_index_set(BoxDomain.unit(1), 2)
    assert sample_on_grid(lambda x: np.ones_like(x), iset).values.tolist() == [1, 1, 1]
    assert sample_on_grid(lambda x: x, iset).values.tolist() == [0, 0.5, 1]
    sq = sample_on_grid(lambda x: x * x, build_index_set(BoxDomain.unit(1), 10))
    assert sq.values[7] == pytest.approx(0.49, abs=1e-15)
    with pytest.raises(DomainError, match=r"k=\(1,\)"), np.errstate(divide="ignore"):
        sample_on_grid(lambda x: 1 / (x - 0.5), iset)


def test_cell_means_examples():
    iset2 = build_index_set(BoxDomain.unit(1), 2)
    assert cell_means(lambda x: x, iset2, 1).values[0] == 0.25
    np.testing.assert_array_equal(cell_means(lambda x: np.full_like(x, 2.5), iset2, 3).values, 2.5)
    iset1 = build_index_set(BoxDomain.unit(1), 1)
    assert cell_means(lambda x: x * x, iset1, 64).values[0] == pytest.approx(1 / 3, abs=1e-4)


@given(st.integers(1, 8), st.integers(1, 5), st.floats(-3, 3), st.floats(-3, 3))
def test_cell_means_exact_for_affine(n, q, a, b):
    iset = build_index_set(BoxDomain.unit(2), n)
    cm = cell_means(lambda x, y: a * x + b * y, iset, q).values
    k0, k1 = np.meshgrid(iset.axis(0), iset.axis(1), indexing="ij")
    np.testing.assert_allclose(cm, a * (k0 + 0.5) / n + b * (k1 + 0.5) / n, atol=1e-13)


def test_operator_examples():
    for form in ("discrete", "kantorovich"):
        cfg = OperatorConfig(BoxDomain.unit(2), 5, SigmoidSpec(), form)
        grid = GridFunction(cfg.index_set, np.full(cfg.index_set.shape, 3.7))
        assert operator_eval(cfg, grid, [0.3, 0.9]) == pytest.approx(3.7, abs=1e-12)
    cfg = OperatorConfig(BoxDomain.unit(1), 1)
    assert operator_eval(cfg, GridFunction(cfg.index_set, [0.0, 1.0]), 0.5) == pytest.approx(0.5, abs=1e-15)


def test_operator_errors():
    cfg = OperatorConfig(BoxDomain.unit(1), 4)
    grid = GridFunction(cfg.index_set, np.zeros(5))
    with pytest.raises(DomainError):
        operator_eval(cfg, grid, 1.5)
    with pytest.raises(DimensionMismatchError):
        operator_eval(OperatorConfig(BoxDomain.unit(1), 3), grid, 0.5)
    with pytest.raises(DimensionMismatchError):
        operator_eval(cfg, grid, [0.1, 0.2])


@given(
    st.integers(1, 2),
    st.integers(1, 6),
    st.sampled_from(KINDS),
    st.sampled_from([1.0, 4.0, 16.0]),
    st.integers(0, 2**32 - 1),
)
def test_matches_brute_force(d, n, kind, w, seed):
    rng = np.random.default_rng(seed)
    cfg = OperatorConfig(BoxDomain(((-0.3, 0.7),) * d), n, SigmoidSpec(kind, w))
    grid = GridFunction(cfg.index_set, rng.normal(size=cfg.index_set.shape))
    x = rng.uniform(-0.3, 0.7, size=d)
    assert operator_eval(cfg, grid, x) == pytest.approx(brute_force(cfg, grid, x), rel=1e-11, abs=1e-12)


@given(st.integers(1, 3), st.integers(1, 12), st.sampled_from(KINDS), st.sampled_from([1.0, 16.0]),
       st.integers(0, 2**32 - 1))
def test_convexity_and_constants(d, n, kind, w, seed):
    rng = np.random.default_rng(seed)
    cfg = OperatorConfig(BoxDomain.unit(d), n, SigmoidSpec(kind, w))
    vals = rng.uniform(-5, 5, size=cfg.index_set.shape)
    pts = rng.uniform(0, 1, size=(20, d))
    out = operator_eval_many(cfg, GridFunction(cfg.index_set, vals), pts, clamp=False)
    eps = 1e-12 * np.abs(vals).max()
    assert out.min() >= vals.min() - eps and out.max() <= vals.max() + eps
    c = rng.uniform(-10, 10)
    const = operator_eval_many(cfg, GridFunction(cfg.index_set, np.full(vals.shape, c)), pts, clamp=False)
    np.testing.assert_allclose(const, c, atol=1e-12)


def test_order_independent():
    rng = np.random.default_rng(1)
    cfg = OperatorConfig(BoxDomain.unit(2), 7, SigmoidSpec("logistic", 4.0))
    grid = GridFunction(cfg.index_set, rng.normal(size=cfg.index_set.shape))
    pts = rng.uniform(size=(50, 2))
    perm = rng.permutation(50)
    np.testing.assert_array_equal(operator_eval_many(cfg, grid, pts)[perm], operator_eval_many(cfg, grid, pts[perm]))


def _sup_error(f, form, n, d=1, w=8.0):
    cfg = OperatorConfig(BoxDomain.unit(d), n, SigmoidSpec("logistic", w), form)
    grid = (sample_on_grid if form == "discrete" else cell_means)(f, cfg.index_set)
    t = np.linspace(0, 1, 101 if d == 1 else 21)
    pts = np.stack([g.ravel() for g in np.meshgrid(*([t] * d), indexing="ij")], axis=1)
    return float(np.abs(operator_eval_many(cfg, grid, pts) - f(*pts.T)).max())


FUNCS_1D = [lambda x: np.sin(2 * np.pi * x), lambda x: x * x, np.exp]


@pytest.mark.parametrize("form", ["discrete", "kantorovich"])
@pytest.mark.parametrize("f", FUNCS_1D, ids=["sin", "square", "exp"])
def test_convergence_1d(form, f):
    e = [_sup_error(f, form, n) for n in (2, 8, 64)]
    assert e[2] < e[1] < e[0]


@pytest.mark.parametrize("form", ["discrete", "kantorovich"])
def test_convergence_2d(form):
    f = lambda x, y: np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y)  # noqa: E731
    e = [_sup_error(f, form, n, d=2) for n in (2, 8, 64)]
    assert e[2] < e[1] < e[0]


@pytest.mark.parametrize("f", FUNCS_1D, ids=["sin", "square", "exp"])
def test_forms_agree(f):
    n = 64
    t = np.linspace(0, 1, 101)
    out = {}
    for form, sampler in (("discrete", sample_on_grid), ("kantorovich", cell_means)):
        cfg = OperatorConfig(BoxDomain.unit(1), n, SigmoidSpec("logistic", 8.0), form)
        out[form] = operator_eval_many(cfg, sampler(f, cfg.index_set), t[:, None])
    larger = max(_sup_error(f, form, n) for form in out)
    assert np.abs(out["discrete"] - out["kantorovich"]).max() <= 2 * larger


def _bump(h, w):
    y, x = np.mgrid[0:h, 0:w]
    return np.exp(-(((x / (w - 1) - 0.5) ** 2 + (y / (h - 1) - 0.45) ** 2) / 0.08))


def test_rescale_constant_and_bounds():
    const = RasterField(np.full((1, 3, 4), 2.25))
    for form in ("discrete", "kantorovich"):
        out = rescale_raster(const, 0, 7, 5, form)
        np.testing.assert_allclose(out.band(0), 2.25, atol=1e-12)
    checker = RasterField(np.array([[[0.0, 1.0], [1.0, 0.0]]]))
    for form in ("discrete", "kantorovich"):
        out = rescale_raster(checker, 0, 8, 8, form, SigmoidSpec("logistic", 4.0)).band(0)
        assert out.shape == (8, 8) and out.min() >= 0.0 and out.max() <= 1.0


def test_rescale_reproduces_smooth_band():
    band = _bump(17, 17)
    sig = SigmoidSpec("logistic", 16.0)
    up = rescale_raster(RasterField(band[None]), 0, 65, 65, "discrete", sig).band(0)
    # output pixel 4j sits on input pixel j
    assert np.abs(up[::4, ::4] - band).max() < 0.05


def test_rescale_degenerate_and_threads():
    one = RasterField(np.array([[[4.0]]]))
    np.testing.assert_array_equal(rescale_raster(one, 0, 3, 2).band(0), 4.0)
    with pytest.raises(NnmcError):
        rescale_raster(one, 0, 3, 2, "kantorovich")
    field = RasterField(np.random.default_rng(0).normal(size=(1, 9, 6)))
    a = rescale_raster(field, 0, 13, 11, "kantorovich", threads=1)
    b = rescale_raster(field, 0, 13, 11, "kantorovich", threads=4)
    assert a == b
