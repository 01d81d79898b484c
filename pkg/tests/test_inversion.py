import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nnmc.errors import DivergenceError, DomainError, SingularMatrixError
from nnmc.inversion import (
    DominanceWarning,
    build_grid_matrix,
    invert_direct,
    invert_iterative,
    roundtrip_error,
)
from nnmc.operators import BoxDomain, OperatorConfig
from nnmc.sigmoid import SigmoidSpec, phi_eval


def cfg(n, w=16.0, d=1, kind="logistic"):
    return OperatorConfig(BoxDomain.unit(d), n, SigmoidSpec(kind, w))


@given(st.integers(1, 3), st.integers(1, 10), st.sampled_from(["logistic", "smoothed_ramp"]),
       st.sampled_from([1.0, 4.0, 16.0]))
def test_row_stochastic(d, n, kind, w):
    if (n + 1) ** d > 400:
        n = 3
    a = build_grid_matrix(cfg(n, w, d, kind)).matrix
    assert a.shape == ((n + 1) ** d,) * 2
    assert a.min() >= 0
    np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-12)


def test_two_by_two_symmetric():
    a = build_grid_matrix(cfg(1, 1.0)).matrix
    p0, p1 = phi_eval(SigmoidSpec(), 0.0), phi_eval(SigmoidSpec(), 1.0)
    expected = np.array([[p0, p1], [p1, p0]]) / (p0 + p1)
    np.testing.assert_allclose(a, expected, atol=1e-15)
    np.testing.assert_array_equal(a, a.T)


def test_steep_dominance_margin():
    # interior diagonals sit a hair below 1/2 for w=16, n=8; only the clamped
    # boundary rows clear it (see the decision ledger)
    a = build_grid_matrix(cfg(8))
    diag = np.diag(a.matrix)
    assert diag[0] > 0.5 and diag[-1] > 0.5
    assert np.all(diag > 0.4999998)
    assert abs(a.dominance_margin) < 1e-6


def test_shallow_dominance_fails():
    a = build_grid_matrix(cfg(64, 1.0))
    assert a.dominance_margin < 0
    with pytest.warns(DominanceWarning):
        invert_iterative(a, np.linspace(0, 1, 65), max_iter=5)


def test_direct_examples():
    rng = np.random.default_rng(3)
    a = build_grid_matrix(cfg(16))
    f = rng.normal(size=17)
    assert np.abs(invert_direct(a, a.apply(f)) - f).max() / np.abs(f).max() < 1e-8
    g = rng.normal(size=5)
    np.testing.assert_array_equal(invert_direct(np.eye(5), g), g)
    dup = np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SingularMatrixError):
        invert_direct(dup, np.ones(3))


@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_direct_matches_numpy(m, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(m, m)) + m * np.eye(m)
    g = rng.normal(size=m)
    ref = np.linalg.solve(a, g)
    np.testing.assert_allclose(invert_direct(a, g), ref, rtol=1e-9, atol=1e-12)


def test_iterative_matches_direct():
    a = build_grid_matrix(cfg(8))
    g = a.apply(np.sin(2 * np.pi * np.arange(9) / 8) + 0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DominanceWarning)
        res = invert_iterative(a, g, tol=1e-8)
    assert res.converged
    direct = invert_direct(a, g)
    assert np.abs(res.values - direct).max() / np.abs(direct).max() < 1e-6
    assert all(b <= a_ for a_, b in zip(res.residuals, res.residuals[1:]))


def test_iterative_dominant_matrix():
    # strictly dominant row-stochastic matrix: monotone residuals, 10 tol agreement
    rng = np.random.default_rng(5)
    off = rng.uniform(size=(12, 12))
    np.fill_diagonal(off, 0)
    a = 0.4 * off / off.sum(axis=1, keepdims=True) + 0.6 * np.eye(12)
    g = rng.normal(size=12)
    res = invert_iterative(a, g, tol=1e-12)
    assert res.converged and res.dominance_margin > 0
    assert all(b < a_ for a_, b in zip(res.residuals, res.residuals[1:]))
    assert np.abs(res.values - invert_direct(a, g)).max() <= 10 * 1e-12 * np.abs(g).max() * 10


def test_iterative_constant_fixed_point():
    a = build_grid_matrix(cfg(8, 4.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DominanceWarning)
        res = invert_iterative(a, np.full(9, 2.5))
    assert res.iterations == 1 and res.residuals[0] < 1e-14
    np.testing.assert_allclose(res.values, 2.5, atol=1e-15)


def test_divergence_detected():
    a = np.array([[0.2, 0.8], [0.8, 0.2]])  # I - A has eigenvalue 1.6
    with pytest.warns(DominanceWarning), pytest.raises(DivergenceError):
        invert_iterative(a, np.array([1.0, 0.0]))


def test_roundtrip_examples():
    rep = roundtrip_error(cfg(8), lambda x: np.full_like(x, 1.5))
    assert rep.forward_sup_error < 1e-10 and rep.inversion_residual < 1e-10 and rep.recovery_error < 1e-10
    rep = roundtrip_error(cfg(16), lambda x: np.sin(2 * np.pi * x))
    assert rep.recovery_error < 1e-6
    with pytest.raises(DomainError):
        roundtrip_error(cfg(4), lambda x: np.where(x > 0.5, np.nan, x))
    assert any(line.startswith("recovery_error: ") for line in rep.lines())
