import numpy as np
import pytest

from specprune.errors import (
    DuplicateIndex,
    IndefiniteBeyondTolerance,
    IndexOutOfRange,
    NonFinite,
    NonSymmetric,
    ShapeMismatch,
    Singular,
)
from specprune.linalg import psd_solve, submatrix, sym_eig


def random_psd(rng, n, rank=None):
    g = rng.standard_normal((rank or n, n))
    return g.T @ g


def test_sym_eig_identity():
    spec = sym_eig(np.eye(3))
    assert np.allclose(spec.eigenvalues, [1.0, 1.0, 1.0])
    assert np.allclose(spec.basis @ spec.basis.T, np.eye(3), atol=1e-12)


def test_sym_eig_diagonal_sorted_descending():
    spec = sym_eig(np.diag([3.0, 1.0]))
    assert np.allclose(spec.eigenvalues, [3.0, 1.0])
    # basis is a signed permutation of the identity (here: identity itself)
    assert np.allclose(np.abs(spec.basis), np.eye(2), atol=1e-12)


def test_sym_eig_reconstructs_random_psd():
    rng = np.random.default_rng(0)
    m = random_psd(rng, 10)
    spec = sym_eig(m)
    err = np.linalg.norm(spec.reconstruct() - m) / np.linalg.norm(m)
    assert err < 1e-8


@pytest.mark.parametrize("n", [2, 5, 17, 64])
def test_sym_eig_reconstruction_random_psd_sizes(n):
    rng = np.random.default_rng(n)
    m = random_psd(rng, n)
    spec = sym_eig(m)
    rec = (spec.basis * spec.eigenvalues) @ spec.basis.T
    assert np.linalg.norm(rec - m) / np.linalg.norm(m) < 1e-8


def test_sym_eig_psd_invariants_and_trace():
    rng = np.random.default_rng(7)
    for n in (3, 8, 33, 64):
        m = random_psd(rng, n)
        spec = sym_eig(m)
        assert np.all(np.diff(spec.eigenvalues) <= 1e-12)
        assert np.allclose(spec.basis.T @ spec.basis, np.eye(n), atol=1e-10)
        rec_err = np.linalg.norm(spec.reconstruct() - m) / np.linalg.norm(m)
        assert rec_err < 1e-8
        assert np.isclose(spec.eigenvalues.sum(), np.trace(m), rtol=1e-9)


def test_sym_eig_clamps_tiny_negative():
    m = np.diag([1.0, -1e-12])
    spec = sym_eig(m)
    assert spec.eigenvalues[-1] == 0.0


def test_sym_eig_rejects_indefinite():
    with pytest.raises(IndefiniteBeyondTolerance):
        sym_eig(np.diag([1.0, -0.5]))


def test_sym_eig_rejects_nonsymmetric_and_nonfinite():
    with pytest.raises(NonSymmetric):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NonFinite):
        sym_eig(np.array([[np.nan, 0.0], [0.0, 1.0]]))
    with pytest.raises(ShapeMismatch):
        sym_eig(np.zeros((2, 3)))


def test_psd_solve_identity():
    b = np.arange(6.0).reshape(3, 2)
    x = psd_solve(np.eye(3), 0.0, b)
    assert np.allclose(x, b)


def test_psd_solve_pure_ridge():
    lam = 0.25
    rhs = np.array([2.0, -4.0, 8.0])
    x = psd_solve(np.zeros((3, 3)), lam, rhs)
    assert np.allclose(x, rhs / lam)


def test_psd_solve_residual_random():
    rng = np.random.default_rng(3)
    m = random_psd(rng, 8)
    ridge = np.full(8, 1e-3)
    rhs = rng.standard_normal((8, 4))
    x = psd_solve(m, ridge, rhs)
    res = np.linalg.norm((m + np.diag(ridge)) @ x - rhs) / np.linalg.norm(rhs)
    assert res < 1e-9


def test_psd_solve_residual_sweep():
    rng = np.random.default_rng(11)
    for n in (2, 5, 12, 30):
        m = random_psd(rng, n)
        ridge = np.abs(rng.standard_normal(n)) * 1e-2
        rhs = rng.standard_normal(n)
        x = psd_solve(m, ridge, rhs)
        res = np.linalg.norm((m + np.diag(ridge)) @ x - rhs) / np.linalg.norm(rhs)
        assert res < 1e-9


def test_psd_solve_singular():
    with pytest.raises(Singular):
        psd_solve(np.zeros((3, 3)), 0.0, np.ones(3))
    # rank-1 with no ridge
    v = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(Singular):
        psd_solve(v, 0.0, np.ones(2))


def test_psd_solve_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        psd_solve(np.eye(3), np.ones(2), np.ones(3))
    with pytest.raises(ShapeMismatch):
        psd_solve(np.eye(3), 0.0, np.ones(4))


def test_submatrix_full_copy_and_single():
    m = np.arange(9.0).reshape(3, 3)
    full = submatrix(m, [0, 1, 2], [0, 1, 2])
    assert np.array_equal(full, m)
    full[0, 0] = -1  # must be a copy
    assert m[0, 0] == 0.0
    single = submatrix(m, [2], [0])
    assert single.shape == (1, 1) and single[0, 0] == m[2, 0]


def test_submatrix_symmetric_transpose_pair():
    rng = np.random.default_rng(5)
    m = random_psd(rng, 6)
    J = [1, 4, 5]
    F = list(range(6))
    assert np.allclose(submatrix(m, F, J), submatrix(m, J, F).T)


def test_submatrix_rejects_bad_indices():
    m = np.eye(3)
    with pytest.raises(IndexOutOfRange):
        submatrix(m, [3], [0])
    with pytest.raises(DuplicateIndex):
        submatrix(m, [0, 0], [1])
