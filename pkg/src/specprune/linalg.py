"""Dense symmetric linear algebra shared by every other module.

All computation is in 64-bit floats. Inputs are never mutated, so every
function here is safe to call from multiple threads.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DuplicateIndex,
    IndefiniteBeyondTolerance,
    IndexOutOfRange,
    NonFinite,
    NonSymmetric,
    ShapeMismatch,
    Singular,
)

SYMMETRY_TOL = 1e-10
# eigenvalues of a PSD input below -NEG_EIG_TOL * ||m|| are an error,
# values in [-tol, 0) are rounding noise and get clamped to zero
NEG_EIG_TOL = 1e-10
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class SymmetricSpectrum:
    """Eigendecomposition of a symmetric matrix.

    eigenvalues are sorted descending; basis columns are the matching
    orthonormal eigenvectors, so basis @ diag(eigenvalues) @ basis.T
    reconstructs the source matrix.
    """

    eigenvalues: np.ndarray
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def rank(self, rel_tol: float = 1e-12) -> int:
        """Count of eigenvalues above rel_tol times the largest one."""
        if self.dim == 0 or self.eigenvalues[0] <= 0.0:
            return 0
        return int(np.sum(self.eigenvalues > rel_tol * self.eigenvalues[0]))

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.T


def _as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-d array, got ndim={a.ndim}")
    return a


def sym_eig(m, symmetry_tol: float = SYMMETRY_TOL) -> SymmetricSpectrum:
    """Eigendecompose a symmetric PSD-up-to-noise matrix.

    Raises NonSymmetric / NonFinite on bad input and
    IndefiniteBeyondTolerance when an eigenvalue is more negative than
    rounding noise can explain; small negative eigenvalues are clamped
    to zero.
    """
    a = _as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"matrix must be square, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix contains non-finite entries")
    if a.size and np.max(np.abs(a - a.T)) > symmetry_tol:
        raise NonSymmetric(
            f"matrix is not symmetric within {symmetry_tol:g} absolute"
        )
    evals, evecs = np.linalg.eigh(a)
    # eigh returns ascending order
    evals = evals[::-1].copy()
    evecs = evecs[:, ::-1].copy()
    scale = max(np.max(np.abs(evals)), 0.0) if evals.size else 0.0
    neg_floor = -NEG_EIG_TOL * scale
    if evals.size and evals[-1] < neg_floor:
        raise IndefiniteBeyondTolerance(
            f"eigenvalue {evals[-1]:.3e} below tolerance {neg_floor:.3e}"
        )
    np.clip(evals, 0.0, None, out=evals)
    return SymmetricSpectrum(eigenvalues=evals, basis=evecs)


def psd_solve(m, ridge, rhs) -> np.ndarray:
    """Solve (m + diag(ridge)) X = rhs for symmetric PSD m.

    ridge may be a scalar or a length-n vector of nonnegative entries.
    Raises Singular when the shifted matrix is singular at working
    precision (smallest eigenvalue below 1e-12 times its trace).
    """
    a = _as_matrix(m)
    n = a.shape[0]
    if a.shape[1] != n:
        raise ShapeMismatch(f"matrix must be square, got {a.shape}")
    r = np.asarray(ridge, dtype=np.float64)
    if r.ndim == 0:
        r = np.full(n, float(r))
    if r.shape != (n,):
        raise ShapeMismatch(f"ridge has shape {r.shape}, expected ({n},)")
    b = np.asarray(rhs, dtype=np.float64)
    squeeze = b.ndim == 1
    if squeeze:
        b = b[:, None]
    if b.shape[0] != n:
        raise ShapeMismatch(f"rhs has {b.shape[0]} rows, expected {n}")
    shifted = a + np.diag(r)
    try:
        chol, low = scipy.linalg.cho_factor(shifted, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise Singular(str(exc)) from exc
    # min_i L_ii^2 upper-bounds the smallest eigenvalue of the shifted matrix
    diag = np.abs(np.diag(chol))
    tr = np.trace(shifted)
    if n and np.min(diag) ** 2 < SINGULAR_TOL * tr:
        raise Singular(
            "smallest eigenvalue below 1e-12 of the trace; system is "
            "numerically singular"
        )
    x = scipy.linalg.cho_solve((chol, low), b, check_finite=False)
    return x[:, 0] if squeeze else x


def _check_indices(idx, limit: int, axis: str) -> np.ndarray:
    ind = np.asarray(idx, dtype=np.int64).ravel()
    if ind.size and (ind.min() < 0 or ind.max() >= limit):
        raise IndexOutOfRange(f"{axis} indices out of range [0, {limit})")
    if np.unique(ind).size != ind.size:
        raise DuplicateIndex(f"duplicate {axis} indices are rejected")
    return ind


def submatrix(m, row_idx, col_idx) -> np.ndarray:
    """Extract m[row_idx][:, col_idx] as a fresh array.

    Duplicate indices are rejected: under any positive ridge a duplicated
    index changes neither the span nor the selection objective, so the
    greedy optimizer never needs one.
    """
    a = _as_matrix(m)
    rows = _check_indices(row_idx, a.shape[0], "row")
    cols = _check_indices(col_idx, a.shape[1], "col")
    return a[np.ix_(rows, cols)].copy()
