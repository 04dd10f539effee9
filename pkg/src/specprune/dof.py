"""Degrees of freedom, leverage scores, and the width <-> lambda inversion.

The degrees of freedom of a covariance at scale lambda,
Tr[Sigma (Sigma + lambda I)^-1] = sum_j mu_j / (mu_j + lambda),
smoothly count the eigenvalues above lambda. The sampling requirement
width >= 5 N log(80 N) ties a target width to the smallest usable
lambda; both directions of that relation live here.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .covariance import LayerCovariance
from .errors import NegativeLambda, ShapeMismatch

RANK_REL_TOL = 1e-12
# jitter used in place of lambda = 0 when a leverage profile is needed in
# the pure-interpolation regime
ZERO_LAMBDA_JITTER = 1e-12
BISECT_REL_TOL = 1e-6


@dataclass(frozen=True)
class LeverageScores:
    layer: int
    lam: float
    scores: np.ndarray  # nonnegative, sums to 1 over non-degenerate nodes

    def __len__(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class DofProfile:
    layer: int
    lambda_grid: np.ndarray   # positive, descending
    dof_values: np.ndarray
    rank: int


def dof(cov: LayerCovariance, lam: float) -> float:
    """Degrees of freedom at scale lam; lam = 0 returns the rank."""
    if lam < 0:
        raise NegativeLambda(f"lambda must be >= 0, got {lam}")
    mu = cov.spectrum.eigenvalues
    if lam == 0.0:
        return float(cov.spectrum.rank(RANK_REL_TOL))
    return float(np.sum(mu / (mu + lam)))


def dof_output(cov: LayerCovariance, z, lam: float) -> float:
    """Output-aware degrees of freedom Tr[Z Sigma (Sigma + lam I)^-1 Z^T]."""
    if lam <= 0:
        raise NegativeLambda(f"lambda must be > 0, got {lam}")
    zm = np.asarray(z, dtype=np.float64)
    if zm.ndim != 2 or zm.shape[1] != cov.dim:
        raise ShapeMismatch(f"z must have {cov.dim} columns")
    spec = cov.spectrum
    mu = spec.eigenvalues
    proj = zm @ spec.basis
    return float(np.sum(proj * proj * (mu / (mu + lam))))


def leverage(cov: LayerCovariance, lam: float, layer: int | None = None) -> LeverageScores:
    """Normalized diagonal of Sigma (Sigma + lam I)^-1.

    Scores sum to one; nodes with zero variance get score 0 and are meant
    to be excluded from selection.
    """
    if lam <= 0:
        raise NegativeLambda(f"lambda must be > 0, got {lam}")
    spec = cov.spectrum
    mu = spec.eigenvalues
    diag = np.einsum("jl,l,jl->j", spec.basis, mu / (mu + lam), spec.basis)
    np.clip(diag, 0.0, None, out=diag)
    total = diag.sum()
    scores = diag / total if total > 0 else diag
    return LeverageScores(layer=layer if layer is not None else cov.layer,
                          lam=lam, scores=scores)


def leverage_at(cov: LayerCovariance, lam: float) -> LeverageScores:
    """leverage() that tolerates lam = 0 by substituting the 1e-12 * trace
    jitter (pure-interpolation regime)."""
    if lam > 0:
        return leverage(cov, lam)
    jitter = ZERO_LAMBDA_JITTER * cov.trace
    if jitter <= 0.0:  # zero covariance: every score is 0 regardless
        jitter = np.finfo(float).tiny
    scores = leverage(cov, jitter)
    return LeverageScores(layer=scores.layer, lam=0.0, scores=scores.scores)


def width_requirement(n_dof: float) -> float:
    """Sampling requirement 5 N log(80 N); <= 0 for degenerate N."""
    if n_dof <= 0:
        return 0.0
    return 5.0 * n_dof * math.log(80.0 * n_dof)


def lambda_for_width(cov: LayerCovariance, m_sharp: int) -> float:
    """Smallest lambda >= 0 with m_sharp >= 5 N(lambda) log(80 N(lambda)).

    The requirement is monotone decreasing in lambda wherever it is
    positive, so the feasible set is an interval and bisection on
    log(lambda) applies. Returns 0 when the rank already satisfies the
    requirement.
    """
    if m_sharp < 1:
        raise ValueError("m_sharp must be >= 1")
    rank = cov.spectrum.rank(RANK_REL_TOL)
    if m_sharp >= width_requirement(rank):
        return 0.0

    def feasible(lam: float) -> bool:
        return m_sharp >= width_requirement(dof(cov, lam))

    tr = max(cov.trace, np.finfo(float).tiny)
    lo, hi = 1e-15 * tr, 1e3 * tr
    # widen until the bracket actually straddles the boundary
    while feasible(lo) and lo > 1e-300:
        lo *= 1e-3
    while not feasible(hi):
        hi *= 1e3
    if feasible(lo):
        return lo
    while hi / lo - 1.0 > BISECT_REL_TOL:
        mid = math.sqrt(lo * hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def width_for_lambda(cov: LayerCovariance, lam: float) -> int:
    """ceil(5 N(lam) log(80 N(lam))) clamped into [1, dim]."""
    if lam <= 0:
        raise NegativeLambda(f"lambda must be > 0, got {lam}")
    req = width_requirement(dof(cov, lam))
    return int(min(max(math.ceil(req), 1), cov.dim))


def dof_profile(cov: LayerCovariance, lambdas) -> DofProfile:
    grid = np.sort(np.asarray(lambdas, dtype=np.float64))[::-1]
    if np.any(grid <= 0):
        raise NegativeLambda("profile grid must be positive")
    values = np.array([dof(cov, l) for l in grid])
    return DofProfile(layer=cov.layer, lambda_grid=grid, dof_values=values,
                      rank=cov.spectrum.rank(RANK_REL_TOL))


def write_dof_csv(profile: DofProfile, cov: LayerCovariance, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "lambda", "dof", "width_for_lambda"])
        for lam, value in zip(profile.lambda_grid, profile.dof_values):
            writer.writerow([profile.layer, repr(float(lam)), repr(float(value)),
                             width_for_lambda(cov, float(lam))])


def intrinsic_dim(cov_l: LayerCovariance, cov_next: LayerCovariance,
                  kernel: int = 1, coef: float = 1e-3) -> float:
    """Intrinsic parameter count N(lambda_l) N(lambda_{l+1}) k^2 with the
    per-layer scale lambda = coef * trace (coef defaults to 1e-3)."""
    lam_l = coef * cov_l.trace
    lam_next = coef * cov_next.trace
    return dof(cov_l, lam_l) * dof(cov_next, lam_next) * kernel ** 2
