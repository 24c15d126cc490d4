"""Closed-form penalized least-squares estimators and their diagnostics.

Three estimator variants share one solver:

* ``fit_fre``  -- one smoothing parameter, every predictor penalized alike;
* ``fit_frfm`` -- two-block differential penalization (weakly penalized
  relevant block, strongly shrunk nuisance block);
* ``fit_frsm`` -- the reduced model fit on the relevant block alone.

The FRFM nuisance penalty is ``lam2 * R0 + (lam2 - lam1) * NN'`` per nuisance
predictor, where ``NN'`` projects onto the difference penalty's null space.
The completion term vanishes when ``lam2 == lam1`` (the fit then coincides
with the uniform-penalty estimator exactly) and makes the nuisance penalty
positive definite whenever ``lam2 > lam1``, so ``lam2 -> inf`` shrinks the
whole nuisance block to zero and recovers the reduced model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .basis import basis_matrix, penalty_null_basis
from .design import DesignSystem
from .errors import ConditioningError, ValidationError


@dataclass(frozen=True)
class FitResult:
    """One fitted model: coefficients, reconstructed functions, diagnostics.

    ``beta_hat_grid`` has one row per predictor of the underlying problem
    (``layout.p_total`` rows); predictors outside the fitted layout are
    reported as identically zero. ``lambdas`` is ``(lam1, lam2, lam3)`` with
    entries not used by the estimator set to None.
    """

    b_hat: np.ndarray
    b_blocks: dict[int, np.ndarray]
    beta_hat_grid: np.ndarray
    lambdas: tuple[float | None, float | None, float | None]
    edf: float
    residual_ss: float
    estimator_kind: str


def solve_penalized(Z: np.ndarray, y: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Solve ``(Z'Z + P) b = Z'y`` through a symmetric PD factorization.

    Raises
    ------
    ConditioningError
        If ``Z'Z + P`` is not numerically positive definite; the message
        reports the smallest eigenvalue found.
    """
    A = Z.T @ Z + P
    c = Z.T @ y
    return _solve_spd(A, c)


def _factor_spd(A: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor; raises a conditioning error with the smallest eigenvalue."""
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        smallest = float(np.linalg.eigvalsh(A)[0])
        raise ConditioningError(
            f"penalized system matrix is not positive definite "
            f"(smallest eigenvalue {smallest:.3e}); increase the penalty"
        ) from exc


def _solve_spd(A: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return cho_solve((_factor_spd(A), True), rhs, check_finite=False)


def _trace_smoother(L: np.ndarray, ZT: np.ndarray) -> float:
    """tr(Z A^{-1} Z') from the Cholesky factor of A: the squared Frobenius
    norm of the triangular solve against Z'."""
    X = solve_triangular(L, ZT, lower=True, check_finite=False)
    return float(np.sum(X * X))


def uniform_penalty(system: DesignSystem, lam: float) -> np.ndarray:
    """``lam`` times the block-diagonal stack of per-predictor difference penalties."""
    if lam < 0:
        raise ValidationError(f"penalty scale must be >= 0, got {lam}")
    return weighted_penalty(system, lam, np.ones(len(system.layout.predictors)))


def weighted_penalty(system: DesignSystem, lam: float, weights: np.ndarray) -> np.ndarray:
    """Per-predictor reweighted penalty ``lam * blockdiag(w_j * R0_j)``.

    ``weights`` follows the layout's predictor column order.
    """
    w = np.asarray(weights, dtype=float)
    preds = system.layout.predictors
    if w.shape != (len(preds),):
        raise ValidationError(f"need one weight per predictor ({len(preds)}), got {w.shape}")
    if np.any(w < 0):
        raise ValidationError("penalty weights must be nonnegative")
    P = np.zeros((system.layout.total_dim,) * 2)
    pos = 0
    idx = 0
    for (ids, spec), R0 in zip(system.layout.blocks, system.penalty_blocks):
        K = spec.dim_K
        for _ in ids:
            P[pos : pos + K, pos : pos + K] = (lam * w[idx]) * R0
            pos += K
            idx += 1
    return P


def frfm_penalty(system: DesignSystem, lam1: float, lam2: float) -> np.ndarray:
    """Two-block penalty: ``lam1 * R1`` on block one, completed ``lam2`` shrinkage on block two.

    Requires ``lam2 >= lam1 >= 0``. With a single-block layout the nuisance
    part is absent and the result reduces to ``uniform_penalty(system, lam1)``.
    """
    if lam1 < 0:
        raise ValidationError(f"lam1 must be >= 0, got {lam1}")
    if lam2 < lam1:
        raise ValidationError(f"lam2 must be >= lam1, got lam2={lam2} < lam1={lam1}")
    blocks = system.layout.blocks
    if len(blocks) > 2:
        raise ValidationError("two-block penalization expects at most two layout blocks")
    P = np.zeros((system.layout.total_dim,) * 2)
    pos = 0
    for block_index, ((ids, spec), R0) in enumerate(zip(blocks, system.penalty_blocks)):
        K = spec.dim_K
        if block_index == 0:
            block_pen = lam1 * R0
        else:
            N = penalty_null_basis(K, system.diff_order)
            block_pen = lam2 * R0 + (lam2 - lam1) * (N @ N.T)
        for _ in ids:
            P[pos : pos + K, pos : pos + K] = block_pen
            pos += K
    return P


def _reconstruct(system: DesignSystem, b_hat: np.ndarray) -> tuple[dict[int, np.ndarray], np.ndarray]:
    """Per-predictor coefficient slices and coefficient functions on the grid."""
    slices = system.layout.predictor_slices()
    specs = system.layout.predictor_specs()
    b_blocks = {j: b_hat[slices[j]].copy() for j in system.layout.predictors}
    beta = np.zeros((system.layout.p_total, system.grid.size))
    cache = {}
    for j in system.layout.predictors:
        spec = specs[j]
        B = cache.get(spec)
        if B is None:
            B = basis_matrix(system.grid, spec)
            cache[spec] = B
        beta[j] = B @ b_blocks[j]
    return b_blocks, beta


def _fit(system: DesignSystem, P: np.ndarray, lambdas, kind: str) -> FitResult:
    Z, y = system.Z, system.y
    A = Z.T @ Z + P
    L = _factor_spd(A)
    b_hat = cho_solve((L, True), Z.T @ y, check_finite=False)
    edf = _trace_smoother(L, Z.T)
    resid = y - Z @ b_hat
    b_blocks, beta = _reconstruct(system, b_hat)
    return FitResult(
        b_hat=b_hat,
        b_blocks=b_blocks,
        beta_hat_grid=beta,
        lambdas=lambdas,
        edf=edf,
        residual_ss=float(resid @ resid),
        estimator_kind=kind,
    )


def fit_fre(system: DesignSystem, lam1: float) -> FitResult:
    """Uniform-penalty functional ridge fit."""
    return _fit(system, uniform_penalty(system, lam1), (lam1, None, None), "FRE")


def fit_frfm(system: DesignSystem, lam1: float, lam2: float) -> FitResult:
    """Two-block differential-penalty fit (relevant block first in the layout)."""
    return _fit(system, frfm_penalty(system, lam1, lam2), (lam1, lam2, None), "FRFM")


def fit_frsm(system: DesignSystem, lam3: float) -> FitResult:
    """Reduced-model fit on a system restricted to the relevant block.

    Predictors excluded from the system's layout are reported with zero
    coefficient functions.
    """
    return _fit(system, uniform_penalty(system, lam3), (None, None, lam3), "FRSM")


def hat_matrix_trace(Z: np.ndarray, P: np.ndarray, return_matrix: bool = False):
    """Trace of the smoother ``S = Z (Z'Z + P)^{-1} Z'`` (optionally S itself)."""
    L = _factor_spd(Z.T @ Z + P)
    if return_matrix:
        X = cho_solve((L, True), Z.T, check_finite=False)
        S = Z @ X
        return float(np.sum(Z.T * X)), (S + S.T) / 2.0
    return _trace_smoother(L, Z.T)


def condition_number(Z: np.ndarray, P: np.ndarray) -> float:
    """Eigenvalue ratio of the penalized system matrix ``Z'Z + P``.

    Returns ``inf`` when the smallest eigenvalue is not positive.
    """
    A = Z.T @ Z + P
    eigs = np.linalg.eigvalsh((A + A.T) / 2.0)
    if eigs[0] <= 0:
        return float("inf")
    return float(eigs[-1] / eigs[0])


def imse_decomposition(
    Z: np.ndarray,
    P: np.ndarray,
    G: np.ndarray,
    b_true: np.ndarray,
    sigma2: float,
) -> tuple[float, float, float]:
    """Exact risk split of the penalized estimator in the Gram norm.

    Returns ``(bias_sq, variance, total)`` with
    ``bias_sq = ||(H - I) b_true||_G^2`` for ``H = (Z'Z+P)^{-1} Z'Z`` and
    ``variance = sigma2 * tr(G (Z'Z+P)^{-1} Z'Z (Z'Z+P)^{-1})``.
    """
    C = Z.T @ Z
    L = _factor_spd(C + P)
    H = cho_solve((L, True), C, check_finite=False)
    d = (H - np.eye(C.shape[0])) @ b_true
    bias_sq = float(d @ G @ d)
    HG = cho_solve((L, True), C @ cho_solve((L, True), G, check_finite=False), check_finite=False)
    variance = float(sigma2 * np.trace(HG))
    return bias_sq, variance, bias_sq + variance
