"""Variance estimation and normal confidence intervals for linear functionals.

For a direction ``x = (x_1, ..., x_p)`` on the observation grid, the
functional ``sum_j integral(beta_j * x_j)`` is estimated by ``w_x' b_hat``
with ``w_x`` the stacked quadrature inner products of ``x`` with the basis.
Its asymptotic variance is estimated by the sandwich form
``sigma2_hat * w_x' M^{-1} G M^{-1} w_x`` where ``G = Z'Z / n`` and
``M = G + P / n``; the interval half-width is the normal quantile times
``sqrt(variance / n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .basis import basis_matrix, quad_weights
from .design import BlockLayout, DesignSystem
from .errors import ValidationError
from .estimators import FitResult, _solve_spd


@dataclass(frozen=True)
class InferenceResult:
    """Point estimate, variance pieces, and the confidence interval."""

    psi_hat: float
    variance_hat: float
    sigma2_hat: float
    edf: float
    ci: tuple[float, float]
    level: float


def sigma2_hat(system: DesignSystem, fit: FitResult) -> float:
    """Residual variance with the effective-degrees-of-freedom correction:
    residual sum of squares over ``n - tr(S)``."""
    n = system.n
    if fit.edf >= n:
        raise ValidationError(
            f"effective degrees of freedom {fit.edf:.3f} >= n={n}; variance undefined"
        )
    return fit.residual_ss / (n - fit.edf)


def functional_weights(
    x: np.ndarray,
    layout: BlockLayout,
    grid: np.ndarray,
    rule: str = "trapezoid",
) -> np.ndarray:
    """Stacked quadrature inner products of the direction functions with the basis.

    ``x`` holds one row per predictor of the underlying problem, evaluated on
    the observation grid; only rows for predictors present in the layout
    contribute, in layout column order.
    """
    x = np.asarray(x, dtype=float)
    grid = np.asarray(grid, dtype=float)
    if x.ndim != 2 or x.shape != (layout.p_total, grid.size):
        raise ValidationError(
            f"direction must have shape ({layout.p_total}, {grid.size}), got {x.shape}"
        )
    w = quad_weights(grid, rule)
    out = np.empty(layout.total_dim)
    start = 0
    for ids, spec in layout.blocks:
        WB = w[:, None] * basis_matrix(grid, spec)
        for j in ids:
            out[start : start + spec.dim_K] = x[j] @ WB
            start += spec.dim_K
    return out


def variance_of_functional(
    system: DesignSystem,
    P: np.ndarray,
    sigma2: float,
    w_x: np.ndarray,
) -> float:
    """Sandwich variance estimate ``sigma2 * w' M^{-1} G M^{-1} w``.

    ``G = Z'Z / n`` and ``M = G + P / n``; a singular ``M`` raises a
    conditioning error.
    """
    n = system.n
    G = system.Z.T @ system.Z / n
    M = G + P / n
    u = _solve_spd(M, np.asarray(w_x, dtype=float))
    return float(sigma2 * (u @ G @ u))


def confidence_interval(
    psi_hat: float,
    variance_hat: float,
    n: int,
    level: float = 0.95,
) -> tuple[float, float]:
    """Normal interval ``psi_hat +/- z * sqrt(variance_hat / n)``."""
    if not 0 < level < 1:
        raise ValidationError(f"confidence level must be in (0, 1), got {level}")
    if variance_hat < 0:
        raise ValidationError(f"variance must be >= 0, got {variance_hat}")
    z = float(ndtri(0.5 + level / 2.0))
    half = z * float(np.sqrt(variance_hat / n))
    return (psi_hat - half, psi_hat + half)


def estimate_functional(
    system: DesignSystem,
    fit: FitResult,
    P: np.ndarray,
    x: np.ndarray,
    level: float = 0.95,
    reduced: bool = False,
) -> InferenceResult:
    """Full inference pipeline for one direction ``x``.

    With ``reduced=True`` the nuisance block (every layout block after the
    first) is dropped before forming the variance pieces, matching the
    strong-shrinkage regime in which the limiting variance involves only the
    relevant block.
    """
    w_x = functional_weights(x, system.layout, system.grid, system.quadrature)
    psi = float(w_x @ fit.b_hat)
    s2 = sigma2_hat(system, fit)

    if reduced and len(system.layout.blocks) > 1:
        keep = system.layout.blocks[0][0]
        sub = system.restrict(keep)
        block = system.layout.block_slices()[0]
        var = variance_of_functional(sub, P[block, block], s2, w_x[block])
    else:
        var = variance_of_functional(system, P, s2, w_x)

    ci = confidence_interval(psi, var, system.n, level)
    return InferenceResult(
        psi_hat=psi,
        variance_hat=var,
        sigma2_hat=s2,
        edf=fit.edf,
        ci=ci,
        level=level,
    )
