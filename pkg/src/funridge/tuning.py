"""Generalized cross-validation over a logarithmic penalty grid.

The score for a penalty ``P`` is ``(||y - y_hat||^2 / n) / (1 - tr(S)/n)^2``
with smoother ``S = Z (Z'Z + P)^{-1} Z'``. Grid points whose smoother is
degenerate (``tr(S) >= n``) or whose system matrix fails to factor score
``+inf`` and are excluded from minimization; ties break toward the smaller
penalty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve

from .design import DesignSystem
from .errors import ConditioningError, SelectionError, ValidationError
from .estimators import _factor_spd, _trace_smoother, frfm_penalty, uniform_penalty


@dataclass(frozen=True)
class LambdaGrid:
    """Log-equispaced candidate penalties on ``[lo, hi]``."""

    lo: float = 1e-4
    hi: float = 1e4
    num: int = 50

    def __post_init__(self):
        if not (0 < self.lo <= self.hi):
            raise ValidationError(f"need 0 < lo <= hi, got [{self.lo}, {self.hi}]")
        if self.num < 1:
            raise ValidationError(f"grid size must be >= 1, got {self.num}")

    def values(self) -> np.ndarray:
        if self.num == 1:
            return np.array([self.lo])
        return np.logspace(math.log10(self.lo), math.log10(self.hi), self.num)


@dataclass(frozen=True)
class GcvTrace:
    """Scores over a grid together with the selected penalty."""

    grid: np.ndarray
    scores: np.ndarray
    chosen_index: int
    chosen_lambda: float


def _gcv_eval(ZT: np.ndarray, C: np.ndarray, c: np.ndarray, yy: float, n: int, P: np.ndarray) -> float:
    """GCV score from precomputed Gram pieces; +inf when degenerate."""
    L = _factor_spd(C + P)
    b = cho_solve((L, True), c, check_finite=False)
    trace = _trace_smoother(L, ZT)
    if trace >= n:
        return math.inf
    rss = max(float(yy - 2.0 * (b @ c) + b @ (C @ b)), 0.0)
    return (rss / n) / (1.0 - trace / n) ** 2


def gcv_score(Z: np.ndarray, y: np.ndarray, P: np.ndarray) -> float:
    """GCV score of one penalized fit (``+inf`` for a degenerate smoother)."""
    return _gcv_eval(Z.T, Z.T @ Z, Z.T @ y, float(y @ y), Z.shape[0], P)


def select_lambda(
    Z: np.ndarray,
    y: np.ndarray,
    penalty_builder: Callable[[float], np.ndarray],
    grid: LambdaGrid | np.ndarray = LambdaGrid(),
) -> GcvTrace:
    """Minimize GCV over the grid; ties and exact-duplicate scores pick the smallest penalty.

    Grid points whose system matrix is not positive definite are scored
    ``+inf`` and skipped.

    Raises
    ------
    SelectionError
        If every grid point is degenerate.
    """
    values = grid.values() if isinstance(grid, LambdaGrid) else np.asarray(grid, dtype=float)
    if values.size == 0:
        raise ValidationError("penalty grid must be nonempty")
    if values.size > 1 and np.any(np.diff(values) <= 0):
        raise ValidationError("penalty grid must be strictly increasing")

    ZT = Z.T
    C = ZT @ Z
    c = ZT @ y
    yy = float(y @ y)
    n = Z.shape[0]

    scores = np.empty(values.size)
    for i, lam in enumerate(values):
        try:
            scores[i] = _gcv_eval(ZT, C, c, yy, n, penalty_builder(float(lam)))
        except ConditioningError:
            scores[i] = math.inf
    if not np.any(np.isfinite(scores)):
        raise SelectionError("every grid point produced a degenerate GCV score")
    chosen = int(np.argmin(scores))
    return GcvTrace(
        grid=values,
        scores=scores,
        chosen_index=chosen,
        chosen_lambda=float(values[chosen]),
    )


def tune_fre(system: DesignSystem, grid: LambdaGrid | np.ndarray = LambdaGrid()) -> GcvTrace:
    """One-parameter GCV for the uniform-penalty estimator (also used for the reduced model)."""
    return select_lambda(system.Z, system.y, lambda lam: uniform_penalty(system, lam), grid)


def tune_frfm(
    system: DesignSystem,
    ratio_c: float = 25.0,
    grid: LambdaGrid | np.ndarray = LambdaGrid(),
) -> GcvTrace:
    """One-dimensional GCV over the relevant-block penalty with the nuisance
    penalty held at ``ratio_c`` times it.

    Raises
    ------
    ValidationError
        If ``ratio_c <= 1`` (the nuisance block must be shrunk strictly harder).
    """
    if ratio_c <= 1:
        raise ValidationError(f"penalty ratio must be > 1, got {ratio_c}")
    return select_lambda(
        system.Z,
        system.y,
        lambda lam: frfm_penalty(system, lam, ratio_c * lam),
        grid,
    )
