"""Clamped uniform B-spline bases, quadrature, and difference penalties.

Everything downstream (design assembly, estimation, inference, the study
driver) consumes the primitives defined here: knot construction, basis
evaluation, Gram matrices, discrete difference penalties, and least-squares
projection of gridded curves onto the spline space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, DomainError, ValidationError

QUADRATURE_RULES = ("trapezoid", "left-rectangle")


@dataclass(frozen=True)
class BasisSpec:
    """Layout of one clamped B-spline basis block.

    Parameters
    ----------
    domain_lo, domain_hi : float
        Endpoints of the common domain.
    order_q : int
        Spline order (degree + 1); cubic splines have ``order_q = 4``.
    interior_knots_L : int
        Number of interior knots, placed uniformly.
    dim_K : int
        Basis dimension; must equal ``interior_knots_L + order_q``.
    """

    domain_lo: float
    domain_hi: float
    order_q: int
    interior_knots_L: int
    dim_K: int

    def __post_init__(self):
        if not self.domain_lo < self.domain_hi:
            raise ValidationError(
                f"domain_lo must be < domain_hi, got [{self.domain_lo}, {self.domain_hi}]"
            )
        if self.order_q < 2:
            raise ValidationError(f"order_q must be >= 2, got {self.order_q}")
        if self.interior_knots_L < 0:
            raise ValidationError(
                f"interior_knots_L must be >= 0, got {self.interior_knots_L}"
            )
        if self.dim_K != self.interior_knots_L + self.order_q:
            raise ValidationError(
                f"dim_K must equal interior_knots_L + order_q "
                f"({self.interior_knots_L} + {self.order_q}), got {self.dim_K}"
            )

    @classmethod
    def cubic(cls, interior_knots: int, lo: float = 0.0, hi: float = 1.0) -> "BasisSpec":
        """Cubic (order 4) spec with the dimension filled in."""
        return cls(lo, hi, 4, interior_knots, interior_knots + 4)


@dataclass(frozen=True)
class KnotVector:
    """Nondecreasing knot sequence of length ``dim_K + order_q``."""

    knots: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", k)
        if k.ndim != 1 or k.size < 2:
            raise ValidationError("knots must be a 1-d sequence of length >= 2")
        if np.any(np.diff(k) < 0):
            raise ValidationError("knots must be nondecreasing")

    def dim(self, order_q: int) -> int:
        return self.knots.size - order_q


@dataclass(frozen=True)
class PenaltySpec:
    """Discrete difference penalty: order ``diff_order_m`` scaled by ``scale``."""

    diff_order_m: int = 2
    scale: float = 0.0

    def __post_init__(self):
        if self.diff_order_m < 1:
            raise ValidationError(f"diff_order_m must be >= 1, got {self.diff_order_m}")
        if self.scale < 0:
            raise ValidationError(f"scale must be >= 0, got {self.scale}")


def make_knots(spec: BasisSpec) -> KnotVector:
    """Clamped uniform knot vector spanning a space of dimension ``spec.dim_K``.

    Boundary knots are repeated ``order_q`` times and interior knots are
    equispaced strictly inside the domain.
    """
    lo, hi, q, L = spec.domain_lo, spec.domain_hi, spec.order_q, spec.interior_knots_L
    interior = np.linspace(lo, hi, L + 2)[1:-1]
    knots = np.concatenate([np.full(q, lo), interior, np.full(q, hi)])
    return KnotVector(knots)


def _find_span(s: float, knots: np.ndarray, q: int) -> int:
    """Index i with knots[i] <= s < knots[i+1], clamped to nonempty spans."""
    K = knots.size - q
    i = int(np.searchsorted(knots, s, side="right")) - 1
    return min(max(i, q - 1), K - 1)


def eval_basis(s: float, knots: KnotVector | np.ndarray, q: int) -> np.ndarray:
    """Evaluate all basis functions at one point by the Cox-de Boor recursion.

    Returns a length-K vector (K = len(knots) - q) that is nonnegative, sums
    to one, and has at most ``q`` nonzero entries.

    Raises
    ------
    DomainError
        If ``s`` lies outside ``[knots[0], knots[-1]]``.
    """
    t = knots.knots if isinstance(knots, KnotVector) else np.asarray(knots, dtype=float)
    if s < t[0] or s > t[-1]:
        raise DomainError(f"evaluation point {s} outside domain [{t[0]}, {t[-1]}]")
    K = t.size - q
    i = _find_span(s, t, q)

    # Triangular scheme over the q local functions N_{i-q+1},...,N_i.
    N = np.zeros(q)
    N[0] = 1.0
    left = np.zeros(q)
    right = np.zeros(q)
    for d in range(1, q):
        left[d] = s - t[i + 1 - d]
        right[d] = t[i + d] - s
        saved = 0.0
        for r in range(d):
            denom = right[r + 1] + left[d - r]
            temp = N[r] / denom
            N[r] = saved + right[r + 1] * temp
            saved = left[d - r] * temp
        N[d] = saved

    out = np.zeros(K)
    out[i - q + 1 : i + 1] = N
    return out


def basis_matrix(grid: np.ndarray, spec: BasisSpec) -> np.ndarray:
    """Evaluate the basis on a sorted grid; row l equals ``eval_basis(grid[l])``.

    Vectorized over grid points; the scalar recursion above is the reference
    implementation it is tested against.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1:
        raise ValidationError("grid must be one-dimensional")
    if np.any(np.diff(g) < 0):
        raise ValidationError("grid must be sorted ascending")
    t = make_knots(spec).knots
    q, K = spec.order_q, spec.dim_K
    if g[0] < t[0] or g[-1] > t[-1]:
        raise DomainError(
            f"grid [{g[0]}, {g[-1]}] not contained in domain [{t[0]}, {t[-1]}]"
        )

    spans = np.searchsorted(t, g, side="right") - 1
    spans = np.clip(spans, q - 1, K - 1)

    M = g.size
    N = np.zeros((M, q))
    N[:, 0] = 1.0
    left = np.zeros((M, q))
    right = np.zeros((M, q))
    for d in range(1, q):
        left[:, d] = g - t[spans + 1 - d]
        right[:, d] = t[spans + d] - g
        saved = np.zeros(M)
        for r in range(d):
            temp = N[:, r] / (right[:, r + 1] + left[:, d - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, d - r] * temp
        N[:, d] = saved

    B = np.zeros((M, K))
    cols = spans[:, None] - (q - 1) + np.arange(q)[None, :]
    np.put_along_axis(B, cols, N, axis=1)
    return B


def quad_weights(grid: np.ndarray, rule: str = "trapezoid") -> np.ndarray:
    """Quadrature weights w with ``sum(w * f(grid))`` approximating the integral.

    ``trapezoid`` is the default policy; ``left-rectangle`` selects the
    left-endpoint Riemann sum instead.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size < 2:
        raise ValidationError("grid must be one-dimensional with at least 2 points")
    h = np.diff(g)
    if np.any(h <= 0):
        raise ValidationError("grid must be strictly increasing")
    w = np.zeros_like(g)
    if rule == "trapezoid":
        w[:-1] += h / 2.0
        w[1:] += h / 2.0
    elif rule == "left-rectangle":
        w[:-1] = h
    else:
        raise ValidationError(f"unknown quadrature rule {rule!r}; use one of {QUADRATURE_RULES}")
    return w


def gram_matrix(spec: BasisSpec, grid: np.ndarray, rule: str = "trapezoid") -> np.ndarray:
    """Quadrature approximation of the basis Gram matrix (pairwise L2 inner products).

    Raises
    ------
    ValidationError
        If the grid has fewer than ``2 * spec.dim_K`` points, which is too
        coarse to resolve the products reliably.
    """
    g = np.asarray(grid, dtype=float)
    if g.size < 2 * spec.dim_K:
        raise ValidationError(
            f"grid with {g.size} points too coarse for dim {spec.dim_K}; "
            f"need at least {2 * spec.dim_K}"
        )
    B = basis_matrix(g, spec)
    w = quad_weights(g, rule)
    G = B.T @ (w[:, None] * B)
    return (G + G.T) / 2.0


def diff_penalty(K: int, m: int = 2) -> np.ndarray:
    """Difference penalty matrix ``D.T @ D`` of order ``m`` for K coefficients.

    The result is positive semidefinite with rank ``K - m``; its null space
    is spanned by coefficient sequences polynomial of degree < m in the index.
    """
    if not 1 <= m < K:
        raise ValidationError(f"difference order must satisfy 1 <= m < K, got m={m}, K={K}")
    D = np.diff(np.eye(K), n=m, axis=0)
    return D.T @ D


def penalty_null_basis(K: int, m: int = 2) -> np.ndarray:
    """Orthonormal basis (K x m) of the difference penalty's null space."""
    if not 1 <= m < K:
        raise ValidationError(f"difference order must satisfy 1 <= m < K, got m={m}, K={K}")
    V = np.vander(np.arange(K, dtype=float), m, increasing=True)
    Q, _ = np.linalg.qr(V)
    return Q


def project_trajectory(values: np.ndarray, spec: BasisSpec, grid: np.ndarray) -> np.ndarray:
    """Unpenalized least-squares spline coefficients of gridded values.

    Raises
    ------
    ConditioningError
        If the basis matrix on this grid is rank deficient.
    """
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValidationError("values must be finite")
    B = basis_matrix(grid, spec)
    coef, _, rank, _ = np.linalg.lstsq(B, v, rcond=None)
    if rank < spec.dim_K:
        raise ConditioningError(
            f"basis matrix rank {rank} < dimension {spec.dim_K}; grid too coarse"
        )
    return coef
