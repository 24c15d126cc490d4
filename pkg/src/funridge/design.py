"""Response/design assembly for scalar-on-function regression.

A design entry for (subject i, predictor j, basis function k) is the
quadrature inner product of the observed trajectory ``z_ij`` with basis
function ``psi_k``, so that ``Z @ b`` approximates the functional linear
predictor for any spline coefficient vector ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import BasisSpec, basis_matrix, diff_penalty, quad_weights
from .errors import ValidationError


@dataclass(frozen=True)
class FunctionalDataset:
    """Gridded functional covariates with a scalar response.

    ``trajectories`` has shape (n, p, M): subject i, predictor j, grid point l.
    """

    grid: np.ndarray
    trajectories: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        t = np.asarray(self.trajectories, dtype=float)
        y = np.asarray(self.response, dtype=float)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "trajectories", t)
        object.__setattr__(self, "response", y)
        if g.ndim != 1 or np.any(np.diff(g) <= 0):
            raise ValidationError("grid must be strictly increasing and one-dimensional")
        if t.ndim != 3 or t.shape[2] != g.size:
            raise ValidationError(
                f"trajectories must have shape (n, p, {g.size}), got {t.shape}"
            )
        if y.shape != (t.shape[0],):
            raise ValidationError(
                f"response must have shape ({t.shape[0]},), got {y.shape}"
            )
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y)) and np.all(np.isfinite(g))):
            raise ValidationError("dataset values must all be finite")

    @property
    def n_subjects(self) -> int:
        return self.trajectories.shape[0]

    @property
    def n_predictors(self) -> int:
        return self.trajectories.shape[1]


@dataclass(frozen=True)
class BlockLayout:
    """Ordered predictor blocks, each sharing one basis spec.

    ``blocks`` maps an ordered tuple of predictor indices to the spec used
    for each of those predictors' coefficient blocks. ``p_total`` is the
    number of predictors in the underlying problem; a layout covering only a
    subset (a restricted model) still reports coefficient functions for all
    ``p_total`` predictors, with the omitted ones identically zero.
    """

    blocks: tuple[tuple[tuple[int, ...], BasisSpec], ...]
    p_total: int = -1

    def __post_init__(self):
        blocks = tuple((tuple(int(j) for j in ids), spec) for ids, spec in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        ids = [j for b, _ in blocks for j in b]
        if len(ids) == 0:
            raise ValidationError("layout must contain at least one predictor")
        if len(set(ids)) != len(ids):
            raise ValidationError("predictor indices must be distinct across blocks")
        p_total = self.p_total if self.p_total >= 0 else max(ids) + 1
        object.__setattr__(self, "p_total", p_total)
        if min(ids) < 0 or max(ids) >= p_total:
            raise ValidationError(
                f"predictor indices must lie in [0, {p_total}), got {sorted(ids)}"
            )

    @classmethod
    def uniform(cls, p: int, spec: BasisSpec) -> "BlockLayout":
        """One block containing all ``p`` predictors."""
        return cls(blocks=((tuple(range(p)), spec),), p_total=p)

    @classmethod
    def partitioned(
        cls,
        relevant: tuple[int, ...],
        nuisance: tuple[int, ...],
        relevant_spec: BasisSpec,
        nuisance_spec: BasisSpec,
        p_total: int,
    ) -> "BlockLayout":
        """Relevant block first, nuisance block second; empty blocks dropped."""
        blocks = []
        if len(relevant) > 0:
            blocks.append((tuple(relevant), relevant_spec))
        if len(nuisance) > 0:
            blocks.append((tuple(nuisance), nuisance_spec))
        return cls(blocks=tuple(blocks), p_total=p_total)

    @property
    def predictors(self) -> tuple[int, ...]:
        """Predictor indices in column order."""
        return tuple(j for ids, _ in self.blocks for j in ids)

    @property
    def total_dim(self) -> int:
        return sum(len(ids) * spec.dim_K for ids, spec in self.blocks)

    def predictor_slices(self) -> dict[int, slice]:
        """Column slice of each predictor's coefficient block."""
        out = {}
        start = 0
        for ids, spec in self.blocks:
            for j in ids:
                out[j] = slice(start, start + spec.dim_K)
                start += spec.dim_K
        return out

    def predictor_specs(self) -> dict[int, BasisSpec]:
        return {j: spec for ids, spec in self.blocks for j in ids}

    def block_slices(self) -> list[slice]:
        """Column range of each whole block."""
        out = []
        start = 0
        for ids, spec in self.blocks:
            width = len(ids) * spec.dim_K
            out.append(slice(start, start + width))
            start += width
        return out


@dataclass(frozen=True)
class DesignSystem:
    """Assembled regression system: centered response, block design, penalties.

    ``penalty_blocks`` holds one unscaled difference penalty matrix per layout
    block. ``column_means`` records design-column centering (all zeros unless
    centering was requested at build time); ``y_mean`` records the response
    centering so the intercept can be recovered in prediction.
    """

    Z: np.ndarray
    y: np.ndarray
    y_mean: float
    column_means: np.ndarray
    layout: BlockLayout
    penalty_blocks: tuple[np.ndarray, ...]
    grid: np.ndarray
    quadrature: str = "trapezoid"
    diff_order: int = 2

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def restrict(self, predictors: tuple[int, ...]) -> "DesignSystem":
        """Sub-system keeping only the given predictors (layout order preserved).

        The restricted layout keeps the original ``p_total`` so that fits on it
        still report coefficient functions for every predictor.
        """
        keep = set(int(j) for j in predictors)
        if not keep <= set(self.layout.predictors):
            raise ValidationError("predictors to keep must be present in the layout")
        slices = self.layout.predictor_slices()
        cols: list[int] = []
        new_blocks = []
        for ids, spec in self.layout.blocks:
            kept = tuple(j for j in ids if j in keep)
            if not kept:
                continue
            new_blocks.append((kept, spec))
            for j in kept:
                cols.extend(range(slices[j].start, slices[j].stop))
        layout = BlockLayout(blocks=tuple(new_blocks), p_total=self.layout.p_total)
        penalties = tuple(diff_penalty(spec.dim_K, self.diff_order) for _, spec in layout.blocks)
        return DesignSystem(
            Z=self.Z[:, cols],
            y=self.y,
            y_mean=self.y_mean,
            column_means=self.column_means[cols],
            layout=layout,
            penalty_blocks=penalties,
            grid=self.grid,
            quadrature=self.quadrature,
            diff_order=self.diff_order,
        )


def build_design(
    data: FunctionalDataset,
    layout: BlockLayout,
    rule: str = "trapezoid",
    center_columns: bool = False,
    diff_order: int = 2,
) -> DesignSystem:
    """Assemble the block design matrix and centered response.

    The response is always mean-centered with the mean recorded. Design
    columns are centered only when ``center_columns`` is set (intended for
    observational data fitting; simulated studies leave columns raw).
    """
    if data.n_predictors < layout.p_total:
        raise ValidationError(
            f"layout expects {layout.p_total} predictors, dataset has {data.n_predictors}"
        )
    for _, spec in layout.blocks:
        if not (spec.domain_lo <= data.grid[0] and data.grid[-1] <= spec.domain_hi):
            raise ValidationError("dataset grid must lie inside every block's basis domain")

    n = data.n_subjects
    w = quad_weights(data.grid, rule)
    Z = np.empty((n, layout.total_dim))
    start = 0
    for ids, spec in layout.blocks:
        WB = w[:, None] * basis_matrix(data.grid, spec)
        for j in ids:
            Z[:, start : start + spec.dim_K] = data.trajectories[:, j, :] @ WB
            start += spec.dim_K

    y_mean = float(np.mean(data.response))
    y = data.response - y_mean
    if center_columns:
        column_means = Z.mean(axis=0)
        Z = Z - column_means
    else:
        column_means = np.zeros(Z.shape[1])

    penalties = tuple(diff_penalty(spec.dim_K, diff_order) for _, spec in layout.blocks)
    return DesignSystem(
        Z=Z,
        y=y,
        y_mean=y_mean,
        column_means=column_means,
        layout=layout,
        penalty_blocks=penalties,
        grid=np.asarray(data.grid, dtype=float),
        quadrature=rule,
        diff_order=diff_order,
    )


def predict(system: DesignSystem, b: np.ndarray) -> np.ndarray:
    """Fitted response ``Z @ b + y_mean`` for a coefficient vector ``b``."""
    b = np.asarray(b, dtype=float)
    if b.shape != (system.Z.shape[1],):
        raise ValidationError(
            f"coefficient vector must have length {system.Z.shape[1]}, got {b.shape}"
        )
    return system.Z @ b + system.y_mean
