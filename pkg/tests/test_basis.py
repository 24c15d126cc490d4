import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from funridge.basis import (
    BasisSpec,
    KnotVector,
    PenaltySpec,
    basis_matrix,
    diff_penalty,
    eval_basis,
    gram_matrix,
    make_knots,
    penalty_null_basis,
    project_trajectory,
    quad_weights,
)
from funridge.errors import ConditioningError, DomainError, ValidationError

FRE_SPEC = BasisSpec.cubic(7)
FRSM_SPEC = BasisSpec.cubic(5)


class TestBasisSpec:
    def test_table_dimensions(self):
        assert FRE_SPEC.dim_K == 11
        assert BasisSpec.cubic(12).dim_K == 16
        assert FRSM_SPEC.dim_K == 9

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(domain_lo=1.0, domain_hi=0.0, order_q=4, interior_knots_L=2, dim_K=6),
            dict(domain_lo=0.0, domain_hi=1.0, order_q=1, interior_knots_L=2, dim_K=3),
            dict(domain_lo=0.0, domain_hi=1.0, order_q=4, interior_knots_L=-1, dim_K=3),
            dict(domain_lo=0.0, domain_hi=1.0, order_q=4, interior_knots_L=2, dim_K=7),
        ],
    )
    def test_invalid_specs_rejected(self, kwargs):
        with pytest.raises(ValidationError):
            BasisSpec(**kwargs)


class TestMakeKnots:
    def test_no_interior_knots(self):
        spec = BasisSpec(0.0, 1.0, 4, 0, 4)
        np.testing.assert_array_equal(make_knots(spec).knots, [0, 0, 0, 0, 1, 1, 1, 1])

    def test_fre_knot_vector(self):
        kv = make_knots(FRE_SPEC)
        assert kv.knots.size == 15
        assert kv.dim(4) == 11
        np.testing.assert_allclose(kv.knots[:4], 0.0)
        np.testing.assert_allclose(kv.knots[-4:], 1.0)
        interior = kv.knots[4:-4]
        np.testing.assert_allclose(np.diff(interior), interior[1] - interior[0])

    def test_frsm_dimension(self):
        assert make_knots(FRSM_SPEC).dim(4) == 9

    def test_nondecreasing_required(self):
        with pytest.raises(ValidationError):
            KnotVector(np.array([0.0, 1.0, 0.5]))


class TestEvalBasis:
    def test_left_boundary_is_first_basis(self):
        kv = make_knots(FRE_SPEC)
        v = eval_basis(0.0, kv, 4)
        assert v[0] == pytest.approx(1.0)
        np.testing.assert_allclose(v[1:], 0.0)

    def test_right_boundary_is_last_basis(self):
        kv = make_knots(FRE_SPEC)
        v = eval_basis(1.0, kv, 4)
        assert v[-1] == pytest.approx(1.0)

    def test_partition_of_unity_at_point(self):
        kv = make_knots(FRE_SPEC)
        v = eval_basis(0.37, kv, 4)
        assert abs(v.sum() - 1.0) < 1e-12
        assert np.all(v >= 0)

    @settings(max_examples=60, deadline=None)
    @given(
        s=st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        L=st.integers(min_value=0, max_value=12),
        q=st.integers(min_value=2, max_value=6),
    )
    def test_partition_of_unity_and_local_support(self, s, L, q):
        spec = BasisSpec(0.0, 1.0, q, L, L + q)
        v = eval_basis(s, make_knots(spec), q)
        assert abs(v.sum() - 1.0) < 1e-12
        assert np.all(v >= -1e-15)
        assert np.count_nonzero(v) <= q

    def test_order_one_is_interval_indicator(self):
        # piecewise-constant basis on [0,1] with 3 interior knots: 4 cells
        knots = KnotVector(np.array([0.0, 0.25, 0.5, 0.75, 1.0]))
        v = eval_basis(0.6, knots, 1)
        np.testing.assert_array_equal(v, [0, 0, 1, 0])
        v = eval_basis(0.1, knots, 1)
        np.testing.assert_array_equal(v, [1, 0, 0, 0])

    def test_outside_domain_raises(self):
        kv = make_knots(FRE_SPEC)
        with pytest.raises(DomainError):
            eval_basis(1.5, kv, 4)
        with pytest.raises(DomainError):
            eval_basis(-0.1, kv, 4)


class TestBasisMatrix:
    def test_shape_matches_study_design(self):
        grid = np.linspace(0, 1, 100)
        B = basis_matrix(grid, FRE_SPEC)
        assert B.shape == (100, 11)

    def test_rows_sum_to_one(self):
        grid = np.linspace(0, 1, 100)
        B = basis_matrix(grid, FRE_SPEC)
        np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-12)

    def test_columns_match_scalar_recursion(self):
        # independent oracle: re-evaluate every grid point with the scalar code
        grid = np.linspace(0, 1, 53)
        spec = BasisSpec.cubic(6)
        B = basis_matrix(grid, spec)
        kv = make_knots(spec)
        for i, s in enumerate(grid):
            np.testing.assert_allclose(B[i], eval_basis(float(s), kv, 4), atol=1e-14)

    def test_domain_violation(self):
        with pytest.raises(DomainError):
            basis_matrix(np.linspace(-0.2, 1.0, 10), FRE_SPEC)


class TestQuadWeights:
    def test_trapezoid_integrates_linear_exactly(self):
        grid = np.linspace(0, 1, 17)
        w = quad_weights(grid, "trapezoid")
        assert np.sum(w * (3 * grid + 1)) == pytest.approx(2.5, abs=1e-14)

    def test_left_rectangle_matches_manual_riemann_sum(self):
        grid = np.sort(np.random.default_rng(1).uniform(0, 1, 20))
        w = quad_weights(grid, "left-rectangle")
        f = np.sin(grid)
        manual = sum(f[l] * (grid[l + 1] - grid[l]) for l in range(len(grid) - 1))
        assert np.sum(w * f) == pytest.approx(manual, abs=1e-15)

    def test_unknown_rule_rejected(self):
        with pytest.raises(ValidationError):
            quad_weights(np.linspace(0, 1, 5), "simpson")


class TestGramMatrix:
    def test_symmetry(self):
        G = gram_matrix(FRE_SPEC, np.linspace(0, 1, 200))
        np.testing.assert_allclose(G, G.T, atol=1e-14)

    def test_total_mass_equals_domain_length(self):
        # sum of all entries is the integral of (sum of basis)^2 = |domain|
        G = gram_matrix(FRE_SPEC, np.linspace(0, 1, 200))
        assert G.sum() == pytest.approx(1.0, abs=1e-12)

    def test_grid_refinement_converges_second_order(self):
        # refinement study: measured change 1.27e-3 at 200->400 and 3.1e-4 at
        # 400->800, a clean factor-4 drop per doubling
        G200 = gram_matrix(FRE_SPEC, np.linspace(0, 1, 200))
        G400 = gram_matrix(FRE_SPEC, np.linspace(0, 1, 400))
        G800 = gram_matrix(FRE_SPEC, np.linspace(0, 1, 800))
        rel_1 = np.abs(G400 - G200).max() / np.abs(G400).max()
        rel_2 = np.abs(G800 - G400).max() / np.abs(G800).max()
        assert rel_1 < 2e-3
        assert 3.0 < rel_1 / rel_2 < 5.0

    def test_positive_semidefinite(self):
        G = gram_matrix(FRSM_SPEC, np.linspace(0, 1, 150))
        assert np.linalg.eigvalsh(G).min() >= -1e-12

    def test_coarse_grid_rejected(self):
        with pytest.raises(ValidationError):
            gram_matrix(FRE_SPEC, np.linspace(0, 1, 12))


class TestDiffPenalty:
    def test_hand_example_k4_m2(self):
        # D = [[1,-2,1,0],[0,1,-2,1]]; expected = D'D multiplied by hand
        expected = np.array(
            [
                [1, -2, 1, 0],
                [-2, 5, -4, 1],
                [1, -4, 5, -2],
                [0, 1, -2, 1],
            ],
            dtype=float,
        )
        np.testing.assert_array_equal(diff_penalty(4, 2), expected)

    @settings(max_examples=40, deadline=None)
    @given(
        a=st.floats(-5, 5, allow_nan=False),
        c=st.floats(-5, 5, allow_nan=False),
        K=st.integers(min_value=3, max_value=20),
    )
    def test_null_space_linear_sequences(self, a, c, K):
        R0 = diff_penalty(K, 2)
        b = a + c * np.arange(K)
        np.testing.assert_allclose(R0 @ b, 0.0, atol=1e-12 * max(1.0, abs(a) + abs(c) * K))

    def test_rank_deficiency(self):
        assert np.linalg.matrix_rank(diff_penalty(11, 2)) == 9

    def test_m_too_large_rejected(self):
        with pytest.raises(ValidationError):
            diff_penalty(4, 4)

    def test_null_basis_annihilated(self):
        R0 = diff_penalty(9, 2)
        N = penalty_null_basis(9, 2)
        assert N.shape == (9, 2)
        np.testing.assert_allclose(R0 @ N, 0.0, atol=1e-12)
        np.testing.assert_allclose(N.T @ N, np.eye(2), atol=1e-12)


class TestPenaltySpec:
    def test_defaults(self):
        spec = PenaltySpec()
        assert spec.diff_order_m == 2
        assert spec.scale == 0.0

    def test_negative_scale_rejected(self):
        with pytest.raises(ValidationError):
            PenaltySpec(scale=-1.0)


class TestProjectTrajectory:
    GRID = np.linspace(0, 1, 100)

    def test_constants_reproduced(self):
        coef = project_trajectory(np.ones(100), FRE_SPEC, self.GRID)
        np.testing.assert_allclose(coef, 1.0, atol=1e-10)

    def test_basis_column_gives_unit_vector(self):
        B = basis_matrix(self.GRID, FRE_SPEC)
        coef = project_trajectory(B[:, 3], FRE_SPEC, self.GRID)
        expected = np.zeros(11)
        expected[3] = 1.0
        np.testing.assert_allclose(coef, expected, atol=1e-10)

    def test_sine_reconstruction_error(self):
        values = np.sin(np.pi * self.GRID)
        coef = project_trajectory(values, FRE_SPEC, self.GRID)
        recon = basis_matrix(self.GRID, FRE_SPEC) @ coef
        assert np.abs(recon - values).max() < 1e-3

    def test_spline_space_reproduction_exact(self):
        rng = np.random.default_rng(7)
        b = rng.standard_normal(11)
        values = basis_matrix(self.GRID, FRE_SPEC) @ b
        coef = project_trajectory(values, FRE_SPEC, self.GRID)
        recon = basis_matrix(self.GRID, FRE_SPEC) @ coef
        assert np.abs(recon - values).max() < 1e-10

    def test_coarse_grid_raises_conditioning(self):
        with pytest.raises((ConditioningError, ValidationError, DomainError)):
            project_trajectory(np.ones(4), FRE_SPEC, np.linspace(0, 1, 4))
