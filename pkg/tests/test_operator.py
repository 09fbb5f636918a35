import numpy as np
import pytest

from src.core.hilbert import HilbertSpec, inner_product, norm
from src.core.operator import (
    ForwardOperator,
    apply,
    apply_adjoint,
    check_data_basis,
    data_projection,
    normal_operator,
    operator_norm,
    range_projection,
    singular_system,
    subspace_projection,
)
from src.core.errors import ContractViolationError
from src.core.utils import random_operator, random_spd_metric


def _op(matrix, metric=None) -> ForwardOperator:
    matrix = np.asarray(matrix, dtype=np.float64)
    return ForwardOperator(HilbertSpec(matrix.shape[1], metric), matrix)


class TestApply:
    def test_identity(self):
        np.testing.assert_allclose(apply(_op(np.eye(2)), [1, 2]), [1, 2])

    def test_diagonal(self):
        np.testing.assert_allclose(apply(_op(np.diag([2.0, 1.0])), [1, 1]), [2, 1])

    def test_rectangular(self):
        op = _op([[1, 0, 0], [0, 1, 0]])
        np.testing.assert_allclose(apply(op, [1, 2, 3]), [1, 2])

    def test_wrong_length(self):
        with pytest.raises(ContractViolationError):
            apply(_op(np.eye(2)), [1, 2, 3])


class TestAdjoint:
    def test_identity(self):
        np.testing.assert_allclose(apply_adjoint(_op(np.eye(2)), [1, 2]), [1, 2])

    def test_diagonal(self):
        np.testing.assert_allclose(apply_adjoint(_op(np.diag([2.0, 1.0])), [1, 1]), [2, 1])

    def test_weighted_metric(self):
        op = _op([[1.0, 1.0]], np.diag([2.0, 1.0]))
        np.testing.assert_allclose(apply_adjoint(op, [2.0]), [1.0, 2.0])

    def test_adjoint_identity(self, rng):
        space = HilbertSpec(6, random_spd_metric(rng, 6))
        op = ForwardOperator(space, rng.standard_normal((4, 6)))
        for u, w in zip(rng.standard_normal((100, 6)), rng.standard_normal((100, 4))):
            lhs = float(apply(op, u) @ w)
            assert lhs == pytest.approx(inner_product(space, u, apply_adjoint(op, w)), rel=1e-10, abs=1e-12)

    def test_data_length_mismatch_message(self):
        op = _op(np.eye(4))
        with pytest.raises(ContractViolationError, match="length 5, operator rows 4"):
            apply_adjoint(op, np.ones(5))

    def test_normal_operator(self, rng):
        op = _op(rng.standard_normal((3, 5)))
        u = rng.standard_normal(5)
        np.testing.assert_allclose(normal_operator(op, u), op.matrix.T @ op.matrix @ u, atol=1e-12)


class TestOperatorNorm:
    def test_identity(self):
        assert operator_norm(_op(np.eye(2))) == pytest.approx(1.0)

    def test_diagonal(self):
        assert operator_norm(_op(np.diag([3.0, 1.0]))) == pytest.approx(3.0)

    def test_zero(self):
        assert operator_norm(_op(np.zeros((2, 2)))) == 0.0

    @pytest.mark.parametrize("weighted", [False, True])
    def test_sampled_ratio_bound(self, rng, weighted):
        space = HilbertSpec(4, random_spd_metric(rng, 4) if weighted else None)
        op = ForwardOperator(space, rng.standard_normal((3, 4)))
        ratios = [
            np.linalg.norm(op.apply(u)) / norm(space, u) for u in rng.standard_normal((1000, 4))
        ]
        sampled = max(ratios)
        assert sampled <= operator_norm(op) * (1 + 1e-12)
        assert sampled >= 0.95 * operator_norm(op)


class TestSingularSystem:
    def test_diagonal(self):
        system = singular_system(_op(np.diag([2.0, 1.0])))
        np.testing.assert_allclose(system.sigmas, [2.0, 1.0])
        np.testing.assert_allclose(np.abs(system.right_vectors), np.eye(2), atol=1e-12)
        np.testing.assert_allclose(np.abs(system.left_vectors), np.eye(2), atol=1e-12)
        assert system.rank == 2

    def test_zero_operator(self):
        system = singular_system(_op(np.zeros((2, 3))))
        assert system.rank == 0
        assert system.effective_indices() == []

    @pytest.mark.parametrize("weighted", [False, True])
    def test_defining_relations(self, rng, weighted):
        space = HilbertSpec(6, random_spd_metric(rng, 6) if weighted else None)
        op = ForwardOperator(space, rng.standard_normal((4, 6)))
        system = singular_system(op)

        assert system.rank == 4
        np.testing.assert_allclose(space.gram_matrix(system.right_vectors), np.eye(6), atol=1e-10)
        np.testing.assert_allclose(system.left_vectors @ system.left_vectors.T, np.eye(4), atol=1e-10)
        for j in range(6):
            sigma = system.sigma(j)
            np.testing.assert_allclose(
                op.apply(system.right_vectors[j]), sigma * system.left_vectors[j] if j < 4 else 0.0, atol=1e-10
            )
            if j < 4:
                np.testing.assert_allclose(
                    op.apply_adjoint(system.left_vectors[j]), sigma * system.right_vectors[j], atol=1e-10
                )
        assert np.all(np.diff(system.sigmas) <= 0)

    def test_random_operator_respects_sigma_range(self, rng):
        space = HilbertSpec(8, random_spd_metric(rng, 8))
        op = random_operator(rng, space, 6, rank=3)
        system = op.singular_system()
        assert system.rank == 3
        assert 0.5 <= system.sigmas[2] <= system.sigmas[0] <= 1.5

    def test_rejects_non_positive_tolerance(self):
        with pytest.raises(ContractViolationError):
            singular_system(_op(np.eye(2)), rank_tolerance=0.0)

    def test_cached_per_tolerance(self):
        op = _op(np.eye(3))
        assert op.singular_system() is op.singular_system()


class TestRangeProjection:
    def test_axis_aligned_range(self):
        op = _op([[1, 0], [0, 1], [0, 0]])
        np.testing.assert_allclose(range_projection(op, [1, 2, 3]), [1, 2, 0], atol=1e-12)

    def test_vector_in_range_unchanged(self):
        op = _op([[1, 0], [0, 1], [0, 0]])
        np.testing.assert_allclose(range_projection(op, [4, -1, 0]), [4, -1, 0], atol=1e-12)

    def test_projector_properties(self, rng):
        op = _op(rng.standard_normal((5, 3)))
        w = rng.standard_normal(5)
        pw = range_projection(op, w)
        np.testing.assert_allclose(range_projection(op, pw), pw, atol=1e-10)
        assert abs(float((w - pw) @ pw)) < 1e-10


class TestSubspaceProjection:
    def test_all_indices_is_identity(self, rng):
        space = HilbertSpec(4, random_spd_metric(rng, 4))
        op = ForwardOperator(space, rng.standard_normal((3, 4)))
        u = rng.standard_normal(4)
        np.testing.assert_allclose(subspace_projection(op.singular_system(), range(4), u), u, atol=1e-10)

    def test_empty_index_set(self, rng):
        op = _op(rng.standard_normal((3, 4)))
        np.testing.assert_allclose(subspace_projection(op.singular_system(), [], np.ones(4)), 0.0)

    def test_orthogonality_residual(self, rng):
        space = HilbertSpec(5, random_spd_metric(rng, 5))
        op = ForwardOperator(space, rng.standard_normal((3, 5)))
        system = op.singular_system()
        u = rng.standard_normal(5)
        residual = u - subspace_projection(system, [1], u)
        assert abs(inner_product(space, residual, system.right_vectors[1])) < 1e-10

    def test_basis_rows_match_index_form(self, rng):
        op = _op(rng.standard_normal((3, 5)))
        system = op.singular_system()
        u = rng.standard_normal(5)
        basis = 2.0 * system.right_vectors[[0, 3]] + 0.5 * system.right_vectors[[3, 0]]
        np.testing.assert_allclose(
            subspace_projection(system, basis, u), subspace_projection(system, [0, 3], u), atol=1e-10
        )

    def test_idempotent_and_self_adjoint(self, rng):
        space = HilbertSpec(6, random_spd_metric(rng, 6))
        op = ForwardOperator(space, rng.standard_normal((4, 6)))
        system = op.singular_system()
        index_set = [0, 2, 5]
        for u, v in rng.standard_normal((20, 2, 6)):
            pu = subspace_projection(system, index_set, u)
            np.testing.assert_allclose(subspace_projection(system, index_set, pu), pu, atol=1e-10)
            assert inner_product(space, pu, v) == pytest.approx(
                inner_product(space, u, subspace_projection(system, index_set, v)), abs=1e-10
            )

    def test_index_out_of_range(self, rng):
        op = _op(rng.standard_normal((3, 4)))
        with pytest.raises(ContractViolationError, match="out of range"):
            subspace_projection(op.singular_system(), [0, 4], np.ones(4))


class TestDataBasis:
    def test_projection_onto_basis(self):
        op = _op(np.eye(3))
        basis = np.array([[1.0], [0.0], [0.0]])
        np.testing.assert_allclose(data_projection(check_data_basis(op, basis), [3, 4, 5]), [3, 0, 0])

    def test_rejects_non_orthonormal_columns(self):
        op = _op(np.eye(2))
        with pytest.raises(ContractViolationError, match="not orthonormal"):
            check_data_basis(op, [[2.0], [0.0]])
