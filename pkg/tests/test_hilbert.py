import numpy as np
import pytest

from src.core.hilbert import HilbertSpec, inner_product, norm, norm_sq
from src.core.errors import ContractViolationError
from src.core.utils import random_spd_metric


class TestInnerProduct:
    def test_orthogonal_canonical_vectors(self):
        space = HilbertSpec(2)
        assert inner_product(space, [1, 0], [0, 1]) == 0.0

    def test_euclidean_norm_squared(self):
        space = HilbertSpec(2)
        assert inner_product(space, [3, 4], [3, 4]) == 25.0

    def test_weighted_metric(self):
        space = HilbertSpec(2, np.diag([2.0, 1.0]))
        assert inner_product(space, [1, 1], [1, 1]) == pytest.approx(3.0)

    def test_symmetry_and_linearity(self, rng):
        space = HilbertSpec(6, random_spd_metric(rng, 6))
        u, v, w = rng.standard_normal((3, 6))
        assert inner_product(space, u, v) == pytest.approx(inner_product(space, v, u))
        assert inner_product(space, 2.0 * u + w, v) == pytest.approx(
            2.0 * inner_product(space, u, v) + inner_product(space, w, v)
        )

    def test_cauchy_schwarz_and_positivity(self, rng):
        space = HilbertSpec(6, random_spd_metric(rng, 6))
        for u, v in rng.standard_normal((100, 2, 6)):
            assert abs(inner_product(space, u, v)) <= norm(space, u) * norm(space, v) * (1 + 1e-12)
            assert inner_product(space, u, u) > 0.0

    def test_dimension_mismatch(self):
        space = HilbertSpec(3)
        with pytest.raises(ContractViolationError, match="expected \\(3,\\)"):
            inner_product(space, [1, 2], [1, 2, 3])

    def test_non_finite_entries(self):
        space = HilbertSpec(2)
        with pytest.raises(ContractViolationError, match="non-finite"):
            inner_product(space, [np.nan, 0.0], [1.0, 0.0])


class TestNorm:
    def test_zero_element(self):
        assert norm(HilbertSpec(2), [0, 0]) == 0.0

    def test_three_four_five(self):
        assert norm(HilbertSpec(2), [3, 4]) == pytest.approx(5.0)

    def test_weighted(self):
        assert norm(HilbertSpec(2, np.diag([4.0, 1.0])), [1, 0]) == pytest.approx(2.0)

    def test_norm_sq_never_negative(self, rng):
        space = HilbertSpec(5, random_spd_metric(rng, 5))
        for u in rng.standard_normal((20, 5)) * 1e-160:
            assert norm_sq(space, u) >= 0.0


class TestHilbertSpec:
    def test_rejects_indefinite_metric(self):
        with pytest.raises(ContractViolationError, match="metric not positive definite"):
            HilbertSpec(2, np.diag([1.0, -1.0]))

    def test_rejects_asymmetric_metric(self):
        with pytest.raises(ContractViolationError, match="not symmetric"):
            HilbertSpec(2, [[2.0, 1.0], [0.0, 2.0]])

    def test_rejects_wrong_shape(self):
        with pytest.raises(ContractViolationError, match="does not match"):
            HilbertSpec(3, np.eye(2))

    def test_rejects_empty_space(self):
        with pytest.raises(ContractViolationError):
            HilbertSpec(0)

    def test_orthonormal_basis_is_h_orthonormal(self, rng):
        space = HilbertSpec(7, random_spd_metric(rng, 7))
        basis = space.orthonormal_basis()
        np.testing.assert_allclose(space.gram_matrix(basis), np.eye(7), atol=1e-10)

    def test_raise_index_inverts_lower(self, rng):
        space = HilbertSpec(5, random_spd_metric(rng, 5))
        u = rng.standard_normal(5)
        np.testing.assert_allclose(space.raise_index(space.lower(u)), u, atol=1e-12)

    def test_elements_are_read_only(self):
        space = HilbertSpec(2)
        element = space.element([1.0, 2.0])
        with pytest.raises(ValueError):
            element[0] = 5.0
