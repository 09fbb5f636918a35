import numpy as np
import pytest

from src.core.hilbert import HilbertSpec
from src.core.operator import ForwardOperator
from src.core.dictionary import (
    alpha_lower_bound_factor,
    build_dictionary,
    check_c1_positive,
    check_spanning,
    diagnostics,
    harmonic_frame_bound,
)
from src.core.errors import ContractViolationError, HypothesisViolationError
from src.core.utils import random_spd_metric


def _dictionary(matrix, atoms, metric=None):
    matrix = np.asarray(matrix, dtype=np.float64)
    space = HilbertSpec(matrix.shape[1], metric)
    op = ForwardOperator(space, matrix)
    return build_dictionary(space, op, atoms)


class TestBuildDictionary:
    def test_canonical_basis(self):
        dictionary = _dictionary(np.eye(2), np.eye(2))
        np.testing.assert_allclose(dictionary.images, np.eye(2))
        np.testing.assert_allclose(dictionary.gram, np.eye(2))
        assert len(dictionary) == 2

    def test_zero_atom_rejected(self):
        with pytest.raises(ContractViolationError, match="atom 1 is zero"):
            _dictionary(np.eye(2), [[1.0, 0.0], [0.0, 0.0]])

    def test_cached_quantities(self, rng):
        space = HilbertSpec(50, random_spd_metric(rng, 50))
        op = ForwardOperator(space, rng.standard_normal((20, 50)))
        atoms = rng.standard_normal((200, 50))
        dictionary = build_dictionary(space, op, atoms)

        np.testing.assert_allclose(dictionary.images, atoms @ op.matrix.T, atol=1e-10)
        np.testing.assert_allclose(dictionary.gram, atoms @ space.metric @ atoms.T, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(
            dictionary.image_norms_sq, np.sum(dictionary.images**2, axis=1), rtol=1e-12
        )
        np.testing.assert_allclose(dictionary.atom_norms_sq, np.diag(dictionary.gram), rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolationError, match="expected 2"):
            _dictionary(np.eye(2), [[1.0, 0.0, 0.0]])

    def test_cached_arrays_are_read_only(self):
        dictionary = _dictionary(np.eye(2), np.eye(2))
        with pytest.raises(ValueError):
            dictionary.images[0, 0] = 3.0

    def test_parallel_pairs(self):
        dictionary = _dictionary(np.eye(2), [[1.0, 0.0], [0.0, 1.0], [-3.0, 0.0]])
        assert dictionary.parallel_pairs() == [[0, 2]]

    def test_rescale_keeps_normalized_gram(self, rng):
        dictionary = _dictionary(rng.standard_normal((3, 4)), rng.standard_normal((6, 4)))
        scaled = dictionary.rescale(rng.uniform(0.1, 10.0, size=6))
        np.testing.assert_allclose(scaled.normalized_gram(), dictionary.normalized_gram(), atol=1e-12)


class TestDiagnostics:
    def test_orthonormal_atoms(self):
        diag = diagnostics(_dictionary(np.eye(3), np.eye(3)), 0.0)
        assert diag.c1 == pytest.approx(1.0)
        assert diag.c2 == pytest.approx(1.0)
        assert diag.semi_frame_c == pytest.approx(1.0)
        assert diag.spans_space and diag.spans_range

    def test_kernel_atom_gives_zero_c1(self):
        diag = diagnostics(_dictionary([[1.0, 0.0]], np.eye(2)), 0.0)
        assert diag.c1 == 0.0
        assert diag.argmin_atom == 1

    def test_duplicated_atom_gives_zero_semi_frame(self):
        diag = diagnostics(_dictionary(np.eye(2), [[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]), 0.0)
        assert diag.semi_frame_c == 0.0
        assert diag.parallel_pairs == [[0, 2]]

    def test_regularization_lifts_c1(self):
        diag = diagnostics(_dictionary([[1.0, 0.0]], [[1.0, 0.0], [0.0, 2.0]]), 0.1)
        assert diag.c1 == pytest.approx(0.4)
        assert diag.c1 >= 0.1 * 1.0

    def test_semi_frame_inequality(self, rng):
        dictionary = _dictionary(np.eye(5), rng.standard_normal((5, 5)))
        diag = diagnostics(dictionary, 0.0)
        c2_sq = diag.c2**2
        for _ in range(50):
            beta = rng.standard_normal(5)
            combo = beta @ dictionary.atoms
            assert diag.semi_frame_c * float(combo @ combo) <= c2_sq * float(beta @ beta) * (1 + 1e-10)

    def test_spans_range_without_spanning_space(self):
        diag = diagnostics(_dictionary([[1.0, 0.0]], [[1.0, 1.0]]), 0.0)
        assert not diag.spans_space
        assert diag.spans_range

    def test_repeatable_for_identical_inputs(self, rng):
        metric = random_spd_metric(rng, 6)
        matrix, atoms = rng.standard_normal((4, 6)), rng.standard_normal((12, 6))
        first = diagnostics(_dictionary(matrix, atoms, metric), 0.3)
        second = diagnostics(_dictionary(matrix.copy(), atoms.copy(), metric.copy()), 0.3)
        assert first.model_dump() == second.model_dump()

    def test_negative_lambda_rejected(self):
        with pytest.raises(ContractViolationError):
            diagnostics(_dictionary(np.eye(2), np.eye(2)), -1.0)


class TestHypothesisChecks:
    def test_c1_one_passes(self):
        diag = diagnostics(_dictionary(np.eye(2), np.eye(2)), 0.0)
        assert check_c1_positive(diag).passed

    def test_c1_zero_fails_with_atom_index(self):
        diag = diagnostics(_dictionary([[1.0, 0.0]], np.eye(2)), 0.0)
        result = check_c1_positive(diag)
        assert not result.passed
        assert "condition C1 > 0 violated by atom 1" in result.message

    def test_positive_lambda_always_passes(self, rng):
        atoms = rng.standard_normal((10, 4))
        diag = diagnostics(_dictionary(np.zeros((2, 4)), atoms), 1e-3)
        assert check_c1_positive(diag).passed

    def test_spanning_failure_policies(self):
        diag = diagnostics(_dictionary(np.eye(2), [[1.0, 0.0]]), 0.5)
        assert not check_spanning(diag, "warn").passed
        with pytest.raises(HypothesisViolationError):
            check_spanning(diag, "fail")


class TestBounds:
    def test_harmonic_frame_bound_decays(self):
        dictionary = _dictionary(np.eye(2), np.eye(2))
        bounds = [harmonic_frame_bound(dictionary, 0, m) for m in (1, 10, 100, 1000)]
        assert bounds[0] == pytest.approx(1.0)
        assert all(b2 < b1 for b1, b2 in zip(bounds, bounds[1:]))
        assert bounds[-1] < 0.05

    def test_alpha_lower_bound_factor(self):
        diag = diagnostics(_dictionary(2.0 * np.eye(2), 3.0 * np.eye(2)), 1.0)
        assert alpha_lower_bound_factor(diag, 2.0) == pytest.approx(1.0 / (5.0 * 9.0))
