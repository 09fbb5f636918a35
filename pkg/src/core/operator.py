from typing import Sequence

import numpy as np
import numpy.typing as npt

from scipy import linalg
from loguru import logger
from src.core.hilbert import HilbertSpec, Element, _frozen
from src.core.errors import ContractViolationError, DecompositionError
from src.config import settings

ORTHONORMAL_TOL = 1e-10


class SingularSystem:
    """Metric-aware singular system (sigma_j; x_j, y_j) of F.

    Right vectors x_j are the rows of `right_vectors` (N of them, H-orthonormal),
    left vectors y_j the rows of `left_vectors` (l of them, Euclidean-orthonormal).
    `sigmas` has min(l, N) entries; sigma_j is zero beyond that.
    """

    def __init__(
        self,
        space: HilbertSpec,
        sigmas: np.ndarray,
        right_vectors: np.ndarray,
        left_vectors: np.ndarray,
        rank_tolerance: float,
    ):
        self.space = space
        self.sigmas = _frozen(sigmas)
        self.right_vectors = _frozen(right_vectors)
        self.left_vectors = _frozen(left_vectors)
        self.rank_tolerance = rank_tolerance

        sigma_max = self.sigmas[0] if self.sigmas.size else 0.0
        if sigma_max > 0.0:
            self.rank = int(np.count_nonzero(self.sigmas > rank_tolerance * sigma_max))
        else:
            self.rank = 0

    def __repr__(self) -> str:
        return f"SingularSystem(rank={self.rank}, sigma_max={self.sigma(0):.6g})"

    def sigma(self, j: int) -> float:
        return float(self.sigmas[j]) if j < self.sigmas.size else 0.0

    def validate_indices(self, indices: Sequence[int]) -> np.ndarray:
        idx = np.unique(np.asarray(list(indices), dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.space.dim):
            raise ContractViolationError(
                f"singular index out of range [0, {self.space.dim}): {idx.tolist()}"
            )
        return idx

    def effective_indices(self) -> list[int]:
        """Indices with sigma_j above the rank tolerance, i.e. V = (ker F)^perp."""
        return list(range(self.rank))


class ForwardOperator:
    """Linear map F: H -> R^l acting on coordinates as F u = A u."""

    def __init__(self, space: HilbertSpec, matrix: npt.ArrayLike):
        matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        if matrix.ndim != 2 or matrix.shape[1] != space.dim:
            raise ContractViolationError(
                f"operator shape {matrix.shape} incompatible with dimension {space.dim}"
            )
        if matrix.shape[0] < 1:
            raise ContractViolationError("operator needs at least one data row")
        if not np.all(np.isfinite(matrix)):
            raise ContractViolationError("operator contains non-finite entries")

        self.space = space
        self.matrix = _frozen(matrix)
        self.data_dim = matrix.shape[0]
        self._systems: dict[float, SingularSystem] = {}

    def __repr__(self) -> str:
        return f"ForwardOperator(data_dim={self.data_dim}, dim={self.space.dim})"

    def conform_data(self, w: npt.ArrayLike, name: str = "data vector") -> np.ndarray:
        arr = np.asarray(w, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] != self.data_dim:
            raise ContractViolationError(
                f"{name} has length {arr.shape[0] if arr.ndim == 1 else arr.shape}, "
                f"operator rows {self.data_dim}"
            )
        if not np.all(np.isfinite(arr)):
            raise ContractViolationError(f"{name} contains non-finite entries")
        return arr

    def apply(self, u: npt.ArrayLike) -> np.ndarray:
        return self.matrix @ self.space.conform(u)

    def apply_adjoint(self, w: npt.ArrayLike) -> Element:
        return self.space.raise_index(self.matrix.T @ self.conform_data(w))

    def normal(self, u: npt.ArrayLike) -> Element:
        """F*F u."""
        return self.apply_adjoint(self.apply(u))

    def singular_system(self, rank_tolerance: float | None = None) -> SingularSystem:
        if rank_tolerance is None:
            rank_tolerance = settings.RANK_TOLERANCE
        if rank_tolerance <= 0:
            raise ContractViolationError(f"rank_tolerance must be > 0, got {rank_tolerance}")

        if rank_tolerance not in self._systems:
            self._systems[rank_tolerance] = self._decompose(rank_tolerance)
        return self._systems[rank_tolerance]

    def operator_norm(self) -> float:
        return self.singular_system().sigma(0)

    # ================================================================== #
    #  Metric-aware SVD
    # ================================================================== #
    def _decompose(self, rank_tolerance: float) -> SingularSystem:
        # With G = L L^T, F is unitarily equivalent to B = A L^{-T} on R^N.
        chol = self.space.cholesky
        try:
            b = linalg.solve_triangular(chol, self.matrix.T, lower=True).T
            try:
                u, s, vt = linalg.svd(b, full_matrices=True)
            except linalg.LinAlgError:
                logger.warning("⚠️  gesdd did not converge, retrying SVD with gesvd")
                u, s, vt = linalg.svd(b, full_matrices=True, lapack_driver="gesvd")
            right = linalg.solve_triangular(chol, vt.T, lower=True, trans="T").T
        except (linalg.LinAlgError, ValueError) as e:
            raise DecompositionError(f"singular value decomposition failed: {e}") from e

        system = SingularSystem(
            space=self.space,
            sigmas=s,
            right_vectors=right,
            left_vectors=u.T,
            rank_tolerance=rank_tolerance,
        )
        logger.debug(f"🔍 Singular system computed: {system!r}")
        return system


# ================================================================== #
#  Operations
# ================================================================== #
def apply(op: ForwardOperator, u: npt.ArrayLike) -> np.ndarray:
    return op.apply(u)


def apply_adjoint(op: ForwardOperator, w: npt.ArrayLike) -> Element:
    return op.apply_adjoint(w)


def normal_operator(op: ForwardOperator, u: npt.ArrayLike) -> Element:
    return op.normal(u)


def operator_norm(op: ForwardOperator) -> float:
    return op.operator_norm()


def singular_system(op: ForwardOperator, rank_tolerance: float | None = None) -> SingularSystem:
    return op.singular_system(rank_tolerance)


def range_projection(
    op: ForwardOperator, w: npt.ArrayLike, rank_tolerance: float | None = None
) -> np.ndarray:
    """Orthogonal projection of w onto rang F."""
    w = op.conform_data(w)
    system = op.singular_system(rank_tolerance)
    ys = system.left_vectors[: system.rank]
    return ys.T @ (ys @ w)


def subspace_projection(
    system: SingularSystem,
    index_set: Sequence[int] | npt.ArrayLike,
    u: npt.ArrayLike,
) -> Element:
    """H-orthogonal projection of u onto V.

    `index_set` is either a collection of singular indices j (V = span{x_j})
    or a 2-D array whose rows are a basis of V.
    """
    space = system.space
    u = space.conform(u)

    if np.ndim(index_set) == 2:
        return _basis_projection(space, np.asarray(index_set, dtype=np.float64), u)

    idx = system.validate_indices(index_set)
    if idx.size == 0:
        return np.zeros(space.dim)
    xs = system.right_vectors[idx]
    return xs.T @ (xs @ space.lower(u))


def _basis_projection(space: HilbertSpec, basis: np.ndarray, u: np.ndarray) -> Element:
    if basis.shape[1] != space.dim:
        raise ContractViolationError(
            f"subspace basis rows have length {basis.shape[1]}, expected {space.dim}"
        )
    if basis.shape[0] == 0:
        return np.zeros(space.dim)
    gram = space.gram_matrix(basis)
    try:
        coeffs = linalg.solve(gram, basis @ space.lower(u), assume_a="pos")
    except linalg.LinAlgError as e:
        raise ContractViolationError("subspace basis is linearly dependent") from e
    return basis.T @ coeffs


def check_data_basis(op: ForwardOperator, basis: npt.ArrayLike) -> np.ndarray:
    """Validate an explicit orthonormal basis (columns) of a closed subspace of R^l."""
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2 or basis.shape[0] != op.data_dim:
        raise ContractViolationError(
            f"data basis shape {basis.shape}, expected ({op.data_dim}, g)"
        )
    gram = basis.T @ basis
    if np.abs(gram - np.eye(basis.shape[1])).max(initial=0.0) > ORTHONORMAL_TOL:
        raise ContractViolationError("data basis columns are not orthonormal")

    # G must sit inside rang F for the projection limit to be reachable.
    system = op.singular_system()
    ys = system.left_vectors[: system.rank]
    leak = np.abs(basis - ys.T @ (ys @ basis)).max(initial=0.0)
    if leak > 1e-8:
        logger.warning(f"⚠️  Data basis leaves rang F (max deviation {leak:.3e})")
    return basis


def data_projection(basis: npt.ArrayLike, w: npt.ArrayLike) -> np.ndarray:
    """P_G w for G spanned by the orthonormal columns of `basis`."""
    basis = np.asarray(basis, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if basis.ndim != 2 or basis.shape[0] != w.shape[0]:
        raise ContractViolationError(
            f"data basis shape {basis.shape} incompatible with vector length {w.shape[0]}"
        )
    return basis @ (basis.T @ w)
