import numpy as np
import numpy.typing as npt

from scipy import linalg
from src.core.errors import ContractViolationError, DecompositionError

# Coordinate vector of a member of H in the chosen basis.
Element = npt.NDArray[np.float64]

SYMMETRY_RTOL = 1e-12


def _frozen(values: npt.ArrayLike) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


class HilbertSpec:
    """N-dimensional truncation of H with inner product <u, v>_H = u^T G v."""

    def __init__(self, dim: int, metric: npt.ArrayLike | None = None):
        if int(dim) < 1:
            raise ContractViolationError(f"dimension must be >= 1, got {dim}")
        self.dim = int(dim)

        if metric is None:
            metric = np.eye(self.dim)
        metric = np.asarray(metric, dtype=np.float64)

        if metric.shape != (self.dim, self.dim):
            raise ContractViolationError(
                f"metric shape {metric.shape} does not match dimension {self.dim}"
            )
        if not np.all(np.isfinite(metric)):
            raise ContractViolationError("metric contains non-finite entries")

        scale = max(np.abs(metric).max(), 1.0)
        if np.abs(metric - metric.T).max() > SYMMETRY_RTOL * scale:
            raise ContractViolationError("metric is not symmetric")

        # Cholesky doubles as the positive-definiteness test.
        try:
            chol = linalg.cholesky(metric, lower=True)
        except linalg.LinAlgError as e:
            raise ContractViolationError("metric not positive definite") from e

        self.metric = _frozen(metric)
        self.cholesky = _frozen(chol)
        self.is_euclidean = bool(np.array_equal(metric, np.eye(self.dim)))

    def __repr__(self) -> str:
        kind = "euclidean" if self.is_euclidean else "weighted"
        return f"HilbertSpec(dim={self.dim}, metric={kind})"

    # ================================================================== #
    #  Elements
    # ================================================================== #
    def conform(self, u: npt.ArrayLike, name: str = "element") -> np.ndarray:
        """Return u as a float array after checking length and finiteness."""
        arr = np.asarray(u, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] != self.dim:
            raise ContractViolationError(
                f"{name} has shape {arr.shape}, expected ({self.dim},)"
            )
        if not np.all(np.isfinite(arr)):
            raise ContractViolationError(f"{name} contains non-finite entries")
        return arr

    def element(self, values: npt.ArrayLike) -> Element:
        return _frozen(self.conform(values))

    def zero(self) -> Element:
        return _frozen(np.zeros(self.dim))

    # ================================================================== #
    #  Metric helpers
    # ================================================================== #
    def lower(self, u: np.ndarray) -> np.ndarray:
        """Apply G (maps coordinates to the dual pairing)."""
        return u if self.is_euclidean else self.metric @ u

    def raise_index(self, v: np.ndarray) -> np.ndarray:
        """Solve G x = v (inverse of `lower`)."""
        if self.is_euclidean:
            return np.array(v, dtype=np.float64)
        try:
            return linalg.cho_solve((self.cholesky, True), v)
        except (linalg.LinAlgError, ValueError) as e:
            raise DecompositionError(f"metric solve failed: {e}") from e

    def orthonormal_basis(self) -> np.ndarray:
        """Rows form an H-orthonormal basis: the columns of L^{-T} for G = L L^T."""
        identity = np.eye(self.dim)
        basis = linalg.solve_triangular(self.cholesky, identity, lower=True, trans="T")
        return basis.T

    def gram_matrix(self, rows: npt.ArrayLike) -> np.ndarray:
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        if rows.shape[1] != self.dim:
            raise ContractViolationError(
                f"rows have length {rows.shape[1]}, expected {self.dim}"
            )
        gram = rows @ (rows @ self.metric).T if not self.is_euclidean else rows @ rows.T
        return 0.5 * (gram + gram.T)


def inner_product(space: HilbertSpec, u: npt.ArrayLike, v: npt.ArrayLike) -> float:
    u = space.conform(u, "u")
    v = space.conform(v, "v")
    return float(u @ space.lower(v))


def norm_sq(space: HilbertSpec, u: npt.ArrayLike) -> float:
    u = space.conform(u)
    return max(float(u @ space.lower(u)), 0.0)


def norm(space: HilbertSpec, u: npt.ArrayLike) -> float:
    return float(np.sqrt(norm_sq(space, u)))

