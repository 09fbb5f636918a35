import numpy as np
import numpy.typing as npt

from scipy import linalg
from loguru import logger
from src.core.hilbert import HilbertSpec, _frozen
from src.core.operator import ForwardOperator
from src.core.schemas import CheckResult, DictionaryDiagnostics
from src.core.errors import ContractViolationError, HypothesisViolationError
from src.config import settings

PARALLEL_TOL = 1e-12
EIGEN_FLOOR = 1e-12


class Dictionary:
    """Finite trial-function set D with the per-atom quantities the iteration reuses.

    atoms[i] is d_i (rows), images[i] = F d_i, gram[i, j] = <d_i, d_j>_H.
    """

    def __init__(self, space: HilbertSpec, op: ForwardOperator, atoms: npt.ArrayLike):
        if op.space is not space and (
            op.space.dim != space.dim or not np.array_equal(op.space.metric, space.metric)
        ):
            raise ContractViolationError(
                f"operator acts on {op.space!r}, dictionary lives in {space!r}"
            )
        atoms = np.asarray(atoms, dtype=np.float64)
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise ContractViolationError("dictionary needs at least one atom")
        if atoms.shape[1] != space.dim:
            raise ContractViolationError(
                f"atoms have length {atoms.shape[1]}, expected {space.dim}"
            )
        for i, atom in enumerate(atoms):
            if not np.all(np.isfinite(atom)):
                raise ContractViolationError(f"atom {i} contains non-finite entries")

        gram = space.gram_matrix(atoms)
        atom_norms_sq = np.diag(gram).copy()
        zero = np.flatnonzero(atom_norms_sq <= 0.0)
        if zero.size:
            raise ContractViolationError(f"atom {int(zero[0])} is zero")

        images = atoms @ op.matrix.T

        self.space = space
        self.op = op
        self.atoms = _frozen(atoms)
        self.images = _frozen(images)
        self.image_norms_sq = _frozen(np.einsum("ij,ij->i", images, images))
        self.atom_norms_sq = _frozen(atom_norms_sq)
        self.gram = _frozen(gram)

    def __len__(self) -> int:
        return self.atoms.shape[0]

    def __repr__(self) -> str:
        return f"Dictionary(size={len(self)}, dim={self.space.dim})"

    def denominators(self, lam: float) -> np.ndarray:
        """||F d_i||^2 + lambda ||d_i||_H^2 for every atom."""
        return self.image_norms_sq + lam * self.atom_norms_sq

    def normalized_gram(self) -> np.ndarray:
        scale = np.sqrt(self.atom_norms_sq)
        return self.gram / np.outer(scale, scale)

    def parallel_pairs(self) -> list[list[int]]:
        cosine = np.abs(np.triu(self.normalized_gram(), k=1))
        rows, cols = np.nonzero(cosine >= 1.0 - PARALLEL_TOL)
        return [[int(i), int(j)] for i, j in zip(rows, cols)]

    def restrict(self, indices: npt.ArrayLike) -> "Dictionary":
        return Dictionary(self.space, self.op, self.atoms[np.asarray(indices, dtype=np.int64)])

    def rescale(self, factors: npt.ArrayLike) -> "Dictionary":
        factors = np.asarray(factors, dtype=np.float64)
        if factors.shape != (len(self),) or np.any(factors == 0.0):
            raise ContractViolationError("rescaling needs one nonzero factor per atom")
        return Dictionary(self.space, self.op, self.atoms * factors[:, None])


def build_dictionary(
    space: HilbertSpec, op: ForwardOperator, atoms: npt.ArrayLike
) -> Dictionary:
    dictionary = Dictionary(space, op, atoms)

    pairs = dictionary.parallel_pairs()
    if pairs:
        shown = ", ".join(f"{i}~{j}" for i, j in pairs[:5])
        logger.warning(
            f"⚠️  Dictionary has {len(pairs)} parallel atom pair(s) ({shown}); "
            "the semi-frame estimate will report 0"
        )
    logger.debug(f"📚 Built {dictionary!r}")
    return dictionary


def _numerical_rank(matrix: np.ndarray) -> int:
    singular_values = linalg.svdvals(matrix)
    if singular_values.size == 0 or singular_values[0] == 0.0:
        return 0
    return int(np.count_nonzero(singular_values > settings.RANK_TOLERANCE * singular_values[0]))


# ================================================================== #
#  Hypothesis diagnostics
# ================================================================== #
def diagnostics(dictionary: Dictionary, lam: float) -> DictionaryDiagnostics:
    if lam < 0:
        raise ContractViolationError(f"lambda must be >= 0, got {lam}")

    denominators = dictionary.denominators(lam)
    argmin = int(np.argmin(denominators))

    eigenvalues = linalg.eigvalsh(dictionary.normalized_gram())
    top = float(eigenvalues[-1])
    bottom = float(eigenvalues[0])
    riesz_lower = bottom if bottom > EIGEN_FLOOR * top else 0.0
    bessel_c = 1.0 / top

    # Rows of atoms @ L are isometric coordinates of the atoms in H.
    atom_rank = _numerical_rank(dictionary.atoms @ dictionary.space.cholesky)
    image_rank = _numerical_rank(dictionary.images)
    operator_rank = dictionary.op.singular_system().rank

    return DictionaryDiagnostics(
        c1=max(float(denominators[argmin]), 0.0),
        c2=float(np.sqrt(dictionary.atom_norms_sq.max())),
        semi_frame_c=max(min(riesz_lower, bessel_c), 0.0),
        lambda_used=lam,
        argmin_atom=argmin,
        riesz_lower=riesz_lower,
        bessel_c=bessel_c,
        atom_rank=atom_rank,
        image_rank=image_rank,
        operator_rank=operator_rank,
        spans_space=atom_rank == dictionary.space.dim,
        spans_range=image_rank == operator_rank,
        parallel_pairs=dictionary.parallel_pairs(),
    )


def check_c1_positive(diag: DictionaryDiagnostics, c1_floor: float | None = None) -> CheckResult:
    if c1_floor is None:
        c1_floor = settings.C1_FLOOR

    if diag.c1 > c1_floor:
        return CheckResult(passed=True, message=f"C1 = {diag.c1:.6g} > {c1_floor:g}")
    return CheckResult(
        passed=False,
        message=(
            f"condition C1 > 0 violated by atom {diag.argmin_atom} "
            f"(C1 = {diag.c1:.6g}, lambda = {diag.lambda_used:g})"
        ),
    )


def check_spanning(diag: DictionaryDiagnostics, policy: str | None = None) -> CheckResult:
    """Regularized runs need span D = H, unregularized runs need span F D = rang F."""
    if policy is None:
        policy = settings.SPAN_POLICY

    if diag.lambda_used > 0:
        passed = diag.spans_space
        message = (
            f"atoms span H (rank {diag.atom_rank})"
            if passed
            else f"atoms span a {diag.atom_rank}-dimensional subspace of H only; "
            "the limit is the projection of the Tikhonov solution onto that span "
            "only if the span is a union of singular vectors"
        )
    else:
        passed = diag.spans_range
        message = (
            f"images span rang F (rank {diag.image_rank})"
            if passed
            else f"images span {diag.image_rank} of {diag.operator_rank} range dimensions; "
            "the limit projects onto that smaller span"
        )

    if not passed:
        if policy == "fail":
            raise HypothesisViolationError(message)
        logger.warning(f"⚠️  {message}")
    return CheckResult(passed=passed, message=message)


def harmonic_frame_bound(dictionary: Dictionary, index: int, repetitions: int) -> float:
    """Largest c with c ||sum_k (1/k) d||^2 <= sum_k 1/k^2 when d = atoms[index] repeats.

    Decreases to zero as `repetitions` grows, so no semi-frame constant survives
    unlimited reuse of one atom.
    """
    if not 0 <= index < len(dictionary):
        raise ContractViolationError(f"atom index {index} out of range")
    if repetitions < 1:
        raise ContractViolationError("repetitions must be >= 1")

    k = np.arange(1, repetitions + 1, dtype=np.float64)
    harmonic = np.sum(1.0 / k)
    return float(np.sum(1.0 / k**2) / (harmonic**2 * dictionary.atom_norms_sq[index]))


def alpha_lower_bound_factor(diag: DictionaryDiagnostics, op_norm: float) -> float:
    """Factor f with alpha_{n+1}^2 >= f * score_n(d) for every atom d."""
    return 1.0 / ((op_norm**2 + diag.lambda_used) * diag.c2**2)
