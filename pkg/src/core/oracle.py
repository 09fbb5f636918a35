from typing import Sequence

import numpy as np
import numpy.typing as npt

from scipy import linalg
from loguru import logger
from src.core.hilbert import Element, inner_product, norm, norm_sq
from src.core.operator import (
    ForwardOperator,
    check_data_basis,
    data_projection,
    range_projection,
    subspace_projection,
)
from src.core.schemas import OracleMethod, OracleSolution
from src.core.errors import ContractViolationError, DecompositionError


def _relative(value: float, scale: float) -> float:
    return value / scale if scale > 0.0 else value


# ================================================================== #
#  Tikhonov functional and normal equation
# ================================================================== #
def tikhonov_functional(op: ForwardOperator, y: npt.ArrayLike, lam: float, x: npt.ArrayLike) -> float:
    """||y - F x||^2 + lambda ||x||_H^2."""
    y = op.conform_data(y)
    misfit = y - op.apply(x)
    return float(misfit @ misfit) + lam * norm_sq(op.space, x)


def functional_expansion(
    op: ForwardOperator, y: npt.ArrayLike, lam: float, x: npt.ArrayLike, solution: npt.ArrayLike
) -> float:
    """The functional at x rewritten around a normal-equation solution.

    ||y||^2 + <(F*F + lambda I)(x - s), x - s>_H - <F*y, s>_H
    """
    y = op.conform_data(y)
    delta = op.space.conform(x) - op.space.conform(solution)
    shifted = op.normal(delta) + lam * delta
    return (
        float(y @ y)
        + inner_product(op.space, shifted, delta)
        - inner_product(op.space, op.apply_adjoint(y), solution)
    )


def normal_equation_residual(
    op: ForwardOperator, y: npt.ArrayLike, lam: float, x: npt.ArrayLike
) -> float:
    """||(F*F + lambda I) x - F*y||_H."""
    x = op.space.conform(x)
    return norm(op.space, op.normal(x) + lam * x - op.apply_adjoint(y))


def tikhonov_solve(op: ForwardOperator, y: npt.ArrayLike, lam: float) -> OracleSolution:
    """Dense solve of (F*F + lambda I) x = F*y.

    In coordinates this is the SPD system (A^T A + lambda G) x = A^T y.
    """
    if lam <= 0:
        raise ContractViolationError(
            f"lambda must be > 0 for a unique Tikhonov solution, got {lam}"
        )
    y = op.conform_data(y)
    a = op.matrix
    system = a.T @ a + lam * op.space.metric
    try:
        x = linalg.solve(system, a.T @ y, assume_a="pos")
    except linalg.LinAlgError as e:
        raise DecompositionError(f"Tikhonov system solve failed: {e}") from e

    scale = norm(op.space, op.apply_adjoint(y))
    return OracleSolution(
        element=x,
        method=OracleMethod.TIKHONOV,
        residual_of_characterization=_relative(normal_equation_residual(op, y, lam, x), scale),
        functional_value=tikhonov_functional(op, y, lam, x),
    )


def tikhonov_filter_solve(op: ForwardOperator, y: npt.ArrayLike, lam: float) -> OracleSolution:
    """sum_j sigma_j / (sigma_j^2 + lambda) <y, y_j> x_j, the singular-system path."""
    if lam <= 0:
        raise ContractViolationError(
            f"lambda must be > 0 for a unique Tikhonov solution, got {lam}"
        )
    y = op.conform_data(y)
    system = op.singular_system()
    count = system.sigmas.size
    sigmas = system.sigmas
    weights = sigmas / (sigmas**2 + lam) * (system.left_vectors[:count] @ y)
    x = system.right_vectors[:count].T @ weights

    scale = norm(op.space, op.apply_adjoint(y))
    return OracleSolution(
        element=x,
        method=OracleMethod.TIKHONOV,
        residual_of_characterization=_relative(normal_equation_residual(op, y, lam, x), scale),
        functional_value=tikhonov_functional(op, y, lam, x),
    )


def minimizer_check(
    op: ForwardOperator, y: npt.ArrayLike, lam: float, candidate: npt.ArrayLike
) -> float:
    """Tikhonov functional value at the candidate."""
    if lam < 0:
        raise ContractViolationError(f"lambda must be >= 0, got {lam}")
    return tikhonov_functional(op, y, lam, candidate)


def perturbation_gap(
    op: ForwardOperator,
    y: npt.ArrayLike,
    lam: float,
    candidate: npt.ArrayLike,
    samples: int = 100,
    scale: float = 1e-3,
    seed: int = 0,
) -> float:
    """min over random perturbations delta of J(candidate + delta) - J(candidate).

    Non-negative (up to rounding) exactly when the candidate is a minimizer
    along every sampled direction.
    """
    rng = np.random.default_rng(seed)
    base = minimizer_check(op, y, lam, candidate)
    candidate = op.space.conform(candidate)
    magnitude = scale * max(norm(op.space, candidate), 1.0)

    gaps = []
    for _ in range(samples):
        delta = rng.standard_normal(op.space.dim)
        delta *= magnitude / max(norm(op.space, delta), np.finfo(float).tiny)
        gaps.append(minimizer_check(op, y, lam, candidate + delta) - base)
    return float(min(gaps))


# ================================================================== #
#  Unregularized limits
# ================================================================== #
def _pseudo_inverse(op: ForwardOperator, w: np.ndarray) -> Element:
    system = op.singular_system()
    r = system.rank
    if r == 0:
        return np.zeros(op.space.dim)
    coeffs = (system.left_vectors[:r] @ w) / system.sigmas[:r]
    return system.right_vectors[:r].T @ coeffs


def range_solution(op: ForwardOperator, y: npt.ArrayLike) -> OracleSolution:
    """Minimum-norm x with F x = P_{rang F} y; lies in (ker F)^perp."""
    y = op.conform_data(y)
    x = _pseudo_inverse(op, y)
    target = range_projection(op, y)
    misfit = op.apply(x) - target
    return OracleSolution(
        element=x,
        method=OracleMethod.RANGE_PROJECTION,
        residual_of_characterization=_relative(
            float(np.linalg.norm(misfit)), float(np.linalg.norm(target))
        ),
        functional_value=tikhonov_functional(op, y, 0.0, x),
    )


def projection_solution(
    op: ForwardOperator, y: npt.ArrayLike, basis: npt.ArrayLike
) -> OracleSolution:
    """Minimum-norm x with F x = P_G y for G spanned by the orthonormal columns of basis."""
    y = op.conform_data(y)
    basis = check_data_basis(op, basis)
    target = data_projection(basis, y)
    x = _pseudo_inverse(op, target)
    misfit = op.apply(x) - target
    return OracleSolution(
        element=x,
        method=OracleMethod.GENERALIZED_PROJECTION,
        residual_of_characterization=_relative(
            float(np.linalg.norm(misfit)), float(np.linalg.norm(target))
        ),
        functional_value=tikhonov_functional(op, y, 0.0, x),
    )


# ================================================================== #
#  Subspace-restricted limit
# ================================================================== #
def restricted_normal_residual(
    op: ForwardOperator,
    y: npt.ArrayLike,
    lam: float,
    subspace: Sequence[int] | npt.ArrayLike,
    x: npt.ArrayLike,
) -> float:
    """||(F_V* F_V + lambda Id_V) x - F_V* y||_H with F_V = F P_V and F_V* = P_V F*."""
    system = op.singular_system()
    x = op.space.conform(x)
    in_v = subspace_projection(system, subspace, x)
    lhs = subspace_projection(system, subspace, op.normal(in_v)) + lam * in_v
    rhs = subspace_projection(system, subspace, op.apply_adjoint(y))
    return norm(op.space, lhs - rhs)


def subspace_tikhonov(
    op: ForwardOperator,
    y: npt.ArrayLike,
    lam: float,
    subspace: Sequence[int] | npt.ArrayLike,
) -> OracleSolution:
    """P_V F_inf for V spanned by the singular vectors x_j, j in `subspace`."""
    full = tikhonov_solve(op, y, lam)
    system = op.singular_system()
    x = subspace_projection(system, subspace, full.element)

    scale = norm(op.space, subspace_projection(system, subspace, op.apply_adjoint(y)))
    residual = _relative(restricted_normal_residual(op, y, lam, subspace, x), scale)
    if residual > 1e-8:
        logger.warning(
            f"⚠️  Restricted normal equation residual {residual:.3e}: "
            "V is probably not spanned by singular vectors"
        )
    return OracleSolution(
        element=x,
        method=OracleMethod.SUBSPACE,
        residual_of_characterization=residual,
        functional_value=tikhonov_functional(op, y, lam, x),
    )
