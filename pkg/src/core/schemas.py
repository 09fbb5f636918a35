from enum import Enum
from typing import Optional, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class TieBreak(str, Enum):
    LOWEST_INDEX = "lowest-index"
    HIGHEST_INDEX = "highest-index"


class TerminationReason(str, Enum):
    MAX_ITERATIONS = "max iterations reached"
    ALPHA_BELOW_TOL = "alpha below tolerance"
    ENERGY_BELOW_TOL = "energy decrease below tolerance"
    CAP_EXHAUSTED = "repetition cap exhausted"


class OracleMethod(str, Enum):
    TIKHONOV = "tikhonov"
    RANGE_PROJECTION = "range-projection"
    SUBSPACE = "subspace"
    GENERALIZED_PROJECTION = "generalized-projection"


class RfmpConfig(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, populate_by_name=True)

    lam: float = Field(
        default=0.0,
        ge=0.0,
        alias="lambda",
        description=(
            "Regularization parameter. 0 disables regularization; "
            "the iteration then targets the projection of y onto the range of F."
        ),
    )
    repetition_cap: int = Field(
        default=1000,
        ge=1,
        description=(
            "Maximum number of times a single atom may be chosen. "
            "Atoms at the cap drop out of the eligible set."
        ),
    )
    initial: Optional[np.ndarray] = Field(
        default=None,
        description="Initial approximation F_0 as coordinates. None means the zero element.",
    )
    max_iterations: int = Field(
        default=10000,
        ge=1,
        description="Hard upper bound on the number of greedy steps.",
    )
    stop_alpha_tol: float = Field(
        default=1e-12,
        ge=0.0,
        description="Stop before a step whose |alpha| is below this value. 0 disables the rule.",
    )
    stop_energy_tol: float = Field(
        default=1e-24,
        ge=0.0,
        description=(
            "Stop before a step whose energy decrease (its selection score) "
            "is below this value. 0 disables the rule."
        ),
    )
    tie_break: TieBreak = Field(
        default=TieBreak.LOWEST_INDEX,
        description="Which index wins when several eligible atoms share the maximal score.",
    )

    def header(self) -> dict:
        return {
            "lambda": self.lam,
            "repetition_cap": self.repetition_cap,
            "max_iterations": self.max_iterations,
            "stop_alpha_tol": self.stop_alpha_tol,
            "stop_energy_tol": self.stop_energy_tol,
            "tie_break": self.tie_break.value,
            "initial": "zero" if self.initial is None else "given",
        }


class IterationRecord(BaseModel):
    n: int = Field(description="Step number (1-based, step n produces F_n).")
    atom: int = Field(description="Index of the chosen atom.")
    alpha: float = Field(description="Step coefficient alpha_n.")
    energy: float = Field(description="E_n = ||R^n||^2 + lambda ||F_n||_H^2 after the step.")
    residual_norm: float = Field(description="||R^n|| after the step.")
    score: float = Field(description="Selection score of the chosen atom (= energy decrease).")
    wall_time: float = Field(default=0.0, description="Seconds since the start of the run.")


class DictionaryDiagnostics(BaseModel):
    c1: float = Field(ge=0.0, description="min_i ||F d_i||^2 + lambda ||d_i||_H^2.")
    c2: float = Field(gt=0.0, description="max_i ||d_i||_H.")
    semi_frame_c: float = Field(
        ge=0.0,
        description=(
            "Indicative semi-frame constant for single-use expansions: "
            "min(riesz_lower, bessel_c), clipped at 0."
        ),
    )
    lambda_used: float = Field(ge=0.0)
    argmin_atom: int = Field(description="Atom attaining c1.")
    riesz_lower: float = Field(description="Smallest eigenvalue of the normalized atom Gram.")
    bessel_c: float = Field(description="Reciprocal of the largest eigenvalue of the normalized atom Gram.")
    atom_rank: int = Field(description="Numerical rank of the atoms in H.")
    image_rank: int = Field(description="Numerical rank of the images F d_i in R^l.")
    operator_rank: int = Field(description="Numerical rank of F.")
    spans_space: bool = Field(description="True when span D = H.")
    spans_range: bool = Field(description="True when span F D = rang F.")
    parallel_pairs: List[List[int]] = Field(
        default_factory=list, description="Pairs of atoms that are parallel (duplicates up to scale)."
    )


class CheckResult(BaseModel):
    passed: bool
    message: str


class OracleSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    element: np.ndarray = Field(description="The directly computed solution (coordinates).")
    method: OracleMethod
    residual_of_characterization: float = Field(
        description="How well the defining equation of the limit object is satisfied."
    )
    functional_value: Optional[float] = Field(
        default=None, description="Tikhonov functional at the solution, when meaningful."
    )


class VerificationCheck(BaseModel):
    name: str
    value: Optional[float] = None
    tolerance: Optional[float] = None
    passed: Optional[bool] = Field(
        default=None, description="None when the comparison is skipped."
    )
    note: Optional[str] = None


class VerificationReport(BaseModel):
    oracle: OracleMethod
    lambda_used: float
    iterations: int
    termination: TerminationReason
    checks: List[VerificationCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)


class RunSummary(BaseModel):
    problem: str
    config: dict
    diagnostics: DictionaryDiagnostics
    termination: TerminationReason
    iterations: int
    final_energy: float
    initial_energy: float
    residual_norm: float
    max_usage: int
    files: dict[str, str] = Field(default_factory=dict)
