import io
import os
import json
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from src.core.dictionary import check_c1_positive, diagnostics
from src.core.hilbert import norm
from src.core.operator import data_projection, range_projection, subspace_projection
from src.core.oracle import (
    normal_equation_residual,
    projection_solution,
    range_solution,
    restricted_normal_residual,
    subspace_tikhonov,
    tikhonov_filter_solve,
    tikhonov_solve,
)
from src.core.schemas import (
    DictionaryDiagnostics,
    OracleMethod,
    RfmpConfig,
    RunSummary,
    TerminationReason,
    VerificationCheck,
    VerificationReport,
)
from src.core.utils import Problem, atomic_write_text, format_vector, load_problem
from src.core.errors import ContractViolationError, HypothesisViolationError
from src.pipeline.rfmp_pipeline import RfmpSolver, RfmpState
from src.config import settings

RUN_LOG_COLUMNS = ["n", "atom", "alpha", "energy", "residual_norm", "score", "wall_time"]
COMMUTATION_TOL = 1e-8


# ================================================================== #
#  RunLog
# ================================================================== #
def format_run_log(
    state: RfmpState,
    reason: TerminationReason,
    config: RfmpConfig,
    diag: DictionaryDiagnostics,
) -> str:
    header = {
        **config.header(),
        "c1": diag.c1,
        "c2": diag.c2,
        "semi_frame_c": diag.semi_frame_c,
        "initial_energy": state.initial_energy,
        "termination": reason.value,
    }
    lines = [f"# {key}={value}" for key, value in header.items()]

    records = pd.DataFrame(
        [r.model_dump() for r in state.history], columns=RUN_LOG_COLUMNS
    )
    buffer = io.StringIO()
    records.to_csv(buffer, index=False, float_format="%.17g")
    return "\n".join(lines) + "\n" + buffer.getvalue()


def read_run_log(path: str) -> tuple[dict[str, str], pd.DataFrame]:
    header: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
    return header, pd.read_csv(path, comment="#")


# ================================================================== #
#  Oracle comparison
# ================================================================== #
def _scaled(value: float, scale: float) -> float:
    return value / scale if scale > 0.0 else value


def _check(name: str, value: float, tolerance: float, note: Optional[str] = None) -> VerificationCheck:
    return VerificationCheck(
        name=name, value=value, tolerance=tolerance, passed=bool(value <= tolerance), note=note
    )


def verify_against_oracle(
    problem: Problem,
    state: RfmpState,
    config: RfmpConfig,
    oracle: OracleMethod,
    subspace: Optional[Sequence[int]] = None,
    normal_tol: Optional[float] = None,
    solution_tol: Optional[float] = None,
    range_tol: Optional[float] = None,
) -> list[VerificationCheck]:
    normal_tol = settings.VERIFY_NORMAL_EQ_TOL if normal_tol is None else normal_tol
    solution_tol = settings.VERIFY_SOLUTION_TOL if solution_tol is None else solution_tol
    range_tol = settings.VERIFY_RANGE_TOL if range_tol is None else range_tol

    op, y, dictionary = problem.operator, problem.data, problem.dictionary
    space = op.space
    x = state.approx
    lam = config.lam
    y_norm = float(np.linalg.norm(y))
    checks: list[VerificationCheck] = []

    if oracle is OracleMethod.TIKHONOV:
        if lam <= 0:
            raise ContractViolationError("the tikhonov oracle needs lambda > 0")
        dense = tikhonov_solve(op, y, lam)
        filtered = tikhonov_filter_solve(op, y, lam)
        reference = dense.element
        ref_norm = norm(space, reference)
        adjoint_norm = norm(space, op.apply_adjoint(y))

        checks.append(_check(
            "normal equation residual",
            _scaled(normal_equation_residual(op, y, lam, x), adjoint_norm),
            normal_tol,
        ))
        checks.append(_check(
            "distance to Tikhonov solution",
            norm(space, x - reference) / (1.0 + ref_norm),
            solution_tol,
        ))
        checks.append(_check(
            "oracle paths agree (dense vs singular filter)",
            norm(space, reference - filtered.element) / (1.0 + ref_norm),
            COMMUTATION_TOL,
        ))

    elif oracle is OracleMethod.RANGE_PROJECTION:
        if lam > 0:
            logger.warning("⚠️  Range oracle characterizes the lambda = 0 limit; lambda > 0 given")
        target = range_projection(op, y)
        checks.append(_check(
            "image deviation from range projection",
            _scaled(float(np.linalg.norm(op.apply(x) - target)), y_norm),
            range_tol,
        ))
        checks.append(_check(
            "max |<R, F d>| over atoms",
            _scaled(float(np.abs(dictionary.images @ state.residual).max()), y_norm),
            range_tol,
        ))
        system = op.singular_system()
        if system.rank < space.dim:
            checks.append(VerificationCheck(
                name="distance to minimum-norm solution",
                note="skipped: F has a nontrivial kernel, the limit is fixed only through F F_inf",
            ))
        else:
            reference = range_solution(op, y).element
            checks.append(_check(
                "distance to minimum-norm solution",
                norm(space, x - reference) / (1.0 + norm(space, reference)),
                solution_tol,
            ))

    elif oracle is OracleMethod.SUBSPACE:
        if lam <= 0:
            raise ContractViolationError("the subspace oracle needs lambda > 0")
        if subspace is None:
            raise ContractViolationError("the subspace oracle needs --subspace-indices")
        system = op.singular_system()
        restricted = subspace_tikhonov(op, y, lam, subspace)
        full_norm = norm(space, tikhonov_solve(op, y, lam).element)

        checks.append(_check(
            "distance to P_V F_inf",
            norm(space, x - restricted.element) / (1.0 + full_norm),
            solution_tol,
        ))
        v_adjoint = norm(space, subspace_projection(system, subspace, op.apply_adjoint(y)))
        checks.append(_check(
            "restricted normal equation residual",
            _scaled(restricted_normal_residual(op, y, lam, subspace, x), v_adjoint),
            normal_tol,
        ))

        u = np.random.default_rng(0).standard_normal(space.dim)
        commutator = subspace_projection(system, subspace, op.normal(u)) - op.normal(
            subspace_projection(system, subspace, u)
        )
        checks.append(_check("commutation of P_V and F*F", norm(space, commutator), COMMUTATION_TOL))

        leak = max(
            norm(space, atom - subspace_projection(system, subspace, atom)) for atom in dictionary.atoms
        )
        if leak > 1e-8:
            logger.warning(f"⚠️  Dictionary atoms leave V (max distance {leak:.3e})")

    elif oracle is OracleMethod.GENERALIZED_PROJECTION:
        if problem.data_basis is None:
            raise ContractViolationError("the projection oracle needs a DATABASIS block")
        if lam > 0:
            logger.warning("⚠️  Projection oracle characterizes the lambda = 0 limit; lambda > 0 given")
        reference = projection_solution(op, y, problem.data_basis)
        target = data_projection(problem.data_basis, y)
        checks.append(_check(
            "image deviation from P_G y",
            _scaled(float(np.linalg.norm(op.apply(x) - target)), y_norm),
            range_tol,
        ))
        checks.append(_check(
            "image deviation from F x_oracle",
            _scaled(float(np.linalg.norm(op.apply(x) - op.apply(reference.element))), y_norm),
            range_tol,
            note=f"oracle characterization residual {reference.residual_of_characterization:.3e}",
        ))

    return checks


def default_oracle(lam: float) -> OracleMethod:
    return OracleMethod.TIKHONOV if lam > 0 else OracleMethod.RANGE_PROJECTION


# ================================================================== #
#  Pipeline
# ================================================================== #
class RfmpRunPipeline:
    def __init__(
        self,
        config: RfmpConfig,
        save_dir: Optional[str] = None,
        span_policy: Optional[str] = None,
    ):
        self.config = config
        self.save_dir = save_dir or settings.SAVE_DIR
        self.span_policy = span_policy

    def _config_for(self, problem: Problem) -> RfmpConfig:
        if self.config.initial is None and problem.initial is not None:
            logger.info("📌 Using INITIAL block as F_0")
            return self.config.model_copy(update={"initial": problem.initial})
        return self.config

    # ================================================================== #
    #  Step 1: Solve
    # ================================================================== #
    def _solve(self, problem: Problem) -> tuple[RfmpState, TerminationReason, RfmpConfig, DictionaryDiagnostics]:
        config = self._config_for(problem)
        solver = RfmpSolver(
            problem.operator, problem.data, problem.dictionary, config, self.span_policy
        )
        diag = solver.check_hypotheses()
        state, reason = solver.run()
        return state, reason, config, diag

    # ================================================================== #
    #  Step 2: Save results
    # ================================================================== #
    def _save_outputs(
        self,
        state: RfmpState,
        reason: TerminationReason,
        config: RfmpConfig,
        diag: DictionaryDiagnostics,
    ) -> dict[str, str]:
        os.makedirs(self.save_dir, exist_ok=True)
        files = {
            "run_log": os.path.join(self.save_dir, "run_log.csv"),
            "solution": os.path.join(self.save_dir, "solution.txt"),
        }
        atomic_write_text(files["run_log"], format_run_log(state, reason, config, diag))
        logger.info(f"💾 Saved run log: {files['run_log']}")
        atomic_write_text(files["solution"], format_vector(state.limit_element()))
        logger.info(f"💾 Saved solution: {files['solution']}")
        return files

    def _save_json(self, name: str, payload: dict) -> str:
        path = os.path.join(self.save_dir, name)
        atomic_write_text(path, json.dumps(payload, indent=2, ensure_ascii=False))
        logger.info(f"💾 Saved {name}: {path}")
        return path

    # ================================================================== #
    #  Commands
    # ================================================================== #
    def run_solve(self, problem_path: str) -> RunSummary:
        problem = load_problem(problem_path)
        state, reason, config, diag = self._solve(problem)
        files = self._save_outputs(state, reason, config, diag)

        summary = RunSummary(
            problem=problem_path,
            config=config.header(),
            diagnostics=diag,
            termination=reason,
            iterations=state.iteration,
            final_energy=state.energy,
            initial_energy=state.initial_energy,
            residual_norm=float(np.linalg.norm(state.residual)),
            max_usage=state.max_usage,
            files=files,
        )
        summary.files["summary"] = os.path.join(self.save_dir, "run_summary.json")
        self._save_json("run_summary.json", summary.model_dump(mode="json"))
        return summary

    def run_verify(
        self,
        problem_path: str,
        oracle: Optional[OracleMethod] = None,
        subspace: Optional[Sequence[int]] = None,
    ) -> VerificationReport:
        problem = load_problem(problem_path)
        oracle = oracle or default_oracle(self.config.lam)
        state, reason, config, diag = self._solve(problem)
        self._save_outputs(state, reason, config, diag)

        logger.info(f"⚙️  Comparing against the {oracle.value} oracle...")
        checks = verify_against_oracle(problem, state, config, oracle, subspace)
        report = VerificationReport(
            oracle=oracle,
            lambda_used=config.lam,
            iterations=state.iteration,
            termination=reason,
            checks=checks,
        )

        table = pd.DataFrame([c.model_dump() for c in checks])
        print("========== VERIFICATION ==========")
        print(table.to_markdown(index=False))
        print("==================================")

        self._save_json("verification.json", report.model_dump(mode="json"))
        if report.passed:
            logger.info("✅ Verification passed")
        else:
            logger.warning("❌ Verification failed")
        return report

    def run_diagnose(self, problem_path: str) -> DictionaryDiagnostics:
        problem = load_problem(problem_path)
        diag = diagnostics(problem.dictionary, self.config.lam)

        rows = [
            {"quantity": k, "value": str(v) if isinstance(v, list) else v}
            for k, v in diag.model_dump().items()
        ]
        print("========== DIAGNOSTICS ==========")
        print(pd.DataFrame(rows).to_markdown(index=False))
        print("=================================")

        c1_check = check_c1_positive(diag)
        if not c1_check.passed:
            raise HypothesisViolationError(c1_check.message)
        logger.info(f"✅ {c1_check.message}")
        return diag
