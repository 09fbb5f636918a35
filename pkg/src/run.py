import sys
import argparse
from typing import Optional, Sequence

import numpy as np
from loguru import logger

from src.pipeline.verify_pipeline import RfmpRunPipeline
from src.config import settings
from src.core.schemas import OracleMethod, RfmpConfig, TieBreak
from src.core.utils import random_problem, write_problem
from src.core.errors import (
    EXIT_OK,
    EXIT_VERIFY_FAILED,
    ContractViolationError,
    RfmpError,
    exit_code_for,
)

ORACLE_CHOICES = {
    "tikhonov": OracleMethod.TIKHONOV,
    "range": OracleMethod.RANGE_PROJECTION,
    "subspace": OracleMethod.SUBSPACE,
    "projection": OracleMethod.GENERALIZED_PROJECTION,
}


def _add_solver_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("problem", type=str, help="Path to the problem file")
    parser.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        default=None,
        help=f"Regularization parameter lambda >= 0 (default: {settings.RFMP_LAMBDA})",
    )
    parser.add_argument(
        "--cap",
        type=int,
        default=None,
        help=f"Repetition cap M per atom (default: {settings.RFMP_REPETITION_CAP})",
    )
    parser.add_argument(
        "--max-iter",
        type=int,
        default=None,
        help=f"Maximum number of iterations (default: {settings.RFMP_MAX_ITERATIONS})",
    )
    parser.add_argument(
        "--alpha-tol",
        type=float,
        default=None,
        help=f"Stop when |alpha| falls below this value\n  0 disables the rule (default: {settings.RFMP_ALPHA_TOL})",
    )
    parser.add_argument(
        "--energy-tol",
        type=float,
        default=None,
        help=f"Stop when the energy decrease falls below this value\n  0 disables the rule (default: {settings.RFMP_ENERGY_TOL})",
    )
    parser.add_argument(
        "--tie-break",
        type=str,
        choices=[t.value for t in TieBreak],
        default=None,
        help=f"Winner among equal scores (default: {settings.RFMP_TIE_BREAK})",
    )
    parser.add_argument(
        "--span-policy",
        type=str,
        choices=["warn", "fail"],
        default=None,
        help=f"What to do when the spanning hypothesis fails (default: {settings.SPAN_POLICY})",
    )
    parser.add_argument(
        "--out",
        type=str,
        default=None,
        help=f"Directory to save results (default: {settings.SAVE_DIR})",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m src.run",
        description="🧮 RFMP — Regularized Functional Matching Pursuit for linear inverse problems",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    parser.add_argument(
        "--log-level",
        type=str,
        default=None,
        help=f"Log level:\n  DEBUG shows progress every LOG_EVERY steps (default: {settings.LOG_LEVEL})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser(
        "solve",
        help="Run RFMP and write run_log.csv, solution.txt and run_summary.json",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    _add_solver_flags(solve)

    verify = sub.add_parser(
        "verify",
        help="Run RFMP and compare the result against a direct-solve oracle",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    _add_solver_flags(verify)
    verify.add_argument(
        "--oracle",
        type=str,
        choices=list(ORACLE_CHOICES),
        default=None,
        help=(
            "Oracle to compare against:\n"
            "  tikhonov   = (F*F + lambda I)^-1 F*y, needs lambda > 0\n"
            "  range      = minimum-norm solution of F x = P y (lambda = 0)\n"
            "  subspace   = projection of the Tikhonov solution onto span{x_j}\n"
            "  projection = F x = P_G y for the DATABASIS block\n"
            "  default: tikhonov if lambda > 0, else range"
        ),
    )
    verify.add_argument(
        "--subspace-indices",
        type=str,
        default=None,
        help="Comma-separated singular-vector indices spanning V\n  e.g. --subspace-indices 0,2,5",
    )

    diagnose = sub.add_parser(
        "diagnose",
        help="Print c1, c2, semi_frame_c and the spanning diagnostics",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    diagnose.add_argument("problem", type=str, help="Path to the problem file")
    diagnose.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        default=None,
        help=f"Regularization parameter lambda >= 0 (default: {settings.RFMP_LAMBDA})",
    )

    generate = sub.add_parser(
        "generate",
        help="Write a random desk-scale problem file",
        formatter_class=argparse.RawTextHelpFormatter,
    )
    generate.add_argument("--out", type=str, required=True, help="Problem file to write")
    generate.add_argument("--data-dim", type=int, default=20, help="Number of data points l (default: 20)")
    generate.add_argument("--dim", type=int, default=50, help="Dimension N of H (default: 50)")
    generate.add_argument(
        "--atoms",
        type=int,
        default=200,
        help="Number of random atoms (default: 200)\n  an H-orthonormal basis is prepended unless --no-spanning",
    )
    generate.add_argument("--rank", type=int, default=None, help="Rank of F (default: full)")
    generate.add_argument("--seed", type=int, default=42, help="Random seed (default: 42)")
    generate.add_argument("--no-spanning", action="store_true", help="Do not prepend a basis of H")
    generate.add_argument("--weighted", action="store_true", help="Use a random SPD metric G")

    return parser


def parse_subspace_indices(text: Optional[str]) -> Optional[list[int]]:
    if text is None:
        return None
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ContractViolationError(f"cannot parse subspace indices {text!r}") from None


def config_from_args(args: argparse.Namespace) -> RfmpConfig:
    def pick(value, default):
        return default if value is None else value

    return RfmpConfig(
        lam=pick(args.lam, settings.RFMP_LAMBDA),
        repetition_cap=pick(getattr(args, "cap", None), settings.RFMP_REPETITION_CAP),
        max_iterations=pick(getattr(args, "max_iter", None), settings.RFMP_MAX_ITERATIONS),
        stop_alpha_tol=pick(getattr(args, "alpha_tol", None), settings.RFMP_ALPHA_TOL),
        stop_energy_tol=pick(getattr(args, "energy_tol", None), settings.RFMP_ENERGY_TOL),
        tie_break=TieBreak(pick(getattr(args, "tie_break", None), settings.RFMP_TIE_BREAK)),
    )


def _configure_logging(level: Optional[str]) -> None:
    logger.remove()
    logger.add(sys.stderr, level=(level or settings.LOG_LEVEL).upper())


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "generate":
        rng = np.random.default_rng(args.seed)
        problem = random_problem(
            rng,
            args.data_dim,
            args.dim,
            args.atoms,
            rank=args.rank,
            spanning=not args.no_spanning,
            weighted=args.weighted,
        )
        write_problem(args.out, problem)
        return EXIT_OK

    config = config_from_args(args)
    pipeline = RfmpRunPipeline(
        config,
        save_dir=getattr(args, "out", None),
        span_policy=getattr(args, "span_policy", None),
    )

    if args.command == "diagnose":
        pipeline.run_diagnose(args.problem)
        return EXIT_OK

    if args.command == "solve":
        summary = pipeline.run_solve(args.problem)
        print("========== RESULT ==========")
        print(f"termination : {summary.termination.value}")
        print(f"iterations  : {summary.iterations}")
        print(f"E_0 -> E_n  : {summary.initial_energy:.6g} -> {summary.final_energy:.6g}")
        print("============================")
        return EXIT_OK

    oracle = ORACLE_CHOICES[args.oracle] if args.oracle else None
    report = pipeline.run_verify(args.problem, oracle, parse_subspace_indices(args.subspace_indices))
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.log_level)

    try:
        code = _dispatch(args)
    except RfmpError as e:
        code = exit_code_for(e)
        logger.error(f"❌ {type(e).__name__}: {e} (exit {code})")
    except ValueError as e:
        # pydantic rejects negative lambda, cap < 1 and similar flag values
        code = exit_code_for(ContractViolationError(str(e)))
        logger.error(f"❌ Invalid configuration: {e} (exit {code})")

    logger.info(f"🏁 Done — exit code {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
