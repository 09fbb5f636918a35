class RfmpError(Exception):
    """Base class for every error raised by the rfmp package."""


class ContractViolationError(RfmpError, ValueError):
    """Inputs do not conform (dimension mismatch, non-finite entries, bad index, ...)."""


class DecompositionError(RfmpError):
    """A Cholesky or SVD factorization failed on numerically degenerate input."""


class HypothesisViolationError(RfmpError):
    """A convergence hypothesis (C1 > 0, spanning dictionary) does not hold."""


class ProblemFormatError(RfmpError, ValueError):
    """A problem file could not be parsed or failed validation."""


class NumericalAbortError(RfmpError):
    """A non-finite value appeared during the iteration."""


class RepetitionCapExhausted(RfmpError):
    """Every atom has been chosen the maximum number of times."""


EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_HYPOTHESIS = 2
EXIT_INVALID_INPUT = 3
EXIT_NUMERICAL = 4

EXIT_CODES: dict[type[RfmpError], int] = {
    HypothesisViolationError: EXIT_HYPOTHESIS,
    ProblemFormatError: EXIT_INVALID_INPUT,
    ContractViolationError: EXIT_INVALID_INPUT,
    DecompositionError: EXIT_INVALID_INPUT,
    NumericalAbortError: EXIT_NUMERICAL,
}


def exit_code_for(error: RfmpError) -> int:
    for error_type, code in EXIT_CODES.items():
        if isinstance(error, error_type):
            return code
    return EXIT_NUMERICAL
