import time
from typing import Optional

import numpy as np
import numpy.typing as npt
from loguru import logger
from src.core.dictionary import (
    Dictionary,
    check_c1_positive,
    check_spanning,
    diagnostics,
)
from src.core.hilbert import norm_sq
from src.core.operator import ForwardOperator
from src.core.schemas import (
    DictionaryDiagnostics,
    IterationRecord,
    RfmpConfig,
    TerminationReason,
    TieBreak,
)
from src.core.errors import (
    HypothesisViolationError,
    NumericalAbortError,
    RepetitionCapExhausted,
)
from src.config import settings


class RfmpState:
    """Iteration state of one RFMP run.

    approx is F_n, residual is R^n = y - F F_n, fn_dot_atoms[i] caches <F_n, d_i>_H.
    F_n = initial + sum_i coefficients[i] d_i at every step.
    """

    def __init__(
        self,
        initial: np.ndarray,
        residual: np.ndarray,
        fn_dot_atoms: np.ndarray,
        energy: float,
        n_atoms: int,
    ):
        self.initial = initial.copy()
        self.approx = initial.copy()
        self.residual = residual
        self.fn_dot_atoms = fn_dot_atoms
        self.iteration = 0
        self.history: list[IterationRecord] = []
        self.usage_counts = np.zeros(n_atoms, dtype=np.int64)
        self.coefficients = np.zeros(n_atoms)
        self.initial_energy = energy
        self.energy = energy

    def __repr__(self) -> str:
        return f"RfmpState(n={self.iteration}, energy={self.energy:.6g})"

    @property
    def max_usage(self) -> int:
        return int(self.usage_counts.max(initial=0))

    def alpha_square_sum(self) -> float:
        return float(sum(r.alpha**2 for r in self.history))

    def limit_element(self) -> np.ndarray:
        """Current approximation of F_inf = F_0 + sum_k alpha_k d_k."""
        return self.approx.copy()


# ================================================================== #
#  Single-step operations
# ================================================================== #
def initial_state(
    op: ForwardOperator,
    data: npt.ArrayLike,
    dictionary: Dictionary,
    lam: float,
    initial: Optional[npt.ArrayLike] = None,
) -> RfmpState:
    space = dictionary.space
    y = op.conform_data(data, "data")
    f0 = space.conform(initial, "initial approximation") if initial is not None else space.zero()
    f0 = np.array(f0, dtype=np.float64)

    residual = y - op.apply(f0)
    fn_dot = dictionary.atoms @ space.lower(f0)
    energy = float(residual @ residual) + lam * norm_sq(space, f0)
    return RfmpState(f0, residual, fn_dot, energy, len(dictionary))


def _numerators(state: RfmpState, dictionary: Dictionary, lam: float) -> np.ndarray:
    """<R^n, F d_i> - lambda <F_n, d_i>_H for every atom."""
    return dictionary.images @ state.residual - lam * state.fn_dot_atoms


def _denominators(dictionary: Dictionary, lam: float) -> np.ndarray:
    denominators = dictionary.denominators(lam)
    if np.any(denominators <= 0.0):
        bad = int(np.argmin(denominators))
        raise HypothesisViolationError(
            f"condition C1 > 0 violated by atom {bad} (zero denominator, lambda = {lam:g})"
        )
    return denominators


def selection_scores(state: RfmpState, dictionary: Dictionary, lam: float) -> np.ndarray:
    numerators = _numerators(state, dictionary, lam)
    return numerators**2 / _denominators(dictionary, lam)


def selection_score(state: RfmpState, dictionary: Dictionary, lam: float, atom_index: int) -> float:
    images = dictionary.images[atom_index]
    numerator = float(images @ state.residual) - lam * float(state.fn_dot_atoms[atom_index])
    denominator = float(dictionary.image_norms_sq[atom_index] + lam * dictionary.atom_norms_sq[atom_index])
    if denominator <= 0.0:
        raise HypothesisViolationError(
            f"condition C1 > 0 violated by atom {atom_index} (zero denominator, lambda = {lam:g})"
        )
    return numerator**2 / denominator


def select_atom(state: RfmpState, dictionary: Dictionary, config: RfmpConfig) -> tuple[int, float]:
    eligible = state.usage_counts < config.repetition_cap
    if not np.any(eligible):
        raise RepetitionCapExhausted(
            f"every atom has been chosen {config.repetition_cap} times"
        )

    scores = np.where(eligible, selection_scores(state, dictionary, config.lam), -np.inf)
    if config.tie_break is TieBreak.HIGHEST_INDEX:
        index = len(scores) - 1 - int(np.argmax(scores[::-1]))
    else:
        index = int(np.argmax(scores))
    return index, float(scores[index])


def step_coefficient(state: RfmpState, dictionary: Dictionary, lam: float, chosen: int) -> float:
    numerator = float(dictionary.images[chosen] @ state.residual) - lam * float(state.fn_dot_atoms[chosen])
    denominator = float(dictionary.image_norms_sq[chosen] + lam * dictionary.atom_norms_sq[chosen])
    if denominator <= 0.0:
        raise HypothesisViolationError(
            f"condition C1 > 0 violated by atom {chosen} (zero denominator, lambda = {lam:g})"
        )
    return numerator / denominator


def apply_step(
    state: RfmpState,
    dictionary: Dictionary,
    lam: float,
    chosen: int,
    alpha: float,
    score: float,
    started: Optional[float] = None,
) -> RfmpState:
    if not np.isfinite(alpha):
        raise NumericalAbortError(f"non-finite step coefficient at step {state.iteration + 1}")

    state.approx += alpha * dictionary.atoms[chosen]
    state.residual -= alpha * dictionary.images[chosen]
    state.fn_dot_atoms += alpha * dictionary.gram[chosen]
    state.usage_counts[chosen] += 1
    state.coefficients[chosen] += alpha
    state.iteration += 1

    residual_sq = float(state.residual @ state.residual)
    state.energy = residual_sq + lam * norm_sq(dictionary.space, state.approx)
    if not np.isfinite(state.energy):
        raise NumericalAbortError(f"non-finite energy at step {state.iteration}")

    state.history.append(
        IterationRecord(
            n=state.iteration,
            atom=chosen,
            alpha=alpha,
            energy=state.energy,
            residual_norm=float(np.sqrt(residual_sq)),
            score=score,
            wall_time=time.perf_counter() - started if started is not None else 0.0,
        )
    )
    return state


def iterate(state: RfmpState, dictionary: Dictionary, config: RfmpConfig) -> RfmpState:
    """One greedy step: select, compute alpha, update F_n, R^n and the caches."""
    chosen, score = select_atom(state, dictionary, config)
    alpha = step_coefficient(state, dictionary, config.lam, chosen)
    return apply_step(state, dictionary, config.lam, chosen, alpha, score)


def residual_drift(state: RfmpState, op: ForwardOperator, data: npt.ArrayLike) -> float:
    """max |R^n - (y - F F_n)|."""
    direct = op.conform_data(data) - op.apply(state.approx)
    return float(np.abs(state.residual - direct).max())


def cache_drift(state: RfmpState, dictionary: Dictionary) -> float:
    """max |fn_dot_atoms - <F_n, d_i>_H|."""
    direct = dictionary.atoms @ dictionary.space.lower(state.approx)
    return float(np.abs(state.fn_dot_atoms - direct).max())


# ================================================================== #
#  Full solver
# ================================================================== #
class RfmpSolver:
    def __init__(
        self,
        operator: ForwardOperator,
        data: npt.ArrayLike,
        dictionary: Dictionary,
        config: RfmpConfig,
        span_policy: Optional[str] = None,
    ):
        self.operator = operator
        self.data = operator.conform_data(data, "data")
        self.dictionary = dictionary
        self.config = config
        self.span_policy = span_policy
        self.diagnostics: Optional[DictionaryDiagnostics] = None

    # ================================================================== #
    #  Step 1: Hypothesis gates
    # ================================================================== #
    def check_hypotheses(self) -> DictionaryDiagnostics:
        diag = diagnostics(self.dictionary, self.config.lam)
        logger.info(
            f"📊 Dictionary diagnostics — C1: {diag.c1:.6g}, C2: {diag.c2:.6g}, "
            f"semi-frame c: {diag.semi_frame_c:.6g}"
        )

        c1_check = check_c1_positive(diag)
        if not c1_check.passed:
            logger.error(f"❌ {c1_check.message}")
            raise HypothesisViolationError(c1_check.message)

        check_spanning(diag, self.span_policy)
        self.diagnostics = diag
        return diag

    # ================================================================== #
    #  Step 2: Greedy iteration
    # ================================================================== #
    def _next_step(self, state: RfmpState) -> tuple[int, float, float] | TerminationReason:
        if state.iteration >= self.config.max_iterations:
            return TerminationReason.MAX_ITERATIONS
        try:
            chosen, score = select_atom(state, self.dictionary, self.config)
        except RepetitionCapExhausted:
            return TerminationReason.CAP_EXHAUSTED

        if score < self.config.stop_energy_tol:
            return TerminationReason.ENERGY_BELOW_TOL
        alpha = step_coefficient(state, self.dictionary, self.config.lam, chosen)
        if abs(alpha) < self.config.stop_alpha_tol:
            return TerminationReason.ALPHA_BELOW_TOL
        return chosen, score, alpha

    def run(self) -> tuple[RfmpState, TerminationReason]:
        logger.info("🔰" + "=" * 58)
        logger.info(
            f"🚀 Starting RFMP — lambda: {self.config.lam:g}, cap: {self.config.repetition_cap}, "
            f"max iterations: {self.config.max_iterations}, atoms: {len(self.dictionary)}"
        )
        logger.info("🔰" + "=" * 58)

        if self.diagnostics is None:
            self.check_hypotheses()

        state = initial_state(
            self.operator, self.data, self.dictionary, self.config.lam, self.config.initial
        )
        logger.info(f"⚡ Initial energy E_0 = {state.energy:.6g}")

        started = time.perf_counter()
        log_every = max(settings.LOG_EVERY, 1)
        while True:
            step = self._next_step(state)
            if isinstance(step, TerminationReason):
                reason = step
                break
            chosen, score, alpha = step
            apply_step(state, self.dictionary, self.config.lam, chosen, alpha, score, started)

            if state.iteration % log_every == 0:
                logger.debug(
                    f"   🔁 n={state.iteration} atom={chosen} alpha={alpha:.3e} "
                    f"E={state.energy:.6e}"
                )

        logger.info(
            f"🏁 RFMP finished — {state.iteration} iteration(s), reason: {reason.value}, "
            f"E_n = {state.energy:.6g}, max usage: {state.max_usage}"
        )
        return state, reason


def solve(
    problem: tuple[ForwardOperator, npt.ArrayLike],
    dictionary: Dictionary,
    config: RfmpConfig,
) -> tuple[RfmpState, TerminationReason]:
    op, data = problem
    return RfmpSolver(op, data, dictionary, config).run()
