import numpy as np
import pytest
from loguru import logger

from src.core.hilbert import HilbertSpec
from src.core.operator import ForwardOperator
from src.core.dictionary import build_dictionary
from src.core.utils import Problem


def make_problem(matrix, data, atoms, metric=None, initial=None, data_basis=None) -> Problem:
    matrix = np.asarray(matrix, dtype=np.float64)
    space = HilbertSpec(matrix.shape[1], metric)
    op = ForwardOperator(space, matrix)
    dictionary = build_dictionary(space, op, atoms)
    return Problem(op, np.asarray(data, dtype=np.float64), dictionary, initial, data_basis)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def problem_factory():
    return make_problem


@pytest.fixture
def identity_problem():
    """F = I_2, y = (1, 0), canonical basis as dictionary."""
    return make_problem(np.eye(2), [1.0, 0.0], np.eye(2))


@pytest.fixture(autouse=True)
def quiet_logs():
    logger.remove()
    logger.add(lambda _: None, level="WARNING")
    yield
