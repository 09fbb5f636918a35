import os
import tempfile
from typing import NamedTuple, Optional

import numpy as np
from loguru import logger
from src.core.hilbert import HilbertSpec
from src.core.operator import ForwardOperator, check_data_basis
from src.core.dictionary import Dictionary, build_dictionary
from src.core.errors import ContractViolationError, ProblemFormatError

BLOCKS = ("OPERATOR", "METRIC", "DATA", "DICTIONARY", "INITIAL", "DATABASIS")
MATRIX_BLOCKS = ("OPERATOR", "METRIC", "DICTIONARY", "DATABASIS")
REQUIRED_BLOCKS = ("OPERATOR", "DATA", "DICTIONARY")


class Problem(NamedTuple):
    operator: ForwardOperator
    data: np.ndarray
    dictionary: Dictionary
    initial: Optional[np.ndarray] = None
    data_basis: Optional[np.ndarray] = None

    @property
    def space(self) -> HilbertSpec:
        return self.operator.space


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def atomic_write_text(path: str, text: str) -> str:
    """Write to a temporary sibling and rename it over `path`."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        # mkstemp creates 0600; match a plain open() under the current umask
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp_path, 0o666 & ~umask)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    return path


# ================================================================== #
#  Problem file: parsing
# ================================================================== #
def _parse_values(block: str, row: int, line: str) -> list[float]:
    values = []
    for token in line.split():
        try:
            value = float(token)
        except ValueError:
            raise ProblemFormatError(f"{block} row {row}: could not parse {token!r}") from None
        if not np.isfinite(value):
            raise ProblemFormatError(f"{block} row {row}: non-finite value {token!r}")
        values.append(value)
    return values


def _parse_header(line: str, lineno: int) -> tuple[str, list[int]]:
    parts = line.split()
    name = parts[0].upper()
    if name not in BLOCKS:
        raise ProblemFormatError(f"line {lineno}: unknown block {parts[0]!r}")
    try:
        shape = [int(p) for p in parts[1:]]
    except ValueError:
        raise ProblemFormatError(f"line {lineno}: {name} shape must be integers") from None

    expected = 2 if name in MATRIX_BLOCKS else 1
    if len(shape) != expected or any(s < 1 for s in shape):
        raise ProblemFormatError(
            f"line {lineno}: {name} needs {expected} positive size(s), got {parts[1:]}"
        )
    return name, shape


def _read_blocks(text: str) -> dict[str, np.ndarray]:
    blocks: dict[str, np.ndarray] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i].split("#", 1)[0].strip()
        i += 1
        if not line:
            continue

        name, shape = _parse_header(line, i)
        if name in blocks:
            raise ProblemFormatError(f"line {i}: duplicate {name} block")

        rows: list[list[float]] = []
        closed = False
        while i < len(lines):
            body = lines[i].split("#", 1)[0].strip()
            i += 1
            if not body:
                continue
            if body.upper() == "END":
                closed = True
                break
            rows.append(_parse_values(name, len(rows) + 1, body))
        if not closed:
            raise ProblemFormatError(f"{name} block is missing its END line")

        if name in MATRIX_BLOCKS:
            n_rows, n_cols = shape
            for r, values in enumerate(rows, 1):
                if len(values) != n_cols:
                    raise ProblemFormatError(
                        f"{name} row {r}: expected {n_cols} values, got {len(values)}"
                    )
            if len(rows) != n_rows:
                raise ProblemFormatError(f"{name}: expected {n_rows} rows, got {len(rows)}")
            blocks[name] = np.array(rows, dtype=np.float64).reshape(n_rows, n_cols)
        else:
            flat = [v for values in rows for v in values]
            if len(flat) != shape[0]:
                raise ProblemFormatError(
                    f"{name}: expected {shape[0]} values, got {len(flat)}"
                )
            blocks[name] = np.array(flat, dtype=np.float64)

    missing = [b for b in REQUIRED_BLOCKS if b not in blocks]
    if missing:
        raise ProblemFormatError(f"missing required block(s): {', '.join(missing)}")
    return blocks


def parse_problem(text: str) -> Problem:
    blocks = _read_blocks(text)
    matrix = blocks["OPERATOR"]
    ell, dim = matrix.shape

    data = blocks["DATA"]
    if data.shape[0] != ell:
        raise ProblemFormatError(f"data length {data.shape[0]}, operator rows {ell}")

    metric = blocks.get("METRIC")
    if metric is not None and metric.shape != (dim, dim):
        raise ProblemFormatError(f"METRIC: shape {metric.shape}, operator columns {dim}")

    atoms = blocks["DICTIONARY"]
    if atoms.shape[1] != dim:
        raise ProblemFormatError(
            f"DICTIONARY: atoms have {atoms.shape[1]} entries, operator columns {dim}"
        )

    initial = blocks.get("INITIAL")
    if initial is not None and initial.shape[0] != dim:
        raise ProblemFormatError(
            f"INITIAL: length {initial.shape[0]}, operator columns {dim}"
        )

    try:
        space = HilbertSpec(dim, metric)
    except ContractViolationError as e:
        raise ProblemFormatError(f"METRIC: {e}") from e

    op = ForwardOperator(space, matrix)

    try:
        dictionary = build_dictionary(space, op, atoms)
    except ContractViolationError as e:
        raise ProblemFormatError(f"DICTIONARY: {e}") from e

    data_basis = blocks.get("DATABASIS")
    if data_basis is not None:
        if data_basis.shape[0] != ell:
            raise ProblemFormatError(
                f"DATABASIS: {data_basis.shape[0]} rows, operator rows {ell}"
            )
        try:
            data_basis = check_data_basis(op, data_basis)
        except ContractViolationError as e:
            raise ProblemFormatError(f"DATABASIS: {e}") from e

    return Problem(op, data, dictionary, initial, data_basis)


def load_problem(path: str) -> Problem:
    logger.info(f"📂 Loading problem: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ProblemFormatError(f"cannot read problem file {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise ProblemFormatError(f"problem file {path} is not valid UTF-8: {e}") from e

    problem = parse_problem(text)
    logger.info(
        f"📐 Problem shape — data: {problem.operator.data_dim}, "
        f"dim: {problem.space.dim}, atoms: {len(problem.dictionary)}"
    )
    return problem


# ================================================================== #
#  Problem file: writing
# ================================================================== #
def _matrix_block(name: str, matrix: np.ndarray) -> list[str]:
    lines = [f"{name} {matrix.shape[0]} {matrix.shape[1]}"]
    lines += [" ".join(_fmt(v) for v in row) for row in matrix]
    lines.append("END")
    return lines


def _vector_block(name: str, vector: np.ndarray) -> list[str]:
    return [f"{name} {vector.shape[0]}", " ".join(_fmt(v) for v in vector), "END"]


def format_problem(problem: Problem) -> str:
    lines = ["# rfmp problem file"]
    lines += _matrix_block("OPERATOR", problem.operator.matrix)
    if not problem.space.is_euclidean:
        lines += _matrix_block("METRIC", problem.space.metric)
    lines += _vector_block("DATA", np.asarray(problem.data))
    lines += _matrix_block("DICTIONARY", problem.dictionary.atoms)
    if problem.initial is not None:
        lines += _vector_block("INITIAL", np.asarray(problem.initial))
    if problem.data_basis is not None:
        lines += _matrix_block("DATABASIS", np.asarray(problem.data_basis))
    return "\n".join(lines) + "\n"


def write_problem(path: str, problem: Problem) -> str:
    atomic_write_text(path, format_problem(problem))
    logger.info(f"💾 Saved problem: {path}")
    return path


def format_vector(vector: np.ndarray) -> str:
    return "\n".join(_fmt(v) for v in vector) + "\n"


# ================================================================== #
#  Random desk-scale problems
# ================================================================== #
def random_spd_metric(rng: np.random.Generator, dim: int, low: float = 0.5, high: float = 2.0) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigenvalues = rng.uniform(low, high, size=dim)
    metric = (q * eigenvalues) @ q.T
    return 0.5 * (metric + metric.T)


def random_operator(
    rng: np.random.Generator,
    space: HilbertSpec,
    data_dim: int,
    rank: Optional[int] = None,
    sigma_range: tuple[float, float] = (0.5, 1.5),
) -> ForwardOperator:
    """Operator whose metric-aware singular values lie in `sigma_range` (zero beyond rank)."""
    full_rank = min(data_dim, space.dim)
    rank = full_rank if rank is None else rank
    if not 0 <= rank <= full_rank:
        raise ContractViolationError(f"rank {rank} outside [0, {full_rank}]")

    u, _ = np.linalg.qr(rng.standard_normal((data_dim, data_dim)))
    v, _ = np.linalg.qr(rng.standard_normal((space.dim, space.dim)))
    sigmas = np.sort(rng.uniform(*sigma_range, size=rank))[::-1]
    b = (u[:, :rank] * sigmas) @ v[:, :rank].T
    # B = A L^{-T}, hence A = B L^T.
    return ForwardOperator(space, b @ space.cholesky.T)


def random_problem(
    rng: np.random.Generator,
    data_dim: int,
    dim: int,
    n_atoms: int,
    rank: Optional[int] = None,
    spanning: bool = True,
    weighted: bool = False,
) -> Problem:
    """Random problem; with `spanning` the dictionary starts with an H-orthonormal basis."""
    metric = random_spd_metric(rng, dim) if weighted else None
    space = HilbertSpec(dim, metric)
    op = random_operator(rng, space, data_dim, rank)

    atoms = rng.standard_normal((n_atoms, dim))
    if spanning:
        atoms = np.vstack([space.orthonormal_basis(), atoms]) if n_atoms else space.orthonormal_basis()
    dictionary = build_dictionary(space, op, atoms)
    data = rng.standard_normal(data_dim)
    return Problem(op, data, dictionary)
