"""
Datasets of folded examples `z_i = -y_i x_i`.

Rows always have Euclidean norm at most one. Datasets are produced by a
seeded separable generator, by the fixed lower-bound construction, or
loaded from CSV files that round-trip doubles exactly.
"""

import csv
import enum
import logging
import math
import pathlib
import typing

import numpy as np

from marginlab._utils import atomic_write, format_float
from marginlab.exceptions import ConfigurationError, DatasetLoadError, DomainError
from marginlab.types import ArrayLike, DataDict, Matrix, PathLike, Vector

__all__ = [
    "Schema",
    "ProvenanceKind",
    "Provenance",
    "Dataset",
    "make_dataset",
    "gen_separable",
    "lower_bound_dataset",
    "is_lower_bound_dataset",
    "load_dataset",
    "save_dataset",
]

logger = logging.getLogger(__name__)

NORM_TOL = 1e-12
LOAD_NORM_TOL = 1e-9


class Schema(str, enum.Enum):
    """CSV layouts understood by `load_dataset`."""

    FOLDED = "folded"
    """Rows `z1,...,zd`."""
    LABELED = "labeled"
    """Rows `y,x1,...,xd` with `y` in {-1, +1}."""


class ProvenanceKind(str, enum.Enum):
    GENERATED = "generated"
    LOWER_BOUND = "lower_bound"
    LOADED = "loaded"
    MANUAL = "manual"


@typing.final
class Provenance(typing.NamedTuple):
    """Where a dataset came from."""

    kind: ProvenanceKind
    seed: typing.Optional[int] = None
    params: typing.Optional[DataDict] = None
    path: typing.Optional[str] = None


@typing.final
class Dataset(typing.NamedTuple):
    """Folded data matrix with one example per row."""

    Z: Matrix
    """Read-only `n x d` matrix; row i is `z_i = -y_i x_i`."""
    provenance: Provenance

    @property
    def n(self) -> int:
        return int(self.Z.shape[0])

    @property
    def d(self) -> int:
        return int(self.Z.shape[1])

    def row_norms(self) -> Vector:
        return np.linalg.norm(self.Z, axis=1)


def make_dataset(
    Z: ArrayLike,
    provenance: typing.Optional[Provenance] = None,
    *,
    norm_tol: float = NORM_TOL,
) -> Dataset:
    """
    Build a dataset from a folded matrix.

    :param Z: `n x d` matrix with `n, d >= 1`
    :param provenance: Origin of the data, `manual` by default
    :param norm_tol: Allowed excess of the row norms over one
    :raises DomainError: On a bad shape or a row of norm above `1 + norm_tol`.
    """
    matrix = np.array(Z, dtype=np.float64, copy=True)
    if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
        raise DomainError(f"Expected a non-empty n x d matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise DomainError("Dataset entries must be finite")
    norms = np.linalg.norm(matrix, axis=1)
    worst = int(np.argmax(norms))
    if norms[worst] > 1.0 + norm_tol:
        raise DomainError(
            f"row {worst + 1} exceeds unit norm ({format_float(norms[worst])})"
        )
    matrix.setflags(write=False)
    return Dataset(matrix, provenance or Provenance(ProvenanceKind.MANUAL))


def _unit(vector: Vector) -> Vector:
    return vector / np.linalg.norm(vector)


def _orthogonal_part(rows: Matrix, direction: Vector) -> Matrix:
    return rows - np.outer(rows @ direction, direction)


def gen_separable(n: int, d: int, target_margin: float, seed: int) -> Dataset:
    """
    Generate a separable dataset whose maximum margin equals `target_margin`.

    Points come from an isotropic Gaussian and are labeled by a random unit
    direction `u*`. Points closer to the separator than the target get their
    margin pushed out, and every signed point is rescaled into the unit
    ball. Up to three rows are then replaced by support vectors with margin
    exactly `target_margin` whose components orthogonal to `u*` sum to zero,
    so that `u*` is the maximum-margin direction and the margin is attained.

    :param n: Number of examples, at least 1
    :param d: Dimension, at least 1
    :param target_margin: Margin in (0, 1)
    :param seed: Seed for `numpy.random.default_rng`
    :raises ConfigurationError: For infeasible parameters.
    """
    if not isinstance(n, int) or n < 1 or not isinstance(d, int) or d < 1:
        raise ConfigurationError(f"n and d must be positive integers, got n={n!r}, d={d!r}")
    if not (0.0 < target_margin < 1.0):
        raise ConfigurationError(
            f"target_margin must lie in (0, 1), got {target_margin!r}"
        )

    rng = np.random.default_rng(seed)
    u_star = _unit(rng.standard_normal(d))
    while not np.all(np.isfinite(u_star)):
        u_star = _unit(rng.standard_normal(d))

    # signed points a_i = y_i x_i, margins <u*, a_i>
    points = rng.standard_normal((n, d))
    signs = np.where(points @ u_star >= 0.0, 1.0, -1.0)
    points = points * signs[:, None]
    points /= np.maximum(1.0, np.linalg.norm(points, axis=1))[:, None]

    floor = target_margin + 0.05 * (1.0 - target_margin)
    margins = points @ u_star
    pushed = floor + rng.uniform(0.0, 0.5, size=n) * (1.0 - floor)
    margins = np.where(margins < floor, pushed, margins)
    ortho = _orthogonal_part(points, u_star)
    room = np.sqrt(np.maximum(0.0, 1.0 - margins**2))
    lengths = np.linalg.norm(ortho, axis=1)
    scale = np.where(lengths > room, room / np.where(lengths > 0.0, lengths, 1.0), 1.0)
    ortho *= scale[:, None]

    n_support = min(n, 3) if d > 1 else min(n, 1)
    support_ortho = np.zeros((n_support, d))
    if d > 1 and n_support > 1:
        raw = _orthogonal_part(rng.standard_normal((n_support - 1, d)), u_star)
        support_ortho[:-1] = raw
        support_ortho[-1] = -raw.sum(axis=0)
        limit = 0.9 * math.sqrt(1.0 - target_margin**2)
        biggest = float(np.max(np.linalg.norm(support_ortho, axis=1)))
        if biggest > 0.0:
            support_ortho *= limit * rng.uniform(0.3, 1.0) / biggest
    margins[:n_support] = target_margin
    ortho[:n_support] = support_ortho

    signed = ortho + np.outer(margins, u_star)
    order = rng.permutation(n)
    Z = -signed[order]
    norms = np.linalg.norm(Z, axis=1)
    Z = Z / np.maximum(1.0, norms)[:, None]

    params: DataDict = {
        "n": n,
        "d": d,
        "target_margin": target_margin,
        "u_star": u_star.tolist(),
        "support_rows": sorted(int(i) for i in np.argsort(order)[:n_support]),
    }
    logger.debug("Generated separable dataset n=%d d=%d margin=%r", n, d, target_margin)
    return make_dataset(Z, Provenance(ProvenanceKind.GENERATED, seed=seed, params=params))


def lower_bound_dataset(n: int) -> Dataset:
    """
    Two-dimensional dataset with `z_1 = (0.1, 0)` and `z_2 = ... = z_n = (0.2, 0.2)`.

    Its maximum margin is 0.1 and gradient descent on it keeps a residual
    orthogonal to the max-margin direction of size at least `ln(n/2)`.

    :raises DomainError: If `n < 2`.
    """
    if not isinstance(n, int) or n < 2:
        raise DomainError(f"The lower-bound dataset needs n >= 2, got {n!r}")
    Z = np.tile(np.array([0.2, 0.2]), (n, 1))
    Z[0] = (0.1, 0.0)
    return make_dataset(Z, Provenance(ProvenanceKind.LOWER_BOUND, params={"n": n}))


def is_lower_bound_dataset(ds: Dataset) -> bool:
    """Whether `ds` has exactly the lower-bound construction's rows."""
    if ds.d != 2 or ds.n < 2:
        return False
    return bool(
        np.array_equal(ds.Z[0], [0.1, 0.0])
        and np.array_equal(ds.Z[1:], np.tile([0.2, 0.2], (ds.n - 1, 1)))
    )


SCHEMA_PREFIX = "# schema="


def save_dataset(ds: Dataset, path: PathLike, schema: Schema = Schema.FOLDED) -> pathlib.Path:
    """
    Write a dataset as CSV with a `# schema=...` header line.

    Floats are written with `repr`, which round-trips doubles exactly. The
    labeled schema writes every row with label `+1` and `x_i = -z_i`.
    """
    schema = Schema(schema)
    lines = [f"{SCHEMA_PREFIX}{schema.value}"]
    for row in ds.Z:
        values = [format_float(v) for v in row]
        if schema is Schema.LABELED:
            values = ["1"] + [format_float(-v) for v in row]
        lines.append(",".join(values))
    return atomic_write(path, "\n".join(lines) + "\n")


def _parse_row(
    cells: typing.List[str],
    row_number: int,
    schema: Schema,
) -> Vector:
    try:
        values = [float(cell) for cell in cells]
    except ValueError as exc:
        raise DatasetLoadError(
            f"row {row_number} is malformed: {exc}",
            location=[row_number],
            code="malformed_row",
        ) from exc
    if not all(math.isfinite(v) for v in values):
        raise DatasetLoadError(
            f"row {row_number} contains a non-finite value",
            location=[row_number],
            code="malformed_row",
        )
    if schema is Schema.FOLDED:
        return np.array(values)
    label, features = values[0], values[1:]
    if label not in (-1.0, 1.0):
        raise DatasetLoadError(
            f"row {row_number} has label {label!r}, expected -1 or 1",
            location=[row_number],
            code="invalid_label",
        )
    return -label * np.array(features)


def load_dataset(path: PathLike) -> Dataset:
    """
    Load a dataset CSV.

    An optional first line `# schema=folded` or `# schema=labeled` selects
    the layout (folded by default). Other `#` lines and blank lines are
    skipped. Labeled rows are folded to `z = -y x`.

    :raises DatasetLoadError: Naming every bad row (1-based, counting data
        rows only): malformed values, inconsistent dimensions and rows of
        norm above `1 + 1e-9`.
    """
    source = pathlib.Path(path)
    if not source.is_file():
        raise DatasetLoadError(
            f"Dataset file not found: {str(source)!r}", code="file_missing"
        )

    schema = Schema.FOLDED
    rows: typing.List[Vector] = []
    width: typing.Optional[int] = None
    with source.open(newline="") as handle, DatasetLoadError.collect(
        DatasetLoadError, f"Cannot load dataset {source.name!r}"
    ) as errors:
        row_number = 0
        for line_number, cells in enumerate(csv.reader(handle), start=1):
            text = ",".join(cells).strip()
            if not text:
                continue
            if text.startswith("#"):
                if line_number == 1 and text.startswith(SCHEMA_PREFIX):
                    try:
                        schema = Schema(text[len(SCHEMA_PREFIX) :].strip())
                    except ValueError:
                        errors.add_detail(
                            f"unknown schema {text[len(SCHEMA_PREFIX):]!r}",
                            location=["schema"],
                            code="invalid_schema",
                        )
                continue

            row_number += 1
            try:
                row = _parse_row(cells, row_number, schema)
            except DatasetLoadError as exc:
                errors.add(exc)
                continue
            if width is None:
                width = row.size
            if row.size != width or row.size == 0:
                errors.add_detail(
                    f"row {row_number} has {row.size} columns, expected {width}",
                    location=[row_number],
                    code="dimension_mismatch",
                )
                continue
            norm = float(np.linalg.norm(row))
            if norm > 1.0 + LOAD_NORM_TOL:
                errors.add_detail(
                    f"row {row_number} exceeds unit norm ({format_float(norm)})",
                    location=[row_number],
                    code="norm_exceeded",
                )
                continue
            rows.append(row)

        if row_number == 0 and len(errors.error_list) == 1:
            errors.add_detail("file contains no data rows", code="empty")

    return make_dataset(
        np.vstack(rows),
        Provenance(ProvenanceKind.LOADED, path=str(source)),
        norm_tol=LOAD_NORM_TOL,
    )
