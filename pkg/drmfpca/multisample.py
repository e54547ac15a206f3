"""Multi-sample data, the pooled empirical measure, and CSV ingestion."""

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import DataError, DegenerateSampleError, ParseError, ValidationError


class Layout(Enum):
    """CSV layout options."""

    LONG = "long"
    WIDE = "wide"


@dataclass(frozen=True)
class MultiSample:
    """The m+1 raw samples of a density ratio analysis.

    Population 0 is the base population of the model. Samples are stored as
    read-only float arrays at full double precision.

    Attributes:
        samples: One array per population
        labels: Population labels, in index order
    """

    samples: Tuple[np.ndarray, ...]
    labels: Tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(self.samples) < 1:
            raise ValidationError("MultiSample needs at least one population")

        frozen = []
        for k, sample in enumerate(self.samples):
            values = np.array(sample, dtype=float).ravel()
            if values.size < 2:
                raise DegenerateSampleError(
                    f"Population {k} has {values.size} observations; at least 2 "
                    "are required",
                    details={"population": k, "size": int(values.size)},
                )
            if not np.all(np.isfinite(values)):
                raise DataError(
                    f"Population {k} contains non-finite values",
                    details={"population": k},
                )
            values.setflags(write=False)
            frozen.append(values)
        object.__setattr__(self, "samples", tuple(frozen))

        if not self.labels:
            object.__setattr__(
                self, "labels", tuple(str(k) for k in range(len(frozen)))
            )
        elif len(self.labels) != len(frozen):
            raise ValidationError(
                f"Got {len(self.labels)} labels for {len(frozen)} populations"
            )

    @classmethod
    def from_arrays(
        cls,
        samples: Sequence[Sequence[float]],
        labels: Optional[Sequence[str]] = None,
    ) -> "MultiSample":
        """Build a MultiSample from any sequence of numeric sequences.

        Args:
            samples: One sequence of observations per population
            labels: Optional population labels

        Returns:
            Validated MultiSample

        Example:
            ```python
            ms = MultiSample.from_arrays([[1.0, 2.0], [3.0, 4.0]])
            assert ms.total == 4
            ```
        """
        return cls(
            samples=tuple(np.asarray(s, dtype=float) for s in samples),
            labels=tuple(labels) if labels is not None else (),
        )

    @property
    def m(self) -> int:
        """Number of non-base populations."""
        return len(self.samples) - 1

    @property
    def sizes(self) -> np.ndarray:
        """Sample sizes n_0, ..., n_m."""
        return np.array([s.size for s in self.samples], dtype=int)

    @property
    def total(self) -> int:
        """Total sample size N."""
        return int(self.sizes.sum())

    @property
    def rho(self) -> np.ndarray:
        """Sample fractions n_k / N."""
        sizes = self.sizes
        return sizes / sizes.sum()

    @property
    def values(self) -> np.ndarray:
        """All observations concatenated in sample order."""
        return np.concatenate(self.samples)

    @property
    def groups(self) -> np.ndarray:
        """Population index of each entry of ``values``."""
        return np.repeat(np.arange(len(self.samples)), self.sizes)

    def reorder(self, order: Sequence[int]) -> "MultiSample":
        """Return the populations permuted so that new k is old ``order[k]``.

        Args:
            order: Permutation of 0..m

        Returns:
            Permuted MultiSample

        Raises:
            ValidationError: If ``order`` is not a permutation
        """
        if sorted(order) != list(range(len(self.samples))):
            raise ValidationError(f"Not a permutation of populations: {order}")
        return MultiSample(
            samples=tuple(self.samples[k] for k in order),
            labels=tuple(self.labels[k] for k in order),
        )

    def affine(self, scale: float, shift: float) -> "MultiSample":
        """Return every observation mapped by x -> scale * x + shift."""
        if scale <= 0:
            raise ValidationError(f"Scale must be positive, got {scale}")
        return MultiSample(
            samples=tuple(scale * s + shift for s in self.samples),
            labels=self.labels,
        )


@dataclass(frozen=True)
class PooledEmpirical:
    """Empirical distribution of the pooled data.

    Every observation carries weight 1/N; ties are kept as repeated points.

    Attributes:
        points: Sorted pooled observations
    """

    points: np.ndarray

    @property
    def size(self) -> int:
        """Number of pooled points N."""
        return int(self.points.size)

    def integrate(
        self, integrand: Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]
    ) -> float:
        """Integrate a function against the pooled empirical measure.

        Args:
            integrand: Either a callable evaluated at the pooled points or an
                array of values already aligned with ``points``

        Returns:
            N^-1 times the sum of the integrand over the pooled points
        """
        values = integrand(self.points) if callable(integrand) else integrand
        return float(np.mean(np.asarray(values, dtype=float)))


def pool(ms: MultiSample) -> PooledEmpirical:
    """Pool all samples into their empirical distribution.

    Args:
        ms: The multi-sample data

    Returns:
        PooledEmpirical with the sorted concatenation of every sample

    Example:
        ```python
        pooled = pool(MultiSample.from_arrays([[1, 3], [2, 4]]))
        assert list(pooled.points) == [1, 2, 3, 4]
        assert pooled.integrate(lambda x: x) == 2.5
        ```
    """
    points = np.sort(ms.values, kind="mergesort")
    points.setflags(write=False)
    return PooledEmpirical(points=points)


def _parse_value(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(
            f"load_csv: non-numeric value {text!r} in column {column!r} at row {row}",
            details={"row": row, "column": column, "value": text},
        )
    if not math.isfinite(value):
        raise ParseError(
            f"load_csv: non-finite value {text!r} in column {column!r} at row {row}",
            details={"row": row, "column": column, "value": text},
        )
    return value


def load_csv(path: Union[str, Path], layout: Union[Layout, str] = Layout.LONG) -> MultiSample:
    """Read a multi-sample data set from a CSV file.

    Rows are numbered from 1 starting at the first data row (the header is
    not counted).

    Args:
        path: CSV file path (UTF-8, header row required)
        layout: ``long`` for ``group,value`` rows, ``wide`` for one column per
            population. Group labels map to indices in first-appearance order.

    Returns:
        Validated MultiSample

    Raises:
        ValidationError: If the layout is unknown or the header is malformed
        DataError: If the file cannot be read
        ParseError: If a value is not numeric or a row has too many fields
        DegenerateSampleError: If any population has fewer than 2 values

    Example:
        ```python
        ms = load_csv("incomes.csv", layout="long")
        print(ms.sizes, ms.labels)
        ```
    """
    try:
        layout = Layout(layout)
    except ValueError:
        raise ValidationError(f"load_csv: unknown layout {layout!r}; use long or wide")

    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
    except OSError as e:
        raise DataError(f"load_csv: cannot read {path}: {e}", details={"path": str(path)})

    if not rows:
        raise ValidationError(f"load_csv: {path} has no header row")
    header = [name.strip() for name in rows[0]]
    body = rows[1:]

    groups: Dict[str, List[float]] = {}
    if layout is Layout.LONG:
        if header[:2] != ["group", "value"]:
            raise ValidationError(
                f"load_csv: long layout needs header 'group,value', got {header}"
            )
        for row_number, row in enumerate(body, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise ParseError(
                    f"load_csv: row {row_number} has {len(row)} fields, expected 2",
                    details={"row": row_number},
                )
            label = row[0].strip()
            groups.setdefault(label, []).append(
                _parse_value(row[1].strip(), row_number, "value")
            )
    else:
        if any(not name for name in header):
            raise ValidationError(f"load_csv: wide layout has an empty column name in {header}")
        duplicates = sorted({name for name in header if header.count(name) > 1})
        if duplicates:
            raise ValidationError(
                f"load_csv: wide layout has duplicate column names {duplicates}",
                details={"duplicates": duplicates},
            )
        for name in header:
            groups[name] = []
        for row_number, row in enumerate(body, start=1):
            if len(row) > len(header):
                raise ParseError(
                    f"load_csv: row {row_number} has {len(row)} fields, "
                    f"expected at most {len(header)}",
                    details={"row": row_number},
                )
            for name, cell in zip(header, row):
                if cell.strip():
                    groups[name].append(_parse_value(cell.strip(), row_number, name))

    if len(groups) < 2:
        raise DegenerateSampleError(
            f"load_csv: found {len(groups)} population(s); at least 2 are required"
        )
    for label, values in groups.items():
        if len(values) < 2:
            raise DegenerateSampleError(
                f"load_csv: population {label!r} has {len(values)} observations; "
                "at least 2 are required",
                details={"population": label, "size": len(values)},
            )

    return MultiSample.from_arrays(list(groups.values()), labels=list(groups.keys()))
