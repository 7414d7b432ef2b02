"""A small column-labelled table keyed by engine and cycle.

Rows are grouped by engine (each unit's rows contiguous, cycles ascending)
so per-engine passes are cheap slices. Transform steps never mutate a frame
in place; they return a new one and append a provenance note.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .cmapss import FEATURE_COLUMNS, EngineSeries
from .errors import ColumnMismatchError, ShapeMismatchError


@dataclass(slots=True)
class FeatureFrame:
    columns: tuple[str, ...]
    values: np.ndarray
    units: np.ndarray
    cycles: np.ndarray
    provenance: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.units = np.asarray(self.units, dtype=np.int64)
        self.cycles = np.asarray(self.cycles, dtype=np.int64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise ShapeMismatchError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.columns)} columns"
            )
        n = self.values.shape[0]
        if self.units.shape != (n,) or self.cycles.shape != (n,):
            raise ShapeMismatchError("units/cycles must have one entry per row")
        if len(set(self.columns)) != len(self.columns):
            raise ColumnMismatchError("duplicate column names")

    @classmethod
    def from_series(
        cls,
        series: Sequence[EngineSeries],
        columns: tuple[str, ...] = FEATURE_COLUMNS,
    ) -> "FeatureFrame":
        if columns != FEATURE_COLUMNS:
            raise ColumnMismatchError("from_series only builds the full feature set")
        blocks = [eng.feature_matrix() for eng in series]
        values = np.vstack(blocks) if blocks else np.empty((0, len(columns)))
        units = np.concatenate(
            [np.full(len(eng), eng.unit_id, dtype=np.int64) for eng in series]
        ) if series else np.empty(0, dtype=np.int64)
        cycles = np.concatenate(
            [np.array([r.cycle for r in eng.records], dtype=np.int64) for eng in series]
        ) if series else np.empty(0, dtype=np.int64)
        return cls(columns=columns, values=values, units=units, cycles=cycles)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return len(self.columns)

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise ColumnMismatchError(f"no column named {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def engine_groups(self) -> Iterator[tuple[int, slice]]:
        """Yield (unit_id, row slice) for each contiguous engine block."""
        n = self.n_rows
        start = 0
        while start < n:
            unit = self.units[start]
            stop = start
            while stop < n and self.units[stop] == unit:
                stop += 1
            yield int(unit), slice(start, stop)
            start = stop

    def with_values(self, values: np.ndarray, note: str) -> "FeatureFrame":
        return FeatureFrame(
            columns=self.columns,
            values=values,
            units=self.units,
            cycles=self.cycles,
            provenance=self.provenance + (note,),
        )

    def select(self, names: Sequence[str], note: str | None = None) -> "FeatureFrame":
        idx = [self.index(n) for n in names]
        return FeatureFrame(
            columns=tuple(names),
            values=self.values[:, idx],
            units=self.units,
            cycles=self.cycles,
            provenance=self.provenance + ((note,) if note else ()),
        )

    def append_column(self, name: str, values: np.ndarray, note: str) -> "FeatureFrame":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.n_rows,):
            raise ShapeMismatchError(
                f"new column has shape {values.shape}, frame has {self.n_rows} rows"
            )
        return FeatureFrame(
            columns=self.columns + (name,),
            values=np.column_stack([self.values, values]),
            units=self.units,
            cycles=self.cycles,
            provenance=self.provenance + (note,),
        )
