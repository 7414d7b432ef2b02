"""Reading, validation, and snapshotting of CMAPSS-style run-to-failure data.

The on-disk format is whitespace-delimited text, 26 numeric fields per row:
unit id, cycle index, three operational settings, and 21 sensor channels.
Train units run to failure; test units are truncated early and ship with a
separate file holding one true remaining-life value per unit.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    CountMismatchError,
    DuplicateCycleError,
    GapInCyclesError,
    NonNumericError,
    RowArityError,
)

N_SETTINGS = 3
N_SENSORS = 21
N_FIELDS = 2 + N_SETTINGS + N_SENSORS

SETTING_COLUMNS: tuple[str, ...] = tuple(f"setting_{i}" for i in range(1, N_SETTINGS + 1))
SENSOR_COLUMNS: tuple[str, ...] = tuple(f"sensor_{i}" for i in range(1, N_SENSORS + 1))
FEATURE_COLUMNS: tuple[str, ...] = SETTING_COLUMNS + SENSOR_COLUMNS
SNAPSHOT_COLUMNS: tuple[str, ...] = ("unit_id", "cycle") + FEATURE_COLUMNS


@dataclass(frozen=True, slots=True)
class CycleRecord:
    """One observed cycle of one engine."""

    unit_id: int
    cycle: int
    settings: tuple[float, ...]
    sensors: tuple[float, ...]

    def features(self) -> tuple[float, ...]:
        return self.settings + self.sensors


@dataclass(frozen=True, slots=True)
class EngineSeries:
    """All cycles of one engine, sorted by cycle, dense from 1."""

    unit_id: int
    records: tuple[CycleRecord, ...]

    @property
    def max_cycle(self) -> int:
        return self.records[-1].cycle

    def __len__(self) -> int:
        return len(self.records)

    def feature_matrix(self) -> np.ndarray:
        """Settings and sensors as a float64 array, one row per cycle."""
        return np.array([r.features() for r in self.records], dtype=np.float64)


@dataclass(slots=True)
class DatasetSplit:
    """A train/test pair plus the per-test-unit true remaining life."""

    train: list[EngineSeries]
    test: list[EngineSeries]
    true_rul: list[int]


def _line_iter(source: str | IO[str] | Iterable[str]) -> Iterator[tuple[int, str]]:
    if isinstance(source, str):
        source = io.StringIO(source)
    for lineno, line in enumerate(source, start=1):
        if line.strip():
            yield lineno, line


def _positive_int(token: str, lineno: int, what: str) -> int:
    try:
        value = float(token)
    except ValueError:
        raise NonNumericError(f"line {lineno}: {what} {token!r} is not numeric") from None
    if not value.is_integer() or value < 1:
        raise NonNumericError(f"line {lineno}: {what} {token!r} is not a positive integer")
    return int(value)


def parse_records(source: str | IO[str] | Iterable[str]) -> list[CycleRecord]:
    """Parse raw rows into records, preserving input order.

    `source` is either the text itself or anything that yields lines.
    Blank lines are skipped. Raises RowArityError or NonNumericError with
    the offending 1-based line number in the message.
    """
    records: list[CycleRecord] = []
    for lineno, line in _line_iter(source):
        tokens = line.split()
        if len(tokens) != N_FIELDS:
            raise RowArityError(
                f"line {lineno}: expected {N_FIELDS} fields, got {len(tokens)}"
            )
        unit_id = _positive_int(tokens[0], lineno, "unit id")
        cycle = _positive_int(tokens[1], lineno, "cycle")
        try:
            values = [float(t) for t in tokens[2:]]
        except ValueError:
            bad = next(t for t in tokens[2:] if not _is_float(t))
            raise NonNumericError(f"line {lineno}: field {bad!r} is not numeric") from None
        records.append(
            CycleRecord(
                unit_id=unit_id,
                cycle=cycle,
                settings=tuple(values[:N_SETTINGS]),
                sensors=tuple(values[N_SETTINGS:]),
            )
        )
    return records


def _is_float(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def group_engines(records: Sequence[CycleRecord]) -> list[EngineSeries]:
    """Bucket records by unit and sort by cycle; result sorted by unit id.

    Grouping is independent of input row order. Each engine must cover
    cycles 1..n exactly once.
    """
    buckets: dict[int, list[CycleRecord]] = {}
    for rec in records:
        buckets.setdefault(rec.unit_id, []).append(rec)
    series: list[EngineSeries] = []
    for unit_id in sorted(buckets):
        recs = sorted(buckets[unit_id], key=lambda r: r.cycle)
        for pos, rec in enumerate(recs, start=1):
            if rec.cycle < pos:
                raise DuplicateCycleError(f"unit {unit_id}: cycle {rec.cycle} repeats")
            if rec.cycle > pos:
                raise GapInCyclesError(f"unit {unit_id}: cycle {pos} is missing")
        series.append(EngineSeries(unit_id=unit_id, records=tuple(recs)))
    return series


def parse_rul_lines(source: str | IO[str] | Iterable[str]) -> list[int]:
    """One non-negative integer per non-blank line."""
    values: list[int] = []
    for lineno, line in _line_iter(source):
        token = line.strip()
        try:
            value = float(token)
        except ValueError:
            raise NonNumericError(f"line {lineno}: RUL {token!r} is not numeric") from None
        if not value.is_integer() or value < 0:
            raise NonNumericError(
                f"line {lineno}: RUL {token!r} is not a non-negative integer"
            )
        values.append(int(value))
    return values


def _open_if_path(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="ascii"), True
    return source, False


def _read(source, parser):
    handle, owned = _open_if_path(source)
    try:
        return parser(handle)
    finally:
        if owned:
            handle.close()


def load_split(train_source, test_source, rul_source) -> DatasetSplit:
    """Load and validate a full split from three paths or open streams.

    The RUL file must contain exactly one value per test engine, in unit
    order; anything else raises CountMismatchError.
    """
    train = group_engines(_read(train_source, parse_records))
    test = group_engines(_read(test_source, parse_records))
    true_rul = _read(rul_source, parse_rul_lines)
    if len(true_rul) != len(test):
        raise CountMismatchError(
            f"RUL file has {len(true_rul)} entries for {len(test)} test engines"
        )
    return DatasetSplit(train=train, test=test, true_rul=true_rul)


def format_records(records: Sequence[CycleRecord]) -> str:
    """Render records back to the whitespace text format.

    Floats are written with repr so that parse(format(parse(x))) is
    numerically identical to parse(x).
    """
    lines = []
    for rec in records:
        fields = [str(rec.unit_id), str(rec.cycle)]
        fields += [repr(v) for v in rec.features()]
        lines.append(" ".join(fields))
    return "\n".join(lines) + ("\n" if lines else "")


def write_snapshot_csv(series: Sequence[EngineSeries], path: str | os.PathLike) -> None:
    """Write the canonical CSV snapshot: header row, then one row per cycle."""
    with open(path, "w", encoding="ascii", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SNAPSHOT_COLUMNS)
        for eng in series:
            for rec in eng.records:
                writer.writerow(
                    [rec.unit_id, rec.cycle] + [repr(v) for v in rec.features()]
                )
