"""Parsing, grouping, and round-trip behaviour of the raw text loader."""

import io

import numpy as np
import pytest

from rulforge.cmapss import (
    N_FIELDS,
    SNAPSHOT_COLUMNS,
    format_records,
    group_engines,
    load_split,
    parse_records,
    parse_rul_lines,
    write_snapshot_csv,
)
from rulforge.errors import (
    CountMismatchError,
    DuplicateCycleError,
    GapInCyclesError,
    NonNumericError,
    RowArityError,
)


def _row(unit: int, cycle: int, fill: float = 0.5) -> str:
    values = " ".join(str(fill + i) for i in range(24))
    return f"{unit} {cycle} {values}"


def test_field_count_constant():
    assert N_FIELDS == 26
    assert len(SNAPSHOT_COLUMNS) == 26


def test_parse_empty_source():
    assert parse_records("") == []
    assert parse_records("\n\n") == []


def test_parse_single_row_values():
    line = "3 7 " + " ".join(str(float(i)) for i in range(24))
    rec = parse_records(line)[0]
    assert rec.unit_id == 3
    assert rec.cycle == 7
    assert rec.settings == (0.0, 1.0, 2.0)
    assert rec.sensors == tuple(float(i) for i in range(3, 24))
    assert rec.features() == rec.settings + rec.sensors


def test_parse_skips_blank_lines_keeps_linenos():
    text = "\n" + _row(1, 1) + "\n\n" + _row(1, 2) + "\n"
    assert len(parse_records(text)) == 2


def test_row_arity_error_names_line_and_count():
    text = _row(1, 1) + "\n1 2 3\n"
    with pytest.raises(RowArityError) as exc:
        parse_records(text)
    assert "line 2" in str(exc.value)
    assert "26" in str(exc.value) and "3" in str(exc.value)


def test_non_numeric_sensor_rejected():
    bad = _row(1, 1).rsplit(" ", 1)[0] + " oops"
    with pytest.raises(NonNumericError) as exc:
        parse_records(bad)
    assert "oops" in str(exc.value)


@pytest.mark.parametrize("unit", ["0", "-1", "1.5", "x"])
def test_bad_unit_id_rejected(unit):
    with pytest.raises(NonNumericError):
        parse_records(_row(1, 1).replace("1 1 ", f"{unit} 1 ", 1))


def test_unit_id_integer_float_token_ok():
    # the raw files sometimes render integers as 1.0-style tokens
    rec = parse_records(_row(1, 1).replace("1 1 ", "2.0 3.0 ", 1))[0]
    assert rec.unit_id == 2 and rec.cycle == 3


def test_group_sorts_within_unit():
    text = "\n".join([_row(1, 2), _row(1, 1), _row(1, 3)])
    series = group_engines(parse_records(text))
    assert [r.cycle for r in series[0].records] == [1, 2, 3]
    assert series[0].max_cycle == 3 == len(series[0])


def test_group_interleaved_units():
    text = "\n".join([_row(2, 1), _row(1, 1), _row(2, 2), _row(1, 2)])
    series = group_engines(parse_records(text))
    assert [s.unit_id for s in series] == [1, 2]
    assert all(len(s) == 2 for s in series)


def test_group_row_order_invariance():
    rows = [_row(u, c, fill=u * 100 + c) for u in (1, 2, 3) for c in (1, 2, 3, 4)]
    base = group_engines(parse_records("\n".join(rows)))
    rng = np.random.default_rng(0)
    for _ in range(5):
        perm = rng.permutation(len(rows))
        shuffled = group_engines(parse_records("\n".join(rows[i] for i in perm)))
        assert shuffled == base


def test_duplicate_cycle_rejected():
    text = "\n".join([_row(1, 1), _row(1, 1)])
    with pytest.raises(DuplicateCycleError):
        group_engines(parse_records(text))


def test_gap_in_cycles_rejected():
    text = "\n".join([_row(1, 1), _row(1, 3)])
    with pytest.raises(GapInCyclesError):
        group_engines(parse_records(text))


def test_cycles_must_start_at_one():
    with pytest.raises(GapInCyclesError):
        group_engines(parse_records(_row(1, 2)))


def test_format_parse_roundtrip_exact():
    rng = np.random.default_rng(42)
    rows = []
    for unit in (1, 2):
        for cycle in (1, 2, 3):
            values = " ".join(repr(float(v)) for v in rng.normal(size=24))
            rows.append(f"{unit} {cycle} {values}")
    records = parse_records("\n".join(rows))
    again = parse_records(format_records(records))
    assert again == records


def test_rul_lines():
    assert parse_rul_lines("112\n98\n 20 \n") == [112, 98, 20]
    with pytest.raises(NonNumericError):
        parse_rul_lines("-3")
    with pytest.raises(NonNumericError):
        parse_rul_lines("7.5")


def test_load_split_from_streams_and_count_mismatch():
    train = io.StringIO(_row(1, 1) + "\n" + _row(1, 2) + "\n")
    test = io.StringIO(_row(1, 1) + "\n" + _row(2, 1) + "\n")
    split = load_split(train, test, io.StringIO("5\n9\n"))
    assert len(split.train) == 1 and len(split.test) == 2
    assert split.true_rul == [5, 9]

    test.seek(0)
    with pytest.raises(CountMismatchError):
        load_split(io.StringIO(_row(1, 1)), test, io.StringIO("5\n"))


def test_load_split_from_paths(synth_paths):
    split = load_split(synth_paths["train"], synth_paths["test"], synth_paths["rul"])
    assert len(split.train) == 12
    assert len(split.test) == len(split.true_rul) == 6
    # train engines run to failure: cycles dense 1..n
    for eng in split.train:
        assert eng.max_cycle == len(eng)
    assert all(r >= 0 for r in split.true_rul)


def test_feature_matrix_shape_and_content():
    text = "\n".join([_row(1, 1, fill=0.0), _row(1, 2, fill=100.0)])
    eng = group_engines(parse_records(text))[0]
    mat = eng.feature_matrix()
    assert mat.shape == (2, 24)
    assert mat.dtype == np.float64
    assert mat[0, 0] == 0.0 and mat[1, 0] == 100.0


def test_snapshot_csv(tmp_path):
    text = "\n".join([_row(1, 1), _row(1, 2), _row(2, 1)])
    series = group_engines(parse_records(text))
    path = tmp_path / "snap.csv"
    write_snapshot_csv(series, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0].split(",") == list(SNAPSHOT_COLUMNS)
    assert len(lines) == 4
    assert lines[1].startswith("1,1,")


def test_real_split_shape(real_data_paths):
    split = load_split(
        real_data_paths["train"], real_data_paths["test"], real_data_paths["rul"]
    )
    assert len(split.train) == 100
    assert len(split.test) == 100
    assert sum(len(e) for e in split.train) == 20631
    assert sum(len(e) for e in split.test) == 13096
    assert len(split.true_rul) == 100
