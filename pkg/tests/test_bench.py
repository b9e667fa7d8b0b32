import pytest

from hchain.bench import CSV_HEADER, emit_csv, load_csv, run_bench
from hchain.crypto import RandomSource


@pytest.fixture(scope="module")
def small_rows():
    return run_bench(sizes=[1000, 3000], repetitions=3, rng=RandomSource(5))


def test_rows_sorted_and_positive(small_rows):
    assert [r.size_bytes for r in small_rows] == [1000, 3000]
    for row in small_rows:
        assert row.sym_enc_s >= 0 and row.sym_dec_s >= 0
        assert row.asym_enc_s > 0 and row.asym_dec_s > 0


def test_asym_slower_than_sym(small_rows):
    for row in small_rows:
        assert row.asym_dec_s > row.sym_dec_s


def test_csv_shape(tmp_path, small_rows):
    path = emit_csv(small_rows, tmp_path / "bench.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 3  # header + 2 rows
    assert lines[0] == ",".join(CSV_HEADER)


def test_csv_roundtrip_exact(tmp_path, small_rows):
    path = emit_csv(small_rows, tmp_path / "bench.csv")
    assert load_csv(path) == small_rows


def test_validation():
    with pytest.raises(ValueError):
        run_bench(sizes=[100], repetitions=2)
    with pytest.raises(ValueError):
        run_bench(sizes=[0], repetitions=3)
    with pytest.raises(ValueError):
        emit_csv([], "nowhere.csv")


def test_monotone_trend_over_decades():
    # For sizes >= 10 kB, each column is non-decreasing from size s to 10s;
    # medians over 5 repetitions, allowing one timer-noise inversion per column.
    rows = run_bench(sizes=[10_000, 100_000, 1_000_000], repetitions=5, rng=RandomSource(6))
    for column in ("sym_enc_s", "sym_dec_s", "asym_enc_s", "asym_dec_s"):
        values = [getattr(row, column) for row in rows]
        inversions = sum(1 for a, b in zip(values, values[1:]) if b < a)
        assert inversions <= 1, (column, values)
