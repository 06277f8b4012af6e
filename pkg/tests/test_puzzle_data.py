import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from glickformer.puzzle_data import (
    REQUIRED_COLUMNS, PuzzleRecord, SchemaError, StandardizationParams, load_puzzles, split,
    standardize, standardize_deviation, target_for, unstandardize, write_puzzles,
)

GOOD = {
    "PuzzleId": "p1", "FEN": "3q2k1/4rppp/8/8/8/8/PP1B2PP/6K1 w - - 0 1",
    "Moves": "d2b4 d8d4 g1h1 d4b4", "Rating": "1600", "RatingDeviation": "80",
    "Popularity": "90", "NbPlays": "100", "Themes": "fork short", "GameUrl": "https://x/1",
    "OpeningTags": "",
}


def write_rows(path, rows, columns=REQUIRED_COLUMNS):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, columns, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    return path


class TestLoad:
    def test_clean_rows(self, tmp_path):
        rows = [dict(GOOD, PuzzleId=f"p{i}") for i in range(3)]
        loaded = load_puzzles(write_rows(tmp_path / "a.csv", rows))
        assert len(loaded) == 3 and loaded.skipped == 0
        r = loaded[0]
        assert r.moves == ("d2b4", "d8d4", "g1h1", "d4b4")
        assert r.themes == ("fork", "short")
        assert (r.rating, r.rating_deviation) == (1600, 80)

    @pytest.mark.parametrize("bad", [
        {"FEN": "not a fen"},
        {"Moves": "d2b4"},
        {"Moves": "d2b4 zz99"},
        {"Rating": "abc"},
        {"RatingDeviation": "0"},
    ])
    def test_invalid_row_skipped(self, tmp_path, bad):
        rows = [GOOD, dict(GOOD, PuzzleId="bad", **bad), dict(GOOD, PuzzleId="p3")]
        loaded = load_puzzles(write_rows(tmp_path / "a.csv", rows))
        assert loaded.skipped == 1 and loaded.total == 3
        assert [r.id for r in loaded] == ["p1", "p3"]
        assert loaded.summary() == "ingest: total=3 kept=2 skipped=1"

    def test_missing_column(self, tmp_path):
        cols = [c for c in REQUIRED_COLUMNS if c != "RatingDeviation"]
        with pytest.raises(SchemaError, match="RatingDeviation"):
            load_puzzles(write_rows(tmp_path / "a.csv", [GOOD], cols))

    def test_order_and_write_round_trip(self, tmp_path, corpus):
        recs = list(corpus)[:50]
        write_puzzles(tmp_path / "b.csv", recs)
        assert list(load_puzzles(tmp_path / "b.csv")) == recs


class TestStandardize:
    @pytest.mark.parametrize("rating, z", [(1516, 0.0), (2059, 1.0), (973, -1.0)])
    def test_rating(self, rating, z):
        assert standardize(rating) == pytest.approx(z, abs=1e-12)

    @pytest.mark.parametrize("rd, z", [(543, 1.0), (0, 0.0), (86, 86 / 543)])
    def test_deviation(self, rd, z):
        assert standardize_deviation(rd) == pytest.approx(z, abs=1e-12)
        assert standardize_deviation(86) == pytest.approx(0.158379, abs=1e-6)

    def test_negative_deviation(self):
        with pytest.raises(ValueError):
            standardize_deviation(-1)

    def test_bad_params(self):
        with pytest.raises(ValueError):
            StandardizationParams(1516, 0)

    def test_target(self):
        t = target_for(PuzzleRecord("x", GOOD["FEN"], ("a2a3", "a7a6"), 2059, 543))
        assert (t.mu, t.phi) == pytest.approx((1.0, 1.0))

    @given(st.floats(-1e4, 1e4), st.floats(1.0, 1e3), st.floats(-5e3, 5e3))
    def test_invertible(self, x, std, mean):
        p = StandardizationParams(mean, std)
        assert unstandardize(standardize(x, p), p) == pytest.approx(x, rel=1e-9, abs=1e-9)


class TestSplit:
    def test_one_percent(self):
        train, test = split(list(range(100)), 0, 0.01)
        assert (len(train), len(test)) == (99, 1)

    def test_deterministic(self):
        assert split(list(range(500)), 3, 0.1) == split(list(range(500)), 3, 0.1)

    def test_seed_changes_membership(self):
        _, a = split(list(range(10000)), 1, 0.01)
        _, b = split(list(range(10000)), 2, 0.01)
        assert set(a) != set(b)

    @given(st.integers(1, 300), st.integers(0, 2**31), st.floats(0.01, 0.99))
    def test_partition(self, n, seed, frac):
        items = list(range(n))
        train, test = split(items, seed, frac)
        assert sorted(train + test) == items
        assert not set(train) & set(test)
        assert train == sorted(train) and test == sorted(test)

    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.1, 1.5])
    def test_bad_fraction(self, frac):
        with pytest.raises(ValueError):
            split([1, 2, 3], 0, frac)

    def test_empty(self):
        with pytest.raises(ValueError):
            split([], 0, 0.5)
