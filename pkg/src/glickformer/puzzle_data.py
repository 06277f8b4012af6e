"""Lichess puzzle CSV ingestion, rating standardization and splitting."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .chess_core import FenError, Move, MoveError, parse_fen

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = (
    "PuzzleId", "FEN", "Moves", "Rating", "RatingDeviation",
    "Popularity", "NbPlays", "Themes", "GameUrl", "OpeningTags",
)

RATING_MEAN = 1516.0
RATING_STD = 543.0


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class PuzzleRecord:
    id: str
    fen: str
    moves: tuple  # UCI strings
    rating: int
    rating_deviation: int
    popularity: int = 0
    nb_plays: int = 0
    themes: tuple = ()
    game_url: str = ""
    opening_tags: tuple = ()

    def parsed_moves(self) -> list:
        return [Move.from_uci(m) for m in self.moves]


@dataclass(frozen=True)
class StandardizationParams:
    mean: float = RATING_MEAN
    std: float = RATING_STD

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"std must be positive, got {self.std}")


@dataclass(frozen=True)
class StandardizedTarget:
    mu: float
    phi: float


def standardize(rating: float, params: StandardizationParams = StandardizationParams()) -> float:
    return (rating - params.mean) / params.std


def unstandardize(value, params: StandardizationParams = StandardizationParams()):
    return value * params.std + params.mean


def standardize_deviation(rd: float, params: StandardizationParams = StandardizationParams()) -> float:
    if rd < 0:
        raise ValueError(f"rating deviation must be non-negative, got {rd}")
    return rd / params.std


def target_for(record: PuzzleRecord, params: StandardizationParams = StandardizationParams()) -> StandardizedTarget:
    return StandardizedTarget(
        standardize(record.rating, params),
        standardize_deviation(record.rating_deviation, params),
    )


@dataclass
class LoadedPuzzles:
    records: list = field(default_factory=list)
    total: int = 0
    skipped: int = 0

    def __iter__(self) -> Iterator[PuzzleRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def summary(self) -> str:
        return f"ingest: total={self.total} kept={len(self.records)} skipped={self.skipped}"


def _parse_row(row: dict) -> PuzzleRecord:
    moves = tuple(row["Moves"].split())
    if len(moves) < 2:
        raise ValueError("fewer than two moves")
    for m in moves:
        Move.from_uci(m)
    parse_fen(row["FEN"])
    rd = int(row["RatingDeviation"])
    if rd <= 0:
        raise ValueError("non-positive rating deviation")
    return PuzzleRecord(
        id=row["PuzzleId"],
        fen=row["FEN"].strip(),
        moves=moves,
        rating=int(row["Rating"]),
        rating_deviation=rd,
        popularity=int(row["Popularity"] or 0),
        nb_plays=int(row["NbPlays"] or 0),
        themes=tuple((row["Themes"] or "").split()),
        game_url=row["GameUrl"] or "",
        opening_tags=tuple((row["OpeningTags"] or "").split()),
    )


def load_puzzles(path) -> LoadedPuzzles:
    """Read a Lichess puzzle CSV, skipping (and counting) invalid rows."""
    path = Path(path)
    out = LoadedPuzzles()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in REQUIRED_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise SchemaError(f"{path}: missing columns {', '.join(missing)}")
        for row in reader:
            out.total += 1
            try:
                out.records.append(_parse_row(row))
            except (FenError, MoveError, ValueError, TypeError, AttributeError) as exc:
                out.skipped += 1
                log.debug("skipping row %d (%s): %s", out.total, row.get("PuzzleId"), exc)
    log.info(out.summary())
    return out


def write_puzzles(path, records: Sequence[PuzzleRecord]) -> None:
    """Write records back out in the Lichess column layout."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REQUIRED_COLUMNS)
        for r in records:
            w.writerow([
                r.id, r.fen, " ".join(r.moves), r.rating, r.rating_deviation,
                r.popularity, r.nb_plays, " ".join(r.themes), r.game_url,
                " ".join(r.opening_tags),
            ])


def split(records: Sequence, seed: int, test_fraction: float):
    """Deterministic train/test partition; both halves keep input order."""
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(records)
    if n == 0:
        raise ValueError("cannot split an empty record set")
    n_test = int(round(test_fraction * n))
    perm = np.random.default_rng(seed).permutation(n)
    is_test = np.zeros(n, dtype=bool)
    is_test[perm[:n_test]] = True
    train = [r for r, t in zip(records, is_test) if not t]
    test = [r for r, t in zip(records, is_test) if t]
    return train, test
