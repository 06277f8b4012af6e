"""Test-set metrics: MAE, MAZ, accuracy within k RD, MAE by solution length."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encoder import EncodedDataset
from .model import GlickFormerBase
from .puzzle_data import StandardizationParams, unstandardize


@dataclass(frozen=True)
class Prediction:
    puzzle_id: str
    predicted_rating: float
    true_rating: float
    rating_deviation: float
    solver_move_count: int


def _columns(preds: Sequence[Prediction]):
    if len(preds) == 0:
        raise ValueError("no predictions")
    pred = np.array([p.predicted_rating for p in preds], dtype=np.float64)
    true = np.array([p.true_rating for p in preds], dtype=np.float64)
    rd = np.array([p.rating_deviation for p in preds], dtype=np.float64)
    return pred, true, rd


def mae(preds: Sequence[Prediction]) -> float:
    pred, true, _ = _columns(preds)
    return float(np.mean(np.abs(true - pred)))


def maz(preds: Sequence[Prediction]) -> float:
    pred, true, rd = _columns(preds)
    if np.any(rd <= 0):
        raise ValueError("rating deviations must be positive")
    return float(np.mean(np.abs((true - pred) / rd)))


def accuracy_within(preds: Sequence[Prediction], k: int) -> float:
    """Percentage with |error| <= k * RD (the boundary counts as inside)."""
    if k not in (1, 2, 3):
        raise ValueError(f"k must be 1, 2 or 3, got {k}")
    pred, true, rd = _columns(preds)
    return float(100.0 * np.mean(np.abs(true - pred) <= k * rd))


def mae_by_solution_length(preds: Sequence[Prediction]) -> dict:
    """``{solver_moves: (mae, count)}`` sorted by move count."""
    buckets: dict = {}
    for p in preds:
        if p.solver_move_count < 1:
            raise ValueError(f"{p.puzzle_id}: solver_move_count must be >= 1")
        buckets.setdefault(p.solver_move_count, []).append(abs(p.true_rating - p.predicted_rating))
    return {k: (float(np.mean(v)), len(v)) for k, v in sorted(buckets.items())}


@dataclass
class MetricsReport:
    mae: float
    maz: float
    acc_within: dict
    mae_by_moves: dict
    n: int
    failures: int = 0
    predictions: list = field(default_factory=list, repr=False)

    @classmethod
    def from_predictions(cls, preds: Sequence[Prediction], failures: int = 0) -> "MetricsReport":
        return cls(
            mae=mae(preds),
            maz=maz(preds),
            acc_within={k: accuracy_within(preds, k) for k in (1, 2, 3)},
            mae_by_moves=mae_by_solution_length(preds),
            n=len(preds),
            failures=failures,
            predictions=list(preds),
        )

    def to_dict(self) -> dict:
        return {
            "mae": self.mae,
            "maz": self.maz,
            "acc_within_1": self.acc_within[1],
            "acc_within_2": self.acc_within[2],
            "acc_within_3": self.acc_within[3],
            "mae_by_moves": {str(k): {"mae": m, "count": c} for k, (m, c) in self.mae_by_moves.items()},
            "n": self.n,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["mae", repr(self.mae)])
        w.writerow(["maz", repr(self.maz)])
        for k in (1, 2, 3):
            w.writerow([f"acc_within_{k}", repr(self.acc_within[k])])
        w.writerow(["n", self.n])
        return buf.getvalue()

    def by_moves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["moves", "mae", "count"])
        for k, (m, c) in self.mae_by_moves.items():
            w.writerow([k, repr(m), c])
        return buf.getvalue()

    def predictions_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["puzzle_id", "predicted_rating", "true_rating", "rating_deviation", "solver_moves"])
        for p in self.predictions:
            w.writerow([p.puzzle_id, repr(p.predicted_rating), repr(p.true_rating),
                        repr(p.rating_deviation), p.solver_move_count])
        return buf.getvalue()


def predict_ratings(model: GlickFormerBase, data: EncodedDataset,
                    params: StandardizationParams = StandardizationParams(),
                    batch_size: int = 128) -> np.ndarray:
    return unstandardize(model.predict(data.boards, data.mask, batch_size), params)


def evaluate(model: GlickFormerBase, data: EncodedDataset,
             params: StandardizationParams = StandardizationParams(),
             failures: int = 0, batch_size: int = 128) -> MetricsReport:
    """Score ``model`` against the dataset's true ratings.  No target sampling."""
    if data is None or len(data) == 0:
        raise ValueError("evaluation set is empty")
    rhat = predict_ratings(model, data, params, batch_size)
    true = data.ratings(params)
    rd = data.deviations(params)
    preds = [
        Prediction(data.ids[i], float(rhat[i]), float(true[i]), float(rd[i]), int(data.solver_moves[i]))
        for i in range(len(data))
    ]
    return MetricsReport.from_predictions(preds, failures)
