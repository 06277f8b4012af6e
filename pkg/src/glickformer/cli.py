"""Command-line entry point: ``glickformer <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.  Reports go to stdout; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from .chess_core import Color, Move, apply_move, parse_fen, square_name
from .encoder import (
    SHARD_MAGIC, EncodedDataset, EncodingError, encode_puzzle, encode_records, read_shard,
    write_shard,
)
from .evaluation import evaluate, predict_ratings
from .kvtext import ConfigError, coerce_fields, read_kv, write_kv
from .model import ModelConfig, build_model, load_model
from .nn import NumericError, RngState
from .puzzle_data import PuzzleRecord, StandardizationParams, load_puzzles, split
from .training import TrainConfig, train

log = logging.getLogger("glickformer")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; this one uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# -- run configuration ------------------------------------------------------------

_MODEL_KEYS = tuple(f.name for f in dataclasses.fields(ModelConfig))
_TRAIN_KEYS = ("learning_rate", "rho", "batch_size", "total_steps", "cycle_base", "eps", "log_every")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Everything a run needs, flat so it can live in one key-value file."""

    # model
    d: int = 256
    h: int = 16
    d_z: int = 32
    L: int = 16
    L_t: int = 16
    n_max: int = 5
    ffn_mult: int = 4
    variant: str = "factorized_encoder"
    # training
    learning_rate: float = 1e-6
    rho: float = 0.99
    batch_size: int = 64
    total_steps: int = 28000
    cycle_base: int = 1000
    eps: float = 1e-8
    log_every: int = 10
    # data and standardization
    train_data: str = ""
    test_fraction: float = 0.0
    out_dir: str = "run"
    rating_mean: float = 1516.0
    rating_std: float = 543.0
    seed: int = 0

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[dict] = None) -> "RunConfig":
        """Read ``path`` (if any) and apply ``overrides``; unknown keys are rejected."""
        raw = read_kv(path) if path else {}
        values = coerce_fields(cls, raw, strict=True)
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        cfg = cls(**values)
        cfg = dataclasses.replace(cfg, variant=cfg.model_config().variant)  # validates, canonical name
        cfg.train_config()
        cfg.standardization()
        return cfg

    def model_config(self) -> ModelConfig:
        return ModelConfig(**{k: getattr(self, k) for k in _MODEL_KEYS})

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(seed=self.seed, **{k: getattr(self, k) for k in _TRAIN_KEYS})
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def standardization(self) -> StandardizationParams:
        try:
            return StandardizationParams(self.rating_mean, self.rating_std)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def worker_count() -> int:
    """Worker cap from ``GLKF_THREADS`` (default: all cores)."""
    raw = os.environ.get("GLKF_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"GLKF_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"GLKF_THREADS must be a positive integer, got {raw!r}")
    return n


# -- data helpers -----------------------------------------------------------------

def _require_file(path, what) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def _is_shard(path: Path) -> bool:
    with path.open("rb") as fh:
        return fh.read(4) == SHARD_MAGIC


def _shard_files(path: Path) -> list:
    if path.is_dir():
        files = sorted(path.glob("*.glkf"))
        if not files:
            raise FileNotFoundError(f"no .glkf shards in {path}")
        return files
    return [_require_file(path, "data file")]


def _concat(parts) -> EncodedDataset:
    if len(parts) == 1:
        return parts[0]
    if len({p.n_max for p in parts}) != 1:
        raise ValueError("shards disagree on n_max")
    return EncodedDataset(
        np.concatenate([p.boards for p in parts]), np.concatenate([p.mask for p in parts]),
        np.concatenate([p.mu for p in parts]), np.concatenate([p.phi for p in parts]),
        np.concatenate([p.solver_moves for p in parts]), [i for p in parts for i in p.ids],
    )


def load_dataset(path, n_max: int, params: StandardizationParams, workers: int = 1,
                 records=None):
    """Load a CSV, a shard file or a directory of shards.  Returns
    ``(dataset, failures)``; ``records`` bypasses the CSV read."""
    if records is None:
        path = Path(path)
        if path.is_dir() or _is_shard(_require_file(path, "data file")):
            ds = _concat([read_shard(f) for f in _shard_files(path)])
            if ds.n_max != n_max:
                raise ValueError(f"shard n_max {ds.n_max} does not match model n_max {n_max}")
            return ds, 0
        loaded = load_puzzles(path)
        print(loaded.summary(), file=sys.stderr)
        records = loaded.records
    ds, failures = encode_records(records, n_max, params, workers=workers)
    for exc in failures:
        log.warning("encode failed: %s", exc)
    if ds is None:
        raise ValueError(f"no puzzle in {path} could be encoded")
    return ds, len(failures)


# -- subcommands ------------------------------------------------------------------

def cmd_ingest(args) -> int:
    csv_path = _require_file(args.csv, "puzzle CSV")
    params = StandardizationParams(args.rating_mean, args.rating_std)
    loaded = load_puzzles(csv_path)
    print(loaded.summary(), file=sys.stderr)
    ds, failures = encode_records(loaded.records, args.n_max, params, workers=worker_count())
    for exc in failures:
        log.warning("encode failed: %s", exc)
    if ds is None:
        raise ValueError(f"no puzzle in {csv_path} could be encoded")
    out = Path(args.out)
    paths = []
    if args.shard_size and len(ds) > args.shard_size:
        out.mkdir(parents=True, exist_ok=True)
        for k, start in enumerate(range(0, len(ds), args.shard_size)):
            part = ds.subset(np.arange(start, min(start + args.shard_size, len(ds))))
            p = out / f"shard-{k:05d}.glkf"
            write_shard(p, part)
            paths.append(str(p))
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_shard(out, ds)
        paths.append(str(out))
    summary = {
        "total": loaded.total, "kept": len(loaded), "skipped": loaded.skipped,
        "encoded": len(ds), "encode_failures": len(failures), "n_max": args.n_max,
        "shards": paths,
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = {
        "variant": args.variant, "seed": args.seed, "train_data": args.data,
        "out_dir": args.out, "total_steps": args.steps, "learning_rate": args.lr,
        "batch_size": args.batch_size,
    }
    cfg = RunConfig.load(args.config, overrides)
    if not cfg.train_data:
        raise UsageError("train: no training data (set train_data in the config or pass --data)")
    data_path = Path(cfg.train_data)
    if not data_path.exists():
        raise FileNotFoundError(f"training data not found: {data_path}")
    out_dir = Path(cfg.out_dir)
    mcfg, tcfg, params = cfg.model_config(), cfg.train_config(), cfg.standardization()

    records = None
    test_ds = None
    if cfg.test_fraction > 0:
        if data_path.is_dir() or _is_shard(data_path):
            raise UsageError("test_fraction needs a CSV source, not shards")
        loaded = load_puzzles(data_path)
        print(loaded.summary(), file=sys.stderr)
        records, test_records = split(loaded.records, cfg.seed, cfg.test_fraction)
        if test_records:
            test_ds, _ = encode_records(test_records, mcfg.n_max, params)
    ds, n_fail = load_dataset(data_path, mcfg.n_max, params, worker_count(), records=records)

    out_dir.mkdir(parents=True, exist_ok=True)
    write_kv(out_dir / "run.cfg", cfg.to_dict())
    if test_ds is not None:
        write_shard(out_dir / "test.glkf", test_ds)
    model = build_model(mcfg, RngState(cfg.seed).stream("init"))
    result = train(model, ds, tcfg, out_dir=out_dir)
    summary = {
        "variant": mcfg.variant, "steps": tcfg.total_steps, "train_size": len(ds),
        "encode_failures": n_fail, "final_loss": float(result.trace[-1][1]),
        "checkpoint": str(out_dir / "checkpoint.glkw"),
        "loss_trace": str(out_dir / "loss.csv"),
    }
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = _require_file(args.checkpoint, "checkpoint")
    params = StandardizationParams(args.rating_mean, args.rating_std)
    model = load_model(ckpt)
    ds, n_fail = load_dataset(args.data, model.cfg.n_max, params, worker_count())
    report = evaluate(model, ds, params, failures=n_fail, batch_size=args.batch_size)
    if not all(math.isfinite(p.predicted_rating) for p in report.predictions):
        raise NumericError("model produced non-finite predictions")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json() + "\n")
        (out / "report.csv").write_text(report.to_csv())
        (out / "by_moves.csv").write_text(report.by_moves_csv())
        (out / "predictions.csv").write_text(report.predictions_csv())
    print(report.to_json())
    return EXIT_OK


def _single_record(fen: str, moves: str) -> PuzzleRecord:
    return PuzzleRecord(id="cli", fen=fen, moves=tuple(moves.split()), rating=0, rating_deviation=1)


def cmd_predict(args) -> int:
    ckpt = _require_file(args.checkpoint, "checkpoint")
    params = StandardizationParams(args.rating_mean, args.rating_std)
    model = load_model(ckpt)
    enc = encode_puzzle(_single_record(args.fen, args.moves), model.cfg.n_max, params)
    ds = EncodedDataset.from_encodings([enc])
    rating = float(predict_ratings(model, ds, params)[0])
    if not math.isfinite(rating):
        raise NumericError("model produced a non-finite rating")
    print(f"{rating:.2f}")
    return EXIT_OK


_CHANNEL_NAMES = (
    ["mover " + k for k in ("king", "queen", "rook", "bishop", "knight", "pawn")]
    + ["opponent " + k for k in ("king", "queen", "rook", "bishop", "knight", "pawn")]
    + ["prev move from", "prev move to", "next move from", "next move to"]
)
_PIECE_CHARS = "KQRBNPkqrbnp"


def _diagram(board) -> list:
    rows = []
    for rank in range(7, -1, -1):
        cells = []
        for f in range(8):
            hit = [c for c in range(12) if board[c, rank, f]]
            ch = _PIECE_CHARS[hit[0]] if hit else "."
            if board[14, rank, f] or board[15, rank, f]:
                ch = f"[{ch}]"
            elif board[12, rank, f] or board[13, rank, f]:
                ch = f"({ch})"
            else:
                ch = f" {ch} "
            cells.append(ch)
        rows.append(f"  {rank + 1} " + "".join(cells))
    rows.append("     " + "  ".join("abcdefgh"))
    return rows


def render_encoding(enc, mirrored: bool) -> str:
    lines = [
        f"puzzle: {enc.solver_moves} solver positions, {enc.n_boards} encoded "
        f"(n_max {enc.n_max}), mirrored: {'yes' if mirrored else 'no'}",
        "uppercase = side to move, (x) = previous move squares, [x] = next move squares",
    ]
    for j in range(enc.n_max):
        lines.append("")
        if not enc.mask[j]:
            lines.append(f"board {j + 1}: padding")
            continue
        lines.append(f"board {j + 1}:")
        board = enc.boards[j]
        for c, name in enumerate(_CHANNEL_NAMES):
            sqs = [square_name(int(s)) for s in np.flatnonzero(board[c].reshape(64))]
            lines.append(f"  ch{c:02d} {name:<16s} {' '.join(sqs) if sqs else '-'}")
        lines.extend(_diagram(board))
    return "\n".join(lines)


def cmd_encode_inspect(args) -> int:
    rec = _single_record(args.fen, args.moves)
    enc = encode_puzzle(rec, args.n_max)
    after_first = apply_move(parse_fen(rec.fen), Move.from_uci(rec.moves[0]))
    print(render_encoding(enc, after_first.side_to_move == Color.BLACK))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_suite

    reports = run_suite(args.module, seed=args.seed)
    failed = []
    for name, rep in reports.items():
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status} {name} (tolerance {rep.tolerance:g}, max relative error {rep.max_error:.3e})")
        if args.details or not rep.passed:
            for line in rep.lines():
                print("    " + line)
        if not rep.passed:
            failed.append(name)
    if failed:
        print(f"gradcheck: {len(failed)} case(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def _add_standardization(p):
    p.add_argument("--rating-mean", type=float, default=1516.0, help="rating mean used for standardization")
    p.add_argument("--rating-std", type=float, default=543.0, help="rating std used for standardization")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="glickformer", description="Puzzle difficulty estimation from board sequences.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", help="validate and encode a puzzle CSV into binary shards")
    p.add_argument("csv", help="Lichess-format puzzle CSV")
    p.add_argument("--out", required=True, help="output shard file, or directory when --shard-size splits")
    p.add_argument("--n-max", type=int, default=5, help="boards kept per puzzle (default 5)")
    p.add_argument("--shard-size", type=int, default=0, help="records per shard; 0 writes one file")
    _add_standardization(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model from a key-value run config")
    p.add_argument("--config", help="run config file (key = value)")
    p.add_argument("--variant", help="fe, fsa or baseline (overrides config)")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--data", help="training CSV, shard or shard directory (overrides train_data)")
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.add_argument("--steps", type=int, help="total optimizer steps (overrides total_steps)")
    p.add_argument("--lr", type=float, help="learning rate (overrides learning_rate)")
    p.add_argument("--batch-size", type=int, help="batch size (overrides batch_size)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on a test set")
    p.add_argument("--checkpoint", required=True, help="model checkpoint (.glkw with .cfg sidecar)")
    p.add_argument("--data", required=True, help="test CSV, shard or shard directory")
    p.add_argument("--out-dir", help="also write report.json, report.csv, by_moves.csv, predictions.csv here")
    p.add_argument("--batch-size", type=int, default=128, help="prediction batch size")
    _add_standardization(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict the rating of one puzzle")
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--fen", required=True, help="puzzle start position")
    p.add_argument("--moves", required=True, help='space-separated UCI moves, e.g. "e2e4 e7e5"')
    _add_standardization(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("encode-inspect", help="print the channel planes of a puzzle encoding")
    p.add_argument("--fen", required=True, help="puzzle start position")
    p.add_argument("--moves", required=True, help="space-separated UCI moves")
    p.add_argument("--n-max", type=int, default=5, help="boards kept (default 5)")
    p.set_defaults(func=cmd_encode_inspect)

    p = sub.add_parser("gradcheck", help="run finite-difference gradient suites")
    p.add_argument("--module", default="all", choices=["all", "smolgen", "spatial", "temporal", "head"],
                   help="which suite to run (default all)")
    p.add_argument("--seed", type=int, default=0, help="seed for inputs and weights")
    p.add_argument("--details", action="store_true", help="print per-parameter errors")
    p.set_defaults(func=cmd_gradcheck)
    return ap


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, EncodingError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
