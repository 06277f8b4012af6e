"""Puzzle -> sequence-of-boards tensor encoding, plus the GLKF shard format.

Board layout is ``[channel, rank, file]`` with rank 0 = first rank, so the
flattened 64-square axis matches the ``rank * 8 + file`` square index.

Channels::

    0-5    mover king, queen, rook, bishop, knight, pawn
    6-11   opponent, same order
    12,13  previous move from / to
    14,15  next move from / to
"""
from __future__ import annotations

import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .chess_core import (
    BoardState, Color, Move, MoveError, apply_move, mirror, mirror_move, parse_fen,
)
from .puzzle_data import (
    PuzzleRecord, StandardizationParams, StandardizedTarget, target_for, unstandardize,
)

N_CHANNELS = 16
SHARD_MAGIC = b"GLKF"
SHARD_VERSION = 1


class EncodingError(ValueError):
    def __init__(self, puzzle_id: str, move_index: int, reason: str):
        super().__init__(f"puzzle {puzzle_id}: move {move_index}: {reason}")
        self.puzzle_id = puzzle_id
        self.move_index = move_index
        self.reason = reason

    def __reduce__(self):  # survives pickling across worker processes
        return (EncodingError, (self.puzzle_id, self.move_index, self.reason))


@dataclass
class PuzzleEncoding:
    boards: np.ndarray      # uint8 [n_max, 16, 8, 8], zero beyond n_boards
    mask: np.ndarray        # bool [n_max], n_boards leading Trues
    target: StandardizedTarget
    puzzle_id: str = ""
    solver_moves: int = 0   # encodable solver positions before truncation

    @property
    def n_boards(self) -> int:
        return int(self.mask.sum())

    @property
    def n_max(self) -> int:
        return len(self.mask)


def encode_board(state: BoardState, prev: Move, next_move: Move) -> np.ndarray:
    out = np.zeros((N_CHANNELS, 8, 8), dtype=np.uint8)
    mover = state.side_to_move
    for sq, p in state.pieces():
        ch = int(p.kind) + (0 if p.color == mover else 6)
        out[ch, sq >> 3, sq & 7] = 1
    for ch, sq in ((12, prev.from_sq), (13, prev.to_sq),
                   (14, next_move.from_sq), (15, next_move.to_sq)):
        out[ch, sq >> 3, sq & 7] = 1
    return out


def solver_position_count(n_moves: int) -> int:
    return math.ceil((n_moves - 1) / 2)


def encode_puzzle(
    record: PuzzleRecord,
    n_max: int,
    params: StandardizationParams = StandardizationParams(),
) -> PuzzleEncoding:
    """Encode the solver-to-move positions of ``record``.

    Board j (1-based) is the position after moves m_1..m_{2j-1}, with
    prev = m_{2j-1} and next = m_{2j}.  Everything is mirrored when the
    solver plays Black.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if len(record.moves) < 2:
        raise EncodingError(record.id, 0, "need at least two moves")
    try:
        state = parse_fen(record.fen)
    except ValueError as exc:
        raise EncodingError(record.id, 0, str(exc)) from exc
    moves = []
    for i, m in enumerate(record.moves):
        try:
            moves.append(Move.from_uci(m))
        except MoveError as exc:
            raise EncodingError(record.id, i + 1, str(exc)) from exc

    total = solver_position_count(len(moves))
    count = min(total, n_max)
    boards = np.zeros((n_max, N_CHANNELS, 8, 8), dtype=np.uint8)
    flip: Optional[bool] = None
    ply = 0
    for j in range(count):
        # advance to the state after m_{2j+1} (0-based: moves[2j])
        while ply <= 2 * j:
            try:
                state = apply_move(state, moves[ply])
            except MoveError as exc:
                raise EncodingError(record.id, ply + 1, str(exc)) from exc
            ply += 1
        if flip is None:
            flip = state.side_to_move == Color.BLACK
        prev, nxt = moves[2 * j], moves[2 * j + 1]
        if flip:
            boards[j] = encode_board(mirror(state), mirror_move(prev), mirror_move(nxt))
        else:
            boards[j] = encode_board(state, prev, nxt)

    mask = np.zeros(n_max, dtype=bool)
    mask[:count] = True
    return PuzzleEncoding(boards, mask, target_for(record, params), record.id, total)


@dataclass
class EncodedDataset:
    """Column-oriented batch of encodings, ready for the models."""

    boards: np.ndarray        # uint8 [N, n_max, 16, 8, 8]
    mask: np.ndarray          # bool [N, n_max]
    mu: np.ndarray            # float64 [N]
    phi: np.ndarray           # float64 [N]
    solver_moves: np.ndarray  # int [N]
    ids: list

    def __len__(self) -> int:
        return len(self.mu)

    @property
    def n_max(self) -> int:
        return self.mask.shape[1]

    @classmethod
    def from_encodings(cls, encs: Sequence[PuzzleEncoding]) -> "EncodedDataset":
        if not encs:
            raise ValueError("no encodings")
        return cls(
            boards=np.stack([e.boards for e in encs]),
            mask=np.stack([e.mask for e in encs]),
            mu=np.array([e.target.mu for e in encs], dtype=np.float64),
            phi=np.array([e.target.phi for e in encs], dtype=np.float64),
            solver_moves=np.array([e.solver_moves for e in encs], dtype=np.int64),
            ids=[e.puzzle_id for e in encs],
        )

    def subset(self, idx) -> "EncodedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return EncodedDataset(
            self.boards[idx], self.mask[idx], self.mu[idx], self.phi[idx],
            self.solver_moves[idx], [self.ids[i] for i in idx],
        )

    def ratings(self, params: StandardizationParams = StandardizationParams()) -> np.ndarray:
        return unstandardize(self.mu, params)

    def deviations(self, params: StandardizationParams = StandardizationParams()) -> np.ndarray:
        return self.phi * params.std


def _encode_or_error(args):
    record, n_max, params = args
    try:
        return encode_puzzle(record, n_max, params)
    except EncodingError as exc:
        return exc


def encode_records(records, n_max: int, params=StandardizationParams(), workers: int = 1):
    """Encode many records; returns ``(dataset, failures)``.

    ``failures`` lists the EncodingError for each puzzle that could not be
    replayed.  With ``workers > 1`` puzzles are encoded in a process pool;
    output order always follows input order.
    """
    records = list(records)
    jobs = [(r, n_max, params) for r in records]
    if workers > 1 and len(records) >= 256:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_encode_or_error, jobs, chunksize=128))
    else:
        results = [_encode_or_error(j) for j in jobs]
    encs = [r for r in results if isinstance(r, PuzzleEncoding)]
    failures = [r for r in results if isinstance(r, EncodingError)]
    ds = EncodedDataset.from_encodings(encs) if encs else None
    return ds, failures


# -- shard format -----------------------------------------------------------
#
# little endian
#   header : b"GLKF" | version u32 | n_max u32 | count u64
#   record : board_count u8 | mask bits u8 (bit i = slot i, LSB first)
#            | packbits(boards[n_max,16,8,8] in C order, MSB first) | mu f32 | phi f32

_HEADER = struct.Struct("<4sIIQ")
_TAIL = struct.Struct("<ff")


def _record_size(n_max: int) -> int:
    return 2 + (N_CHANNELS * 64 * n_max) // 8 + _TAIL.size


def write_shard(path, ds: EncodedDataset) -> None:
    n_max = ds.n_max
    if n_max > 8:
        raise ValueError("shard format stores the mask in one byte; n_max must be <= 8")
    packed = np.packbits(ds.boards.reshape(len(ds), -1).astype(bool), axis=1)
    mask_bits = (ds.mask.astype(np.uint16) << np.arange(n_max, dtype=np.uint16)).sum(axis=1)
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(SHARD_MAGIC, SHARD_VERSION, n_max, len(ds)))
        for i in range(len(ds)):
            fh.write(bytes((int(ds.mask[i].sum()), int(mask_bits[i]))))
            fh.write(packed[i].tobytes())
            fh.write(_TAIL.pack(ds.mu[i], ds.phi[i]))


def read_shard(path) -> EncodedDataset:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated shard header")
    magic, version, n_max, count = _HEADER.unpack_from(data)
    if magic != SHARD_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != SHARD_VERSION:
        raise ValueError(f"{path}: unsupported shard version {version}")
    rec = _record_size(n_max)
    if len(data) != _HEADER.size + rec * count:
        raise ValueError(f"{path}: size does not match {count} records")
    raw = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size).reshape(count, rec)
    nbytes = rec - 2 - _TAIL.size
    boards = np.unpackbits(raw[:, 2:2 + nbytes], axis=1)
    boards = boards.reshape(count, n_max, N_CHANNELS, 8, 8)
    mask = ((raw[:, 1:2].astype(np.uint16) >> np.arange(n_max)) & 1).astype(bool)
    tail = np.ascontiguousarray(raw[:, 2 + nbytes:]).view("<f4").astype(np.float64)
    counts = raw[:, 0].astype(np.int64)
    if np.any(mask.sum(axis=1) != counts):
        raise ValueError(f"{path}: mask bits disagree with board counts")
    return EncodedDataset(
        boards=boards, mask=mask, mu=tail[:, 0], phi=tail[:, 1],
        solver_moves=counts, ids=[f"{Path(path).stem}:{i}" for i in range(count)],
    )
