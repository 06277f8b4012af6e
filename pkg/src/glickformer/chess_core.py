"""FEN parsing, UCI move replay and colour mirroring.

Only the *effects* of moves are implemented (castling rook transfer, en
passant removal, promotion, clocks, rights).  Legality is trusted to the
data source.

Squares are plain ints, a1 = 0 ... h8 = 63 (``rank * 8 + file``).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional


class FenError(ValueError):
    pass


class MoveError(ValueError):
    pass


class Color(enum.IntEnum):
    WHITE = 0
    BLACK = 1

    @property
    def other(self) -> "Color":
        return Color(1 - self)


class PieceKind(enum.IntEnum):
    # order doubles as the encoder's channel order
    KING = 0
    QUEEN = 1
    ROOK = 2
    BISHOP = 3
    KNIGHT = 4
    PAWN = 5


class Piece(NamedTuple):
    kind: PieceKind
    color: Color

    def symbol(self) -> str:
        s = _KIND_TO_CHAR[self.kind]
        return s.upper() if self.color == Color.WHITE else s

    def swapped(self) -> "Piece":
        return Piece(self.kind, self.color.other)


_KIND_TO_CHAR = {
    PieceKind.KING: "k",
    PieceKind.QUEEN: "q",
    PieceKind.ROOK: "r",
    PieceKind.BISHOP: "b",
    PieceKind.KNIGHT: "n",
    PieceKind.PAWN: "p",
}
_CHAR_TO_KIND = {v: k for k, v in _KIND_TO_CHAR.items()}

FILES = "abcdefgh"
RANKS = "12345678"

A1, E1, H1 = 0, 4, 7
A8, E8, H8 = 56, 60, 63


def square_file(sq: int) -> int:
    return sq & 7


def square_rank(sq: int) -> int:
    return sq >> 3


def square_name(sq: int) -> str:
    return FILES[sq & 7] + RANKS[sq >> 3]


def parse_square(text: str) -> int:
    if len(text) != 2 or text[0] not in FILES or text[1] not in RANKS:
        raise ValueError(f"bad square {text!r}")
    return RANKS.index(text[1]) * 8 + FILES.index(text[0])


def flip_rank(sq: int) -> int:
    return sq ^ 56


@dataclass(frozen=True)
class Move:
    from_sq: int
    to_sq: int
    promotion: Optional[PieceKind] = None

    def __post_init__(self):
        if not (0 <= self.from_sq < 64 and 0 <= self.to_sq < 64):
            raise MoveError(f"square out of range in {self.from_sq}->{self.to_sq}")
        if self.from_sq == self.to_sq:
            raise MoveError("from and to squares coincide")

    @classmethod
    def from_uci(cls, text: str) -> "Move":
        if len(text) not in (4, 5):
            raise MoveError(f"bad UCI move {text!r}")
        try:
            frm, to = parse_square(text[:2]), parse_square(text[2:4])
        except ValueError as exc:
            raise MoveError(f"bad UCI move {text!r}") from exc
        promo = None
        if len(text) == 5:
            kind = _CHAR_TO_KIND.get(text[4])
            if kind is None or kind in (PieceKind.KING, PieceKind.PAWN):
                raise MoveError(f"bad promotion in {text!r}")
            promo = kind
        return cls(frm, to, promo)

    def uci(self) -> str:
        s = square_name(self.from_sq) + square_name(self.to_sq)
        if self.promotion is not None:
            s += _KIND_TO_CHAR[self.promotion]
        return s

    def __str__(self) -> str:
        return self.uci()


@dataclass(frozen=True)
class BoardState:
    squares: tuple  # 64 x Optional[Piece]
    side_to_move: Color
    castling_rights: tuple = (False, False, False, False)  # K, Q, k, q
    en_passant: Optional[int] = None
    halfmove_clock: int = 0
    fullmove_number: int = 1

    def piece_at(self, sq: int) -> Optional[Piece]:
        return self.squares[sq]

    def pieces(self):
        """Yield ``(square, piece)`` for every occupied square."""
        for sq, p in enumerate(self.squares):
            if p is not None:
                yield sq, p

    def piece_count(self) -> int:
        return sum(p is not None for p in self.squares)


STARTING_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"


def parse_fen(text: str) -> BoardState:
    fields = text.split()
    if not 4 <= len(fields) <= 6:
        raise FenError(f"expected 4-6 fields, got {len(fields)}")
    placement, side, castling, ep = fields[:4]

    ranks = placement.split("/")
    if len(ranks) != 8:
        raise FenError(f"piece placement: expected 8 ranks, got {len(ranks)}")
    squares: list = [None] * 64
    for i, row in enumerate(ranks):
        rank = 7 - i
        file = 0
        for ch in row:
            if ch.isdigit():
                n = int(ch)
                if n == 0 or n > 8:
                    raise FenError(f"piece placement: bad empty count {ch!r}")
                file += n
            else:
                kind = _CHAR_TO_KIND.get(ch.lower())
                if kind is None:
                    raise FenError(f"piece placement: bad symbol {ch!r}")
                if file >= 8:
                    raise FenError(f"piece placement: rank width exceeds 8 on rank {rank + 1}")
                color = Color.WHITE if ch.isupper() else Color.BLACK
                if kind == PieceKind.PAWN and rank in (0, 7):
                    raise FenError(f"piece placement: pawn on rank {rank + 1}")
                squares[rank * 8 + file] = Piece(kind, color)
                file += 1
        if file != 8:
            raise FenError(f"piece placement: rank width {file} != 8 on rank {rank + 1}")

    for color in Color:
        kings = sum(1 for p in squares if p == Piece(PieceKind.KING, color))
        if kings != 1:
            raise FenError(f"piece placement: {kings} {color.name.lower()} kings")

    if side not in ("w", "b"):
        raise FenError(f"side to move: bad token {side!r}")
    stm = Color.WHITE if side == "w" else Color.BLACK

    if castling == "-":
        rights = (False, False, False, False)
    else:
        if any(c not in "KQkq" for c in castling) or len(set(castling)) != len(castling):
            raise FenError(f"castling: bad token {castling!r}")
        rights = tuple(c in castling for c in "KQkq")

    if ep == "-":
        ep_sq = None
    else:
        try:
            ep_sq = parse_square(ep)
        except ValueError:
            raise FenError(f"en passant: bad square {ep!r}") from None
        if square_rank(ep_sq) not in (2, 5):
            raise FenError(f"en passant: {ep} not on rank 3 or 6")

    try:
        half = int(fields[4]) if len(fields) > 4 else 0
        full = int(fields[5]) if len(fields) > 5 else 1
    except ValueError:
        raise FenError("clocks: non-integer move clock") from None
    if half < 0 or full < 1:
        raise FenError("clocks: out of range")

    return BoardState(tuple(squares), stm, rights, ep_sq, half, full)


def board_fen(state: BoardState) -> str:
    rows = []
    for rank in range(7, -1, -1):
        row, empty = "", 0
        for file in range(8):
            p = state.squares[rank * 8 + file]
            if p is None:
                empty += 1
                continue
            if empty:
                row += str(empty)
                empty = 0
            row += p.symbol()
        if empty:
            row += str(empty)
        rows.append(row)
    return "/".join(rows)


def serialize_fen(state: BoardState) -> str:
    castling = "".join(c for c, on in zip("KQkq", state.castling_rights) if on) or "-"
    ep = "-" if state.en_passant is None else square_name(state.en_passant)
    side = "w" if state.side_to_move == Color.WHITE else "b"
    return (
        f"{board_fen(state)} {side} {castling} {ep} "
        f"{state.halfmove_clock} {state.fullmove_number}"
    )


# squares whose involvement in a move (from or to) revokes a castling right
_RIGHT_SQUARES = {
    H1: (0,), E1: (0, 1), A1: (1,),
    H8: (2,), E8: (2, 3), A8: (3,),
}


def apply_move(state: BoardState, mv: Move) -> BoardState:
    """Play ``mv`` on ``state`` and return the resulting position."""
    piece = state.squares[mv.from_sq]
    if piece is None:
        raise MoveError(f"{mv.uci()}: from-square is empty")
    if piece.color != state.side_to_move:
        raise MoveError(f"{mv.uci()}: piece does not belong to side to move")
    target = state.squares[mv.to_sq]
    if target is not None and target.color == piece.color:
        raise MoveError(f"{mv.uci()}: destination holds own piece")

    sq = list(state.squares)
    capture = target is not None
    is_pawn = piece.kind == PieceKind.PAWN
    last_rank = 7 if piece.color == Color.WHITE else 0

    if mv.promotion is not None and not (is_pawn and square_rank(mv.to_sq) == last_rank):
        raise MoveError(f"{mv.uci()}: promotion without pawn reaching last rank")
    if is_pawn and square_rank(mv.to_sq) == last_rank and mv.promotion is None:
        raise MoveError(f"{mv.uci()}: pawn reaches last rank without promotion piece")

    sq[mv.from_sq] = None
    placed = Piece(mv.promotion, piece.color) if mv.promotion is not None else piece
    sq[mv.to_sq] = placed

    # en passant: diagonal pawn step onto the empty ep square
    if (
        is_pawn
        and not capture
        and mv.to_sq == state.en_passant
        and square_file(mv.from_sq) != square_file(mv.to_sq)
    ):
        victim = mv.to_sq - 8 if piece.color == Color.WHITE else mv.to_sq + 8
        if sq[victim] != Piece(PieceKind.PAWN, piece.color.other):
            raise MoveError(f"{mv.uci()}: en passant without capturable pawn")
        sq[victim] = None
        capture = True

    # castling: king moving two files along its home rank
    if piece.kind == PieceKind.KING and abs(square_file(mv.to_sq) - square_file(mv.from_sq)) == 2:
        home = square_rank(mv.from_sq) * 8
        if square_file(mv.to_sq) == 6:
            rook_from, rook_to = home + 7, home + 5
        else:
            rook_from, rook_to = home, home + 3
        rook = sq[rook_from]
        if rook != Piece(PieceKind.ROOK, piece.color):
            raise MoveError(f"{mv.uci()}: castling without rook on {square_name(rook_from)}")
        sq[rook_from] = None
        sq[rook_to] = rook

    rights = list(state.castling_rights)
    for s in (mv.from_sq, mv.to_sq):
        for idx in _RIGHT_SQUARES.get(s, ()):
            rights[idx] = False

    ep = None
    if is_pawn and abs(mv.to_sq - mv.from_sq) == 16:
        ep = (mv.from_sq + mv.to_sq) // 2

    half = 0 if (is_pawn or capture) else state.halfmove_clock + 1
    full = state.fullmove_number + (1 if piece.color == Color.BLACK else 0)

    return BoardState(tuple(sq), state.side_to_move.other, tuple(rights), ep, half, full)


def mirror(state: BoardState) -> BoardState:
    """Flip ranks and swap colours; files are left alone."""
    sq = [None] * 64
    for s, p in state.pieces():
        sq[flip_rank(s)] = p.swapped()
    k, q, bk, bq = state.castling_rights
    return replace(
        state,
        squares=tuple(sq),
        side_to_move=state.side_to_move.other,
        castling_rights=(bk, bq, k, q),
        en_passant=None if state.en_passant is None else flip_rank(state.en_passant),
    )


def mirror_move(mv: Move) -> Move:
    return Move(flip_rank(mv.from_sq), flip_rank(mv.to_sq), mv.promotion)
