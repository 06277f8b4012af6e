"""Generate a seeded corpus of puzzle-shaped records in the Lichess CSV layout.

Positions come from random legal games (python-chess), biased towards
captures, castling, en passant and promotions so that every move effect
shows up.  Ratings and deviations are drawn to resemble the public dataset's
marginals; they carry no relation to the positions.

    python scripts/make_corpus.py --count 1200 --seed 7 --out tests/data/corpus.csv
"""
import argparse
import csv
import random

import chess

COLUMNS = ["PuzzleId", "FEN", "Moves", "Rating", "RatingDeviation", "Popularity",
           "NbPlays", "Themes", "GameUrl", "OpeningTags"]
THEMES = ["fork", "pin", "mateIn2", "crushing", "advantage", "short", "long",
          "endgame", "middlegame", "promotion", "enPassant", "castling", "sacrifice"]
# solution lengths in plies; Lichess puzzles are mostly 2-6 plies long
LENGTHS = [2] * 10 + [3] * 2 + [4] * 40 + [5] * 2 + [6] * 28 + [8] * 12 + [10] * 4 + [12] * 2 + [14] * 1


def pick_move(board, rng):
    moves = list(board.legal_moves)
    special = [m for m in moves if m.promotion or board.is_castling(m) or board.is_en_passant(m)]
    if special and rng.random() < 0.8:
        return rng.choice(special)
    captures = [m for m in moves if board.is_capture(m)]
    if captures and rng.random() < 0.4:
        return rng.choice(captures)
    return rng.choice(moves)


def make_puzzle(rng, idx):
    while True:
        board = chess.Board()
        for _ in range(rng.randint(6, 90)):
            if board.is_game_over():
                break
            board.push(pick_move(board, rng))
        if board.is_game_over():
            continue
        fen = board.fen(en_passant="fen")
        plies = rng.choice(LENGTHS)
        line = []
        for _ in range(plies):
            if board.is_game_over():
                break
            mv = pick_move(board, rng)
            line.append(mv.uci())
            board.push(mv)
        if len(line) < 2:
            continue
        rating = int(min(3300, max(400, rng.gauss(1516, 543))))
        rd = int(rng.choice([rng.randint(74, 95)] * 8 + [rng.randint(96, 320)] * 2))
        return {
            "PuzzleId": f"s{idx:05d}",
            "FEN": fen,
            "Moves": " ".join(line),
            "Rating": rating,
            "RatingDeviation": rd,
            "Popularity": rng.randint(-20, 100),
            "NbPlays": rng.randint(10, 50000),
            "Themes": " ".join(rng.sample(THEMES, 2)),
            "GameUrl": f"https://lichess.org/synthetic{idx:05d}",
            "OpeningTags": "",
        }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=1200)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, COLUMNS, lineterminator="\n")
        w.writeheader()
        for i in range(args.count):
            w.writerow(make_puzzle(rng, i))


if __name__ == "__main__":
    main()
