import os
from pathlib import Path

import pytest

from glickformer.puzzle_data import load_puzzles

DATA = Path(__file__).parent / "data"
CORPUS = DATA / "corpus.csv"

# two-move fork puzzle: the opponent's blunder, a forking queen check, the
# forced king move, then the queen collects the bishop
FORK_FEN = "3q2k1/4rppp/8/8/8/8/PP1B2PP/6K1 w - - 0 1"
FORK_MOVES = ("d2b4", "d8d4", "g1h1", "d4b4")


def corpus_path() -> Path:
    """Real Lichess CSV when GLKF_PUZZLE_CSV is set, else the bundled synthetic corpus."""
    return Path(os.environ.get("GLKF_PUZZLE_CSV", CORPUS))


@pytest.fixture(scope="session")
def corpus():
    return load_puzzles(corpus_path())


# acceptance verdicts, printed once at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
