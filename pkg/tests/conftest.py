import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # oracles.py

from fosae import puzzle  # noqa: E402
from fosae.model import FosaeConfig  # noqa: E402
from fosae.pipeline import train  # noqa: E402

# epochs for the shared (9, 2, 6) puzzle model; well under the 300-epoch budget
PUZZLE_EPOCHS = int(os.environ.get("FOSAE_TEST_EPOCHS", "10"))


@pytest.fixture(scope="session")
def puzzle_data():
    """The 20000-pair 8-puzzle dataset (18000 train / 2000 test), seed 0."""
    return puzzle.Dataset.from_transitions(puzzle.generate_transitions(20000, seed=0))


@pytest.fixture(scope="session")
def small_data():
    return puzzle.Dataset.from_transitions(puzzle.generate_transitions(400, seed=1))


@pytest.fixture(scope="session")
def puzzle_config():
    return FosaeConfig(num_units=9, arity=2, num_predicates=6, epochs=PUZZLE_EPOCHS, dtype="float32", seed=0)


@pytest.fixture(scope="session")
def trained_puzzle(puzzle_config, puzzle_data, tmp_path_factory):
    """(model, history, checkpoint dir) for (U, A, P) = (9, 2, 6)."""
    ckpt = tmp_path_factory.mktemp("puzzle-926")
    model, history = train(puzzle_config, puzzle_data, checkpoint_dir=ckpt)
    return model, history, ckpt


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
