import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ROOT = Path(__file__).resolve().parents[1]
ARTIFACTS = ROOT / "artifacts"

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}

# desk-scale training recipe; the same as the README's CLI commands
RUNS = {
    "greedy": dict(seed=1, epochs=20_000),
    "coop": dict(seed=1, epochs=60_000),
}


def trained_weights(mode: str):
    """Load cached desk-scale weights, training them first if absent (hours)."""
    from dronepatrol.harness.config import load_config
    from dronepatrol.learner import load_weights, save_weights, train_run

    path = ARTIFACTS / f"{mode}.dqnw"
    if not path.exists():
        env, train = load_config(ROOT / "configs" / "desk.ini")
        run = RUNS[mode]
        res = train_run(mode, train, env, run["seed"], epochs=run["epochs"])
        ARTIFACTS.mkdir(exist_ok=True)
        save_weights(res.params, path)
    return load_weights(path)


@pytest.fixture(scope="session")
def greedy_weights():
    return trained_weights("greedy")


@pytest.fixture(scope="session")
def coop_weights():
    return trained_weights("coop")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
