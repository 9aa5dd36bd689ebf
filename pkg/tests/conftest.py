from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from mdiqcc.model import load_counts

DATA = Path(str(resources.files("mdiqcc") / "data"))
FIELD_LOSSES = ("14p1", "17p8", "21p5")
#: Acceptance-criterion result lines, shown in the terminal summary.
ACCEPTANCE_KEY = pytest.StashKey[list]()


def field_paths(tag: str) -> tuple[Path, Path]:
    return DATA / f"field_{tag}db_counts.csv", DATA / f"field_{tag}db_errors.csv"


@pytest.fixture(scope="session")
def field_ledgers():
    return {tag: load_counts(*field_paths(tag)) for tag in FIELD_LOSSES}


@pytest.fixture(scope="session")
def example_config() -> Path:
    return DATA / "example_config.json"


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
