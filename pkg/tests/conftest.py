from __future__ import annotations

import pytest

from spotsearch.bench import load_suite
from spotsearch.scorers import Hotspot, SyntheticScene
from spotsearch.geometry import Region

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def suite():
    return load_suite()


@pytest.fixture
def room() -> SyntheticScene:
    """Small two-hotspot scene with one directional lobe."""
    return SyntheticScene(
        Region((0.0, 0.0, 0.0), (8.0, 3.0, 6.0)),
        (
            Hotspot((2.0, 1.5, 2.0), sigma=1.5, amplitude=0.9, kappa=0.0),
            Hotspot((6.0, 1.0, 4.5), sigma=1.0, amplitude=1.0, kappa=2.0),
        ),
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
