from pathlib import Path

import pytest

GOLDEN = Path(__file__).parent / "golden"
SCENARIOS = Path(__file__).parents[1] / "scenarios"


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIOS
