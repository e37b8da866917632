"""Shared fixtures: the bundled scenarios, their channel sets, and a hypothesis
profile sized so the full suite stays fast but property tests still explore."""

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from coexsim.channel import build_channels
from coexsim.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"

settings.register_profile(
    "suite", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def desk_scenario():
    return load_scenario(SCENARIOS / "desk_scale.yaml")


@pytest.fixture(scope="session")
def desk_channels(desk_scenario):
    return build_channels(desk_scenario)


@pytest.fixture(scope="session")
def desk_crb06_scenario():
    return load_scenario(SCENARIOS / "desk_scale_crb06.yaml")


@pytest.fixture(scope="session")
def default_scenario():
    return load_scenario(SCENARIOS / "default.yaml")
