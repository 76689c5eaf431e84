"""Shared fixtures."""
from __future__ import annotations

import numpy as np
import pytest

from pyflops.schedule import NoiseSchedule, TimeMap
from pyflops.target import TargetDistribution, benchmark_suite, preset_target
from pyflops.transform import ScoreOracle


@pytest.fixture
def schedule() -> NoiseSchedule:
    return NoiseSchedule()


@pytest.fixture
def tmap(schedule: NoiseSchedule) -> TimeMap:
    return TimeMap(schedule)


@pytest.fixture
def suite() -> dict[str, TargetDistribution]:
    return benchmark_suite()


@pytest.fixture
def mixture3() -> TargetDistribution:
    return preset_target("mixture3")


@pytest.fixture
def gaussian() -> TargetDistribution:
    return TargetDistribution.gaussian(np.zeros(2), np.eye(2))


@pytest.fixture
def dirac() -> TargetDistribution:
    return TargetDistribution.dirac(np.zeros(2))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def score_for(target: TargetDistribution, schedule: NoiseSchedule) -> ScoreOracle:
    return ScoreOracle.from_target(target, schedule)
