import functools
from pathlib import Path

import numpy as np
import pytest

from tspmp.problem import FIXED_INITIAL, Consumption, ControlBox, ControlProblem, TerminalSpec
from tspmp.timescale import TimeScale

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

CONT = TimeScale.interval(0, 12)
DISC = TimeScale.uniform(0, 1, 12)
HYBRID = TimeScale.union(TimeScale.interval(0, 6), TimeScale.points([10]), TimeScale.interval(11.5, 12))


def consumption(ts1, ts=CONT, q_a=1.0):
    return ControlProblem(ts, ts1, Consumption(), ControlBox([0.0], [1.0]), TerminalSpec(FIXED_INITIAL, [q_a]))


def every(period, ts=CONT):
    return consumption(TimeScale.uniform(0, period, 12), ts)


@functools.lru_cache(maxsize=None)
def sweep(name):
    """Cached backward-sweep result for a named scenario."""
    from tspmp.solver import backward_sweep_consumption

    return backward_sweep_consumption(named_problem(name))


@functools.lru_cache(maxsize=None)
def named_problem(name):
    from tspmp.scenario import Scenario

    return Scenario.load(SCENARIOS / f"{name}.json").problem()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
