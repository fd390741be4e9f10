import sys
import warnings

import numpy as np
import pytest

from ixdrl.analysis import analyze
from ixdrl.rollout import GridworldSpec, LineWorldSpec, rollout, train_toy_agent
from ixdrl.traces import (ActionSpaceSpec, DiscreteDistribution, DiscreteFactor, InteractionDatapoint,
                          Trace, TraceSet)

HAZARD_GRID = GridworldSpec(5, 5, goals=(((4, 4), 1.0),), hazards=(((2, 1), -1.0), ((1, 3), -1.0)),
                            walls=((3, 2),), p_slip=0.1, max_steps=30,
                            starts=((0, 0), (1, 0), (0, 1)))


@pytest.fixture(scope="session")
def grid_agent():
    return train_toy_agent(HAZARD_GRID, episodes=200, seed=0)


@pytest.fixture(scope="session")
def grid_traces(grid_agent):
    return rollout(HAZARD_GRID, grid_agent, 30, seed=1)


@pytest.fixture(scope="session")
def grid_records(grid_traces):
    return analyze(grid_traces)


@pytest.fixture(scope="session")
def line_env():
    return LineWorldSpec(max_steps=40)


@pytest.fixture(scope="session")
def line_traces(line_env):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        agent = train_toy_agent(line_env, episodes=50, seed=0)
    return rollout(line_env, agent, 8, seed=2)


def policy_only_traceset(probs_per_step, trace_id="p0"):
    """A single-factor discrete trace carrying only policies."""
    n = len(probs_per_step[0])
    space = ActionSpaceSpec((DiscreteFactor(n, name="a"),))
    dps = tuple(InteractionDatapoint(step=t, observation=(0.0,), action=(0,), reward=0.0,
                                     policy=(DiscreteDistribution(tuple(p)),))
                for t, p in enumerate(probs_per_step))
    return TraceSet(space, 0.9, [Trace(trace_id, dps)])


def random_probs(rng, n):
    p = rng.dirichlet(np.ones(n))
    if rng.random() < 0.2:
        p = np.zeros(n)
        p[rng.integers(n)] = 1.0
    return tuple(float(v) for v in p / p.sum())


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("tests.test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance.RESULTS:
            terminalreporter.write_line(line)
