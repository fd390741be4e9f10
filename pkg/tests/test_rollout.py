import warnings

import numpy as np
import pytest

from ixdrl.analysis import analyze
from ixdrl.rollout import (GridworldSpec, LineWorldSpec, UnreachableGoalWarning, bellman_residual,
                           generate_from_config, make_regime_mixture, rollout, softmax_policy,
                           train_toy_agent, value_iteration)
from ixdrl.traces import ContinuousFactor, dumps_traceset

from .conftest import HAZARD_GRID


def test_corridor_closed_form():
    env = GridworldSpec(3, 1, goals=(((2, 0), 1.0),), discount=0.9, starts=((0, 0),))
    V, Q = value_iteration(env)
    # reward is collected on entering the goal; goal states hold value 0
    assert V[env.index((1, 0))] == pytest.approx(1.0, abs=1e-12)
    assert V[env.index((0, 0))] == pytest.approx(0.9, abs=1e-12)
    assert V[env.index((2, 0))] == 0.0


def test_bellman_residual_small(grid_agent):
    assert grid_agent.info["bellman_residual"] < 1e-6
    assert bellman_residual(HAZARD_GRID, grid_agent.values) < 1e-6


def test_deterministic_dynamics_give_identical_members():
    env = GridworldSpec(4, 4, goals=(((3, 3), 1.0),), p_slip=0.0, starts=((0, 0),), max_steps=20)
    agent = train_toy_agent(env, episodes=400, seed=0)
    ts = rollout(env, agent, 10, seed=0)
    for t in ts:
        for dp in t.datapoints:
            members = np.array(dp.ensemble.members)
            assert np.allclose(members, members[0], atol=1e-12)
    fam = [r.values["familiarity"] for r in analyze(ts)]
    assert np.allclose(fam, 1.0)


def test_zero_temperature_is_one_hot():
    q = np.array([[1.0, 2.0, 0.5, 0.0], [3.0, -1.0, 0.0, 2.9]])
    assert np.array_equal(softmax_policy(q, 0.0), np.array([[0, 1, 0, 0], [1, 0, 0, 0]], float))
    assert np.allclose(softmax_policy(q, 1e-6), softmax_policy(q, 0.0))
    ties = softmax_policy(np.array([[1.0, 1.0, 0.0, 0.0]]), 0.0)
    assert np.allclose(ties, [[0.5, 0.5, 0, 0]])


def test_agent_policy_rows_are_distributions(grid_agent):
    assert np.allclose(grid_agent.policy.sum(axis=1), 1.0)
    assert np.allclose(grid_agent.q_dist.sum(axis=2)[[HAZARD_GRID.index(c) for c in HAZARD_GRID.free_cells()]], 1.0)


def test_zero_traces_rejected(grid_agent):
    with pytest.raises(ValueError):
        rollout(HAZARD_GRID, grid_agent, 0, seed=0)


def test_agent_environment_mismatch(grid_agent):
    with pytest.raises(ValueError, match="different environment"):
        rollout(GridworldSpec(3, 3, goals=(((2, 2), 1.0),)), grid_agent, 1, seed=0)


def test_seed_determinism(grid_agent):
    a = dumps_traceset(rollout(HAZARD_GRID, grid_agent, 5, seed=11))
    b = dumps_traceset(rollout(HAZARD_GRID, grid_agent, 5, seed=11))
    c = dumps_traceset(rollout(HAZARD_GRID, grid_agent, 5, seed=12))
    assert a == b
    assert a != c


def test_training_determinism():
    a = train_toy_agent(HAZARD_GRID, episodes=50, seed=3)
    b = train_toy_agent(HAZARD_GRID, episodes=50, seed=3)
    assert np.array_equal(a.ensemble, b.ensemble)
    assert np.array_equal(a.q_dist, b.q_dist)


def test_probing_fidelity(grid_agent, grid_traces):
    env = HAZARD_GRID
    for t in grid_traces:
        for dp in t.datapoints:
            x = round(dp.observation[0] * env.width) - 1
            y = round(dp.observation[1] * env.height) - 1
            s = env.index((x, y))
            assert dp.value == grid_agent.values[s]
            assert np.allclose(dp.policy[0].probs, grid_agent.policy[s])
            assert np.allclose([q.mean() for q in dp.action_values], grid_agent.q[s], atol=0.05)
            assert dp.observation[2] == float(env.near_hazard((x, y)))


def test_trace_metadata(grid_traces):
    for t in grid_traces:
        assert t.metadata["length"] == len(t)
        assert t.metadata["outcome"] in ("goal", "hazard", "timeout")
        assert t.terminal == (t.metadata["outcome"] != "timeout")
        assert t.metadata["score"] == pytest.approx(sum(dp.reward for dp in t.datapoints))


def test_unreachable_goal_warns():
    walled = GridworldSpec(3, 3, goals=(((2, 2), 1.0),), walls=((1, 2), (2, 1)), starts=((0, 0),))
    with pytest.warns(UnreachableGoalWarning):
        train_toy_agent(walled, episodes=5, seed=0)


@pytest.mark.parametrize("kwargs", [dict(p_slip=1.5), dict(max_steps=0), dict(discount=1.0),
                                    dict(walls=((2, 2),)), dict(starts=((9, 9),)), dict(goals=())])
def test_invalid_grid_rejected(kwargs):
    base = dict(width=3, height=3, goals=(((2, 2), 1.0),))
    base.update(kwargs)
    with pytest.raises(ValueError):
        GridworldSpec(**base)


def test_mixture_labels_and_weights():
    a = GridworldSpec(4, 4, goals=(((3, 3), 1.0),), starts=((0, 0),), max_steps=15)
    b = GridworldSpec(4, 4, goals=(((3, 3), 0.5),), p_slip=0.5, starts=((0, 0),), max_steps=15)
    ts = make_regime_mixture([a, b], [1.0, 0.0], 12, seed=0, episodes=20)
    assert [t.metadata["regime"] for t in ts] == [0] * 12
    ts = make_regime_mixture([a, b], [0.5, 0.5], 40, seed=0, episodes=20)
    assert {t.metadata["regime"] for t in ts} == {0, 1}
    with pytest.raises(ValueError):
        make_regime_mixture([a, b], [0.7, 0.7], 4, seed=0)


def test_three_regimes_have_distinct_mean_value():
    specs = [GridworldSpec(4, 4, goals=(((3, 3), 1.0),), starts=((0, 0),), max_steps=20),
             GridworldSpec(4, 4, goals=(((3, 3), 1.0),), hazards=(((2, 2), -1.0), ((1, 2), -1.0)),
                           p_slip=0.3, starts=((0, 0),), max_steps=20),
             GridworldSpec(4, 4, goals=(((3, 3), 0.5),), p_slip=0.6, step_reward=-0.01,
                           starts=((0, 0),), max_steps=20)]
    ts = make_regime_mixture(specs, [1 / 3, 1 / 3, 1 / 3], 60, seed=1, episodes=30)
    raw = {r: [dp.value for t in ts if t.metadata["regime"] == r for dp in t.datapoints] for r in range(3)}
    means = sorted(np.mean(v) for v in raw.values())
    assert min(np.diff(means)) > 0.05


def test_generate_from_config_mixture():
    cfg = {"kind": "mixture", "weights": [0.5, 0.5], "agent": {"episodes": 10},
           "regimes": [{"width": 3, "height": 3, "goals": [{"cell": [2, 2], "reward": 1.0}]},
                       {"width": 3, "height": 3, "goals": [{"cell": [2, 2], "reward": 1.0}], "p_slip": 0.5}]}
    ts = generate_from_config(cfg, 6, seed=0)
    assert len(ts) == 6
    assert len(ts.metadata["envs"]) == 2


def test_lineworld_three_factors(line_traces):
    assert len(line_traces.action_space.factors) == 3
    assert all(isinstance(f, ContinuousFactor) for f in line_traces.action_space.factors)
    dp = line_traces.traces[0].datapoints[0]
    assert len(dp.policy) == 3 and len(dp.action) == 3
    assert dp.ensemble.is_distributional


def test_lineworld_validation():
    with pytest.raises(ValueError):
        LineWorldSpec(n_factors=0)
    with pytest.raises(ValueError):
        LineWorldSpec(goal_start=0.0)


def test_training_rejects_bad_arguments():
    with pytest.raises(ValueError):
        train_toy_agent(HAZARD_GRID, episodes=0, seed=0)
    with pytest.raises(ValueError):
        train_toy_agent(HAZARD_GRID, episodes=5, seed=0, ensemble_size=1)
    with pytest.raises(TypeError):
        train_toy_agent("grid", episodes=5, seed=0)


def test_slip_free_corridor_trace_reaches_goal():
    env = GridworldSpec(5, 1, goals=(((4, 0), 1.0),), discount=0.9, starts=((0, 0),), max_steps=10)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        agent = train_toy_agent(env, episodes=50, seed=0, temperature=0.0)
    ts = rollout(env, agent, 3, seed=0)
    for t in ts:
        assert t.metadata["outcome"] == "goal"
        assert len(t) == 4
        assert [dp.value for dp in t.datapoints] == pytest.approx([0.9 ** 3, 0.9 ** 2, 0.9, 1.0])
