import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ixdrl.pipeline import bundled_path
from ixdrl.rollout import env_from_dict
from ixdrl.traces import (ActionSpaceSpec, AtomDistribution, ContinuousFactor, DegenerateRangeWarning,
                          DiscreteDistribution, DiscreteFactor, EnsemblePrediction, GaussianSpec,
                          InteractionDatapoint, Trace, TraceSet, TraceValidationError, dumps_traceset,
                          load_traceset, loads_traceset, observed_reward_range, resolve_reward_range,
                          save_traceset)

from .conftest import policy_only_traceset

DOCS = Path(__file__).resolve().parent.parent / "docs"


def _three_step_file():
    return dumps_traceset(policy_only_traceset([(0.5, 0.5), (1.0, 0.0), (0.25, 0.75)]))


def test_minimal_file_loads():
    ts = loads_traceset(_three_step_file())
    assert len(ts) == 1
    assert ts.n_datapoints == 3
    assert ts.traces[0].datapoints[2].policy[0].probs == (0.25, 0.75)


def test_policy_sum_error_names_step():
    lines = _three_step_file().splitlines()
    rec = json.loads(lines[2])
    rec["policy"][0]["probs"] = [0.6, 0.3]
    lines[2] = json.dumps(rec)
    with pytest.raises(TraceValidationError) as err:
        loads_traceset("\n".join(lines))
    assert err.value.step == 1
    assert err.value.trace_id == "p0"
    assert "step 1" in str(err.value)


def test_non_contiguous_steps_rejected():
    lines = _three_step_file().splitlines()
    del lines[2]
    with pytest.raises(TraceValidationError, match="non-contiguous"):
        loads_traceset("\n".join(lines))


def test_bundled_sample_has_100_traces():
    ts = load_traceset(bundled_path("gridworld_sample.jsonl"))
    assert len(ts) == 100
    assert all(len(t) >= 1 for t in ts)


def test_bundled_sample_round_trip(tmp_path):
    ts = load_traceset(bundled_path("gridworld_sample.jsonl"))
    save_traceset(ts, tmp_path / "copy.jsonl")
    assert load_traceset(tmp_path / "copy.jsonl") == ts
    assert (tmp_path / "copy.jsonl").read_bytes() == bundled_path("gridworld_sample.jsonl").read_bytes()


def test_bundled_sample_reward_range_matches_generator():
    ts = load_traceset(bundled_path("gridworld_sample.jsonl"))
    env = env_from_dict(ts.metadata["envs"][0])
    lo, hi = env.reward_bounds()
    olo, ohi = observed_reward_range(ts)
    assert lo <= olo and ohi <= hi
    # goal and hazard terminations both occur in the sample, so the bounds are attained
    outcomes = {t.metadata["outcome"] for t in ts}
    assert {"goal", "hazard"} <= outcomes
    assert (olo, ohi) == (lo, hi)


def test_byte_stable_saves(tmp_path):
    ts = policy_only_traceset([(0.5, 0.5)])
    save_traceset(ts, tmp_path / "a.jsonl")
    save_traceset(ts, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def _atom_set(n_atoms=51, seed=0):
    rng = np.random.default_rng(seed)
    atoms = tuple(float(v) for v in np.linspace(-10, 10, n_atoms))
    space = ActionSpaceSpec((DiscreteFactor(3, name="a"),))
    dps = []
    for t in range(4):
        qs = []
        for _ in range(3):
            p = rng.dirichlet(np.ones(n_atoms))
            qs.append(AtomDistribution(atoms, tuple(float(v) for v in p / p.sum())))
        dps.append(InteractionDatapoint(t, (rng.normal(),), (int(rng.integers(3)),), float(rng.normal()),
                                        value=float(rng.normal()), action_values=tuple(qs)))
    return TraceSet(space, 0.99, [Trace("q", tuple(dps), terminal=True, metadata={"k": 1})])


def test_51_atom_round_trip():
    ts = _atom_set()
    back = loads_traceset(dumps_traceset(ts))
    assert back == ts
    assert len(back.traces[0].datapoints[0].action_values[0].atoms) == 51


def test_continuous_and_gaussian_ensemble_round_trip(line_traces):
    assert loads_traceset(dumps_traceset(line_traces)) == line_traces


def test_observed_reward_range_examples():
    space = ActionSpaceSpec((DiscreteFactor(2),))
    dps = tuple(InteractionDatapoint(t, (0.0,), (0,), r, value=0.0) for t, r in enumerate([0.0, 1.0, -1.0]))
    assert observed_reward_range(TraceSet(space, 0.9, [Trace("a", dps)])) == (-1.0, 1.0)
    flat = tuple(InteractionDatapoint(t, (0.0,), (0,), 0.0, value=0.0) for t in range(3))
    with pytest.warns(DegenerateRangeWarning):
        assert observed_reward_range(TraceSet(space, 0.9, [Trace("a", flat)])) == (0.0, 0.0)


def test_observed_reward_range_empty():
    with pytest.raises(ValueError):
        observed_reward_range(TraceSet(ActionSpaceSpec((DiscreteFactor(2),)), 0.9, []))


def test_header_reward_range_preferred():
    space = ActionSpaceSpec((DiscreteFactor(2),))
    dps = (InteractionDatapoint(0, (0.0,), (0,), 0.5, value=0.0),)
    ts = TraceSet(space, 0.9, [Trace("a", dps)], reward_range=(-2.0, 2.0))
    assert resolve_reward_range(ts) == (-2.0, 2.0)
    with pytest.warns(UserWarning):
        assert resolve_reward_range(TraceSet(space, 0.9, [Trace("a", dps)])) == (0.5, 0.5)


def test_reward_outside_declared_range_rejected():
    space = ActionSpaceSpec((DiscreteFactor(2),))
    dps = (InteractionDatapoint(0, (0.0,), (0,), 3.0, value=0.0),)
    with pytest.raises(TraceValidationError, match="reward_range"):
        TraceSet(space, 0.9, [Trace("a", dps)], reward_range=(-1.0, 1.0))


def test_type_invariants():
    with pytest.raises(ValueError):
        AtomDistribution((0.0, 0.0), (0.5, 0.5))
    with pytest.raises(ValueError):
        GaussianSpec((0.0,), (0.0,))
    with pytest.raises(ValueError):
        EnsemblePrediction(((1.0,),))
    with pytest.raises(ValueError):
        EnsemblePrediction(((1.0,), (1.0, 2.0)))
    with pytest.raises(ValueError):
        DiscreteFactor(0)
    with pytest.raises(ValueError):
        ContinuousFactor((1.0,), (0.0,))
    with pytest.raises(ValueError):
        ActionSpaceSpec(())


def test_datapoint_needs_model_output():
    space = ActionSpaceSpec((DiscreteFactor(2),))
    with pytest.raises(TraceValidationError, match="no model output"):
        TraceSet(space, 0.9, [Trace("a", (InteractionDatapoint(0, (0.0,), (0,), 0.0),))])


def test_per_factor_arity_enforced():
    space = ActionSpaceSpec((DiscreteFactor(2, name="a"), DiscreteFactor(3, name="b")))
    good = InteractionDatapoint(0, (0.0,), (0, 1), 0.0, policy=(DiscreteDistribution((0.5, 0.5)),
                                                                 DiscreteDistribution((1.0, 0.0, 0.0))))
    TraceSet(space, 0.9, [Trace("a", (good,))])
    bad = InteractionDatapoint(0, (0.0,), (0, 1), 0.0, policy=(DiscreteDistribution((0.5, 0.5)),))
    with pytest.raises(TraceValidationError, match="policy"):
        TraceSet(space, 0.9, [Trace("a", (bad,))])
    wrong_n = InteractionDatapoint(0, (0.0,), (0, 1), 0.0, policy=(DiscreteDistribution((0.5, 0.5)),
                                                                    DiscreteDistribution((0.5, 0.5))))
    with pytest.raises(TraceValidationError):
        TraceSet(space, 0.9, [Trace("a", (wrong_n,))])


def test_golden_example_file():
    ts = load_traceset(DOCS / "golden_traces.jsonl")
    assert len(ts) == 2
    assert ts.action_space.names == ["move"]
    assert dumps_traceset(ts) == (DOCS / "golden_traces.jsonl").read_text()


# -- corruption fuzz ----------------------------------------------------------

def _fuzz_base() -> list[dict]:
    space = ActionSpaceSpec((DiscreteFactor(3, name="a"),))
    atoms = (-1.0, 0.0, 1.0)
    dps = tuple(InteractionDatapoint(
        t, (0.1 * t, 1.0), (t % 3,), 0.5, value=0.1 * t,
        policy=(DiscreteDistribution((0.2, 0.3, 0.5)),),
        action_values=tuple(AtomDistribution(atoms, (0.25, 0.5, 0.25)) for _ in range(3)),
        ensemble=EnsemblePrediction(((0.1, 1.0), (0.2, 0.9))))
        for t in range(3))
    ts = TraceSet(space, 0.9, [Trace("x", dps)], reward_range=(-1.0, 1.0))
    return [json.loads(line) for line in dumps_traceset(ts).splitlines()]


CORRUPTIONS = {
    "step": [7, "1", None, -1, 1.5],
    "observation": ["a", [1.0], [1.0, "b"], None, [1.0, float("inf")]],
    "action": [[3], [-1], ["a"], [0, 1], None, [True]],
    "reward": ["r", None, 5.0, [0.0]],
    "value": ["v", None, [1.0]],
    "policy": [[{"probs": [0.2, 0.3, 0.4]}], [{"probs": [0.5, 0.5]}], [{"probs": [-0.1, 0.6, 0.5]}],
               [], "p", [{"mean": [0.0], "stddev": [1.0]}]],
    "action_values": [[{"probs": [0.5, 0.5, 0.1]}] * 3, [{"probs": [0.25, 0.5, 0.25]}] * 2, "q",
                      [1.0, {"probs": [0.25, 0.5, 0.25]}, 1.0]],
    "ensemble": [[[0.1, 1.0]], [[0.1, 1.0], [0.2]], "e", [[0.1, 1.0], {"mean": [0.0, 1.0], "stddev": [1.0, 1.0]}]],
    "trace_id": [None, 3],
    "extra_field": [1],
}


@settings(max_examples=150, deadline=None)
@given(line=st.integers(1, 3), field=st.sampled_from(sorted(CORRUPTIONS)), choice=st.integers(0, 10))
def test_single_field_corruption_rejected(line, field, choice):
    recs = _fuzz_base()
    bad = CORRUPTIONS[field][choice % len(CORRUPTIONS[field])]
    recs[line][field] = bad
    text = "\n".join(json.dumps(r) for r in recs)
    with pytest.raises(TraceValidationError):
        loads_traceset(text)


@pytest.mark.parametrize("key,bad", [("discount", 1.5), ("discount", "x"), ("reward_range", [1.0]),
                                     ("reward_range", [1.0, -1.0]), ("schema_version", 2),
                                     ("format", "other"), ("atom_support", [0.0, 0.0, 1.0])])
def test_header_corruption_rejected(key, bad):
    recs = _fuzz_base()
    recs[0][key] = bad
    with pytest.raises((TraceValidationError, ValueError)):
        loads_traceset("\n".join(json.dumps(r) for r in recs))


def test_fuzz_base_is_valid():
    recs = _fuzz_base()
    ts = loads_traceset("\n".join(json.dumps(r) for r in recs))
    assert ts.n_datapoints == 3


def test_error_message_names_location_once():
    lines = Path(__file__).parent.parent.joinpath("docs", "golden_traces.jsonl").read_text().splitlines()
    bad = json.loads(lines[2])
    bad["policy"] = [{"probs": [0.05, 0.05, 0.8, 0.05]}]
    with pytest.raises(TraceValidationError) as info:
        loads_traceset("\n".join([lines[0], lines[1], json.dumps(bad)] + lines[3:]))
    msg = str(info.value)
    assert msg.startswith("trace 'ep-0', step 1, field 'probs': probabilities sum to")
    assert msg.count("field") == 1
