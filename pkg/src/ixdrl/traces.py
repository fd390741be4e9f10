"""Interaction-data model: datapoints, traces, and the JSON Lines trace format.

A trace file is JSON Lines. The first line is a header object::

    {"format": "ixdrl-traces", "schema_version": 1,
     "action_space": {"factors": [...]}, "discount": 0.9,
     "reward_range": [-1.0, 1.0], "atom_support": [...], "metadata": {...}}

Every following line is one datapoint carrying its ``trace_id`` and ``step``.
The step-0 line of each trace may carry a ``"trace"`` object with the trace's
``terminal`` flag and ``metadata``. Model outputs that an agent does not
provide are simply left out of the line. When every atom distribution in the
file shares one support, the header carries it as ``atom_support`` and the
distributions store only ``probs``. See ``docs/trace_format.md``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence, Union

import numpy as np

FORMAT_NAME = "ixdrl-traces"
SCHEMA_VERSION = 1
PROB_TOL = 1e-6


class TraceValidationError(ValueError):
    """Raised when interaction data violates the trace schema."""

    def __init__(self, message: str, trace_id: str | None = None,
                 step: int | None = None, field_name: str | None = None):
        self.trace_id = trace_id
        self.step = step
        self.field_name = field_name
        where = []
        if trace_id is not None:
            where.append(f"trace {trace_id!r}")
        if step is not None:
            where.append(f"step {step}")
        if field_name is not None:
            where.append(f"field {field_name!r}")
        prefix = ", ".join(where)
        self.detail = message
        super().__init__(f"{prefix}: {message}" if prefix else message)


class DegenerateRangeWarning(UserWarning):
    """A range used for normalization has zero width."""


def _floats(values: Iterable[Any], name: str) -> tuple[float, ...]:
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
            raise TraceValidationError(f"expected numbers, got {v!r}", field_name=name)
        f = float(v)
        if not math.isfinite(f):
            raise TraceValidationError(f"non-finite value {v!r}", field_name=name)
        out.append(f)
    return tuple(out)


def _check_probs(probs: tuple[float, ...], name: str) -> None:
    if len(probs) < 1:
        raise TraceValidationError("empty distribution", field_name=name)
    if any(p < 0 for p in probs):
        raise TraceValidationError("negative probability", field_name=name)
    total = math.fsum(probs)
    if abs(total - 1.0) > PROB_TOL:
        raise TraceValidationError(f"probabilities sum to {total!r}, not 1", field_name=name)


# -- distributions ------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteDistribution:
    """Categorical distribution over a discrete action factor."""

    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "probs", _floats(self.probs, "probs"))
        _check_probs(self.probs, "probs")

    def __len__(self):
        return len(self.probs)


@dataclass(frozen=True)
class AtomDistribution:
    """Categorical return distribution over a fixed, ordered support."""

    atoms: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "atoms", _floats(self.atoms, "atoms"))
        object.__setattr__(self, "probs", _floats(self.probs, "probs"))
        if len(self.atoms) != len(self.probs):
            raise TraceValidationError("atoms and probs differ in length", field_name="atoms")
        if any(b <= a for a, b in zip(self.atoms, self.atoms[1:])):
            raise TraceValidationError("atoms must be strictly increasing", field_name="atoms")
        _check_probs(self.probs, "probs")

    def mean(self) -> float:
        return float(np.dot(self.atoms, self.probs))


@dataclass(frozen=True)
class GaussianSpec:
    """Diagonal multivariate Gaussian."""

    mean: tuple[float, ...]
    stddev: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "mean", _floats(self.mean, "mean"))
        object.__setattr__(self, "stddev", _floats(self.stddev, "stddev"))
        if len(self.mean) != len(self.stddev) or not self.mean:
            raise TraceValidationError("mean and stddev must share a non-zero dimension",
                                       field_name="stddev")
        if any(s <= 0 for s in self.stddev):
            raise TraceValidationError("stddev must be positive", field_name="stddev")

    @property
    def dim(self) -> int:
        return len(self.mean)


Prediction = Union[tuple, GaussianSpec]


@dataclass(frozen=True)
class EnsemblePrediction:
    """Next-observation predictions from ``K`` bootstrapped forward models."""

    members: tuple

    def __post_init__(self):
        members = []
        for m in self.members:
            members.append(m if isinstance(m, GaussianSpec) else _floats(m, "ensemble"))
        object.__setattr__(self, "members", tuple(members))
        if len(members) < 2:
            raise TraceValidationError("ensemble needs at least 2 members", field_name="ensemble")
        kinds = {isinstance(m, GaussianSpec) for m in members}
        if len(kinds) != 1:
            raise TraceValidationError("ensemble mixes point and distributional members",
                                       field_name="ensemble")
        dims = {m.dim if isinstance(m, GaussianSpec) else len(m) for m in members}
        if len(dims) != 1 or 0 in dims:
            raise TraceValidationError("ensemble members differ in dimension", field_name="ensemble")

    @property
    def is_distributional(self) -> bool:
        return isinstance(self.members[0], GaussianSpec)

    @property
    def k(self) -> int:
        return len(self.members)


# -- action space -------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteFactor:
    n: int
    name: str = "action"
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise TraceValidationError(f"discrete factor needs n >= 1, got {self.n!r}",
                                       field_name="action_space")
        labels = tuple(str(l) for l in self.labels) or tuple(str(i) for i in range(self.n))
        if len(labels) != self.n:
            raise TraceValidationError("label count differs from n", field_name="action_space")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class ContinuousFactor:
    low: tuple[float, ...]
    high: tuple[float, ...]
    name: str = "action"

    def __post_init__(self):
        low = _floats(self.low, "action_space")
        high = _floats(self.high, "action_space")
        if len(low) != len(high) or not low:
            raise TraceValidationError("bounds must share a non-zero dimension",
                                       field_name="action_space")
        if any(l >= h for l, h in zip(low, high)):
            raise TraceValidationError("lower bound must be below upper bound",
                                       field_name="action_space")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self) -> int:
        return len(self.low)


Factor = Union[DiscreteFactor, ContinuousFactor]


@dataclass(frozen=True)
class ActionSpaceSpec:
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise TraceValidationError("action space needs at least one factor",
                                       field_name="action_space")
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise TraceValidationError("factor names must be unique", field_name="action_space")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.factors]


# -- traces -------------------------------------------------------------------

@dataclass(frozen=True)
class InteractionDatapoint:
    step: int
    observation: tuple[float, ...]
    action: tuple
    reward: float
    value: float | None = None
    policy: tuple | None = None
    action_values: tuple | None = None
    ensemble: EnsemblePrediction | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "observation", _floats(self.observation, "observation"))
        set_(self, "action", tuple(
            int(a) if isinstance(a, (int, np.integer)) and not isinstance(a, bool)
            else (a if isinstance(a, bool) else _floats(a, "action"))
            for a in self.action))
        if isinstance(self.reward, (int, float, np.integer, np.floating)) and not isinstance(self.reward, bool):
            set_(self, "reward", float(self.reward))
        if isinstance(self.value, (int, float, np.integer, np.floating)) and not isinstance(self.value, bool):
            set_(self, "value", float(self.value))
        if self.policy is not None:
            set_(self, "policy", tuple(self.policy))
        if self.action_values is not None:
            set_(self, "action_values", tuple(
                q if isinstance(q, AtomDistribution) else _number(q, "action_values")
                for q in self.action_values))

    @property
    def has_model_output(self) -> bool:
        return any(x is not None for x in
                   (self.value, self.policy, self.action_values, self.ensemble))


@dataclass(frozen=True)
class Trace:
    trace_id: str
    datapoints: tuple
    terminal: bool = False
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "datapoints", tuple(self.datapoints))
        object.__setattr__(self, "metadata", dict(self.metadata))

    def __len__(self):
        return len(self.datapoints)


@dataclass(frozen=True)
class TraceSet:
    action_space: ActionSpaceSpec
    discount: float
    traces: tuple
    reward_range: tuple[float, float] | None = None
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "traces", tuple(self.traces))
        validate_traceset(self)

    def __len__(self):
        return len(self.traces)

    def __iter__(self):
        return iter(self.traces)

    @property
    def n_datapoints(self) -> int:
        return sum(len(t) for t in self.traces)

    def trace(self, trace_id: str) -> Trace:
        for t in self.traces:
            if t.trace_id == trace_id:
                return t
        raise KeyError(trace_id)


def _validate_datapoint(dp: InteractionDatapoint, space: ActionSpaceSpec, trace_id: str) -> None:
    def fail(msg, name):
        raise TraceValidationError(msg, trace_id, dp.step, name)

    if not dp.has_model_output:
        fail("no model output (value, policy, action_values or ensemble)", "value")
    if not isinstance(dp.reward, float) or not math.isfinite(dp.reward):
        fail("reward must be a finite number", "reward")
    if dp.value is not None and (not isinstance(dp.value, float) or not math.isfinite(dp.value)):
        fail("value must be a finite number", "value")
    if len(dp.action) != len(space.factors):
        fail(f"expected {len(space.factors)} action factors, got {len(dp.action)}", "action")
    for a, f in zip(dp.action, space.factors):
        if isinstance(f, DiscreteFactor):
            if isinstance(a, bool) or not isinstance(a, int) or not 0 <= a < f.n:
                fail(f"action {a!r} out of range for factor {f.name!r}", "action")
        elif not isinstance(a, tuple) or len(a) != f.dim:
            fail(f"action for factor {f.name!r} must be a vector of length {f.dim}", "action")
    if dp.policy is not None:
        if len(dp.policy) != len(space.factors):
            fail(f"expected {len(space.factors)} policy factors, got {len(dp.policy)}", "policy")
        for p, f in zip(dp.policy, space.factors):
            if isinstance(f, DiscreteFactor):
                if not isinstance(p, DiscreteDistribution) or len(p) != f.n:
                    fail(f"policy for factor {f.name!r} must have {f.n} probabilities", "policy")
            elif not isinstance(p, GaussianSpec) or p.dim != f.dim:
                fail(f"policy for factor {f.name!r} must be a {f.dim}-d Gaussian", "policy")
    if dp.action_values is not None:
        f = space.factors[0]
        if len(space.factors) != 1 or not isinstance(f, DiscreteFactor):
            fail("action_values require a single discrete action factor", "action_values")
        if len(dp.action_values) != f.n:
            fail(f"expected {f.n} action values, got {len(dp.action_values)}", "action_values")
        kinds = {isinstance(q, AtomDistribution) for q in dp.action_values}
        if len(kinds) != 1:
            fail("action_values mix scalars and distributions", "action_values")
        if not kinds.pop() and any(not isinstance(q, float) or not math.isfinite(q)
                                   for q in dp.action_values):
            fail("action values must be finite numbers", "action_values")


def validate_traceset(ts: TraceSet) -> None:
    """Check every TraceSet invariant, raising :class:`TraceValidationError`."""
    if not isinstance(ts.action_space, ActionSpaceSpec):
        raise TraceValidationError("missing action space", field_name="action_space")
    if isinstance(ts.discount, bool) or not isinstance(ts.discount, (int, float)) \
            or not 0.0 <= ts.discount <= 1.0:
        raise TraceValidationError(f"discount must lie in [0, 1], got {ts.discount!r}",
                                   field_name="discount")
    if ts.reward_range is not None:
        lo, hi = ts.reward_range
        if not lo <= hi:
            raise TraceValidationError("reward_range min exceeds max", field_name="reward_range")
    seen = set()
    obs_dim = None
    for trace in ts.traces:
        if trace.trace_id in seen:
            raise TraceValidationError("duplicate trace id", trace.trace_id)
        seen.add(trace.trace_id)
        if len(trace.datapoints) < 1:
            raise TraceValidationError("trace has no datapoints", trace.trace_id)
        for i, dp in enumerate(trace.datapoints):
            if dp.step != i:
                raise TraceValidationError(f"steps must be contiguous from 0, expected {i}",
                                           trace.trace_id, dp.step, "step")
            if obs_dim is None:
                obs_dim = len(dp.observation)
            elif len(dp.observation) != obs_dim:
                raise TraceValidationError("observation dimension differs from the rest of the set",
                                           trace.trace_id, dp.step, "observation")
            _validate_datapoint(dp, ts.action_space, trace.trace_id)
            if ts.reward_range is not None and not (
                    ts.reward_range[0] <= dp.reward <= ts.reward_range[1]):
                raise TraceValidationError(f"reward {dp.reward!r} outside reward_range",
                                           trace.trace_id, dp.step, "reward")


def observed_reward_range(ts: TraceSet) -> tuple[float, float]:
    """Min and max reward over all datapoints of all traces."""
    rewards = [dp.reward for t in ts.traces for dp in t.datapoints]
    if not rewards:
        raise ValueError("cannot compute a reward range of an empty TraceSet")
    lo, hi = min(rewards), max(rewards)
    if lo == hi:
        warnings.warn(f"degenerate reward range ({lo}, {hi})", DegenerateRangeWarning, stacklevel=2)
    return lo, hi


def resolve_reward_range(ts: TraceSet) -> tuple[float, float]:
    """Header reward range if declared, else the observed one (with a warning)."""
    if ts.reward_range is not None:
        return ts.reward_range
    warnings.warn("reward_range not declared in header; using observed rewards", stacklevel=2)
    return observed_reward_range(ts)


# -- JSON encoding ------------------------------------------------------------

def _enc_factor(f: Factor) -> dict:
    if isinstance(f, DiscreteFactor):
        return {"type": "discrete", "name": f.name, "n": f.n, "labels": list(f.labels)}
    return {"type": "continuous", "name": f.name, "low": list(f.low), "high": list(f.high)}


def _dec_factor(d: Mapping) -> Factor:
    kind = d.get("type")
    if kind == "discrete":
        return DiscreteFactor(n=d["n"], name=d.get("name", "action"), labels=tuple(d.get("labels", ())))
    if kind == "continuous":
        return ContinuousFactor(low=d["low"], high=d["high"], name=d.get("name", "action"))
    raise TraceValidationError(f"unknown factor type {kind!r}", field_name="action_space")


def _enc_dist(d) -> dict:
    if isinstance(d, DiscreteDistribution):
        return {"probs": list(d.probs)}
    if isinstance(d, AtomDistribution):
        return {"atoms": list(d.atoms), "probs": list(d.probs)}
    return {"mean": list(d.mean), "stddev": list(d.stddev)}


def _dec_dist(d):
    if not isinstance(d, Mapping):
        raise TraceValidationError(f"expected a distribution object, got {d!r}")
    if "atoms" in d:
        return AtomDistribution(tuple(d["atoms"]), tuple(d["probs"]))
    if "mean" in d:
        return GaussianSpec(tuple(d["mean"]), tuple(d["stddev"]))
    if "probs" in d:
        return DiscreteDistribution(tuple(d["probs"]))
    raise TraceValidationError(f"unrecognised distribution keys {sorted(d)}")


def _dec_action_value(q, atom_support):
    if not isinstance(q, Mapping):
        return _number(q, "action_values")
    if "atoms" not in q and "probs" in q:
        if atom_support is None:
            raise TraceValidationError("atom distribution without atoms and no header atom_support",
                                       field_name="action_values")
        return AtomDistribution(atom_support, tuple(q["probs"]))
    dist = _dec_dist(q)
    if not isinstance(dist, AtomDistribution):
        raise TraceValidationError("action values must be numbers or atom distributions",
                                   field_name="action_values")
    return dist


def _shared_support(ts: TraceSet) -> tuple | None:
    supports = {q.atoms for t in ts.traces for dp in t.datapoints
                for q in (dp.action_values or ()) if isinstance(q, AtomDistribution)}
    return supports.pop() if len(supports) == 1 else None


def encode_datapoint(trace_id: str, dp: InteractionDatapoint,
                     atom_support: tuple | None = None) -> dict:
    out: dict[str, Any] = {
        "trace_id": trace_id,
        "step": dp.step,
        "observation": list(dp.observation),
        "action": [a if isinstance(a, int) else list(a) for a in dp.action],
        "reward": dp.reward,
    }
    if dp.value is not None:
        out["value"] = dp.value
    if dp.policy is not None:
        out["policy"] = [_enc_dist(p) for p in dp.policy]
    if dp.action_values is not None:
        out["action_values"] = [
            q if isinstance(q, float)
            else ({"probs": list(q.probs)} if q.atoms == atom_support else _enc_dist(q))
            for q in dp.action_values]
    if dp.ensemble is not None:
        out["ensemble"] = [_enc_dist(m) if isinstance(m, GaussianSpec) else list(m)
                           for m in dp.ensemble.members]
    return out


def _number(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TraceValidationError(f"expected a number, got {v!r}", field_name=name)
    f = float(v)
    if not math.isfinite(f):
        raise TraceValidationError(f"non-finite value {v!r}", field_name=name)
    return f


_DATAPOINT_KEYS = {"trace_id", "step", "observation", "action", "reward", "value",
                   "policy", "action_values", "ensemble", "trace"}


def decode_datapoint(d: Mapping, atom_support: tuple | None = None) -> InteractionDatapoint:
    unknown = set(d) - _DATAPOINT_KEYS
    if unknown:
        raise TraceValidationError(f"unknown fields {sorted(unknown)}")
    for key in ("step", "observation", "action", "reward"):
        if key not in d:
            raise TraceValidationError("missing required field", field_name=key)
    step = d["step"]
    if isinstance(step, bool) or not isinstance(step, int):
        raise TraceValidationError(f"step must be an integer, got {step!r}", field_name="step")
    if not isinstance(d["observation"], list):
        raise TraceValidationError("observation must be a list", field_name="observation")
    if not isinstance(d["action"], list):
        raise TraceValidationError("action must be a list", field_name="action")
    action = []
    for a in d["action"]:
        if isinstance(a, list):
            action.append(_floats(a, "action"))
        elif isinstance(a, int) and not isinstance(a, bool):
            action.append(a)
        else:
            raise TraceValidationError(f"bad action entry {a!r}", field_name="action")

    def seq(key):
        v = d[key]
        if not isinstance(v, list):
            raise TraceValidationError(f"{key} must be a list", field_name=key)
        return v

    policy = action_values = ensemble = None
    if "policy" in d:
        policy = tuple(_dec_dist(p) for p in seq("policy"))
    if "action_values" in d:
        action_values = tuple(_dec_action_value(q, atom_support) for q in seq("action_values"))
    if "ensemble" in d:
        ensemble = EnsemblePrediction(tuple(_dec_dist(m) if isinstance(m, Mapping) else m
                                            for m in seq("ensemble")))
    return InteractionDatapoint(
        step=step,
        observation=_floats(d["observation"], "observation"),
        action=tuple(action),
        reward=_number(d["reward"], "reward"),
        value=_number(d["value"], "value") if "value" in d else None,
        policy=policy,
        action_values=action_values,
        ensemble=ensemble,
    )


def _header(ts: TraceSet) -> dict:
    header = {
        "format": FORMAT_NAME,
        "schema_version": SCHEMA_VERSION,
        "action_space": {"factors": [_enc_factor(f) for f in ts.action_space.factors]},
        "discount": float(ts.discount),
    }
    if ts.reward_range is not None:
        header["reward_range"] = [float(ts.reward_range[0]), float(ts.reward_range[1])]
    support = _shared_support(ts)
    if support is not None:
        header["atom_support"] = list(support)
    if ts.metadata:
        header["metadata"] = dict(ts.metadata)
    return header


def _dumps(obj) -> str:
    # repr-based float formatting is the shortest round-tripping decimal
    return json.dumps(obj, allow_nan=False, separators=(",", ":"))


def dumps_traceset(ts: TraceSet) -> str:
    header = _header(ts)
    support = tuple(header["atom_support"]) if "atom_support" in header else None
    lines = [_dumps(header)]
    for trace in ts.traces:
        for dp in trace.datapoints:
            rec = encode_datapoint(trace.trace_id, dp, support)
            if dp.step == 0:
                rec["trace"] = {"terminal": bool(trace.terminal), "metadata": dict(trace.metadata)}
            lines.append(_dumps(rec))
    return "\n".join(lines) + "\n"


def save_traceset(ts: TraceSet, path: str | Path) -> None:
    Path(path).write_text(dumps_traceset(ts), encoding="utf-8")


def loads_traceset(text: str) -> TraceSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceValidationError("empty trace file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceValidationError(f"header is not valid JSON: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise TraceValidationError(f"header must declare format {FORMAT_NAME!r}")
    if header.get("schema_version") != SCHEMA_VERSION:
        raise TraceValidationError(f"unsupported schema_version {header.get('schema_version')!r}")
    try:
        factors = header["action_space"]["factors"]
        discount = header["discount"]
    except (KeyError, TypeError):
        raise TraceValidationError("header lacks action_space.factors or discount") from None
    if not isinstance(factors, list):
        raise TraceValidationError("action_space.factors must be a list", field_name="action_space")
    space = ActionSpaceSpec(tuple(_dec_factor(f) for f in factors))
    rr = header.get("reward_range")
    if rr is not None:
        if not isinstance(rr, list) or len(rr) != 2:
            raise TraceValidationError("reward_range must be [min, max]", field_name="reward_range")
        rr = (_number(rr[0], "reward_range"), _number(rr[1], "reward_range"))
    support = header.get("atom_support")
    if support is not None:
        if not isinstance(support, list):
            raise TraceValidationError("atom_support must be a list", field_name="atom_support")
        support = _floats(support, "atom_support")

    order: list[str] = []
    points: dict[str, list] = {}
    info: dict[str, dict] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceValidationError(f"line {lineno} is not valid JSON: {exc}") from None
        if not isinstance(rec, dict) or not isinstance(rec.get("trace_id"), str):
            raise TraceValidationError(f"line {lineno} lacks a string trace_id")
        tid = rec["trace_id"]
        try:
            dp = decode_datapoint(rec, support)
        except TraceValidationError as exc:
            raise TraceValidationError(exc.detail, tid, rec.get("step"), exc.field_name) from None
        if tid not in points:
            order.append(tid)
            points[tid] = []
        if dp.step != len(points[tid]):
            raise TraceValidationError(f"non-contiguous step, expected {len(points[tid])}",
                                       tid, dp.step, "step")
        if "trace" in rec:
            meta = rec["trace"]
            if dp.step != 0 or not isinstance(meta, dict) or \
                    not isinstance(meta.get("terminal", False), bool) or \
                    not isinstance(meta.get("metadata", {}), dict):
                raise TraceValidationError("malformed trace info", tid, dp.step, "trace")
            info[tid] = meta
        points[tid].append(dp)

    traces = [Trace(trace_id=tid, datapoints=tuple(points[tid]),
                    terminal=info.get(tid, {}).get("terminal", False),
                    metadata=info.get(tid, {}).get("metadata", {}))
              for tid in order]
    return TraceSet(action_space=space, discount=_number(discount, "discount"), traces=traces,
                    reward_range=rr, metadata=header.get("metadata", {}))


def load_traceset(path: str | Path) -> TraceSet:
    """Read and fully validate a JSON Lines trace file."""
    return loads_traceset(Path(path).read_text(encoding="utf-8"))


def traceset_from_traces(template: TraceSet, traces: Sequence[Trace]) -> TraceSet:
    """A TraceSet with ``template``'s header and the given traces."""
    return TraceSet(action_space=template.action_space, discount=template.discount,
                    traces=tuple(traces), reward_range=template.reward_range,
                    metadata=template.metadata)
