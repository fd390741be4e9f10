"""Interestingness analysis over trace sets.

:class:`InterestingnessAnalyzer` follows the scikit-learn transformer
protocol: ``fit`` performs the reduction pass (value, action-value and
reward extremes) and ``transform`` maps every datapoint to an
:class:`InterestingnessRecord` using only data up to that timestep.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import dimensions as D
from .traces import (AtomDistribution, ContinuousFactor, DegenerateRangeWarning, DiscreteDistribution,
                     DiscreteFactor, GaussianSpec, InteractionDatapoint, Trace, TraceSet,
                     observed_reward_range)

logger = logging.getLogger(__name__)

OFFLINE = "offline"
ONLINE = "online-running"


@dataclass(frozen=True)
class InterestingnessRecord:
    trace_id: str
    step: int
    values: Mapping[str, float]
    per_factor: Mapping[tuple, float] = field(default_factory=dict)

    def __post_init__(self):
        for k, v in list(self.values.items()) + list(self.per_factor.items()):
            if not -1.0 <= v <= 1.0:
                raise ValueError(f"{k} = {v} outside [-1, 1] at {self.trace_id}:{self.step}")

    def get(self, key: str):
        """Value of a dimension name or a ``dim[factor]`` column name, or None."""
        if key in self.values:
            return self.values[key]
        dim, factor = split_factor_key(key)
        if factor is not None:
            return self.per_factor.get((dim, factor))
        return None


@dataclass(frozen=True)
class NormalizationState:
    """Dataset extremes used by the offline two-pass analysis."""

    mode: str = OFFLINE
    v_min: float | None = None
    v_max: float | None = None
    q_min: float | None = None
    q_max: float | None = None
    reward_range: tuple | None = None

    def __post_init__(self):
        if self.v_min is not None and self.v_max is not None and self.v_min > self.v_max:
            raise ValueError("v_min must not exceed v_max")


def factor_key(dim: str, factor: str) -> str:
    return f"{dim}[{factor}]"


def split_factor_key(key: str) -> tuple[str, str | None]:
    if key.endswith("]") and "[" in key:
        dim, factor = key[:-1].split("[", 1)
        return dim, factor
    return key, None


def _q_means(action_values) -> list[float]:
    return [q.mean() if isinstance(q, AtomDistribution) else q for q in action_values]


class InterestingnessAnalyzer(TransformerMixin, BaseEstimator):
    """Compute the seven interestingness dimensions for every datapoint.

    Parameters
    ----------
    dimensions : sequence of str, optional
        Subset of :data:`ixdrl.dimensions.DIMENSIONS` to compute. Defaults to all.
    rho : float, default=100
        Slope scaling for Goal Conduciveness.
    value_mode : {"offline", "online-running"}, default="offline"
        ``offline`` min-max scales values over all timesteps of all traces;
        ``online-running`` uses the running extremes of the current trace.
    td_indexing : {"printed", "standard"}, default="printed"
        ``printed`` uses ``r_t + gamma V(s_t) - V(s_{t-1})`` with the reward
        stored at step ``t``; ``standard`` uses the reward stored at ``t-1``,
        which is the TD(0) error of the transition into ``s_t`` when rewards
        are logged after each action.
    stochasticity_scale : float, default=1.0
        Reference scale for the continuous coefficient-of-variation surrogate.
    riskiness_source : {"auto", "policy", "value"}, default="auto"
        ``auto`` prefers the policy and falls back to action values.
    """

    def __init__(self, dimensions: Sequence[str] | None = None, rho: float = D.DEFAULT_RHO,
                 value_mode: str = OFFLINE, td_indexing: str = "printed",
                 stochasticity_scale: float = 1.0, riskiness_source: str = "auto"):
        self.dimensions = dimensions
        self.rho = rho
        self.value_mode = value_mode
        self.td_indexing = td_indexing
        self.stochasticity_scale = stochasticity_scale
        self.riskiness_source = riskiness_source

    def _check_params(self) -> tuple[str, ...]:
        dims = tuple(D.DIMENSIONS if self.dimensions is None else self.dimensions)
        if not dims:
            raise ValueError("no interestingness dimensions selected")
        unknown = set(dims) - set(D.DIMENSIONS)
        if unknown:
            raise ValueError(f"unknown dimensions {sorted(unknown)}")
        if self.value_mode not in (OFFLINE, ONLINE):
            raise ValueError(f"value_mode must be {OFFLINE!r} or {ONLINE!r}")
        if self.td_indexing not in ("printed", "standard"):
            raise ValueError("td_indexing must be 'printed' or 'standard'")
        if self.riskiness_source not in ("auto", "policy", "value"):
            raise ValueError("riskiness_source must be 'auto', 'policy' or 'value'")
        if not self.stochasticity_scale > 0:
            raise ValueError("stochasticity_scale must be positive")
        return tuple(d for d in D.DIMENSIONS if d in dims)

    def fit(self, X: TraceSet, y=None):
        self.dimensions_ = self._check_params()
        if not isinstance(X, TraceSet):
            raise TypeError("InterestingnessAnalyzer expects a TraceSet")
        self.action_space_ = X.action_space
        self.discount_ = float(X.discount)
        values = [dp.value for t in X for dp in t.datapoints if dp.value is not None]
        qs = [q for t in X for dp in t.datapoints if dp.action_values is not None
              for q in _q_means(dp.action_values)]
        reward_range = X.reward_range
        if reward_range is None and self.value_mode == OFFLINE and values:
            reward_range = observed_reward_range(X)
        if self.value_mode == OFFLINE:
            self.norm_state_ = NormalizationState(
                OFFLINE, min(values) if values else None, max(values) if values else None,
                min(qs) if qs else None, max(qs) if qs else None, reward_range)
        else:
            self.norm_state_ = NormalizationState(ONLINE, reward_range=reward_range)
        return self

    def transform(self, X: TraceSet) -> list[InterestingnessRecord]:
        check_is_fitted(self, "norm_state_")
        records = []
        for trace in X:
            records.extend(self.transform_trace(trace))
        return records

    # -- per trace ------------------------------------------------------------

    def transform_trace(self, trace: Trace) -> list[InterestingnessRecord]:
        """Records for one trace; each uses only datapoints up to its own step."""
        check_is_fitted(self, "norm_state_")
        dims = set(self.dimensions_)
        st = self.norm_state_
        online = st.mode == ONLINE
        v_lo, v_hi = (math.inf, -math.inf) if online else (st.v_min, st.v_max)
        q_lo, q_hi = (math.inf, -math.inf) if online else (st.q_min, st.q_max)
        r_range = st.reward_range
        r_lo, r_hi = math.inf, -math.inf
        history: list[float] = []          # raw values of the trailing contiguous window
        prev_reward = None
        out = []
        for dp in trace.datapoints:
            vals: dict[str, float] = {}
            per_factor: dict[tuple, float] = {}
            if online:
                r_lo, r_hi = min(r_lo, dp.reward), max(r_hi, dp.reward)
                if dp.value is not None:
                    v_lo, v_hi = min(v_lo, dp.value), max(v_hi, dp.value)
                if dp.action_values is not None:
                    qm = _q_means(dp.action_values)
                    q_lo, q_hi = min(q_lo, min(qm)), max(q_hi, max(qm))
            if dp.value is not None:
                if D.VALUE in dims:
                    vals[D.VALUE] = D.dim_value(dp.value, v_lo, v_hi)
                if D.GOAL_CONDUCIVENESS in dims and history:
                    window = [D.min_max_scale(v, v_lo, v_hi) for v in history[-2:] + [dp.value]]
                    vals[D.GOAL_CONDUCIVENESS] = D.dim_goal_conduciveness(window, self.rho)
                if D.INCONGRUITY in dims and history:
                    reward = dp.reward if self.td_indexing == "printed" else prev_reward
                    rr = r_range if r_range is not None else (r_lo, r_hi)
                    if rr[1] <= rr[0]:
                        warnings.warn("zero-width reward range; incongruity set to 0",
                                      DegenerateRangeWarning, stacklevel=2)
                    vals[D.INCONGRUITY] = D.dim_incongruity(reward, dp.value, history[-1],
                                                            self.discount_, rr)
                history = (history + [dp.value])[-2:]
            else:
                history = []
            if dp.policy is not None and D.CONFIDENCE in dims:
                self._confidence(dp, vals, per_factor)
            if D.RISKINESS in dims:
                self._riskiness(dp, vals, per_factor, q_lo, q_hi)
            if D.STOCHASTICITY in dims:
                s = self._stochasticity(dp)
                if s is not None:
                    vals[D.STOCHASTICITY] = s
            if D.FAMILIARITY in dims and dp.ensemble is not None:
                vals[D.FAMILIARITY] = self._familiarity(dp)
            prev_reward = dp.reward
            out.append(InterestingnessRecord(trace.trace_id, dp.step, vals, per_factor))
        return out

    def _confidence(self, dp: InteractionDatapoint, vals, per_factor):
        factors = self.action_space_.factors
        scores = []
        for f, p in zip(factors, dp.policy):
            if isinstance(f, DiscreteFactor):
                c = 1.0 if f.n == 1 else D.dim_confidence_discrete(p.probs)
            else:
                c = D.dim_confidence_continuous(p.stddev, f.low, f.high)
            scores.append(c)
            if len(factors) > 1:
                per_factor[(D.CONFIDENCE, f.name)] = c
        vals[D.CONFIDENCE] = D.aggregate_factors(scores)

    def _riskiness(self, dp: InteractionDatapoint, vals, per_factor, q_lo, q_hi):
        factors = self.action_space_.factors
        use_policy = dp.policy is not None and self.riskiness_source in ("auto", "policy")
        if use_policy:
            scores = {}
            for f, p in zip(factors, dp.policy):
                if isinstance(f, DiscreteFactor) and f.n >= 2:
                    scores[f.name] = D.dim_riskiness_policy(p.probs)
            if scores:
                vals[D.RISKINESS] = D.aggregate_factors(list(scores.values()))
                if len(factors) > 1:
                    for name, r in scores.items():
                        per_factor[(D.RISKINESS, name)] = r
                return
        if dp.action_values is not None and self.riskiness_source in ("auto", "value") \
                and len(dp.action_values) >= 2:
            vals[D.RISKINESS] = D.dim_riskiness_value(_q_means(dp.action_values), q_lo, q_hi)

    def _stochasticity(self, dp: InteractionDatapoint):
        if dp.action_values is not None and isinstance(dp.action_values[0], AtomDistribution):
            return D.dim_stochasticity_discrete([q.probs for q in dp.action_values])
        if dp.ensemble is not None and dp.ensemble.is_distributional:
            members = dp.ensemble.members
            return D.dim_stochasticity_continuous([m.mean for m in members],
                                                  [m.stddev for m in members],
                                                  self.stochasticity_scale)
        return None

    def _familiarity(self, dp: InteractionDatapoint) -> float:
        ens = dp.ensemble
        if ens.is_distributional:
            return D.dim_familiarity_gaussian([m.mean for m in ens.members],
                                              [m.stddev for m in ens.members])
        return D.dim_familiarity(ens.members)


def analyze(ts: TraceSet, **config) -> list[InterestingnessRecord]:
    """Fit an :class:`InterestingnessAnalyzer` on ``ts`` and return its records."""
    return InterestingnessAnalyzer(**config).fit(ts).transform(ts)


def expected_dimensions(dp: InteractionDatapoint, space, has_history: bool) -> set[str]:
    """Dimensions whose inputs are present in ``dp`` (availability table)."""
    dims = set()
    if dp.value is not None:
        dims.add(D.VALUE)
        if has_history:
            dims |= {D.GOAL_CONDUCIVENESS, D.INCONGRUITY}
    if dp.policy is not None:
        dims.add(D.CONFIDENCE)
        if any(isinstance(f, DiscreteFactor) and f.n >= 2 for f in space.factors):
            dims.add(D.RISKINESS)
    if dp.action_values is not None and len(dp.action_values) >= 2:
        dims.add(D.RISKINESS)
    if dp.action_values is not None and isinstance(dp.action_values[0], AtomDistribution):
        dims.add(D.STOCHASTICITY)
    if dp.ensemble is not None:
        dims.add(D.FAMILIARITY)
        if dp.ensemble.is_distributional:
            dims.add(D.STOCHASTICITY)
    return dims


# -- summaries ----------------------------------------------------------------

def record_columns(records: Iterable[InterestingnessRecord]) -> list[str]:
    """Dimension columns present in any record, in canonical order, then factor columns."""
    dims, factors = set(), []
    for r in records:
        dims.update(r.values)
        for key in r.per_factor:
            if key not in factors:
                factors.append(key)
    cols = [d for d in D.DIMENSIONS if d in dims]
    for d in D.FACTORED_DIMENSIONS:
        cols += [factor_key(d, f) for dd, f in factors if dd == d]
    return cols


def coverage_summary(records: Sequence[InterestingnessRecord]) -> dict:
    """Which dimensions were produced and for how many timesteps."""
    cols = record_columns(records)
    counts = {c: sum(r.get(c) is not None for r in records) for c in cols}
    return {"n_records": len(records),
            "n_traces": len({r.trace_id for r in records}),
            "dimensions": [c for c in cols if split_factor_key(c)[1] is None],
            "factor_columns": [c for c in cols if split_factor_key(c)[1] is not None],
            "counts": counts}


def interestingness_profile(records: Sequence[InterestingnessRecord],
                            include_factors: bool = True) -> dict[str, tuple[float, float]]:
    """Mean and (population) standard deviation of each dimension over all timesteps."""
    if not records:
        raise ValueError("cannot profile an empty record list")
    out = {}
    for col in record_columns(records):
        if not include_factors and split_factor_key(col)[1] is not None:
            continue
        xs = np.array([v for v in (r.get(col) for r in records) if v is not None])
        out[col] = (float(xs.mean()), float(xs.std()))
    return out


def records_to_frame(records: Sequence[InterestingnessRecord]) -> pd.DataFrame:
    cols = record_columns(records)
    rows = [[r.trace_id, r.step] + [r.get(c) for c in cols] for r in records]
    frame = pd.DataFrame(rows, columns=["trace_id", "step"] + cols)
    for c in cols:
        frame[c] = frame[c].astype(float)
    return frame


def frame_to_records(frame: pd.DataFrame) -> list[InterestingnessRecord]:
    out = []
    for row in frame.itertuples(index=False):
        vals, pf = {}, {}
        for c, v in zip(frame.columns, row):
            if c in ("trace_id", "step") or v is None or (isinstance(v, float) and math.isnan(v)):
                continue
            dim, factor = split_factor_key(c)
            if factor is None:
                vals[dim] = float(v)
            else:
                pf[(dim, factor)] = float(v)
        out.append(InterestingnessRecord(str(row[0]), int(row[1]), vals, pf))
    return out


def write_records_csv(records: Sequence[InterestingnessRecord], path) -> None:
    records_to_frame(records).to_csv(path, index=False, float_format="%.17g")


def read_records_csv(path) -> list[InterestingnessRecord]:
    frame = pd.read_csv(path, dtype={"trace_id": str}, float_precision="round_trip")
    if list(frame.columns[:2]) != ["trace_id", "step"]:
        raise ValueError(f"{path}: expected leading columns trace_id, step")
    return frame_to_records(frame)
