"""Explaining interestingness with task features.

A boosted-tree regressor is trained from interpretable per-timestep features
to one interestingness dimension. Its Shapley attributions are summarised
globally (mean ``|phi|`` ranking and beeswarm data) and locally for steps
whose interestingness falls outside the Tukey fences.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .analysis import InterestingnessRecord, record_columns
from .gbt import GradientBoostedTrees
from .rollout import GridworldSpec, LineWorldSpec, env_from_dict
from .shapley import MAX_BACKGROUND, ShapleyResult, shap_tree
from .traces import DiscreteFactor, Trace, TraceSet

logger = logging.getLogger(__name__)

MAX_FEATURES = 64
GATE_IMPROVEMENT = 0.2
IQR_MULTIPLIER = 1.5
TOP_FEATURES = 10
DEFAULT_GBT_PARAMS = {"n_estimators": 200, "learning_rate": 0.1, "max_depth": 4}


class ModelQualityError(RuntimeError):
    """Raised when attributions are requested from a model that failed the quality gate."""


class FeatureConfigError(ValueError):
    pass


class ZeroIQRWarning(UserWarning):
    pass


# -- feature extraction -------------------------------------------------------

def _grid_cell(env: GridworldSpec, obs) -> tuple[int, int]:
    return int(round(obs[0] * env.width)) - 1, int(round(obs[1] * env.height)) - 1


def _manhattan(cell, targets) -> float | None:
    if not targets:
        return None
    return float(min(abs(cell[0] - t[0]) + abs(cell[1] - t[1]) for t in targets))


def _prev_action_names(ts: TraceSet) -> list[str]:
    names = []
    for f in ts.action_space.factors:
        if isinstance(f, DiscreteFactor):
            labels = f.labels or tuple(str(i) for i in range(f.n))
            names += [f"prev_{f.name}_{lab}" for lab in labels]
        else:
            names += [f"prev_{f.name}_{i}" if f.dim > 1 else f"prev_{f.name}" for i in range(f.dim)]
    return names


def _prev_action_values(ts: TraceSet, action) -> list[float]:
    out = []
    for f, a in zip(ts.action_space.factors, action):
        if isinstance(f, DiscreteFactor):
            one_hot = [0.0] * f.n
            one_hot[int(a)] = 1.0
            out += one_hot
        else:
            out += [float(v) for v in np.atleast_1d(a)]
    return out


def _trace_env(ts: TraceSet, trace: Trace):
    envs = ts.metadata.get("envs") if ts.metadata else None
    if not envs:
        return None
    idx = int(trace.metadata.get("env_index", 0)) if trace.metadata else 0
    return env_from_dict(envs[idx])


def available_features(ts: TraceSet) -> list[str]:
    """Feature names the extractor can produce for ``ts``, in canonical order."""
    envs = [env_from_dict(e) for e in (ts.metadata or {}).get("envs", [])]
    prev = _prev_action_names(ts) + ["prev_reward"]
    if envs and all(isinstance(e, GridworldSpec) for e in envs):
        return ["x", "y", "dist_goal", "dist_hazard", "near_hazard", "adj_hazards",
                "adj_walls", "timestep"] + prev
    if envs and all(isinstance(e, LineWorldSpec) for e in envs):
        return ["x", "dist_goal", "rough", "timestep"] + prev
    width = max((len(dp.observation) for tr in ts for dp in tr.datapoints), default=0)
    return [f"obs_{i}" for i in range(width)] + ["timestep"] + prev


def _grid_row(env: GridworldSpec, dp) -> dict:
    cell = _grid_cell(env, dp.observation)
    hazards = [c for c, _ in env.hazards]
    goals = [c for c, _ in env.goals]
    cap = float(env.width + env.height)
    d_h = _manhattan(cell, hazards)
    neighbours = [(cell[0] + dx, cell[1] + dy) for dx, dy in ((0, -1), (1, 0), (0, 1), (-1, 0))]
    blocked = sum(not (0 <= x < env.width and 0 <= y < env.height) or (x, y) in env.walls
                  for x, y in neighbours)
    return {"x": float(cell[0]), "y": float(cell[1]),
            "dist_goal": _manhattan(cell, goals),
            "dist_hazard": cap if d_h is None else min(d_h, cap),
            # read from the observation so that the agent's perceived state is explained
            "near_hazard": float(dp.observation[2]) if len(dp.observation) > 2 else 0.0,
            "adj_hazards": float(sum(n in hazards for n in neighbours)),
            "adj_walls": float(blocked)}


def _line_row(env: LineWorldSpec, dp) -> dict:
    x = float(dp.observation[0])
    lo, hi = env.rough_region
    return {"x": x, "dist_goal": max(0.0, env.goal_start - x), "rough": float(lo <= x < hi)}


@dataclass
class FeatureMatrix:
    """Per-timestep features joined with interestingness targets.

    ``targets[col][i]`` is NaN where the dimension is undefined for row ``i``
    (for instance Incongruity at the first step); :meth:`target` drops those
    rows so a trained model never sees a missing target.
    """

    feature_names: list[str]
    keys: list[tuple[str, int]]
    X: np.ndarray
    targets: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.keys)) != len(self.keys):
            raise ValueError("row keys must be unique")
        if self.X.shape != (len(self.keys), len(self.feature_names)):
            raise ValueError("feature matrix shape does not match keys and names")

    @property
    def n_rows(self) -> int:
        return len(self.keys)

    def row_index(self, trace_id: str, step: int) -> int:
        return self.keys.index((trace_id, int(step)))

    def target(self, dim: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(row_indices, X, y)`` restricted to rows where ``dim`` is defined."""
        if dim not in self.targets:
            raise KeyError(f"no target column {dim!r}; available: {sorted(self.targets)}")
        y = self.targets[dim]
        rows = np.flatnonzero(~np.isnan(y))
        return rows, self.X[rows], y[rows]

    def features_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=self.feature_names)
        frame.insert(0, "step", [k[1] for k in self.keys])
        frame.insert(0, "trace_id", [k[0] for k in self.keys])
        return frame


def extract_features(ts: TraceSet, features: Sequence[str] | None = None) -> tuple[list, list, np.ndarray]:
    """Feature rows for every datapoint of ``ts``; returns ``(names, keys, X)``."""
    names_all = available_features(ts)
    if features is None:
        names = names_all
    else:
        unknown = [f for f in features if f not in names_all]
        if unknown:
            raise FeatureConfigError(f"unknown feature(s) {unknown}; available: {names_all}")
        names = list(dict.fromkeys(features))
    if len(names) > MAX_FEATURES:
        raise FeatureConfigError(f"{len(names)} features requested; the limit is {MAX_FEATURES}")
    prev_names = _prev_action_names(ts)
    keys, rows = [], []
    for trace in ts:
        env = _trace_env(ts, trace)
        prev_action, prev_reward = None, 0.0
        for dp in trace.datapoints:
            row = {"timestep": float(dp.step), "prev_reward": prev_reward}
            if prev_action is None:
                row.update(dict.fromkeys(prev_names, 0.0))
            else:
                row.update(zip(prev_names, _prev_action_values(ts, prev_action)))
            if isinstance(env, GridworldSpec):
                row.update(_grid_row(env, dp))
            elif isinstance(env, LineWorldSpec):
                row.update(_line_row(env, dp))
            else:
                row.update({f"obs_{i}": float(v) for i, v in enumerate(dp.observation)})
            keys.append((trace.trace_id, dp.step))
            rows.append([row.get(n, 0.0) for n in names])
            prev_action, prev_reward = dp.action, float(dp.reward)
    return names, keys, np.array(rows, dtype=float).reshape(len(rows), len(names))


def build_features(ts: TraceSet, records: Sequence[InterestingnessRecord],
                   config: Mapping | None = None) -> FeatureMatrix:
    """Join extracted task features with interestingness targets.

    Parameters
    ----------
    ts : TraceSet
    records : sequence of InterestingnessRecord
        Output of the analyzer for ``ts``; one record per datapoint.
    config : mapping, optional
        ``{"features": [...]}`` selects a subset of :func:`available_features`.

    Returns
    -------
    FeatureMatrix
    """
    config = dict(config or {})
    unknown_keys = set(config) - {"features"}
    if unknown_keys:
        raise FeatureConfigError(f"unknown extractor option(s) {sorted(unknown_keys)}")
    names, keys, X = extract_features(ts, config.get("features"))
    by_key = {(r.trace_id, r.step): r for r in records}
    missing = [k for k in keys if k not in by_key]
    if missing:
        raise ValueError(f"{len(missing)} datapoints have no interestingness record, e.g. {missing[0]}")
    targets = {}
    for col in record_columns(records):
        targets[col] = np.array([np.nan if (v := by_key[k].get(col)) is None else v for k in keys])
    return FeatureMatrix(names, keys, X, targets)


def features_from_frame(frame: pd.DataFrame, records: Sequence[InterestingnessRecord]) -> FeatureMatrix:
    """Rebuild a :class:`FeatureMatrix` from a features CSV and analyzer records."""
    if list(frame.columns[:2]) != ["trace_id", "step"]:
        raise ValueError("features table must start with trace_id, step columns")
    names = [str(c) for c in frame.columns[2:]]
    keys = [(str(t), int(s)) for t, s in zip(frame["trace_id"], frame["step"])]
    X = frame[names].to_numpy(dtype=float) if names else np.zeros((len(keys), 0))
    by_key = {(r.trace_id, r.step): r for r in records}
    targets = {}
    for col in record_columns(records):
        targets[col] = np.array([np.nan if k not in by_key or (v := by_key[k].get(col)) is None else v
                                 for k in keys])
    return FeatureMatrix(names, keys, X, targets)


# -- training -----------------------------------------------------------------

@dataclass
class TrainedModel:
    """A fitted regressor for one dimension plus its held-out evaluation."""

    dim: str
    model: GradientBoostedTrees
    feature_names: list[str]
    train_rows: np.ndarray
    test_rows: np.ndarray
    test_mae: float
    baseline_mae: float
    seed: int
    split: float

    @property
    def passes_gate(self) -> bool:
        return self.baseline_mae > 0 and self.test_mae <= (1.0 - GATE_IMPROVEMENT) * self.baseline_mae

    @property
    def train_rmse(self) -> np.ndarray:
        return self.model.train_rmse_

    def to_dict(self) -> dict:
        return {"dim": self.dim, "feature_names": self.feature_names, "seed": self.seed,
                "split": self.split, "n_train": int(len(self.train_rows)),
                "n_test": int(len(self.test_rows)), "test_mae": self.test_mae,
                "baseline_mae": self.baseline_mae, "passes_gate": self.passes_gate,
                "model": self.model.to_dict()}


def split_rows(n: int, split: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded timestep-level train/test partition of ``range(n)``."""
    if not 0 < split < 1:
        raise ValueError("split must lie strictly between 0 and 1")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = min(n - 1, max(1, int(round(split * n))))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def train_gbt(fm: FeatureMatrix, dim: str, split: float = 0.8, params: Mapping | None = None,
              seed: int = 0) -> TrainedModel:
    """Fit a boosted-tree regressor from features to ``dim``.

    Rows where ``dim`` is undefined are dropped, the remainder is split at the
    timestep level with ``seed``, and the model is scored by held-out MAE
    against a baseline that predicts the training mean. The model passes the
    quality gate when it beats that baseline by at least 20%.
    """
    rows, X, y = fm.target(dim)
    if len(rows) < 10:
        raise ValueError(f"need at least 10 rows with {dim!r} defined, got {len(rows)}")
    hp = dict(DEFAULT_GBT_PARAMS)
    hp.update(params or {})
    hp.setdefault("random_state", seed)
    tr, te = split_rows(len(rows), split, seed)
    model = GradientBoostedTrees(**hp).fit(X[tr], y[tr])
    test_mae = float(np.mean(np.abs(model.predict(X[te]) - y[te])))
    baseline_mae = float(np.mean(np.abs(np.mean(y[tr]) - y[te])))
    trained = TrainedModel(dim, model, list(fm.feature_names), rows[tr], rows[te], test_mae,
                           baseline_mae, seed, split)
    logger.info("%s: test MAE %.4g vs baseline %.4g (gate %s)", dim, test_mae, baseline_mae,
                "passed" if trained.passes_gate else "failed")
    return trained


def _require_gate(trained: TrainedModel, force: bool) -> None:
    if not trained.passes_gate and not force:
        raise ModelQualityError(
            f"model for {trained.dim!r} failed the quality gate (test MAE {trained.test_mae:.4g}, "
            f"baseline {trained.baseline_mae:.4g}); pass force=True to explain it anyway")


# -- global explanation -------------------------------------------------------

def background_rows(trained: TrainedModel, n: int = MAX_BACKGROUND) -> np.ndarray:
    """Seeded sample of at most ``n`` training rows, the reference set for Shapley values."""
    rows = trained.train_rows
    if len(rows) > n:
        rows = np.sort(np.random.default_rng(trained.seed).choice(rows, n, replace=False))
    return rows


def _background(trained: TrainedModel, fm: FeatureMatrix, background):
    if isinstance(background, str):
        if background != "train":
            raise ValueError(f"background must be 'train', None or an array, got {background!r}")
        return fm.X[background_rows(trained)]
    return background


@dataclass
class GlobalImportance:
    ranking: pd.DataFrame     # feature, mean_abs_shap, mean_shap
    beeswarm: pd.DataFrame    # feature, row, trace_id, step, shap, value (top features only)
    shap: ShapleyResult
    rows: np.ndarray


def global_importance(trained: TrainedModel, fm: FeatureMatrix, rows=None, top: int = TOP_FEATURES,
                      force: bool = False, background="train") -> GlobalImportance:
    """Rank features by mean absolute Shapley value over the test rows.

    Parameters
    ----------
    trained : TrainedModel
    fm : FeatureMatrix
        The matrix the model was trained on.
    rows : array-like of int, optional
        Row indices into ``fm`` to explain; defaults to the held-out rows.
    top : int, default=10
        Number of features kept in the beeswarm data.
    force : bool, default=False
        Explain even if the model failed the quality gate.
    background : "train", None or array-like, default="train"
        Reference rows for interventional Shapley values. ``"train"`` uses
        :func:`background_rows`; None switches to the path-dependent
        convention.
    """
    _require_gate(trained, force)
    rows = trained.test_rows if rows is None else np.asarray(rows, dtype=int)
    X = fm.X[rows]
    res = shap_tree(trained.model, X, background=_background(trained, fm, background))
    names = trained.feature_names
    mean_abs = np.abs(res.values).mean(axis=0) if len(rows) else np.zeros(len(names))
    mean_signed = res.values.mean(axis=0) if len(rows) else np.zeros(len(names))
    # stable ordering: by importance, then by name so permuted columns rank identically
    order = sorted(range(len(names)), key=lambda j: (-mean_abs[j], names[j]))
    ranking = pd.DataFrame({"rank": np.arange(1, len(names) + 1),
                            "feature": [names[j] for j in order],
                            "mean_abs_shap": mean_abs[order], "mean_shap": mean_signed[order]})
    keep = order[:min(top, len(names))]
    recs = []
    for j in keep:
        for i, r in enumerate(rows):
            recs.append((names[j], int(r), fm.keys[r][0], fm.keys[r][1], res.values[i, j], X[i, j]))
    beeswarm = pd.DataFrame(recs, columns=["feature", "row", "trace_id", "step", "shap", "value"])
    return GlobalImportance(ranking, beeswarm, res, rows)


# -- abnormal moments ---------------------------------------------------------

def iqr_fences(values: Sequence[float], k: float = IQR_MULTIPLIER) -> tuple[float, float]:
    """Tukey fences ``[Q1 - k IQR, Q3 + k IQR]`` with linearly interpolated quartiles."""
    v = np.asarray(values, dtype=float)
    q1, q3 = np.percentile(v, [25, 75])
    iqr = q3 - q1
    return float(q1 - k * iqr), float(q3 + k * iqr)


def find_abnormal(records: Sequence[InterestingnessRecord], dim: str,
                  k: float = IQR_MULTIPLIER) -> list[tuple[str, int]]:
    """Timesteps whose ``dim`` value lies outside the Tukey fences.

    ``dim`` may be a dimension name or a ``dim[factor]`` column. When the
    interquartile range is zero a warning is issued and the fences collapse
    onto the quartile, so only values different from it are flagged.
    """
    pts = [(r.trace_id, r.step, v) for r in records if (v := r.get(dim)) is not None]
    if len(pts) < 4:
        raise ValueError(f"need at least 4 records with {dim!r} defined, got {len(pts)}")
    vals = np.array([p[2] for p in pts])
    lo, hi = iqr_fences(vals, k)
    if lo == hi:
        warnings.warn(f"{dim}: interquartile range is zero; flagging every value off the quartile",
                      ZeroIQRWarning)
    return [(t, s) for t, s, v in pts if v < lo or v > hi]


def abnormal_table(records: Sequence[InterestingnessRecord], dim: str,
                   k: float = IQR_MULTIPLIER) -> pd.DataFrame:
    """Flagged steps with their value, direction and the fences used."""
    flagged = set(find_abnormal(records, dim, k))
    vals = [v for r in records if (v := r.get(dim)) is not None]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ZeroIQRWarning)
        lo, hi = iqr_fences(vals, k)
    rows = [(r.trace_id, r.step, r.get(dim), "low" if r.get(dim) < lo else "high", lo, hi)
            for r in records if (r.trace_id, r.step) in flagged]
    return pd.DataFrame(rows, columns=["trace_id", "step", "value", "direction", "lower_fence",
                                       "upper_fence"])


# -- local explanation --------------------------------------------------------

@dataclass
class Waterfall:
    """Data for a waterfall plot of one timestep's prediction."""

    trace_id: str
    step: int
    base_value: float
    prediction: float
    features: list[str]
    feature_values: list[float]
    contributions: list[float]
    remainder: float
    n_remainder: int

    def to_frame(self) -> pd.DataFrame:
        rows = [(f, v, c) for f, v, c in zip(self.features, self.feature_values, self.contributions)]
        rows.append((f"other ({self.n_remainder} features)", np.nan, self.remainder))
        frame = pd.DataFrame(rows, columns=["feature", "value", "contribution"])
        frame.insert(0, "step", self.step)
        frame.insert(0, "trace_id", self.trace_id)
        frame["base_value"] = self.base_value
        frame["prediction"] = self.prediction
        return frame


def local_explanation(trained: TrainedModel, fm: FeatureMatrix, trace_id: str, step: int,
                      top: int = TOP_FEATURES, force: bool = False, background="train") -> Waterfall:
    """Top-``top`` signed feature contributions for one timestep plus a remainder bucket.

    ``background`` is interpreted as in :func:`global_importance`.
    """
    _require_gate(trained, force)
    i = fm.row_index(trace_id, step)
    x = fm.X[i:i + 1]
    res = shap_tree(trained.model, x, background=_background(trained, fm, background))
    phi = res.values[0]
    names = trained.feature_names
    order = sorted(range(len(names)), key=lambda j: (-abs(phi[j]), names[j]))
    keep, rest = order[:min(top, len(names))], order[min(top, len(names)):]
    return Waterfall(trace_id, int(step), res.base_value, float(res.predictions[0]),
                     [names[j] for j in keep], [float(x[0, j]) for j in keep],
                     [float(phi[j]) for j in keep], float(np.sum(phi[rest])) if rest else 0.0,
                     len(rest))
