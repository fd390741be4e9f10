"""Per-timestep interestingness formulas.

Every function maps model outputs for one timestep to a scalar in ``[-1, 1]``.
They are deliberately free of any trace bookkeeping so that they can be
checked one by one against hand computations.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

VALUE = "value"
CONFIDENCE = "confidence"
GOAL_CONDUCIVENESS = "goal_conduciveness"
INCONGRUITY = "incongruity"
RISKINESS = "riskiness"
STOCHASTICITY = "stochasticity"
FAMILIARITY = "familiarity"

DIMENSIONS = (VALUE, CONFIDENCE, GOAL_CONDUCIVENESS, INCONGRUITY, RISKINESS,
              STOCHASTICITY, FAMILIARITY)
FACTORED_DIMENSIONS = (CONFIDENCE, RISKINESS)

DEFAULT_RHO = 100.0
_SQRT_2PI_E = math.sqrt(2.0 * math.pi * math.e)


def _clip(x: float) -> float:
    return min(1.0, max(-1.0, float(x)))


def min_max_scale(v: float, v_min: float, v_max: float) -> float:
    """Scale ``v`` into ``[0, 1]``; a zero-width range maps to the midpoint 0.5."""
    if v_max <= v_min:
        return 0.5
    return min(1.0, max(0.0, (v - v_min) / (v_max - v_min)))


def dim_value(v: float, v_min: float, v_max: float) -> float:
    """``2 * minmax(v) - 1``; 0 when the value function is constant."""
    return 2.0 * min_max_scale(v, v_min, v_max) - 1.0


def pielou_evenness(probs: Sequence[float]) -> float:
    """Normalised entropy ``H(p) / log(n)`` with ``0 log 0 = 0``."""
    p = np.asarray(probs, dtype=float)
    n = p.size
    if n < 2:
        return 0.0
    nz = p[p > 0]
    h = -float(np.sum(nz * np.log(nz)))
    return min(1.0, max(0.0, h / math.log(n)))


def dim_confidence_discrete(probs: Sequence[float]) -> float:
    """``1 - 2 J(pi)``; a single-action factor is fully confident (+1)."""
    return _clip(1.0 - 2.0 * pielou_evenness(probs))


def gaussian_dispersion(stddev: Sequence[float], low: Sequence[float], high: Sequence[float]) -> float:
    """Entropy-power ratio of a diagonal Gaussian to the uniform law on the action box.

    ``exp(h(N(mu, diag(s^2)))) / exp(h(U[low, high]))`` capped at 1. This is the
    stand-in for the relative-entropy dispersion coefficient used for
    continuous Confidence.
    """
    s = np.asarray(stddev, dtype=float)
    if np.any(s <= 0):
        raise ValueError("stddev must be positive")
    width = np.asarray(high, dtype=float) - np.asarray(low, dtype=float)
    log_ratio = float(np.sum(np.log(s * _SQRT_2PI_E) - np.log(width)))
    return math.exp(min(0.0, log_ratio))


def dim_confidence_continuous(stddev: Sequence[float], low: Sequence[float],
                              high: Sequence[float]) -> float:
    """``1 - 2 J_c`` with ``J_c`` from :func:`gaussian_dispersion`."""
    return _clip(1.0 - 2.0 * gaussian_dispersion(stddev, low, high))


def value_slope(values: Sequence[float]) -> float:
    """Backward finite-difference slope at the last entry (unit spacing).

    Uses the second-order stencil ``(3/2, -2, 1/2)`` when three values are
    given and the first-order difference when only two are.
    """
    if len(values) >= 3:
        v2, v1, v0 = values[-3], values[-2], values[-1]
        return 1.5 * v0 - 2.0 * v1 + 0.5 * v2
    if len(values) == 2:
        return values[-1] - values[-2]
    raise ValueError("need at least two values for a slope")


def dim_goal_conduciveness(values: Sequence[float], rho: float = DEFAULT_RHO) -> float:
    """``sin(atan(rho * dV/dt))`` over normalised values ordered oldest to newest."""
    x = rho * value_slope(values)
    # sin(atan(x)) == x / sqrt(1 + x^2), exact at the limits
    return _clip(x / math.sqrt(1.0 + x * x)) if math.isfinite(x) else math.copysign(1.0, x)


def td_error(reward: float, value: float, prev_value: float, discount: float) -> float:
    return reward + discount * value - prev_value


def dim_incongruity(reward: float, value: float, prev_value: float, discount: float,
                    reward_range: tuple[float, float]) -> float:
    """TD error divided by the reward range width, clamped; 0 for a zero-width range."""
    width = reward_range[1] - reward_range[0]
    if width <= 0:
        return 0.0
    return _clip(td_error(reward, value, prev_value, discount) / width)


def dim_riskiness_policy(probs: Sequence[float]) -> float:
    """``2 (p_(1) - p_(2)) - 1`` from the two largest action probabilities."""
    p = np.asarray(probs, dtype=float)
    if p.size < 2:
        raise ValueError("riskiness needs at least two actions")
    top2 = np.partition(p, p.size - 2)[-2:]
    return _clip(2.0 * (top2[1] - top2[0]) - 1.0)


def dim_riskiness_value(q: Sequence[float], q_min: float, q_max: float) -> float:
    """Best-minus-worst action value over the dataset-wide Q range, mapped to ``[-1, 1]``."""
    q = np.asarray(q, dtype=float)
    if q.size < 2:
        raise ValueError("riskiness needs at least two actions")
    width = q_max - q_min
    if width <= 0:
        return -1.0
    return _clip(2.0 * min(1.0, (q.max() - q.min()) / width) - 1.0)


def leik_dispersion(probs: Sequence[float]) -> float:
    """Leik's ordinal dispersion ``D = 2 sum_k d_k / (K - 1)`` with folded cumulatives."""
    p = np.asarray(probs, dtype=float)
    k = p.size
    if k < 2:
        return 0.0
    c = np.cumsum(p)
    d = np.minimum(c, 1.0 - c)
    d[-1] = 0.0  # c_K is 1 up to rounding
    return min(1.0, max(0.0, 2.0 * float(np.sum(np.clip(d, 0.0, None))) / (k - 1)))


def _peak_at_half(x: float) -> float:
    return 1.0 - 4.0 * abs(x - 0.5)


def dim_stochasticity_discrete(dists: Sequence[Sequence[float]]) -> float:
    """Mean over actions of ``1 - 4 |D - 0.5|`` for each action's return distribution."""
    if len(dists) < 1:
        raise ValueError("need at least one action distribution")
    return _clip(float(np.mean([_peak_at_half(leik_dispersion(p)) for p in dists])))


def bounded_cv(mean: float, stddev: float, scale: float) -> float:
    """Coefficient-of-variation surrogate ``s / (s + |m| + scale/10)`` in ``[0, 1)``."""
    if not scale > 0:
        raise ValueError("reference scale must be positive")
    return stddev / (stddev + abs(mean) + scale / 10.0)


def dim_stochasticity_continuous(means: Sequence[Sequence[float]], stddevs: Sequence[Sequence[float]],
                                 scale: float) -> float:
    """Mean over Gaussians and components of ``1 - 4 |CV' - 0.5|``."""
    m = np.asarray(means, dtype=float)
    s = np.asarray(stddevs, dtype=float)
    if not scale > 0:
        raise ValueError("reference scale must be positive")
    cv = s / (s + np.abs(m) + scale / 10.0)
    return _clip(float(np.mean(1.0 - 4.0 * np.abs(cv - 0.5))))


def cosine_distance(x: Sequence[float], y: Sequence[float]) -> float:
    """``1 - cos(x, y)`` clipped to ``[0, 1]``; zero vectors follow a fixed convention."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        return 0.0 if nx == ny else 1.0
    return min(1.0, max(0.0, 1.0 - float(x @ y) / (nx * ny)))


def _cosine_matrix(points: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(points, axis=1)
    zero = norms == 0
    safe = np.where(zero, 1.0, norms)
    unit = points / safe[:, None]
    d = np.clip(1.0 - unit @ unit.T, 0.0, 1.0)
    if zero.any():
        d[np.ix_(zero, ~zero)] = 1.0
        d[np.ix_(~zero, zero)] = 1.0
        d[np.ix_(zero, zero)] = 0.0
    np.fill_diagonal(d, 0.0)
    return d


def hellinger_sq(mean1, std1, mean2, std2) -> float:
    """Squared Hellinger distance between diagonal Gaussians (in ``[0, 1]``)."""
    m1, s1, m2, s2 = (np.asarray(a, dtype=float) for a in (mean1, std1, mean2, std2))
    var = s1 ** 2 + s2 ** 2
    coef = np.prod(np.sqrt(2.0 * s1 * s2 / var)) * math.exp(-float(np.sum((m1 - m2) ** 2 / (4.0 * var))))
    return min(1.0, max(0.0, 1.0 - coef))


def _hellinger_matrix(means: np.ndarray, stds: np.ndarray) -> np.ndarray:
    var = stds[:, None, :] ** 2 + stds[None, :, :] ** 2
    log_coef = (0.5 * np.log(2.0 * stds[:, None, :] * stds[None, :, :] / var)
                - (means[:, None, :] - means[None, :, :]) ** 2 / (4.0 * var)).sum(axis=2)
    d = np.clip(1.0 - np.exp(log_coef), 0.0, 1.0)
    np.fill_diagonal(d, 0.0)
    return d


def familiarity_from_distances(dist: np.ndarray) -> float:
    """``1 - (2 / K^2) sum_{i,j} d_ij`` over all ordered pairs."""
    k = dist.shape[0]
    return _clip(1.0 - 2.0 * float(dist.sum()) / (k * k))


def dim_familiarity(points: Sequence[Sequence[float]]) -> float:
    """Familiarity of an ensemble of point predictions under cosine distance."""
    p = np.asarray(points, dtype=float)
    if p.shape[0] < 2:
        raise ValueError("familiarity needs at least two ensemble members")
    return familiarity_from_distances(_cosine_matrix(p))


def dim_familiarity_gaussian(means: Sequence[Sequence[float]], stddevs: Sequence[Sequence[float]]) -> float:
    """Familiarity of an ensemble of Gaussian predictions under squared Hellinger distance."""
    m = np.asarray(means, dtype=float)
    s = np.asarray(stddevs, dtype=float)
    if m.shape[0] < 2:
        raise ValueError("familiarity needs at least two ensemble members")
    return familiarity_from_distances(_hellinger_matrix(m, s))


def aggregate_factors(values: Sequence[float]) -> float:
    """Arithmetic mean across action factors."""
    if len(values) < 1:
        raise ValueError("need at least one factor value")
    if len(values) == 1:
        return float(values[0])
    return float(np.mean(values))
