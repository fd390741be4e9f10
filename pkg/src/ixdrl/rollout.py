"""Toy environments and tabular agents that produce fully-probed traces.

Two environments are provided:

* :class:`GridworldSpec` -- a discrete grid with goals, hazards, walls and a
  slip probability. Its agent exposes a softmax policy, the optimal state
  value, categorical (distributional) action values and an ensemble of
  bootstrapped transition models.
* :class:`LineWorldSpec` -- a 1-D continuous corridor driven by several
  continuous action factors, with Gaussian policies and an ensemble of
  Gaussian forward models.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Mapping, Sequence

import numpy as np

from .traces import (ActionSpaceSpec, AtomDistribution, ContinuousFactor, DiscreteDistribution,
                     DiscreteFactor, EnsemblePrediction, GaussianSpec, InteractionDatapoint, Trace,
                     TraceSet)

logger = logging.getLogger(__name__)

MOVES = ((0, -1), (1, 0), (0, 1), (-1, 0))
MOVE_LABELS = ("up", "right", "down", "left")


class UnreachableGoalWarning(UserWarning):
    pass


# -- environment specs --------------------------------------------------------

@dataclass(frozen=True)
class GridworldSpec:
    width: int
    height: int
    goals: tuple = (((0, 0), 1.0),)
    hazards: tuple = ()
    walls: tuple = ()
    p_slip: float = 0.0
    max_steps: int = 50
    starts: tuple = ()
    step_reward: float = 0.0
    discount: float = 0.95

    def __post_init__(self):
        norm = lambda cells: tuple((int(c[0]), int(c[1])) for c in cells)
        object.__setattr__(self, "goals", tuple(((int(c[0]), int(c[1])), float(r)) for c, r in self.goals))
        object.__setattr__(self, "hazards", tuple(((int(c[0]), int(c[1])), float(r)) for c, r in self.hazards))
        object.__setattr__(self, "walls", norm(self.walls))
        object.__setattr__(self, "starts", norm(self.starts))
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")
        if not 0.0 <= self.p_slip <= 1.0:
            raise ValueError(f"p_slip must lie in [0, 1], got {self.p_slip}")
        if not self.goals:
            raise ValueError("gridworld needs at least one goal cell")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("toy agents need a discount in [0, 1)")
        special = [c for c, _ in self.goals] + [c for c, _ in self.hazards] + list(self.walls)
        if len(set(special)) != len(special):
            raise ValueError("goal, hazard and wall cells must be distinct")
        for x, y in special + list(self.starts):
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValueError(f"cell {(x, y)} outside the grid")
        if set(self.starts) & set(special):
            raise ValueError("start cells must be free, non-terminal cells")

    # geometry
    @property
    def n_states(self) -> int:
        return self.width * self.height

    def index(self, cell) -> int:
        return cell[1] * self.width + cell[0]

    def cell(self, s: int) -> tuple[int, int]:
        return s % self.width, s // self.width

    @property
    def terminal_rewards(self) -> dict[int, float]:
        return {self.index(c): r for c, r in self.goals + self.hazards}

    def free_cells(self) -> list[tuple[int, int]]:
        blocked = set(self.walls) | {c for c, _ in self.goals} | {c for c, _ in self.hazards}
        return [(x, y) for y in range(self.height) for x in range(self.width) if (x, y) not in blocked]

    def start_cells(self) -> list[tuple[int, int]]:
        return list(self.starts) or self.free_cells()

    def move(self, cell, a: int) -> tuple[int, int]:
        x, y = cell[0] + MOVES[a][0], cell[1] + MOVES[a][1]
        if not (0 <= x < self.width and 0 <= y < self.height) or (x, y) in self.walls:
            return tuple(cell)
        return x, y

    def near_hazard(self, cell) -> bool:
        return any(max(abs(cell[0] - h[0]), abs(cell[1] - h[1])) <= 1 for h, _ in self.hazards)

    def observe(self, cell) -> tuple[float, float, float]:
        """Observation vector: normalised (1-based) column and row, near-hazard flag."""
        return ((cell[0] + 1) / self.width, (cell[1] + 1) / self.height,
                1.0 if self.near_hazard(cell) else 0.0)

    def reward_bounds(self) -> tuple[float, float]:
        rewards = [r for _, r in self.goals + self.hazards] + [self.step_reward]
        return min(rewards), max(rewards)

    def return_bounds(self) -> tuple[float, float]:
        horizon = sum(self.discount ** k for k in range(self.max_steps))
        terminal = [r for _, r in self.goals + self.hazards]
        lo = min(0.0, self.step_reward * horizon) + min(0.0, min(terminal))
        hi = max(0.0, self.step_reward * horizon) + max(0.0, max(terminal))
        return lo, hi

    def transition_matrix(self) -> np.ndarray:
        """``P[s, a, s']`` for every state (terminal and wall rows are left at zero)."""
        n, P = self.n_states, np.zeros((self.n_states, 4, self.n_states))
        for cell in self.free_cells():
            s = self.index(cell)
            for a in range(4):
                for b in range(4):
                    p = (1.0 - self.p_slip) * (a == b) + self.p_slip / 4.0
                    if p > 0:
                        P[s, a, self.index(self.move(cell, b))] += p
        return P

    def to_dict(self) -> dict:
        d = {"kind": "gridworld", "width": self.width, "height": self.height,
             "goals": [{"cell": list(c), "reward": r} for c, r in self.goals],
             "hazards": [{"cell": list(c), "reward": r} for c, r in self.hazards],
             "walls": [list(c) for c in self.walls], "p_slip": self.p_slip,
             "max_steps": self.max_steps, "starts": [list(c) for c in self.starts],
             "step_reward": self.step_reward, "discount": self.discount}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "GridworldSpec":
        cells = lambda key: tuple((tuple(e["cell"]), e["reward"]) for e in d.get(key, ()))
        return cls(width=d["width"], height=d["height"], goals=cells("goals"),
                   hazards=cells("hazards"), walls=tuple(tuple(c) for c in d.get("walls", ())),
                   p_slip=d.get("p_slip", 0.0), max_steps=d.get("max_steps", 50),
                   starts=tuple(tuple(c) for c in d.get("starts", ())),
                   step_reward=d.get("step_reward", 0.0), discount=d.get("discount", 0.95))


@dataclass(frozen=True)
class LineWorldSpec:
    """Continuous 1-D corridor ``[0, 1]``; reaching ``x >= goal_start`` ends the episode."""

    n_factors: int = 3
    n_bins: int = 20
    goal_start: float = 0.9
    goal_reward: float = 1.0
    step_reward: float = 0.0
    step_size: float = 0.05
    noise_base: float = 0.01
    rough_region: tuple = (0.4, 0.6)
    noise_rough: float = 0.05
    start_region: tuple = (0.0, 0.2)
    max_steps: int = 100
    discount: float = 0.95

    def __post_init__(self):
        if self.n_factors < 1 or self.n_bins < 2:
            raise ValueError("need at least one factor and two bins")
        if not 0.0 < self.goal_start <= 1.0:
            raise ValueError("goal_start must lie in (0, 1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("toy agents need a discount in [0, 1)")
        object.__setattr__(self, "rough_region", tuple(float(v) for v in self.rough_region))
        object.__setattr__(self, "start_region", tuple(float(v) for v in self.start_region))

    def bin(self, x: float) -> int:
        return min(self.n_bins - 1, max(0, int(x * self.n_bins)))

    def noise(self, x: float) -> float:
        lo, hi = self.rough_region
        return self.noise_rough if lo <= x < hi else self.noise_base

    def reward_bounds(self) -> tuple[float, float]:
        return min(self.goal_reward, self.step_reward), max(self.goal_reward, self.step_reward)

    def factor_names(self) -> list[str]:
        return [f"joint{i}" for i in range(self.n_factors)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rough_region"] = list(self.rough_region)
        d["start_region"] = list(self.start_region)
        return {"kind": "lineworld", **d}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LineWorldSpec":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def env_from_dict(d: Mapping):
    kind = d.get("kind", "gridworld")
    if kind == "gridworld":
        return GridworldSpec.from_dict(d)
    if kind == "lineworld":
        return LineWorldSpec.from_dict(d)
    raise ValueError(f"unknown environment kind {kind!r}")


# -- agents -------------------------------------------------------------------

@dataclass
class ToyAgentBundle:
    """Tabular stand-ins for the four model families probed during rollouts."""

    env: Any
    policy: np.ndarray           # grid: (S, A) probs; line: (F, bins, 2) mean/std
    values: np.ndarray           # (S,) or (bins,)
    q: np.ndarray | None = None  # (S, A) expected action values (grid only)
    atoms: np.ndarray | None = None
    q_dist: np.ndarray | None = None   # (S, A, n_atoms)
    ensemble: np.ndarray | None = None  # grid: (K, S, A, obs); line: (K, bins, 2)
    temperature: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def ensemble_size(self) -> int:
        return 0 if self.ensemble is None else self.ensemble.shape[0]


def softmax_policy(q: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise softmax of ``q / temperature``; ``temperature == 0`` splits mass over ties."""
    q = np.asarray(q, dtype=float)
    if temperature <= 0:
        best = np.isclose(q, q.max(axis=-1, keepdims=True), rtol=0, atol=1e-12)
        return best / best.sum(axis=-1, keepdims=True)
    z = (q - q.max(axis=-1, keepdims=True)) / temperature
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def value_iteration(env: GridworldSpec, tol: float = 1e-12, max_iter: int = 100_000):
    """Optimal ``(V, Q)`` under the true dynamics; terminal states have value 0."""
    P = env.transition_matrix()
    reward = np.full(env.n_states, env.step_reward)
    live = np.ones(env.n_states)
    for s, r in env.terminal_rewards.items():
        reward[s] = r
        live[s] = 0.0
    free = np.array([env.index(c) for c in env.free_cells()], dtype=int)
    V = np.zeros(env.n_states)
    for _ in range(max_iter):
        Q = P @ (reward + env.discount * live * V)
        V_new = np.zeros_like(V)
        V_new[free] = Q[free].max(axis=1)
        done = np.max(np.abs(V_new - V)) < tol
        V = V_new
        if done:
            break
    Q = P @ (reward + env.discount * live * V)
    return V, Q


def bellman_residual(env: GridworldSpec, V: np.ndarray) -> float:
    """Max absolute optimal-Bellman residual over free cells."""
    P = env.transition_matrix()
    reward = np.full(env.n_states, env.step_reward)
    live = np.ones(env.n_states)
    for s, r in env.terminal_rewards.items():
        reward[s], live[s] = r, 0.0
    free = np.array([env.index(c) for c in env.free_cells()], dtype=int)
    Q = P @ (reward + env.discount * live * V)
    return float(np.max(np.abs(Q[free].max(axis=1) - V[free])))


def project_categorical(atoms: np.ndarray, target: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Project mass ``probs`` sitting at (row-wise) ``target`` locations onto ``atoms``.

    ``target`` and ``probs`` have shape ``(rows, n_src)``; returns ``(rows, n_atoms)``.
    """
    n = len(atoms)
    v_min, v_max = atoms[0], atoms[-1]
    dz = (v_max - v_min) / (n - 1)
    tz = np.clip(target, v_min, v_max)
    b = (tz - v_min) / dz
    lo = np.floor(b).astype(int)
    hi = np.ceil(b).astype(int)
    lo = np.clip(lo, 0, n - 1)
    hi = np.clip(hi, 0, n - 1)
    w_hi = b - lo
    w_lo = 1.0 - w_hi
    out = np.zeros((target.shape[0], n))
    rows = np.repeat(np.arange(target.shape[0]), target.shape[1])
    np.add.at(out, (rows, lo.ravel()), (probs * w_lo).ravel())
    np.add.at(out, (rows, hi.ravel()), (probs * w_hi).ravel())
    return out


def categorical_q(env: GridworldSpec, greedy: np.ndarray, atoms: np.ndarray,
                  tol: float = 1e-10, max_iter: int = 5000) -> np.ndarray:
    """Distributional Bellman fixed point for the greedy policy, projected onto ``atoms``."""
    P = env.transition_matrix()
    S, n = env.n_states, len(atoms)
    reward = np.full(S, env.step_reward)
    live = np.ones(S, dtype=bool)
    for s, r in env.terminal_rewards.items():
        reward[s], live[s] = r, False
    Z = np.zeros((S, 4, n))
    Z[:, :, int(np.argmin(np.abs(atoms)))] = 1.0
    for _ in range(max_iter):
        nxt = Z[np.arange(S), greedy]                               # (S', n)
        target = reward[:, None] + env.discount * atoms[None, :] * live[:, None]
        T = project_categorical(atoms, target, np.where(live[:, None], nxt, 0.0))
        T[~live] = 0.0
        term = project_categorical(atoms, reward[:, None], np.ones((S, 1)))
        T[~live] = term[~live]
        Z_new = np.einsum("sat,tn->san", P, T)
        done = np.max(np.abs(Z_new - Z)) < tol
        Z = Z_new
        if done:
            break
    return Z


def _log_grid_transitions(env: GridworldSpec, episodes: int, rng: np.random.Generator):
    free = env.free_cells()
    terminal = env.terminal_rewards
    out = []
    for _ in range(episodes):
        cell = free[rng.integers(len(free))]
        for _ in range(env.max_steps):
            a = int(rng.integers(4))
            b = a if rng.random() >= env.p_slip else int(rng.integers(4))
            nxt = env.move(cell, b)
            out.append((env.index(cell), a, env.index(nxt)))
            if env.index(nxt) in terminal:
                break
            cell = nxt
    return np.array(out, dtype=int).reshape(-1, 3)


def _train_grid(env: GridworldSpec, episodes: int, seed: int, temperature: float,
                ensemble_size: int, n_atoms: int, atom_range) -> ToyAgentBundle:
    V, Q = value_iteration(env)
    free = [env.index(c) for c in env.free_cells()]
    starts = [env.index(c) for c in env.start_cells()]
    if max(V[starts]) <= 0:
        warnings.warn("no start state has a positive-value path to a goal", UnreachableGoalWarning)
    policy = softmax_policy(Q, temperature)
    greedy = np.argmax(Q, axis=1)
    lo, hi = atom_range if atom_range is not None else env.return_bounds()
    if hi <= lo:
        hi = lo + 1.0
    atoms = np.round(np.linspace(lo, hi, n_atoms), 12)
    Z = categorical_q(env, greedy, atoms)

    ss = np.random.SeedSequence(seed)
    log_rng, boot_rng, fb_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    trans = _log_grid_transitions(env, episodes, log_rng)
    obs = np.array([env.observe(env.cell(s)) for s in range(env.n_states)])
    S = env.n_states
    preds = np.zeros((ensemble_size, S, 4, obs.shape[1]))
    for k in range(ensemble_size):
        sample = trans[boot_rng.integers(0, len(trans), len(trans))] if len(trans) else trans
        counts = np.zeros((S, 4, S))
        np.add.at(counts, (sample[:, 0], sample[:, 1], sample[:, 2]), 1.0)
        total = counts.sum(axis=2)
        # unseen (s, a): the member guesses a random neighbouring cell
        guess = fb_rng.integers(4, size=(S, 4))
        for s in free:
            for a in range(4):
                if total[s, a] > 0:
                    preds[k, s, a] = counts[s, a] @ obs / total[s, a]
                else:
                    preds[k, s, a] = obs[env.index(env.move(env.cell(s), int(guess[s, a])))]
    return ToyAgentBundle(env=env, policy=policy, values=V, q=Q, atoms=atoms, q_dist=Z,
                          ensemble=preds, temperature=temperature,
                          info={"n_transitions": int(len(trans)),
                                "bellman_residual": bellman_residual(env, V)})


def _line_policy(env: LineWorldSpec) -> np.ndarray:
    centers = (np.arange(env.n_bins) + 0.5) / env.n_bins
    table = np.zeros((env.n_factors, env.n_bins, 2))
    for f in range(env.n_factors):
        table[f, :, 0] = 0.9 - 0.15 * f
        table[f, :, 1] = 0.05 + 0.4 * np.abs(np.sin(np.pi * centers * (f + 1)))
    return table


def _line_step(env: LineWorldSpec, x: float, action: np.ndarray, rng) -> float:
    drive = env.step_size * float(np.mean(np.clip(action, -1.0, 1.0)))
    return float(np.clip(x + drive + env.noise(x) * rng.standard_normal(), 0.0, 1.0))


def _train_line(env: LineWorldSpec, episodes: int, seed: int, ensemble_size: int) -> ToyAgentBundle:
    policy = _line_policy(env)
    centers = (np.arange(env.n_bins) + 0.5) / env.n_bins
    drift = env.step_size * policy[:, :, 0].mean(axis=0)
    steps = np.maximum(0.0, env.goal_start - centers) / drift
    steps = np.ceil(steps)
    values = env.goal_reward * env.discount ** np.maximum(steps - 1, 0)
    if env.step_reward:
        values = values + env.step_reward * (1 - env.discount ** steps) / (1 - env.discount)

    ss = np.random.SeedSequence(seed)
    log_rng, boot_rng, fb_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    logged: list[list[float]] = [[] for _ in range(env.n_bins)]
    for _ in range(episodes):
        x = float(log_rng.uniform(*env.start_region))
        for _ in range(env.max_steps):
            b = env.bin(x)
            a = log_rng.normal(policy[:, b, 0], policy[:, b, 1])
            nx = _line_step(env, x, a, log_rng)
            logged[b].append(nx - x - env.step_size * float(np.mean(np.clip(a, -1, 1))))
            x = nx
            if x >= env.goal_start:
                break
    ens = np.zeros((ensemble_size, env.n_bins, 2))
    for k in range(ensemble_size):
        for b in range(env.n_bins):
            res = np.asarray(logged[b])
            if len(res) >= 2:
                sample = res[boot_rng.integers(0, len(res), len(res))]
                ens[k, b] = sample.mean(), max(sample.std(), 1e-3)
            else:
                ens[k, b] = fb_rng.normal(0.0, 0.1), 0.25
    return ToyAgentBundle(env=env, policy=policy, values=values, ensemble=ens,
                          info={"n_transitions": int(sum(len(r) for r in logged))})


def train_toy_agent(env, episodes: int, seed: int, temperature: float = 0.1,
                    ensemble_size: int = 5, n_atoms: int = 51, atom_range=None) -> ToyAgentBundle:
    """Build a tabular agent for ``env``.

    For gridworlds the value table is the optimal value function (value
    iteration), the policy is a softmax over the optimal action values with
    the given ``temperature``, the categorical action-value distributions are
    the distributional Bellman fixed point of the greedy policy over
    ``n_atoms`` atoms, and the ensemble holds ``ensemble_size`` transition
    models fitted on bootstrap resamples of transitions logged over
    ``episodes`` exploratory episodes.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if ensemble_size < 2:
        raise ValueError("ensemble_size must be >= 2")
    if isinstance(env, GridworldSpec):
        return _train_grid(env, episodes, seed, temperature, ensemble_size, n_atoms, atom_range)
    if isinstance(env, LineWorldSpec):
        return _train_line(env, episodes, seed, ensemble_size)
    raise TypeError(f"unsupported environment {type(env).__name__}")


# -- rollouts -----------------------------------------------------------------

def action_space_for(env) -> ActionSpaceSpec:
    if isinstance(env, GridworldSpec):
        return ActionSpaceSpec((DiscreteFactor(4, name="move", labels=MOVE_LABELS),))
    return ActionSpaceSpec(tuple(ContinuousFactor((-1.0,), (1.0,), name=n) for n in env.factor_names()))


def _grid_trace(env: GridworldSpec, agent: ToyAgentBundle, rng, trace_id: str, meta: dict) -> Trace:
    starts = env.start_cells()
    cell = starts[rng.integers(len(starts))]
    terminal = env.terminal_rewards
    points, score, outcome = [], 0.0, "timeout"
    for t in range(env.max_steps):
        s = env.index(cell)
        probs = agent.policy[s]
        a = int(rng.choice(4, p=probs))
        b = a if rng.random() >= env.p_slip else int(rng.integers(4))
        nxt = env.move(cell, b)
        ns = env.index(nxt)
        reward = terminal.get(ns, env.step_reward)
        score += reward
        points.append(InteractionDatapoint(
            step=t, observation=env.observe(cell), action=(a,), reward=reward,
            value=float(agent.values[s]),
            policy=(DiscreteDistribution(tuple(probs)),),
            action_values=tuple(AtomDistribution(tuple(agent.atoms), tuple(np.round(agent.q_dist[s, i], 10)))
                                for i in range(4)),
            ensemble=EnsemblePrediction(tuple(tuple(np.round(agent.ensemble[k, s, a], 12))
                                              for k in range(agent.ensemble_size))),
        ))
        cell = nxt
        if ns in terminal:
            outcome = "goal" if any(env.index(c) == ns for c, _ in env.goals) else "hazard"
            break
    meta = dict(meta, score=score, length=len(points), outcome=outcome)
    return Trace(trace_id, tuple(points), terminal=outcome != "timeout", metadata=meta)


def _line_trace(env: LineWorldSpec, agent: ToyAgentBundle, rng, trace_id: str, meta: dict) -> Trace:
    x = float(rng.uniform(*env.start_region))
    points, score, outcome = [], 0.0, "timeout"
    for t in range(env.max_steps):
        b = env.bin(x)
        mean, std = agent.policy[:, b, 0], agent.policy[:, b, 1]
        a = rng.normal(mean, std)
        drive = env.step_size * float(np.mean(np.clip(a, -1.0, 1.0)))
        members = tuple(GaussianSpec((round(x + drive + agent.ensemble[k, b, 0], 12),),
                                     (round(float(agent.ensemble[k, b, 1]), 12),))
                        for k in range(agent.ensemble_size))
        nx = _line_step(env, x, a, rng)
        done = nx >= env.goal_start
        reward = env.goal_reward if done else env.step_reward
        score += reward
        points.append(InteractionDatapoint(
            step=t, observation=(x,), action=tuple((float(v),) for v in a), reward=reward,
            value=float(agent.values[b]),
            policy=tuple(GaussianSpec((float(m),), (float(s),)) for m, s in zip(mean, std)),
            ensemble=EnsemblePrediction(members),
        ))
        x = nx
        if done:
            outcome = "goal"
            break
    meta = dict(meta, score=score, length=len(points), outcome=outcome)
    return Trace(trace_id, tuple(points), terminal=outcome == "goal", metadata=meta)


def _one_trace(env, agent, seed: int, index: int, meta: dict) -> Trace:
    # each trace owns an RNG stream derived from (seed, trace index)
    rng = np.random.default_rng([seed, index])
    trace_id = f"t{index:05d}"
    meta = dict(meta, seed=seed, index=index)
    if isinstance(env, GridworldSpec):
        return _grid_trace(env, agent, rng, trace_id, meta)
    return _line_trace(env, agent, rng, trace_id, meta)


def rollout(env, agent: ToyAgentBundle, n_traces: int, seed: int) -> TraceSet:
    """Run ``agent`` for ``n_traces`` episodes, probing every model at each step."""
    if n_traces < 1:
        raise ValueError("n_traces must be >= 1")
    if agent.env != env:
        raise ValueError("agent was trained on a different environment")
    traces = [_one_trace(env, agent, seed, i, {"env_index": 0}) for i in range(n_traces)]
    return TraceSet(action_space=action_space_for(env), discount=env.discount, traces=traces,
                    reward_range=env.reward_bounds(),
                    metadata={"generator": "ixdrl.rollout", "envs": [env.to_dict()], "seed": seed})


def make_regime_mixture(specs: Sequence, weights: Sequence[float], n_traces: int, seed: int,
                        episodes: int = 200, temperature: float | Sequence[float] = 0.1,
                        ensemble_size: int = 5) -> TraceSet:
    """Traces drawn from several environments; each trace's ``regime`` is stored in metadata."""
    if not specs:
        raise ValueError("need at least one regime")
    weights = np.asarray(weights, dtype=float)
    if len(weights) != len(specs) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be non-negative, one per regime, and sum to 1")
    if n_traces < 1:
        raise ValueError("n_traces must be >= 1")
    discounts = {s.discount for s in specs}
    spaces = {action_space_for(s) for s in specs}
    if len(discounts) != 1 or len(spaces) != 1:
        raise ValueError("regimes must share discount and action space")
    temps = list(temperature) if isinstance(temperature, (list, tuple)) else [temperature] * len(specs)
    seeds = np.random.SeedSequence(seed).spawn(len(specs) + 1)
    agents = [train_toy_agent(s, episodes, int(ss.generate_state(1)[0]), temperature=t,
                              ensemble_size=ensemble_size)
              for s, ss, t in zip(specs, seeds, temps)]
    regimes = np.random.default_rng(seeds[-1]).choice(len(specs), size=n_traces, p=weights)
    traces = [_one_trace(specs[r], agents[r], seed, i, {"env_index": int(r), "regime": int(r)})
              for i, r in enumerate(regimes)]
    bounds = [s.reward_bounds() for s in specs]
    return TraceSet(action_space=spaces.pop(), discount=discounts.pop(), traces=traces,
                    reward_range=(min(b[0] for b in bounds), max(b[1] for b in bounds)),
                    metadata={"generator": "ixdrl.rollout", "envs": [s.to_dict() for s in specs],
                              "weights": weights.tolist(), "seed": seed})


def generate_from_config(cfg: Mapping, n_traces: int, seed: int) -> TraceSet:
    """Build traces from an environment-spec JSON document (see ``docs/env_spec.md``)."""
    agent_cfg = dict(cfg.get("agent", {}))
    episodes = int(agent_cfg.get("episodes", 200))
    if cfg.get("kind") == "mixture":
        regimes = cfg["regimes"]
        specs = [env_from_dict(r) for r in regimes]
        temps = [r.get("agent", {}).get("temperature", agent_cfg.get("temperature", 0.1))
                 for r in regimes]
        return make_regime_mixture(specs, cfg["weights"], n_traces, seed, episodes=episodes,
                                   temperature=temps,
                                   ensemble_size=int(agent_cfg.get("ensemble_size", 5)))
    env = env_from_dict(cfg)
    agent = train_toy_agent(env, episodes, seed, temperature=float(agent_cfg.get("temperature", 0.1)),
                            ensemble_size=int(agent_cfg.get("ensemble_size", 5)),
                            n_atoms=int(agent_cfg.get("n_atoms", 51)),
                            atom_range=agent_cfg.get("atom_range"))
    return rollout(env, agent, n_traces, seed)
