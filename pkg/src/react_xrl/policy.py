"""Fixed policies under analysis and the rollout machinery that turns a start into a trajectory.

The policies are tabular: a Q-table over discretized states read out through a
softmax.  They stand in for the deep policies one would normally inspect; the
analysis code only ever needs ``action_distribution``.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Hashable, Sequence

import numpy as np

from .env import GOAL, TIMEOUT, Env, GridSpec, ReachSpec

POLICY_FORMAT = "react-xrl-policy"
POLICY_VERSION = 1


@dataclass(frozen=True)
class Discretizer:
    """Maps a position to a hashable Q-table key.

    ``kind="identity"`` is used on grids.  ``kind="edges"`` bins every axis of
    ``pos - anchor`` by the sorted interior ``edges``; with ``argmax_axis`` the key
    also carries the axis of largest ``|pos - anchor|``, which decides the greedy
    move when several axes share a bin.
    """

    kind: str = "identity"
    edges: tuple[float, ...] = ()
    anchor: tuple[float, ...] = ()
    argmax_axis: bool = False

    def key(self, pos) -> Hashable:
        if self.kind == "identity":
            return tuple(int(v) for v in pos)
        rel = [p - a for p, a in zip(pos, self.anchor)]
        key = tuple(bisect.bisect_right(self.edges, r + 1e-12) for r in rel)
        if self.argmax_axis:
            mags = [abs(r) for r in rel]
            key += (mags.index(max(mags)),)
        return key

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "edges": list(self.edges),
            "anchor": list(self.anchor),
            "argmax_axis": self.argmax_axis,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Discretizer":
        return cls(
            kind=data["kind"],
            edges=tuple(float(e) for e in data["edges"]),
            anchor=tuple(float(a) for a in data["anchor"]),
            argmax_axis=bool(data["argmax_axis"]),
        )


def discretizer_for(env: Env) -> Discretizer:
    """Identity on grids; on the reach task, step-size bins around the target.

    Edges sit at multiples of the step size h, plus +-h/2 next to the target, so
    a move changes the key anywhere inside the outermost edges, and the bin of the
    largest axis tells both its sign and whether a move toward the target helps.
    """
    if isinstance(env, GridSpec):
        return Discretizer()
    h = env.step_size
    span = max(max(abs(lo - t), abs(hi - t)) for lo, hi, t in zip(env.low, env.high, env.target))
    n = int(math.ceil(span / h - 1e-9))
    pos_edges = [h / 2] + [k * h for k in range(1, n)]
    edges = tuple(sorted([-e for e in pos_edges] + [0.0] + pos_edges))
    return Discretizer("edges", edges, env.target, argmax_axis=True)


def softmax(row: np.ndarray, temperature: float) -> np.ndarray:
    z = np.asarray(row, dtype=float) / temperature
    z = np.exp(z - z.max())
    return z / z.sum()


@dataclass
class TabularPolicy:
    q_table: dict
    n_actions: int
    temperature: float = 1.0
    discretizer: Discretizer = field(default_factory=Discretizer)

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    def action_distribution(self, state) -> np.ndarray:
        row = self.q_table.get(self.discretizer.key(state))
        if row is None:
            return np.full(self.n_actions, 1.0 / self.n_actions)
        return softmax(row, self.temperature)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(policy_to_json(self))

    @classmethod
    def load(cls, path: str | Path) -> "TabularPolicy":
        return policy_from_json(Path(path).read_text())


def action_distribution(policy: TabularPolicy, state) -> np.ndarray:
    return policy.action_distribution(state)


def policy_to_json(policy: TabularPolicy) -> str:
    rows = sorted((list(k), [float(v) for v in q]) for k, q in policy.q_table.items())
    doc = {
        "format": POLICY_FORMAT,
        "version": POLICY_VERSION,
        "n_actions": policy.n_actions,
        "temperature": policy.temperature,
        "discretizer": policy.discretizer.to_dict(),
        "q": rows,
    }
    return json.dumps(doc, indent=None, separators=(",", ":")) + "\n"


def policy_from_json(text: str) -> TabularPolicy:
    doc = json.loads(text)
    if doc.get("format") != POLICY_FORMAT:
        raise ValueError("not a policy file")
    if doc.get("version") != POLICY_VERSION:
        raise ValueError(f"unsupported policy version {doc.get('version')!r} (expected {POLICY_VERSION})")
    q = {tuple(k): np.asarray(v, dtype=float) for k, v in doc["q"]}
    return TabularPolicy(q, int(doc["n_actions"]), float(doc["temperature"]), Discretizer.from_dict(doc["discretizer"]))


# --------------------------------------------------------------------------- trajectories


@dataclass(frozen=True)
class Step:
    state: tuple
    action: int
    prob: float
    reward: float


def dedupe(positions: Sequence) -> list:
    """Drop consecutive repeats, keep order."""
    out = []
    for p in positions:
        if not out or tuple(out[-1]) != tuple(p):
            out.append(p)
    return out


@dataclass
class Trajectory:
    """A demonstration: the steps taken from ``s0`` plus derived position sequences.

    ``raw_positions`` lists every visited position (start included, a hole the agent
    fell into excluded).  ``positions`` is the same sequence with consecutive
    duplicates removed; lengths and distances are measured on it.
    """

    s0: tuple
    steps: list[Step]
    raw_positions: np.ndarray
    terminal_kind: str
    ret: float = field(init=False)
    positions: np.ndarray = field(init=False)

    def __post_init__(self):
        self.ret = float(sum(s.reward for s in self.steps))
        raw = np.asarray(self.raw_positions, dtype=float)
        self.raw_positions = raw.reshape(len(raw), -1)
        self.positions = np.asarray(dedupe([tuple(p) for p in self.raw_positions]), dtype=float).reshape(
            -1, self.raw_positions.shape[1]
        )

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def actions(self) -> list[int]:
        return [s.action for s in self.steps]

    @property
    def probs(self) -> list[float]:
        return [s.prob for s in self.steps]

    @property
    def rewards(self) -> list[float]:
        return [s.reward for s in self.steps]

    @property
    def reached_goal(self) -> bool:
        return self.terminal_kind == GOAL

    def to_dict(self) -> dict[str, Any]:
        return {
            "s0": list(self.s0),
            "actions": self.actions,
            "probs": self.probs,
            "rewards": self.rewards,
            "states": [list(s.state) for s in self.steps],
            "raw_positions": self.raw_positions.tolist(),
            "terminal_kind": self.terminal_kind,
            "return": self.ret,
            "length": len(self),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Trajectory":
        steps = [
            Step(tuple(s), int(a), float(p), float(r))
            for s, a, p, r in zip(data["states"], data["actions"], data["probs"], data["rewards"])
        ]
        dim = len(data["s0"])
        raw = np.asarray(data["raw_positions"], dtype=float).reshape(-1, dim)
        return cls(tuple(data["s0"]), steps, raw, data["terminal_kind"])


def rollout(env: Env, policy: TabularPolicy, s0, rng: np.random.Generator | None = None) -> Trajectory:
    """Run ``policy`` from ``s0`` until termination.

    Acts greedily (argmax, lowest index on ties) unless ``rng`` is given, in which
    case actions are sampled from the policy's distribution.
    """
    state = env.validate_start(s0)
    steps: list[Step] = []
    raw = [state]
    t = 0
    while True:
        probs = policy.action_distribution(state)
        action = int(np.argmax(probs)) if rng is None else int(rng.choice(len(probs), p=probs))
        out = env.step(state, action, t)
        steps.append(Step(tuple(state), action, float(probs[action]), out.reward))
        state = out.next_state
        if env.is_visitable(state):
            raw.append(state)
        t += 1
        if out.terminal:
            return Trajectory(tuple(s0), steps, np.asarray(raw, dtype=float), out.terminal_kind)


# --------------------------------------------------------------------------- training


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.95
    learning_rate: float = 0.5
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    episodes: int = 500
    seed: int = 0
    temperature: float = 1.0
    start_mode: str = "training"  # "training" | "uniform"
    stop_on_success: bool = False
    check_every: int = 5
    max_episode_steps: int | None = None
    planning_sweeps: int = 0

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if self.start_mode not in ("training", "uniform"):
            raise ValueError("start_mode must be 'training' or 'uniform'")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    def epsilon(self, episode: int) -> float:
        if self.episodes <= 1:
            return self.epsilon_end
        frac = episode / (self.episodes - 1)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _sample_start(env: Env, rng: np.random.Generator):
    if isinstance(env, GridSpec):
        starts = env.legal_starts()
        return starts[int(rng.integers(len(starts)))]
    assert isinstance(env, ReachSpec)
    return tuple(float(rng.uniform(lo, h)) for lo, h in zip(env.low, env.high))


def greedy_succeeds(env: Env, policy: TabularPolicy) -> bool:
    traj = rollout(env, policy, env.training_start)
    if isinstance(env, GridSpec):
        return traj.reached_goal
    return env.within_tolerance(traj.raw_positions[-1])


class _Model:
    """Empirical transition counts over discretized keys, for planning backups."""

    def __init__(self):
        self.counts: dict = {}

    def add(self, key, action, reward, next_key, bootstrap) -> None:
        outcomes = self.counts.setdefault((key, action), {})
        out = (reward, next_key, bootstrap)
        outcomes[out] = outcomes.get(out, 0) + 1

    def plan(self, rows: dict, gamma: float, sweeps: int, tol: float = 1e-10) -> None:
        """Expected Q-backups on the empirical model until values settle."""
        keys = list(rows)
        index = {k: i for i, k in enumerate(keys)}
        n = len(next(iter(rows.values()))) if rows else 0
        pair, nxt, prob, rew, boot = [], [], [], [], []
        for (key, action), outcomes in self.counts.items():
            total = sum(outcomes.values())
            for (r, k2, b), c in outcomes.items():
                pair.append(index[key] * n + action)
                nxt.append(index[k2])
                prob.append(c / total)
                rew.append(r)
                boot.append(b)
        if not pair:
            return
        pair, nxt = np.asarray(pair), np.asarray(nxt)
        prob, rew, boot = np.asarray(prob), np.asarray(rew, dtype=float), np.asarray(boot, dtype=float)
        q = np.array([rows[k] for k in keys], dtype=float)
        seen = np.zeros(q.size, dtype=bool)
        seen[pair] = True
        for _ in range(sweeps):
            v = q.max(axis=1)
            backup = np.bincount(pair, weights=prob * (rew + gamma * boot * v[nxt]), minlength=q.size)
            new = np.where(seen, backup, q.ravel()).reshape(q.shape)
            delta = np.abs(new - q).max()
            q = new
            if delta < tol:
                break
        for k, i in index.items():
            rows[k] = q[i].tolist()


def train_q(env: Env, config: TrainConfig) -> TabularPolicy:
    """Epsilon-greedy one-step Q-learning; deterministic given ``config.seed``.

    With ``stop_on_success`` training halts at the first check where the greedy
    rollout from the training start succeeds, leaving a deliberately immature policy.
    With ``planning_sweeps`` the visited transitions are also kept as an empirical
    model and the Q-table is finished off with that many expected backups.
    Timeouts are treated as truncation, not as terminal states.
    """
    rng = np.random.default_rng(config.seed)
    disc = discretizer_for(env)
    n = env.n_actions
    rows: dict = {}
    view = _ListPolicy(rows, n, config.temperature, disc)
    model = _Model() if config.planning_sweeps else None
    cap = config.max_episode_steps or env.horizon
    lr, gamma = config.learning_rate, config.gamma

    def row(key):
        r = rows.get(key)
        if r is None:
            r = rows[key] = [0.0] * n
        return r

    for episode in range(config.episodes):
        state = env.training_start if config.start_mode == "training" else _sample_start(env, rng)
        eps = config.epsilon(episode)
        for t in range(cap):
            key = disc.key(state)
            qs = row(key)
            if rng.random() < eps:
                action = int(rng.integers(n))
            else:
                action = qs.index(max(qs))
            out = env.step(state, action, t)
            next_key = disc.key(out.next_state)
            bootstrap = not out.terminal or out.terminal_kind == TIMEOUT
            next_row = row(next_key)
            target = out.reward
            if bootstrap:
                target += gamma * max(next_row)
            qs[action] += lr * (target - qs[action])
            if model is not None:
                model.add(key, action, out.reward, next_key, bootstrap)
            state = out.next_state
            if out.terminal:
                break
        if config.stop_on_success and (episode + 1) % config.check_every == 0 and greedy_succeeds(env, view):
            break
    if model is not None:
        model.plan(rows, gamma, config.planning_sweeps)
    q = {k: np.asarray(v, dtype=float) for k, v in rows.items()}
    return TabularPolicy(q, n, config.temperature, disc)


class _ListPolicy(TabularPolicy):
    """Read-only view over list-valued Q rows used while training."""

    def action_distribution(self, state) -> np.ndarray:
        row = self.q_table.get(self.discretizer.key(state))
        if row is None:
            return np.full(self.n_actions, 1.0 / self.n_actions)
        return softmax(np.asarray(row), self.temperature)


# Named training budgets.  "undertrained" stops as soon as the greedy rollout from
# the training start reaches the goal, so most of the grid is still poorly known.
TRAIN_PRESETS: dict[str, TrainConfig] = {
    "grid-undertrained": TrainConfig(episodes=2000, stop_on_success=True),
    "grid-full": TrainConfig(episodes=3000, start_mode="uniform", planning_sweeps=500),
    "reach-converged": TrainConfig(
        episodes=40000, start_mode="uniform", max_episode_steps=20, planning_sweeps=1000
    ),
}


def train_preset(name: str, seed: int = 0) -> TrainConfig:
    if name not in TRAIN_PRESETS:
        raise ValueError(f"unknown training preset {name!r}; valid: {', '.join(TRAIN_PRESETS)}")
    return replace(TRAIN_PRESETS[name], seed=seed)
