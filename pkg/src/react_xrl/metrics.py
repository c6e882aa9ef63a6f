"""Trajectory scoring: diversity, certainty, the joint surrogate fitness, fidelity, IQM, optimality gap."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from .env import Binning, Env, GridSpec, ReachSpec
from .policy import Trajectory

SQRT2 = math.sqrt(2.0)

JOINT, SUM, CERTAINTY_ONLY, LOCAL_ONLY, GLOBAL_ONLY, FIDELITY = (
    "joint",
    "sum",
    "certainty_only",
    "local_only",
    "global_only",
    "fidelity",
)
FITNESS_MODES = (JOINT, SUM, CERTAINTY_ONLY, LOCAL_ONLY, GLOBAL_ONLY, FIDELITY)


@dataclass(frozen=True)
class FitnessBreakdown:
    d_local: float
    certainty: float
    d_global: float
    f_local: float
    total: float
    mode: str = JOINT

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FidelityReport:
    fidelity: float
    abs_mean_reward: float
    total_length: int

    def to_dict(self) -> dict:
        return asdict(self)


def _require(traj: Trajectory) -> np.ndarray:
    if len(traj) == 0:
        raise ValueError("trajectory has no positions")
    return traj.positions


def _others(traj: Trajectory, pool: Iterable[Trajectory]) -> list[Trajectory]:
    return [t for t in pool if t is not traj]


# --------------------------------------------------------------------------- local terms


def local_diversity(traj: Trajectory, space_size: int, binning: Binning | None = None) -> float:
    """Share of the position space covered by the trajectory's distinct positions."""
    if space_size < 1:
        raise ValueError("position space must be non-empty")
    pos = _require(traj)
    keys = binning.keys(pos) if binning is not None else pos
    unique = len({tuple(k) for k in keys.tolist()})
    return unique / space_size


def certainty(traj: Trajectory) -> float:
    """Mean probability the policy gave the actions it took."""
    if not traj.steps:
        raise ValueError("trajectory has no steps")
    return float(np.mean(traj.probs))


# --------------------------------------------------------------------------- distances


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def point_to_traj_distance(s, traj: Trajectory) -> float:
    pos = _require(traj)
    return float(_pairwise(np.asarray(s, dtype=float).reshape(1, -1), pos).min())


def one_way_distance(a: Trajectory, b: Trajectory) -> float:
    """Symmetrized mean of point-to-trajectory minima over both position sequences."""
    pa, pb = _require(a), _require(b)
    d = _pairwise(pa, pb)
    return float((d.min(axis=1).sum() + d.min(axis=0).sum()) / (len(pa) + len(pb)))


def global_diversity(traj: Trajectory, pool: Iterable[Trajectory], ceiling: float) -> float:
    """Normalized distance to the closest other pool member; 1.0 when there is none."""
    if ceiling <= 0:
        raise ValueError("max state distance must be positive")
    others = _others(traj, pool)
    if not others:
        return 1.0
    return min(one_way_distance(traj, t) for t in others) / ceiling


def local_fitness(point: tuple[float, float], others: Iterable[tuple[float, float]]) -> float:
    """Closest Euclidean distance in the (local diversity, certainty) plane; sqrt(2) when alone."""
    dl, c = point
    best = None
    for odl, oc in others:
        d = math.hypot(dl - odl, c - oc)
        best = d if best is None else min(best, d)
    return SQRT2 if best is None else best


# --------------------------------------------------------------------------- fidelity


def fidelity(pool: Iterable[Trajectory]) -> FidelityReport:
    """Length-weighted deviation of returns from the mean absolute return."""
    pool = list(pool)
    if not pool:
        raise ValueError("fidelity needs at least one trajectory")
    returns = np.array([t.ret for t in pool], dtype=float)
    lengths = np.array([len(t) for t in pool], dtype=float)
    total = lengths.sum()
    r_bar = float(np.abs(returns).mean())
    s = float(np.sum(lengths / total * np.abs(r_bar - returns)))
    return FidelityReport(s, r_bar, int(total))


def iqm(values: Sequence[float]) -> float:
    """Mean after dropping ``floor(n/4)`` values from each end."""
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ValueError("iqm of an empty sequence")
    k = len(vals) // 4
    kept = vals[k : len(vals) - k]
    return math.fsum(kept) / len(kept)


# --------------------------------------------------------------------------- scoring


@dataclass(frozen=True)
class ScoringContext:
    """Per-environment constants the scores need."""

    space_size: int
    ceiling: float
    binning: Binning | None = None

    @classmethod
    def for_env(cls, env: Env) -> "ScoringContext":
        return cls(env.position_space_size(), env.max_state_distance(), env.binning)


def local_terms(traj: Trajectory, ctx: ScoringContext) -> tuple[float, float]:
    return local_diversity(traj, ctx.space_size, ctx.binning), certainty(traj)


def score(
    traj: Trajectory,
    pool: Iterable[Trajectory],
    mode: str,
    ctx: ScoringContext,
    local_cache: dict[int, tuple[float, float]] | None = None,
) -> FitnessBreakdown:
    """Score ``traj`` against the other members of ``pool``.

    ``local_cache`` maps ``id(trajectory)`` to its precomputed (D_l, C) pair.
    """
    if mode not in FITNESS_MODES:
        raise ValueError(f"unknown fitness mode {mode!r}; valid: {', '.join(FITNESS_MODES)}")
    others = _others(traj, pool)
    cache = local_cache if local_cache is not None else {}

    def terms(t):
        got = cache.get(id(t))
        return got if got is not None else local_terms(t, ctx)

    dl, c = terms(traj)
    dg = global_diversity(traj, others, ctx.ceiling)
    fl = local_fitness((dl, c), (terms(t) for t in others))
    if mode == JOINT:
        total = dg + fl
    elif mode == SUM:
        total = dg + dl + c
    elif mode == CERTAINTY_ONLY:
        total = c
    elif mode == LOCAL_ONLY:
        total = dl
    elif mode == GLOBAL_ONLY:
        total = dg
    else:
        total = fidelity(others + [traj]).fidelity
    return FitnessBreakdown(dl, c, dg, fl, total, mode)


# --------------------------------------------------------------------------- optimality


def _reach_moves_needed(env: ReachSpec, s0) -> int:
    """Fewest axis moves putting ``s0`` within tolerance, by enumerating integer offsets."""
    h = env.step_size
    ranges = []
    for p, t in zip(s0, env.target):
        centre = (t - p) / h
        ranges.append(range(min(0, math.floor(centre) - 1), max(0, math.ceil(centre) + 1) + 1))
    best = None
    for n in itertools.product(*ranges):
        pos = [min(max(p + k * h, lo), hi) for p, k, lo, hi in zip(s0, n, env.low, env.high)]
        if env.within_tolerance(pos):
            cost = sum(abs(k) for k in n)
            best = cost if best is None else min(best, cost)
    assert best is not None
    return best


def optimal_return(env: Env, s0) -> float:
    """Best achievable return from ``s0``.

    Grids: one step cost per BFS step plus the goal reward, or the full-timeout
    return when the goal is unreachable.  Reach: every move before the one that
    enters the tolerance ball is penalized.
    """
    if isinstance(env, GridSpec):
        cell = (int(s0[0]), int(s0[1]))
        dist = env.distances_to_goal().get(cell)
        if dist is None or dist > env.max_steps:
            return env.step_cost * env.max_steps
        return env.goal_reward + env.step_cost * dist
    k = 0 if env.within_tolerance(s0) else _reach_moves_needed(env, s0)
    return env.per_step_penalty * max(k - 1, 0)


@dataclass(frozen=True)
class GapReport:
    gaps: tuple[float, ...]
    mean: float
    min: float
    max: float

    def to_dict(self) -> dict:
        return {"gaps": list(self.gaps), "mean": self.mean, "min": self.min, "max": self.max}


def optimality_gap(pool: Iterable[Trajectory], env: Env) -> GapReport:
    pool = list(pool)
    if not pool:
        raise ValueError("optimality gap needs at least one trajectory")
    gaps = tuple(optimal_return(env, t.s0) - t.ret for t in pool)
    return GapReport(gaps, float(np.mean(gaps)), min(gaps), max(gaps))
