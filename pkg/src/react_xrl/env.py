"""Deterministic environments: flat/holey gridworlds and a kinematic point-reach task.

Both environment kinds are described by a frozen spec dataclass which doubles as
the environment itself: ``spec.step(pos, action, t)`` is a pure transition
function.  Positions are plain tuples; grid cells are ``(row, col)`` integer
pairs, reach positions are ``(x, y, z)`` floats.

Grid actions: 0=up, 1=right, 2=down, 3=left.
Reach actions: 0=no-op, then +x, -x, +y, -y, +z, -z.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Union

import numpy as np

GOAL, HOLE, TIMEOUT, RUNNING = "goal", "hole", "timeout", "running"

GRID_MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))
GRID_ACTION_NAMES = ("up", "right", "down", "left")
REACH_ACTION_NAMES = ("noop", "+x", "-x", "+y", "-y", "+z", "-z")

# absorbs float drift from accumulated moves; genuine distances never land this close
_TOL_EPS = 1e-9

Cell = tuple[int, int]
Position = tuple[float, ...]


class InvalidStateError(ValueError):
    """A start or current position the environment cannot be in."""


@dataclass(frozen=True)
class StepOutcome:
    next_state: tuple
    reward: float
    terminal: bool
    terminal_kind: str = RUNNING

    def __post_init__(self):
        if (self.terminal_kind != RUNNING) != self.terminal:
            raise ValueError("terminal_kind must be 'running' exactly when not terminal")


@dataclass(frozen=True)
class Binning:
    """Uniform per-axis bins: ``origin + k * width`` for ``k in [0, counts)``."""

    origin: tuple[float, ...]
    width: float
    counts: tuple[int, ...]

    def keys(self, positions: np.ndarray) -> np.ndarray:
        idx = np.floor((np.asarray(positions, dtype=float) - np.asarray(self.origin)) / self.width + 1e-9)
        return np.clip(idx, 0, np.asarray(self.counts) - 1).astype(np.int64)


def _cell(value: Iterable) -> Cell:
    r, c = value
    return int(r), int(c)


@dataclass(frozen=True)
class GridSpec:
    """Walled gridworld.  ``width``/``height`` include the outer wall ring."""

    width: int = 11
    height: int = 11
    holes: frozenset = field(default_factory=frozenset)
    goal: Cell = (1, 9)
    training_start: Cell = (9, 1)
    max_steps: int = 100
    goal_reward: float = 50.0
    step_cost: float = -1.0
    hole_penalty: float = -50.0

    kind = "grid"
    dim = 2
    n_actions = 4

    def __post_init__(self):
        object.__setattr__(self, "holes", frozenset(_cell(h) for h in self.holes))
        object.__setattr__(self, "goal", _cell(self.goal))
        object.__setattr__(self, "training_start", _cell(self.training_start))
        if self.width < 3 or self.height < 3:
            raise ValueError("grid needs at least one interior cell")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        for name in ("goal", "training_start"):
            cell = getattr(self, name)
            if not self.is_interior(cell) or cell in self.holes:
                raise ValueError(f"{name} {cell} must be an interior, non-hole cell")
        if any(not self.is_interior(h) for h in self.holes):
            raise ValueError("holes must lie inside the wall ring")

    # geometry
    @property
    def rows(self) -> range:
        return range(1, self.height - 1)

    @property
    def cols(self) -> range:
        return range(1, self.width - 1)

    @property
    def horizon(self) -> int:
        return self.max_steps

    def is_interior(self, cell: Cell) -> bool:
        r, c = cell
        return 1 <= r <= self.height - 2 and 1 <= c <= self.width - 2

    def is_traversable(self, cell: Cell) -> bool:
        return self.is_interior(cell) and cell not in self.holes

    def traversable_cells(self) -> list[Cell]:
        """Row-major list of interior non-hole cells."""
        return [(r, c) for r in self.rows for c in self.cols if (r, c) not in self.holes]

    def legal_starts(self) -> list[Cell]:
        return [c for c in self.traversable_cells() if c != self.goal]

    def validate_start(self, pos) -> Cell:
        cell = _cell(pos)
        if not self.is_traversable(cell):
            raise InvalidStateError(f"{cell} is a wall or hole")
        if cell == self.goal:
            raise InvalidStateError(f"{cell} is the goal; goal starts are excluded")
        return cell

    def legalize(self, pos) -> Cell:
        """Nearest legal start by Euclidean distance, ties to lowest row-major index."""
        r, c = (int(round(v)) for v in pos)
        if self.is_traversable((r, c)) and (r, c) != self.goal:
            return (r, c)
        best, best_d = None, math.inf
        for cell in self.legal_starts():
            d = (cell[0] - pos[0]) ** 2 + (cell[1] - pos[1]) ** 2
            if d < best_d:
                best, best_d = cell, d
        if best is None:
            raise InvalidStateError("grid has no legal start cell")
        return best

    def step(self, pos, action: int, t: int = 0) -> StepOutcome:
        cell = _cell(pos)
        if not self.is_traversable(cell):
            raise InvalidStateError(f"cannot act from {cell}")
        dr, dc = GRID_MOVES[action]
        nxt = (cell[0] + dr, cell[1] + dc)
        if not self.is_interior(nxt):
            nxt = cell
        reward = self.step_cost
        if nxt == self.goal:
            return StepOutcome(nxt, reward + self.goal_reward, True, GOAL)
        if nxt in self.holes:
            return StepOutcome(nxt, reward + self.hole_penalty, True, HOLE)
        if t + 1 >= self.max_steps:
            return StepOutcome(nxt, reward, True, TIMEOUT)
        return StepOutcome(nxt, reward, False, RUNNING)

    def is_visitable(self, pos) -> bool:
        return _cell(pos) not in self.holes

    # position space
    def position_space_size(self) -> int:
        return len(self.traversable_cells())

    def max_state_distance(self) -> float:
        return math.hypot(self.height - 3, self.width - 3)

    @property
    def binning(self) -> Binning | None:
        return None

    def distances_to_goal(self) -> dict[Cell, int]:
        """BFS step counts from every traversable cell to the goal."""
        dist = {self.goal: 0}
        queue = deque([self.goal])
        while queue:
            cur = queue.popleft()
            for dr, dc in GRID_MOVES:
                nxt = (cur[0] + dr, cur[1] + dc)
                if self.is_traversable(nxt) and nxt not in dist:
                    dist[nxt] = dist[cur] + 1
                    queue.append(nxt)
        return dist

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "grid",
            "width": self.width,
            "height": self.height,
            "holes": sorted([list(h) for h in self.holes]),
            "goal": list(self.goal),
            "training_start": list(self.training_start),
            "max_steps": self.max_steps,
            "goal_reward": self.goal_reward,
            "step_cost": self.step_cost,
            "hole_penalty": self.hole_penalty,
        }


@dataclass(frozen=True)
class ReachSpec:
    """Point mass moving on axis-aligned steps inside a box, rewarded for staying near a target."""

    low: tuple[float, ...] = (-0.25, -0.25, -0.25)
    high: tuple[float, ...] = (0.25, 0.25, 0.25)
    target: tuple[float, ...] = (0.0, 0.0, 0.0)
    step_size: float = 0.05
    tolerance: float = 0.05
    horizon: int = 50
    per_step_penalty: float = -1.0
    training_start: tuple[float, ...] = (0.0, 0.0, 0.0)

    kind = "reach"

    def __post_init__(self):
        for name in ("low", "high", "target", "training_start"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not len(self.low) == len(self.high) == len(self.target) == len(self.training_start):
            raise ValueError("bounds, target and training_start must share one dimension")
        if any(h <= lo for lo, h in zip(self.low, self.high)):
            raise ValueError("every axis needs high > low")
        if self.tolerance <= 0 or self.step_size <= 0:
            raise ValueError("tolerance and step_size must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.in_bounds(self.target) or not self.in_bounds(self.training_start):
            raise ValueError("target and training_start must lie within bounds")

    @property
    def dim(self) -> int:
        return len(self.low)

    @property
    def n_actions(self) -> int:
        return 1 + 2 * self.dim

    def in_bounds(self, pos) -> bool:
        return all(lo - 1e-12 <= p <= h + 1e-12 for p, lo, h in zip(pos, self.low, self.high))

    def validate_start(self, pos) -> Position:
        pos = tuple(float(p) for p in pos)
        if len(pos) != self.dim or not self.in_bounds(pos):
            raise InvalidStateError(f"{pos} is outside the workspace")
        return pos

    def legalize(self, pos) -> Position:
        return tuple(float(min(max(p, lo), h)) for p, lo, h in zip(pos, self.low, self.high))

    def distance_to_target(self, pos) -> float:
        return math.dist(pos, self.target)

    def within_tolerance(self, pos) -> bool:
        return self.distance_to_target(pos) <= self.tolerance + _TOL_EPS

    def step(self, pos, action: int, t: int = 0) -> StepOutcome:
        pos = list(pos)
        if action:
            axis, sign = (action - 1) // 2, (1.0 if action % 2 else -1.0)
            pos[axis] = min(max(pos[axis] + sign * self.step_size, self.low[axis]), self.high[axis])
        nxt = tuple(pos)
        reward = 0.0 if self.within_tolerance(nxt) else self.per_step_penalty
        if t + 1 >= self.horizon:
            return StepOutcome(nxt, reward, True, TIMEOUT)
        return StepOutcome(nxt, reward, False, RUNNING)

    def is_visitable(self, pos) -> bool:
        return True

    @property
    def binning(self) -> Binning:
        counts = tuple(
            max(1, int(round((h - lo) / self.step_size))) for lo, h in zip(self.low, self.high)
        )
        return Binning(self.low, self.step_size, counts)

    def position_space_size(self) -> int:
        return int(np.prod(self.binning.counts))

    def max_state_distance(self) -> float:
        return math.dist(self.low, self.high)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "reach",
            "low": list(self.low),
            "high": list(self.high),
            "target": list(self.target),
            "step_size": self.step_size,
            "tolerance": self.tolerance,
            "horizon": self.horizon,
            "per_step_penalty": self.per_step_penalty,
            "training_start": list(self.training_start),
        }


Env = Union[GridSpec, ReachSpec]


def grid_step(spec: GridSpec, pos, action: int, t: int = 0) -> StepOutcome:
    return spec.step(pos, action, t)


def reach_step(spec: ReachSpec, pos, action: int, t: int = 0) -> StepOutcome:
    return spec.step(pos, action, t)


def rho(state) -> Position:
    """Agent coordinates of a state.  States here carry nothing but the position."""
    return tuple(float(v) for v in state)


def position_space_size(spec: Env) -> int:
    return spec.position_space_size()


def max_state_distance(spec: Env) -> float:
    return spec.max_state_distance()


# preset layouts; only their general shape is known, so these hole positions are stand-ins
HOLEY_HOLES = ((3, 3), (3, 4), (3, 7), (5, 5), (5, 6), (6, 2), (7, 7), (7, 8))

PRESETS: dict[str, dict[str, Any]] = {
    "flatgrid11": {"kind": "grid", "width": 11, "height": 11, "goal": [1, 9], "training_start": [9, 1]},
    "holeygrid11": {
        "kind": "grid",
        "width": 11,
        "height": 11,
        "goal": [1, 9],
        "training_start": [9, 1],
        "holes": [list(h) for h in HOLEY_HOLES],
    },
    "pointreach": {"kind": "reach"},
}


def env_from_dict(data: dict[str, Any]) -> Env:
    data = dict(data)
    kind = data.pop("kind", "grid")
    if kind == "grid":
        for key in ("goal", "training_start"):
            if key in data:
                data[key] = tuple(data[key])
        if "holes" in data:
            data["holes"] = frozenset(tuple(h) for h in data["holes"])
        return GridSpec(**data)
    if kind == "reach":
        return ReachSpec(**data)
    raise ValueError(f"unknown environment kind {kind!r}")


def load_env(ref: str | dict | Path) -> Env:
    """Build an environment from a preset name, a JSON file path, or an inline dict."""
    if isinstance(ref, dict):
        return env_from_dict(ref)
    ref = str(ref)
    if ref in PRESETS:
        return env_from_dict(PRESETS[ref])
    path = Path(ref)
    if not path.exists():
        raise FileNotFoundError(f"environment {ref!r} is neither a preset ({', '.join(PRESETS)}) nor a file")
    return env_from_dict(json.loads(path.read_text()))
