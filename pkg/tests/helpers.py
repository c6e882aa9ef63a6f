"""Small constructors for hand-made trajectories used across the test modules."""
import numpy as np

from react_xrl.env import RUNNING
from react_xrl.policy import Step, Trajectory


def make_traj(points, probs=None, rewards=None, kind=RUNNING):
    """A trajectory visiting ``points`` in order; one step per point after the first."""
    pts = [tuple(float(v) for v in p) for p in points]
    n = max(len(pts) - 1, 1)
    probs = probs if probs is not None else [1.0] * n
    rewards = rewards if rewards is not None else [0.0] * n
    steps = [Step(pts[min(i, len(pts) - 1)], 0, float(p), float(r)) for i, (p, r) in enumerate(zip(probs, rewards))]
    return Trajectory(pts[0], steps, np.asarray(pts, dtype=float), kind)
