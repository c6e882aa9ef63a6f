"""Evolving start states so a fixed policy's demonstrations cover diverse behaviour."""

from .encoding import EncodingSkewWarning, GenomeSpec, decode_genome, genome_spec_for
from .env import GridSpec, ReachSpec, load_env
from .evolve import EvolveConfig, RunLog, run, run_random_baseline, run_training_baseline
from .metrics import fidelity, iqm, optimality_gap, score
from .policy import TabularPolicy, TrainConfig, Trajectory, rollout, train_q

__version__ = "0.1.0"

__all__ = [
    "EncodingSkewWarning",
    "EvolveConfig",
    "GenomeSpec",
    "GridSpec",
    "ReachSpec",
    "RunLog",
    "TabularPolicy",
    "TrainConfig",
    "Trajectory",
    "decode_genome",
    "fidelity",
    "genome_spec_for",
    "iqm",
    "load_env",
    "optimality_gap",
    "rollout",
    "run",
    "run_random_baseline",
    "run_training_baseline",
    "score",
    "train_q",
]
