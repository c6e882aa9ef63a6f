"""Evolutionary search over initial states.

Every individual is scored once, when it is first evaluated, against the demo pool
as it stands at that moment; its trajectory then joins the pool.  Offspring are
therefore judged against parents *and* earlier siblings, and early individuals
keep whatever score they got.  Migration keeps the ``p`` best cached scores and
prunes the pool down to the survivors.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .encoding import (
    GenomeSpec,
    crossover_single_point,
    decode_genome,
    genome_spec_for,
    mutate,
    random_genome,
    to_bitstring,
)
from .env import Env
from .metrics import FITNESS_MODES, JOINT, FitnessBreakdown, ScoringContext, fidelity, local_terms, score
from .policy import TabularPolicy, Trajectory, rollout

TOP_K = 10
RUNLOG_SCHEMA = "react-xrl-runlog"
RUNLOG_VERSION = 1


class RunLogError(ValueError):
    """A run log that cannot be parsed; the message starts with ``file:line``."""


class RunLogVersionError(RunLogError):
    """A run log written under a schema version this build does not read."""


@dataclass(frozen=True)
class EvolveConfig:
    population_size: int = 10
    generations: int = 40
    crossover_prob: float = 0.75
    mutation_prob: float = 0.5
    tournament_size: int = 3
    seed: int = 0
    fitness_mode: str = JOINT
    bits_per_dim: int | None = None
    stochastic_rollouts: bool = False

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        for name in ("crossover_prob", "mutation_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 2 <= self.tournament_size <= self.population_size:
            raise ValueError("tournament_size must lie in [2, population_size]")
        if self.fitness_mode not in FITNESS_MODES:
            raise ValueError(f"unknown fitness mode {self.fitness_mode!r}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class Individual:
    id: int
    genome: np.ndarray
    birth_generation: int
    initial_state: tuple | None = None
    trajectory: Trajectory | None = None
    fitness: FitnessBreakdown | None = None

    @property
    def total(self) -> float:
        return self.fitness.total

    def record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "genome": to_bitstring(self.genome),
            "s0": list(self.initial_state),
            "birth_generation": self.birth_generation,
            "fitness": self.fitness.to_dict(),
            "return": self.trajectory.ret,
            "length": len(self.trajectory),
        }


@dataclass
class DemoPool:
    """Living demonstrations keyed by individual id, with cached (D_l, C) terms."""

    entries: dict[int, Trajectory] = field(default_factory=dict)
    local: dict[int, tuple[float, float]] = field(default_factory=dict)

    def add(self, ind_id: int, traj: Trajectory, terms: tuple[float, float]) -> None:
        self.entries[ind_id] = traj
        self.local[ind_id] = terms

    def prune(self, keep: Iterable[int]) -> None:
        keep = set(keep)
        for key in [k for k in self.entries if k not in keep]:
            del self.entries[key]
            del self.local[key]

    def trajectories(self) -> list[Trajectory]:
        return [self.entries[k] for k in sorted(self.entries)]

    def local_cache(self) -> dict[int, tuple[float, float]]:
        return {id(self.entries[k]): v for k, v in self.local.items()}

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class RunLog:
    """Everything a run produced, enough to regenerate every report artifact."""

    label: str
    seed: int
    config: dict[str, Any]
    env: dict[str, Any]
    records: list[dict[str, Any]] = field(default_factory=list)
    final_pool: dict[int, Trajectory] = field(default_factory=dict)

    @property
    def final_fidelity(self) -> float:
        return self.records[-1]["fidelity"]

    @property
    def generations(self) -> int:
        return len(self.records) - 1

    def summary(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "seed": self.seed,
            "generations": self.generations,
            "final_fidelity": self.final_fidelity,
            "pool_size": len(self.final_pool),
        }

    def to_jsonl(self) -> str:
        """Header, one line per generation, one per surviving demonstration, then a summary."""
        lines = [
            {
                "kind": "header",
                "schema": RUNLOG_SCHEMA,
                "version": RUNLOG_VERSION,
                "label": self.label,
                "seed": self.seed,
                "config": self.config,
                "env": self.env,
            }
        ]
        lines += [{"kind": "generation", **rec} for rec in self.records]
        lines += [{"kind": "demo", "id": k, "trajectory": t.to_dict()} for k, t in sorted(self.final_pool.items())]
        lines.append({"kind": "summary", **self.summary()})
        return "".join(json.dumps(line, sort_keys=True, separators=(",", ":")) + "\n" for line in lines)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_jsonl().encode("utf-8"))

    @classmethod
    def from_jsonl(cls, text: str, source: str = "<runlog>") -> "RunLog":
        log = None
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                item = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RunLogError(f"{source}:{lineno}:{exc.colno}: {exc.msg}") from None
            kind = item.get("kind") if isinstance(item, dict) else None
            if log is None:
                if kind != "header" or item.get("schema") != RUNLOG_SCHEMA:
                    raise RunLogError(f"{source}:{lineno}: expected a {RUNLOG_SCHEMA} header line")
                if item.get("version") != RUNLOG_VERSION:
                    raise RunLogVersionError(
                        f"{source}:{lineno}: run log schema version {item.get('version')!r} is not supported "
                        f"(this build reads version {RUNLOG_VERSION})"
                    )
                log = cls(item["label"], item["seed"], item["config"], item["env"])
            elif kind == "generation":
                item.pop("kind")
                log.records.append(item)
            elif kind == "demo":
                try:
                    log.final_pool[int(item["id"])] = Trajectory.from_dict(item["trajectory"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise RunLogError(f"{source}:{lineno}: malformed demonstration ({exc})") from None
            elif kind == "summary":
                pass
            else:
                raise RunLogError(f"{source}:{lineno}: unknown record kind {kind!r}")
        if log is None:
            raise RunLogError(f"{source}: empty run log")
        if not log.records:
            raise RunLogError(f"{source}: run log has no generation records")
        return log

    @classmethod
    def load(cls, path: str | Path) -> "RunLog":
        path = Path(path)
        return cls.from_jsonl(path.read_text(encoding="utf-8"), str(path))


class Evolution:
    """Holds the shared state of one run: env, policy, encoding, RNG streams, id counter."""

    def __init__(self, env: Env, policy: TabularPolicy, config: EvolveConfig):
        self.env = env
        self.policy = policy
        self.config = config
        self.spec: GenomeSpec = genome_spec_for(env, config.bits_per_dim)
        self.ctx = ScoringContext.for_env(env)
        seq = np.random.SeedSequence(config.seed)
        evo_seq, roll_seq = seq.spawn(2)
        self.rng = np.random.default_rng(evo_seq)
        self.rollout_rng = np.random.default_rng(roll_seq) if config.stochastic_rollouts else None
        self.next_id = 0

    def new_individual(self, genome: np.ndarray, generation: int) -> Individual:
        ind = Individual(self.next_id, genome, generation)
        self.next_id += 1
        return ind

    def evaluate(self, ind: Individual, pool: DemoPool) -> None:
        """Roll out, score against the pool as it is now, then commit to the pool."""
        ind.initial_state = decode_genome(ind.genome, self.spec, self.env)
        ind.trajectory = rollout(self.env, self.policy, ind.initial_state, self.rollout_rng)
        terms = local_terms(ind.trajectory, self.ctx)
        cache = pool.local_cache()
        cache[id(ind.trajectory)] = terms
        ind.fitness = score(ind.trajectory, pool.trajectories(), self.config.fitness_mode, self.ctx, cache)
        pool.add(ind.id, ind.trajectory, terms)


def init_population(evo: Evolution) -> tuple[list[Individual], DemoPool]:
    pool = DemoPool()
    population = [evo.new_individual(random_genome(evo.spec, evo.rng), 0) for _ in range(evo.config.population_size)]
    for ind in population:
        evo.evaluate(ind, pool)
    return population, pool


def _rank_key(ind: Individual) -> tuple[float, int]:
    return (-ind.total, ind.id)


def tournament_select(population: list[Individual], size: int, rng: np.random.Generator) -> Individual:
    """Best of ``size`` uniformly drawn members (ties to lowest id)."""
    if not population:
        raise ValueError("cannot select from an empty population")
    replace = size > len(population)
    picks = rng.choice(len(population), size=size, replace=replace)
    return min((population[int(i)] for i in picks), key=_rank_key)


def make_offspring(
    population: list[Individual], evo: Evolution, generation: int
) -> tuple[list[Individual], int, int]:
    """Mutants (one per member with prob p_m) then crossover children from tournament pairs.

    Returns the unevaluated offspring and the mutant / child counts.
    """
    cfg, rng = evo.config, evo.rng
    offspring = []
    for ind in population:
        if rng.random() < cfg.mutation_prob:
            offspring.append(evo.new_individual(mutate(ind.genome, rng), generation))
    n_mutants = len(offspring)
    for _ in range(cfg.population_size // 2):
        a = tournament_select(population, cfg.tournament_size, rng)
        b = tournament_select(population, cfg.tournament_size, rng)
        if rng.random() < cfg.crossover_prob:
            c1, c2 = crossover_single_point(a.genome, b.genome, rng)
            offspring.append(evo.new_individual(c1, generation))
            offspring.append(evo.new_individual(c2, generation))
    return offspring, n_mutants, len(offspring) - n_mutants


def evaluate_offspring(offspring: list[Individual], pool: DemoPool, evo: Evolution) -> None:
    for ind in sorted(offspring, key=lambda i: i.id):
        evo.evaluate(ind, pool)


def migrate(population: list[Individual], offspring: list[Individual], pool: DemoPool, p: int) -> list[Individual]:
    """Keep the ``p`` best cached scores (ties favour lower ids) and prune extinct demos."""
    survivors = sorted(population + offspring, key=_rank_key)[:p]
    survivors.sort(key=lambda i: i.id)
    pool.prune(i.id for i in survivors)
    return survivors


def _record(
    generation: int,
    population: list[Individual],
    pool: DemoPool,
    n_mutants: int = 0,
    n_children: int = 0,
) -> dict[str, Any]:
    fid = fidelity(pool.trajectories())
    top = sorted(population, key=_rank_key)[:TOP_K]
    return {
        "generation": generation,
        "fidelity": fid.fidelity,
        "abs_mean_reward": fid.abs_mean_reward,
        "total_length": fid.total_length,
        "n_mutants": n_mutants,
        "n_children": n_children,
        "survivor_ids": [i.id for i in population],
        "new_survivors": sum(1 for i in population if generation and i.birth_generation == generation),
        "new_in_top": sum(1 for i in top if generation and i.birth_generation == generation),
        "members": [i.record() for i in population],
    }


def run(env: Env, policy: TabularPolicy, config: EvolveConfig, label: str | None = None) -> RunLog:
    evo = Evolution(env, policy, config)
    population, pool = init_population(evo)
    log = RunLog(label or config.fitness_mode, config.seed, config.to_dict(), env.to_dict())
    log.records.append(_record(0, population, pool))
    for gen in range(1, config.generations + 1):
        offspring, n_mut, n_child = make_offspring(population, evo, gen)
        evaluate_offspring(offspring, pool, evo)
        population = migrate(population, offspring, pool, config.population_size)
        log.records.append(_record(gen, population, pool, n_mut, n_child))
    log.final_pool = dict(sorted(pool.entries.items()))
    return log


def run_random_baseline(env: Env, policy: TabularPolicy, config: EvolveConfig) -> RunLog:
    """The initial population alone, evaluated exactly as a full run would."""
    cfg = EvolveConfig(**{**config.to_dict(), "generations": 0})
    return run(env, policy, cfg, label="random")


def run_training_baseline(env: Env, policy: TabularPolicy, config: EvolveConfig | None = None) -> RunLog:
    """A single demonstration from the start the policy was trained on."""
    config = config or EvolveConfig()
    ctx = ScoringContext.for_env(env)
    traj = rollout(env, policy, env.training_start)
    pool = DemoPool()
    ind = Individual(0, np.zeros(0, dtype=np.uint8), 0, tuple(env.training_start), traj)
    ind.fitness = score(traj, [], config.fitness_mode, ctx)
    pool.add(0, traj, local_terms(traj, ctx))
    log = RunLog("training", config.seed, config.to_dict(), env.to_dict())
    log.records.append(_record(0, [ind], pool))
    log.final_pool = dict(pool.entries)
    return log
