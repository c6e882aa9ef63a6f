"""Command-line entry point.

    react-xrl train           train a tabular policy and save it
    react-xrl optimize        evolve starts (and run baselines) for several modes and seeds
    react-xrl encoding-study  how evenly m-bit codes cover a discrete dimension
    react-xrl sweep           optimize over a grid of hyperparameters
    react-xrl report          rebuild artifacts from a stored run log

Every command takes ``--config FILE`` (JSON); flags given on the command line
override the file.  Outputs go under ``--out``, falling back to the directory in
``$REACT_XRL_OUT`` and then ``./runs``.  Failures print one ``error: ...`` line
to stderr and exit with status 2.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import warnings
from collections import Counter
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .encoding import (
    DISCRETE,
    SKEW_LIMIT,
    DimSpec,
    EncodingSkewWarning,
    GenomeSpec,
    occupancy_histogram,
    occupancy_ratio,
)
from .env import Env, load_env
from .evolve import EvolveConfig, RunLog, RunLogError, run, run_random_baseline, run_training_baseline
from .metrics import FITNESS_MODES, JOINT, iqm, optimality_gap
from .policy import TRAIN_PRESETS, TabularPolicy, TrainConfig, rollout, train_preset, train_q
from .report import csv_text, distribution_stats, export_artifacts

OUT_ENV_VAR = "REACT_XRL_OUT"
DEFAULT_OUT = "runs"
RUNLOG_NAME = "runlog.jsonl"
BASELINES = ("random", "training")
RUN_MODES = FITNESS_MODES + BASELINES
DEFAULT_SWEEP_CAP = 64

# short names accepted in sweep grids
SWEEP_ALIASES = {
    "p": "population_size",
    "g": "generations",
    "p_c": "crossover_prob",
    "p_m": "mutation_prob",
    "m": "bits_per_dim",
    "mode": "fitness_mode",
}
EVOLVE_FIELDS = {f.name for f in fields(EvolveConfig)}


class CliError(Exception):
    pass


# --------------------------------------------------------------------------- config plumbing


def _load_config(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise CliError(f"{path}: top level must be a JSON object")
    return doc


def _pick(args: argparse.Namespace, cfg: dict, name: str, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return cfg.get(name, default)


def _out_root(args: argparse.Namespace, cfg: dict) -> Path:
    return Path(_pick(args, cfg, "out") or os.environ.get(OUT_ENV_VAR) or DEFAULT_OUT)


def _evolve_config(args: argparse.Namespace, cfg: dict, seed: int, mode: str) -> EvolveConfig:
    values = dict(cfg.get("evolve", {}))
    unknown = set(values) - EVOLVE_FIELDS
    if unknown:
        raise CliError(f"unknown evolve settings: {', '.join(sorted(unknown))}")
    for name in ("population_size", "generations", "crossover_prob", "mutation_prob", "tournament_size", "bits_per_dim"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if getattr(args, "stochastic", False):
        values["stochastic_rollouts"] = True
    values["seed"] = seed
    values["fitness_mode"] = mode if mode in FITNESS_MODES else values.get("fitness_mode", JOINT)
    return EvolveConfig(**values)


def _seeds(args: argparse.Namespace, cfg: dict) -> list[int]:
    seeds = _pick(args, cfg, "seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    if not seeds:
        raise CliError("at least one seed is required")
    return [int(s) for s in seeds]


def _modes(args: argparse.Namespace, cfg: dict) -> list[str]:
    modes = _pick(args, cfg, "modes", [JOINT])
    if isinstance(modes, str):
        modes = [modes]
    bad = [m for m in modes if m not in RUN_MODES]
    if bad:
        raise CliError(f"unknown mode {bad[0]!r}; valid: {', '.join(RUN_MODES)}")
    if not modes:
        raise CliError("at least one mode is required")
    return list(dict.fromkeys(modes))


def _load_policy(path: str | None, env: Env) -> TabularPolicy:
    if not path:
        raise CliError("a policy file is required (--policy or \"policy\" in the config)")
    p = Path(path)
    if not p.exists():
        raise CliError(f"policy file {path} does not exist")
    policy = TabularPolicy.load(p)
    if policy.n_actions != env.n_actions:
        raise CliError(f"policy has {policy.n_actions} actions but the environment has {env.n_actions}")
    return policy


def _env(args: argparse.Namespace, cfg: dict) -> Env:
    ref = _pick(args, cfg, "env", "flatgrid11")
    try:
        return load_env(ref)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from None
    except (TypeError, json.JSONDecodeError) as exc:
        raise CliError(f"bad environment spec: {exc}") from None


def _spread(values: Sequence[float]) -> tuple[float, float]:
    return iqm(values), float(np.std(values))


# --------------------------------------------------------------------------- train


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    env = _env(args, cfg)
    seed = int(_pick(args, cfg, "seed", 0))
    base = _pick(args, cfg, "preset")
    tc = train_preset(base, seed).to_dict() if base else {"seed": seed}
    tc.update(cfg.get("train", {}))
    for name in ("episodes", "temperature", "gamma", "learning_rate"):
        v = getattr(args, name, None)
        if v is not None:
            tc[name] = v
    tc["seed"] = seed
    try:
        config = TrainConfig(**tc)
    except TypeError as exc:
        raise CliError(f"bad training settings: {exc}") from None
    policy = train_q(env, config)
    out = Path(_pick(args, cfg, "policy_out") or _out_root(args, cfg) / "policy.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    policy.save(out)
    traj = rollout(env, policy, env.training_start)
    print(f"policy: {out}")
    print(f"greedy return from training start: {traj.ret:g} ({len(traj.steps)} steps, {traj.terminal_kind})")
    return 0


# --------------------------------------------------------------------------- optimize


def run_mode(env: Env, policy: TabularPolicy, mode: str, config: EvolveConfig) -> RunLog:
    if mode == "random":
        return run_random_baseline(env, policy, config)
    if mode == "training":
        return run_training_baseline(env, policy, config)
    return run(env, policy, config)


def _store(log: RunLog, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    log.save(out_dir / RUNLOG_NAME)
    export_artifacts(log, out_dir)


def optimize(
    env: Env, policy: TabularPolicy, modes: Sequence[str], seeds: Sequence[int], out: Path | None,
    make_config,
) -> dict[str, list[RunLog]]:
    logs: dict[str, list[RunLog]] = {}
    for mode in modes:
        for seed in seeds:
            log = run_mode(env, policy, mode, make_config(seed, mode))
            if out is not None:
                _store(log, out / mode / f"seed_{seed}")
            logs.setdefault(mode, []).append(log)
    return logs


def cmd_optimize(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    env = _env(args, cfg)
    policy = _load_policy(_pick(args, cfg, "policy"), env)
    modes, seeds = _modes(args, cfg), _seeds(args, cfg)
    out = _out_root(args, cfg)
    logs = optimize(env, policy, modes, seeds, out, lambda s, m: _evolve_config(args, cfg, s, m))
    rows = []
    for mode, runs in logs.items():
        finals = [log.final_fidelity for log in runs]
        center, std = _spread(finals)
        gaps = [g for log in runs for g in optimality_gap(log.final_pool.values(), env).gaps]
        rows.append((mode, len(runs), center, std, float(np.mean(gaps))))
        print(f"{mode:>15}: fidelity IQM {center:.3f} ± {std:.3f} over {len(runs)} seeds, mean gap {np.mean(gaps):.3f}")
    out.mkdir(parents=True, exist_ok=True)
    (out / "optimize_summary.csv").write_bytes(
        csv_text(("mode", "seeds", "fidelity_iqm", "fidelity_std", "gap_mean"), rows).encode("utf-8")
    )
    return 0


# --------------------------------------------------------------------------- encoding study


def encoding_study(bits: Sequence[int], n_values: int, sampled: int | None = None, seed: int = 0) -> list[dict]:
    """Occupancy of a two-dimensional ``n_values x n_values`` discrete state space per code length."""
    out = []
    for m in bits:
        dims = (DimSpec(DISCRETE, 0, n_values - 1),) * 2
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EncodingSkewWarning)
            spec = GenomeSpec(dims, m)
        if sampled:
            hist = occupancy_histogram(spec, "sampled", n=sampled, seed=seed)
        else:
            hist = occupancy_histogram(spec, "exhaustive")
        ratio = occupancy_ratio(hist, spec)
        per_dim = spec.skew_ratio
        out.append({"bits": m, "ratio": ratio, "per_dim_ratio": per_dim, "warn": per_dim > SKEW_LIMIT, "hist": hist})
    return out


def _occupancy_pgm(hist: Counter, n_values: int) -> str:
    grid = np.zeros((n_values, n_values), dtype=np.int64)
    for (a, b), c in hist.items():
        grid[int(a), int(b)] = c
    top = grid.max()
    scaled = np.rint(grid / top * 255).astype(np.int64) if top else grid
    rows = "\n".join(" ".join(str(v) for v in row) for row in scaled.tolist())
    return f"P2\n{n_values} {n_values}\n255\n{rows}\n"


def cmd_encoding_study(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    bits = _pick(args, cfg, "bits", [4, 5, 6, 7, 8])
    if not bits:
        raise CliError("at least one code length is required")
    n_values = int(_pick(args, cfg, "values", 9))
    sampled = _pick(args, cfg, "samples")
    results = encoding_study(bits, n_values, sampled, int(_pick(args, cfg, "seed", 0)))
    out = _out_root(args, cfg) / "encoding_study"
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for r in results:
        flag = "WARN" if r["warn"] else "ok"
        print(f"m={r['bits']}: per-dimension max/min {r['per_dim_ratio']:.3f}, joint {r['ratio']:.3f} [{flag}]")
        rows.append((r["bits"], r["per_dim_ratio"], r["ratio"], int(r["warn"])))
        (out / f"occupancy_m{r['bits']}.pgm").write_bytes(_occupancy_pgm(r["hist"], n_values).encode("utf-8"))
    table = csv_text(("bits", "per_dim_ratio", "joint_ratio", "warn"), rows)
    (out / "skew.csv").write_bytes(table.encode("utf-8"))
    return 0


# --------------------------------------------------------------------------- sweep


def expand_grid(grid: dict[str, Sequence], cap: int) -> list[dict[str, Any]]:
    if not grid:
        raise CliError("sweep grid is empty")
    names = []
    for key in grid:
        name = SWEEP_ALIASES.get(key, key)
        if name not in EVOLVE_FIELDS - {"seed"}:
            raise CliError(f"cannot sweep {key!r}; valid: {', '.join(SWEEP_ALIASES)}")
        if not grid[key]:
            raise CliError(f"sweep values for {key!r} are empty")
        names.append(name)
    size = int(np.prod([len(v) for v in grid.values()]))
    if size > cap:
        raise CliError(f"sweep grid has {size} points, over the cap of {cap}")
    return [dict(zip(names, combo)) for combo in itertools.product(*grid.values())]


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    env = _env(args, cfg)
    policy = _load_policy(_pick(args, cfg, "policy"), env)
    seeds = _seeds(args, cfg)
    grid = json.loads(args.grid) if args.grid else cfg.get("grid", {})
    cap = int(_pick(args, cfg, "cap", DEFAULT_SWEEP_CAP))
    points = expand_grid(grid, cap)
    out = _out_root(args, cfg) / "sweep"
    out.mkdir(parents=True, exist_ok=True)
    base = dict(cfg.get("evolve", {}))
    summary, survival = [], []
    param_names = list(points[0])
    for k, point in enumerate(points):
        mode = point.get("fitness_mode", base.get("fitness_mode", JOINT))
        scfg = {**cfg, "evolve": {**base, **{n: v for n, v in point.items() if n != "fitness_mode"}}}
        make = lambda s, m, scfg=scfg: _evolve_config(args, scfg, s, m)
        logs = optimize(env, policy, [mode], seeds, out / f"point_{k}", make)[mode]
        finals = [log.final_fidelity for log in logs]
        center, std = _spread(finals)
        pool = [t for log in logs for t in log.final_pool.values()]
        gaps = optimality_gap(pool, env)
        stats = distribution_stats(pool)
        summary.append(
            (k, *(point[n] for n in param_names), center, std, gaps.mean, float(gaps.max),
             stats.returns.median, stats.returns.iqr, stats.lengths.median, stats.lengths.iqr)
        )
        for seed, log in zip(seeds, logs):
            for rec in log.records[1:]:
                survival.append((k, seed, rec["generation"], rec["new_survivors"], rec["new_in_top"]))
        print(f"point {k} {point}: fidelity IQM {center:.3f} ± {std:.3f}")
    header = ("point", *param_names, "fidelity_iqm", "fidelity_std", "gap_mean", "gap_max",
              "return_median", "return_iqr", "length_median", "length_iqr")
    (out / "sweep.csv").write_bytes(csv_text(header, summary).encode("utf-8"))
    (out / "survival.csv").write_bytes(
        csv_text(("point", "seed", "generation", "new_survivors", "new_in_top"), survival).encode("utf-8")
    )
    return 0


# --------------------------------------------------------------------------- report


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    path = run_dir / RUNLOG_NAME if run_dir.is_dir() else run_dir
    if not path.exists():
        raise CliError(f"no run log at {path}")
    log = RunLog.load(path)
    written = export_artifacts(log, Path(args.out) if args.out else path.parent)
    print(f"wrote {len(written)} files to {written[0].parent}")
    return 0


# --------------------------------------------------------------------------- parser


def _add_evolve_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("evolution settings (override the config)")
    g.add_argument("--population-size", "-p", dest="population_size", type=int)
    g.add_argument("--generations", "-g", type=int)
    g.add_argument("--crossover-prob", dest="crossover_prob", type=float)
    g.add_argument("--mutation-prob", dest="mutation_prob", type=float)
    g.add_argument("--tournament-size", dest="tournament_size", type=int)
    g.add_argument("--bits-per-dim", "-m", dest="bits_per_dim", type=int)
    g.add_argument("--stochastic", action="store_true", help="sample actions instead of acting greedily")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="react-xrl", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, env=True):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--out", help=f"output root (default: ${OUT_ENV_VAR} or ./{DEFAULT_OUT})")
        if env:
            p.add_argument("--env", help="preset name or JSON environment file")

    p = sub.add_parser("train", help="train a tabular policy")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--preset", choices=sorted(TRAIN_PRESETS))
    p.add_argument("--episodes", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--policy-out", dest="policy_out", help="policy file (default: OUT/policy.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("optimize", help="run evolution and baselines")
    common(p)
    p.add_argument("--policy")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--modes", nargs="+", metavar="MODE", help=f"any of: {', '.join(RUN_MODES)}")
    _add_evolve_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("encoding-study", help="code-length skew study")
    common(p, env=False)
    p.add_argument("--bits", type=int, nargs="+")
    p.add_argument("--values", type=int, help="values per discrete dimension (default 9)")
    p.add_argument("--samples", type=int, help="sample this many genomes instead of enumerating all")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_encoding_study)

    p = sub.add_parser("sweep", help="grid search over evolution settings")
    common(p)
    p.add_argument("--policy")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--grid", help='JSON object, e.g. \'{"p": [10, 25, 50]}\'')
    p.add_argument("--cap", type=int, help=f"maximum grid points (default {DEFAULT_SWEEP_CAP})")
    _add_evolve_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="regenerate artifacts from a run log")
    p.add_argument("run_dir", help="run directory or run log file")
    p.add_argument("--out", help="write artifacts here instead of next to the log")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, RunLogError, ValueError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
