"""Evaluation artifacts computed from run logs.

Every export is a pure function of a :class:`~react_xrl.evolve.RunLog`, so
re-exporting the same log rewrites byte-identical files.  Output layout::

    summary.csv            key,value pairs (fidelity, optimality gap, pool size, ...)
    fidelity_curve.csv     one row per generation
    fitness_stack.csv      per-generation population means of every fitness term
    heatmap.pgm            log1p visit counts as a plain (P2) graymap
    heatmap_matrix.csv     raw visit counts in long form, one row per cell
    distributions.csv      box-plot statistics of returns and lengths
    trajectories.csv       polylines of the final demonstrations
    trajectories.svg       xy / xz / yz projections (continuous environments only)

Heatmaps count raw visits, so an agent idling in one place darkens that cell.
Local diversity, by contrast, works on deduplicated positions.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .env import Binning, Env, GridSpec, env_from_dict
from .evolve import RunLog
from .metrics import JOINT, SUM, optimality_gap
from .policy import Trajectory

SUMMARY = "summary.csv"
FIDELITY_CURVE = "fidelity_curve.csv"
FITNESS_STACK = "fitness_stack.csv"
HEATMAP_PGM = "heatmap.pgm"
HEATMAP_MATRIX = "heatmap_matrix.csv"
DISTRIBUTIONS = "distributions.csv"
TRAJECTORIES_CSV = "trajectories.csv"
TRAJECTORIES_SVG = "trajectories.svg"

PGM_MAXVAL = 255
TERMS = ("d_global", "f_local", "d_local", "certainty")
STACKS = {JOINT: ("d_global", "f_local"), SUM: ("d_global", "d_local", "certainty")}


class ReportError(ValueError):
    pass


def _fmt(x) -> str:
    """Shortest round-trip text for floats, plain text otherwise."""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# --------------------------------------------------------------------------- heatmap


@dataclass(frozen=True)
class Heatmap:
    counts: np.ndarray
    mask: np.ndarray  # True where a position cannot hold the agent (wall, hole)
    axes: tuple[str, ...]

    @property
    def log_counts(self) -> np.ndarray:
        return np.log1p(self.counts)

    def plane(self) -> np.ndarray:
        """2-D view for rendering: extra axes are summed away."""
        counts = self.counts
        while counts.ndim > 2:
            counts = counts.sum(axis=-1)
        return counts

    def plane_mask(self) -> np.ndarray:
        mask = self.mask
        while mask.ndim > 2:
            mask = mask.all(axis=-1)
        return mask


def heatmap(pool: Iterable[Trajectory], env: Env, binning: Binning | None = None) -> Heatmap:
    """Visit counts over every raw (non-deduplicated) position of every trajectory."""
    pool = list(pool)
    if isinstance(env, GridSpec):
        counts = np.zeros((env.height, env.width), dtype=np.int64)
        mask = np.ones_like(counts, dtype=bool)
        for cell in env.traversable_cells():
            mask[cell] = False
        for t in pool:
            for r, c in t.raw_positions.astype(np.int64).tolist():
                counts[r, c] += 1
        return Heatmap(counts, mask, ("row", "col"))
    binning = binning or getattr(env, "binning", None)
    if binning is None:
        raise ReportError("a continuous environment needs a binning to build a heatmap")
    counts = np.zeros(binning.counts, dtype=np.int64)
    for t in pool:
        for key in binning.keys(t.raw_positions).tolist():
            counts[tuple(key)] += 1
    axes = ("ix", "iy", "iz")[: counts.ndim] if counts.ndim <= 3 else tuple(f"i{k}" for k in range(counts.ndim))
    return Heatmap(counts, np.zeros_like(counts, dtype=bool), axes)


def heatmap_pgm(hm: Heatmap) -> str:
    """Plain graymap; masked cells are black, the most visited cell is white."""
    plane = np.log1p(hm.plane())
    mask = hm.plane_mask()
    top = plane.max()
    scaled = np.zeros(plane.shape, dtype=np.int64) if top == 0 else np.rint(plane / top * PGM_MAXVAL).astype(np.int64)
    scaled[mask] = 0
    h, w = scaled.shape
    rows = "\n".join(" ".join(str(v) for v in row) for row in scaled.tolist())
    return f"P2\n{w} {h}\n{PGM_MAXVAL}\n{rows}\n"


def heatmap_matrix(hm: Heatmap) -> str:
    rows = []
    for idx in np.ndindex(hm.counts.shape):
        rows.append((*idx, int(hm.counts[idx]), int(hm.mask[idx])))
    return csv_text((*hm.axes, "count", "masked"), rows)


def parse_heatmap_matrix(text: str) -> tuple[tuple[str, ...], dict[tuple[int, ...], int]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    n = len(header) - 2
    return tuple(header[:n]), {tuple(int(v) for v in row[:n]): int(row[n]) for row in reader}


# --------------------------------------------------------------------------- curves


def fidelity_curve(log: RunLog) -> list[float]:
    if not log.records:
        raise ReportError("run log has no generations")
    return [float(r["fidelity"]) for r in log.records]


def _term_means(record: dict) -> dict[str, float]:
    members = record["members"]
    out = {k: math.fsum(m["fitness"][k] for m in members) / len(members) for k in TERMS}
    out["total"] = math.fsum(m["fitness"]["total"] for m in members) / len(members)
    return out


def fitness_composition(log: RunLog) -> list[dict[str, float]]:
    """Per-generation population means of the terms that add up to the fitness.

    Only joint and sum fitness have a composition; other modes are rejected.
    """
    mode = log.config.get("fitness_mode")
    if mode not in STACKS:
        raise ReportError(f"fitness mode {mode!r} has a single component; nothing to stack")
    out = []
    for rec in log.records:
        means = _term_means(rec)
        stack = {k: means[k] for k in STACKS[mode]}
        out.append({"generation": rec["generation"], **stack, "total": means["total"]})
    return out


# --------------------------------------------------------------------------- distributions


@dataclass(frozen=True)
class BoxStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    iqr: float
    whisker_low: float
    whisker_high: float

    def row(self) -> tuple[float, ...]:
        return (self.min, self.q1, self.median, self.q3, self.max, self.iqr, self.whisker_low, self.whisker_high)


def box_stats(values: Sequence[float]) -> BoxStats:
    """Linear-interpolation quartiles; Tukey whiskers reach the most extreme data within 1.5 IQR."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ReportError("box statistics need at least one value")
    q1, med, q3 = (float(x) for x in np.percentile(v, [25, 50, 75]))
    iqr = q3 - q1
    lo = v[v >= q1 - 1.5 * iqr]
    hi = v[v <= q3 + 1.5 * iqr]
    # an interpolated quartile can fall outside the data kept by the fence; pin the whisker to it then
    whisker_low = min(float(lo[0]), q1)
    whisker_high = max(float(hi[-1]), q3)
    return BoxStats(float(v[0]), q1, med, q3, float(v[-1]), iqr, whisker_low, whisker_high)


@dataclass(frozen=True)
class DistributionStats:
    returns: BoxStats
    lengths: BoxStats


def distribution_stats(pool: Iterable[Trajectory]) -> DistributionStats:
    pool = list(pool)
    if not pool:
        raise ReportError("distribution statistics need a non-empty pool")
    return DistributionStats(box_stats([t.ret for t in pool]), box_stats([len(t) for t in pool]))


# --------------------------------------------------------------------------- trajectories


def trajectories_csv(pool: dict[int, Trajectory], dim: int) -> str:
    axes = ("x", "y", "z")[:dim] if dim <= 3 else tuple(f"p{k}" for k in range(dim))
    rows = []
    for demo_id, t in sorted(pool.items()):
        for i, p in enumerate(t.raw_positions.tolist()):
            rows.append((demo_id, i, *p))
    return csv_text(("demo_id", "index", *axes), rows)


_PANEL = 200
_PAD = 20
_COLORS = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


def trajectories_svg(pool: dict[int, Trajectory], low: Sequence[float], high: Sequence[float]) -> str:
    """Three orthographic projections side by side, one polyline per demonstration."""
    pairs = ((0, 1, "xy"), (0, 2, "xz"), (1, 2, "yz"))
    width = 3 * _PANEL + 4 * _PAD
    height = _PANEL + 2 * _PAD + 15
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    ]

    def project(v: float, axis: int) -> float:
        return (v - low[axis]) / (high[axis] - low[axis]) * _PANEL

    for k, (a, b, name) in enumerate(pairs):
        ox = _PAD + k * (_PANEL + _PAD)
        oy = _PAD + 15
        out.append(f'<g transform="translate({ox},{oy})">')
        out.append(f'<rect width="{_PANEL}" height="{_PANEL}" fill="none" stroke="black"/>')
        out.append(f'<text x="0" y="-5" font-size="12">{name}</text>')
        for n, (demo_id, t) in enumerate(sorted(pool.items())):
            pts = " ".join(
                f"{project(p[a], a):.3f},{_PANEL - project(p[b], b):.3f}" for p in t.raw_positions.tolist()
            )
            color = _COLORS[n % len(_COLORS)]
            out.append(f'<polyline data-demo="{demo_id}" points="{pts}" fill="none" stroke="{color}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------- export


def summary_rows(log: RunLog, env: Env) -> list[tuple[str, object]]:
    last = log.records[-1]
    rows: list[tuple[str, object]] = [
        ("label", log.label),
        ("seed", log.seed),
        ("fitness_mode", log.config.get("fitness_mode", "")),
        ("generations", log.generations),
        ("pool_size", len(log.final_pool)),
        ("final_fidelity", float(last["fidelity"])),
        ("abs_mean_reward", float(last["abs_mean_reward"])),
        ("total_length", int(last["total_length"])),
    ]
    if log.final_pool:
        gap = optimality_gap(log.final_pool.values(), env)
        rows += [("gap_mean", gap.mean), ("gap_min", float(gap.min)), ("gap_max", float(gap.max))]
    return rows


def render_artifacts(log: RunLog) -> dict[str, str]:
    """File name → contents for every artifact of ``log``."""
    env = env_from_dict(log.env)
    pool = log.final_pool
    files = {SUMMARY: csv_text(("key", "value"), summary_rows(log, env))}

    curve_rows = [
        (r["generation"], float(r["fidelity"]), float(r["abs_mean_reward"]), r["total_length"],
         r["n_mutants"], r["n_children"], r["new_survivors"], r["new_in_top"])
        for r in log.records
    ]
    files[FIDELITY_CURVE] = csv_text(
        ("generation", "fidelity", "abs_mean_reward", "total_length", "n_mutants", "n_children",
         "new_survivors", "new_in_top"),
        curve_rows,
    )

    stack_rows = []
    for r in log.records:
        m = _term_means(r)
        stack_rows.append((r["generation"], *(m[k] for k in TERMS), m["total"]))
    files[FITNESS_STACK] = csv_text(("generation", *TERMS, "total"), stack_rows)

    hm = heatmap(pool.values(), env)
    files[HEATMAP_PGM] = heatmap_pgm(hm)
    files[HEATMAP_MATRIX] = heatmap_matrix(hm)

    header = ("quantity", "min", "q1", "median", "q3", "max", "iqr", "whisker_low", "whisker_high")
    if pool:
        stats = distribution_stats(pool.values())
        files[DISTRIBUTIONS] = csv_text(header, [("return", *stats.returns.row()), ("length", *stats.lengths.row())])
    else:
        files[DISTRIBUTIONS] = csv_text(header, [])

    dim = len(env.training_start)
    files[TRAJECTORIES_CSV] = trajectories_csv(pool, dim)
    if not isinstance(env, GridSpec):
        files[TRAJECTORIES_SVG] = trajectories_svg(pool, env.low, env.high)
    return files


def export_artifacts(log: RunLog, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in sorted(render_artifacts(log).items()):
        path = out / name
        path.write_bytes(text.encode("utf-8"))
        written.append(path)
    return written
