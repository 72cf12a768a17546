"""Seeded Monte-Carlo convergence studies over random initial guesses.

Each run draws one shooting-variable guess uniformly from a box domain
and solves it, either directly at a fixed smoothing constant or through
the full continuation ladder.  Runs get independent child seeds spawned
from the batch seed, so records do not depend on execution order and a
worker pool produces the same records as a serial loop (wall times
excepted; they are measured, not derived).
"""

from __future__ import annotations

import csv
import json
import math
import multiprocessing
import time
from dataclasses import dataclass, field

import numpy as np

from .continuation import ContinuationSchedule, continue_solve
from .numerics import IntegratorConfig, RootSolveConfig
from .problems import IndirectProblem, solve_problem
from .smoothing import SmoothingFilter

__all__ = [
    "GuessDomain",
    "MonteCarloStats",
    "run_monte_carlo",
    "summarize",
    "write_records_jsonl",
    "read_records_jsonl",
    "write_records_csv",
    "write_stats_json",
]


@dataclass(frozen=True)
class GuessDomain:
    """Per-component closed intervals for the shooting variable."""

    lows: np.ndarray
    highs: np.ndarray

    def __post_init__(self) -> None:
        lows = np.asarray(self.lows, dtype=float).ravel()
        highs = np.asarray(self.highs, dtype=float).ravel()
        if lows.shape != highs.shape or lows.size == 0:
            raise ValueError(
                f"domain bounds must share one nonempty shape, got {lows.shape} and {highs.shape}"
            )
        if not (np.all(np.isfinite(lows)) and np.all(np.isfinite(highs))):
            raise ValueError("domain bounds must be finite")
        if np.any(lows > highs):
            raise ValueError("each lower bound must not exceed its upper bound")
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)

    @property
    def dim(self) -> int:
        return self.lows.size

    @classmethod
    def from_problem(cls, problem: IndirectProblem) -> "GuessDomain":
        pairs = getattr(problem, "guess_domain", None)
        if not pairs:
            raise ValueError(f"problem {problem.name!r} declares no guess domain")
        lo, hi = zip(*pairs)
        return cls(np.array(lo, float), np.array(hi, float))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lows, self.highs)


@dataclass
class MonteCarloStats:
    """Aggregate of one batch; means are over converged runs only."""

    n_runs: int
    n_converged: int
    cost_mean: float
    cost_range: tuple
    residual_mean: float
    wall_time_mean: float
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_converged > self.n_runs:
            raise ValueError("converged count exceeds run count")

    @property
    def converged_fraction(self) -> float:
        return self.n_converged / self.n_runs if self.n_runs else math.nan

    def to_dict(self) -> dict:
        return {
            "n_runs": int(self.n_runs),
            "n_converged": int(self.n_converged),
            "converged_fraction": float(self.converged_fraction),
            "cost_mean": float(self.cost_mean),
            "cost_range": [float(self.cost_range[0]), float(self.cost_range[1])],
            "residual_mean": float(self.residual_mean),
            "wall_time_mean": float(self.wall_time_mean),
            "means_over": "converged runs",
            "extras": self.extras,
        }


def _run_single(task) -> dict:
    (index, problem, domain, child_seed, method, filt,
     integ, root_cfg, schedule) = task
    rng = np.random.default_rng(child_seed)
    guess = domain.sample(rng)
    started = time.perf_counter()
    traj = None
    final_filt = filt
    extra: dict = {}
    if method == "direct":
        report, traj = solve_problem(problem, guess, filt, integ, root_cfg)
        converged = report.converged
        residual_norm = report.residual_norm
        iterations = report.iterations
        solution = report.solution if converged else None
    elif method == "continuation":
        crep = continue_solve(
            problem, guess, filt.kind, schedule, integ, root_cfg, rng_seed=rng
        )
        converged = crep.converged
        residual_norm = crep.final_residual_norm
        iterations = crep.total_iterations
        solution = crep.final_solution
        extra["steps"] = len(crep.steps)
        if converged:
            final_filt = SmoothingFilter(filt.kind, crep.floor)
            traj = problem.propagate(solution, final_filt, integ)
    else:
        raise ValueError(f"unknown method {method!r}; use 'direct' or 'continuation'")
    wall = time.perf_counter() - started

    record = {
        "index": int(index),
        "guess": [float(v) for v in guess],
        "converged": bool(converged),
        "outcome": "converged" if converged else "failed",
        "cost": None,
        "residual_norm": float(residual_norm),
        "iterations": int(iterations),
        "wall_time": float(wall),
        "metrics": {},
    }
    record.update(extra)
    if converged and traj is not None:
        record["cost"] = float(problem.cost_of(traj))
        record["solution"] = [float(v) for v in solution]
        metrics = problem.summary_metrics(traj, final_filt)
        record["metrics"] = {
            k: (int(v) if isinstance(v, (int, np.integer)) else float(v))
            for k, v in metrics.items()
        }
    return record


def run_monte_carlo(problem: IndirectProblem, domain: GuessDomain, n: int, seed,
                    method: str = "direct", filt: SmoothingFilter | None = None,
                    integ: IntegratorConfig | None = None,
                    root_cfg: RootSolveConfig | None = None,
                    schedule: ContinuationSchedule | None = None,
                    threads: int = 1):
    """Run n independent solves from seeded uniform draws.

    Returns (MonteCarloStats, records).  Individual non-convergences are
    recorded, not raised.  With threads > 1 the runs execute on a
    process pool; records come back in run order either way.  When
    root_cfg is omitted the problem's batch-study settings apply
    (montecarlo_root_config), which gate convergence at the batch
    residual tolerance rather than the single-solve one.
    """
    if n < 1:
        raise ValueError(f"need at least one run, got n={n}")
    if domain.dim != problem.shooting_dim:
        raise ValueError(
            f"domain dimension {domain.dim} does not match "
            f"shooting dimension {problem.shooting_dim}"
        )
    if filt is None:
        raise ValueError("a smoothing filter is required")
    if method == "continuation" and schedule is None:
        schedule = ContinuationSchedule.for_filter(filt.kind)
    if root_cfg is None:
        root_cfg = problem.montecarlo_root_config()
    children = np.random.SeedSequence(seed).spawn(n)
    tasks = [
        (i, problem, domain, children[i], method, filt, integ, root_cfg, schedule)
        for i in range(n)
    ]
    if threads > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=threads) as pool:
            records = pool.map(_run_single, tasks)
    else:
        records = [_run_single(t) for t in tasks]
    return summarize(records), records


def summarize(records) -> MonteCarloStats:
    """Deterministic, order-independent aggregation of run records."""
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    conv = [r for r in records if r["converged"]]
    costs = [r["cost"] for r in conv if r["cost"] is not None]

    def _mean(vals):
        return float(np.mean(vals)) if vals else math.nan

    extras: dict = {}
    keys = sorted({k for r in conv for k in r.get("metrics", {})})
    for key in keys:
        vals = [r["metrics"][key] for r in conv if key in r.get("metrics", {})]
        extras[key] = {
            "mean": _mean(vals),
            "min": float(min(vals)),
            "max": float(max(vals)),
        }
    return MonteCarloStats(
        n_runs=len(records),
        n_converged=len(conv),
        cost_mean=_mean(costs),
        cost_range=(min(costs), max(costs)) if costs else (math.nan, math.nan),
        residual_mean=_mean([r["residual_norm"] for r in conv]),
        wall_time_mean=_mean([r["wall_time"] for r in conv]),
        extras=extras,
    )


def write_records_jsonl(records, path) -> None:
    """One JSON record per line, keys sorted."""
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_records_jsonl(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_stats_json(stats: MonteCarloStats, path) -> None:
    with open(path, "w") as fh:
        json.dump(stats.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_records_csv(records, path) -> None:
    """Flat spreadsheet mirror of the JSONL records."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    dim = len(records[0]["guess"])
    metric_keys = sorted({k for r in records for k in r.get("metrics", {})})
    header = (
        ["index"]
        + [f"guess_{i}" for i in range(dim)]
        + ["converged", "outcome", "cost", "residual_norm", "iterations", "wall_time"]
        + metric_keys
    )

    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, bool):
            return str(int(v))
        if isinstance(v, float):
            return "%.17g" % v
        return str(v)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in records:
            row = [r["index"]]
            row += [fmt(g) for g in r["guess"]]
            row += [
                fmt(r["converged"]),
                r["outcome"],
                fmt(r["cost"]),
                fmt(r["residual_norm"]),
                fmt(r["iterations"]),
                fmt(r["wall_time"]),
            ]
            row += [fmt(r.get("metrics", {}).get(k)) for k in metric_keys]
            writer.writerow(row)
