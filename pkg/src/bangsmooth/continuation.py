"""Smoothing-constant homotopy with perturbation retries.

A bang-bang problem is approached through a sequence of smoothed
problems: start at constant 1 (a heavily smoothed, easy TPBVP), solve,
divide the constant by 10, and warm-start the next solve from the
previous solution, down to a floor where the control is effectively
bang-bang.  A failed solve retries from the same guess nudged by a
small positive random vector, scaled to the current constant.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .numerics import IntegratorConfig, RootSolveConfig, SolveReport, solve_root
from .problems import IndirectProblem
from .smoothing import FilterKind, SmoothingFilter

__all__ = ["ContinuationSchedule", "ContinuationReport", "continue_solve"]

# smallest useful constant per filter: the saturation response is
# effectively a sign function beyond these
DEFAULT_FLOORS = {FilterKind.L2_NORM: 1e-8, FilterKind.TANH: 1e-6}


@dataclass(frozen=True)
class ContinuationSchedule:
    """Decade ladder of smoothing constants with bounded retries."""

    start: float = 1.0
    floor: float = 1e-8
    factor: float = 0.1
    max_retries: int = 10

    def __post_init__(self) -> None:
        for name in ("start", "floor", "factor"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "max_retries", int(self.max_retries))
        if self.floor > self.start:
            raise ValueError(
                f"floor {self.floor!r} must not exceed start {self.start!r}"
            )
        if not 0.0 < self.factor < 1.0:
            raise ValueError(f"factor must be in (0, 1), got {self.factor!r}")
        if self.max_retries < 1:
            raise ValueError(f"max_retries must be >= 1, got {self.max_retries!r}")

    @classmethod
    def for_filter(cls, kind: FilterKind, **overrides) -> "ContinuationSchedule":
        kind = FilterKind(kind)
        if kind not in DEFAULT_FLOORS:
            raise ValueError(f"continuation needs a smoothing filter, got {kind.value!r}")
        args = {"floor": DEFAULT_FLOORS[kind]}
        args.update(overrides)
        return cls(**args)

    def constants(self) -> list:
        """The strictly decreasing ladder, ending exactly at the floor."""
        out = [self.start]
        # tolerate the drift of repeated multiplication when deciding
        # whether a level has reached the floor
        edge = self.floor * (1.0 + 1e-9)
        while out[-1] > edge:
            c = out[-1] * self.factor
            out.append(self.floor if c <= edge else c)
        return out


@dataclass
class ContinuationReport:
    """History of one homotopy run."""

    converged: bool
    steps: list = field(default_factory=list)  # (constant, SolveReport) pairs
    final_solution: np.ndarray | None = None
    total_wall_time: float = 0.0
    filter_kind: str = ""
    floor: float = 0.0

    @property
    def final_residual_norm(self) -> float:
        return self.steps[-1][1].residual_norm if self.steps else math.inf

    @property
    def total_iterations(self) -> int:
        return sum(rep.iterations for _, rep in self.steps)

    def to_dict(self) -> dict:
        return {
            "converged": bool(self.converged),
            "filter_kind": self.filter_kind,
            "floor": float(self.floor),
            "total_wall_time": float(self.total_wall_time),
            "final_solution": None
            if self.final_solution is None
            else [float(v) for v in self.final_solution],
            "steps": [
                {"constant": float(c), "report": rep.to_dict()} for c, rep in self.steps
            ],
        }


def continue_solve(problem: IndirectProblem, eta0, filter_kind,
                   schedule: ContinuationSchedule | None = None,
                   integ: IntegratorConfig | None = None,
                   root_cfg: RootSolveConfig | None = None,
                   rng_seed=0) -> ContinuationReport:
    """Drive the smoothing constant from schedule.start down to its floor.

    At each constant the TPBVP is solved from the current guess; a
    converged solution seeds the next, 10x smaller constant.  On failure
    the guess is nudged by (constant/100) * uniform[0,1]^dim, up to
    max_retries times per level (nudges accumulate within a level).
    Exhausting the retries ends the run with converged=False and the
    step history intact.
    """
    kind = FilterKind(filter_kind)
    if schedule is None:
        schedule = ContinuationSchedule.for_filter(kind)
    if integ is None:
        integ = problem.default_integrator_config()
    if root_cfg is None:
        root_cfg = problem.default_root_config()
    rng = np.random.default_rng(rng_seed)
    eta = problem.check_eta(eta0).copy()

    report = ContinuationReport(
        converged=False, filter_kind=kind.value, floor=schedule.floor
    )
    t_start = time.perf_counter()
    for constant in schedule.constants():
        filt = SmoothingFilter(kind, constant)
        retries = 0
        while True:
            step = solve_root(
                lambda e: problem.residual(e, filt, integ), eta, root_cfg
            )
            report.steps.append((constant, step))
            if step.converged:
                eta = step.solution
                break
            retries += 1
            if retries > schedule.max_retries:
                report.total_wall_time = time.perf_counter() - t_start
                return report
            eta = eta + (constant / 100.0) * rng.uniform(0.0, 1.0, eta.size)
    report.converged = True
    report.final_solution = eta
    report.total_wall_time = time.perf_counter() - t_start
    return report
