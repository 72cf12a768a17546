"""Command-line front end: single solves, continuation runs, Monte-Carlo
batches, and trajectory export.

Configuration comes from an optional YAML file plus flags; flags win.
Physical quantities in config files use km, s, kg, N; canonical-unit
scaling stays internal to the problems.  Exit codes: 0 success, 1
solver non-convergence or runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import yaml

from .continuation import DEFAULT_FLOORS, ContinuationSchedule, continue_solve
from .lowthrust import LowThrustProblem, SpacecraftParams, TransferBoundary
from .montecarlo import (
    GuessDomain,
    run_monte_carlo,
    write_records_csv,
    write_records_jsonl,
    write_stats_json,
)
from .numerics import EvaluationError, IntegratorConfig, RootSolveConfig
from .oscillator import OscillatorProblem
from .problems import solve_problem
from .smoothing import FilterKind, SmoothingFilter

__all__ = ["RunConfig", "main", "read_json"]

PROBLEM_NAMES = ("oscillator", "gto-geo")

_TOP_KEYS = {
    "problem", "filter", "integrator", "solver", "schedule", "guess",
    "domain", "seed", "threads", "out_dir", "spacecraft", "boundary",
    "montecarlo",
}
_FILTER_KEYS = {"kind", "constant", "delta", "rho"}
_INTEG_KEYS = {"abs_tol", "rel_tol", "max_steps", "initial_step"}
_SOLVER_KEYS = {
    "residual_tol", "max_iterations", "fd_step", "backtrack_factor",
    "min_damping", "max_step_norm", "initial_step_norm",
}
_SCHED_KEYS = {"start", "floor", "factor", "max_retries"}
_MC_KEYS = {"n", "method"}
_SC_KEYS = {"m0", "T_max", "I_sp", "g0", "mu"}
_MEE_KEYS = {"p", "f", "g", "h", "k", "L"}


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2."""


def _require_mapping(obj, where):
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a mapping, got {type(obj).__name__}")
    return obj


def _check_keys(mapping, allowed, where):
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")
    return mapping


def _parse_guess(text):
    try:
        return [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"could not parse guess {text!r}: {exc}") from None


@dataclass
class RunConfig:
    """Everything one command run needs, merged from file and flags."""

    problem: str = "oscillator"
    filter_kind: str = "l2"
    constant: float | None = None
    guess: list | None = None
    domain: dict = field(default_factory=dict)
    seed: int = 0
    threads: int = 1
    out_dir: str = "."
    integrator: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    spacecraft: dict = field(default_factory=dict)
    boundary: dict = field(default_factory=dict)
    n: int | None = None
    method: str = "direct"

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        data = {}
        config_path = getattr(args, "config", None)
        if config_path:
            try:
                with open(config_path) as fh:
                    data = yaml.safe_load(fh)
            except OSError as exc:
                raise ConfigError(f"cannot read config file: {exc}") from None
            except yaml.YAMLError as exc:
                raise ConfigError(f"malformed config file: {exc}") from None
            data = _require_mapping(data, "config file")
            _check_keys(data, _TOP_KEYS, "config")

        cfg = cls()
        cfg.problem = data.get("problem", cfg.problem)
        cfg.seed = int(data.get("seed", cfg.seed))
        cfg.threads = int(data.get("threads", cfg.threads))
        cfg.out_dir = str(data.get("out_dir", cfg.out_dir))
        if "guess" in data and data["guess"] is not None:
            cfg.guess = [float(v) for v in data["guess"]]
        cfg.domain = _check_keys(
            _require_mapping(data.get("domain"), "domain"), {"lows", "highs"}, "domain"
        )
        cfg.integrator = _check_keys(
            _require_mapping(data.get("integrator"), "integrator"),
            _INTEG_KEYS, "integrator",
        )
        cfg.solver = _check_keys(
            _require_mapping(data.get("solver"), "solver"), _SOLVER_KEYS, "solver"
        )
        cfg.schedule = _check_keys(
            _require_mapping(data.get("schedule"), "schedule"), _SCHED_KEYS, "schedule"
        )
        cfg.spacecraft = _check_keys(
            _require_mapping(data.get("spacecraft"), "spacecraft"),
            _SC_KEYS, "spacecraft",
        )
        cfg.boundary = _check_keys(
            _require_mapping(data.get("boundary"), "boundary"),
            {"initial", "target", "t_f"}, "boundary",
        )

        filt = _check_keys(
            _require_mapping(data.get("filter"), "filter"), _FILTER_KEYS, "filter"
        )
        cfg.filter_kind = filt.get("kind", cfg.filter_kind)
        for key in ("constant", "delta", "rho"):
            if key in filt:
                cfg.constant = float(filt[key])

        mc = _check_keys(
            _require_mapping(data.get("montecarlo"), "montecarlo"), _MC_KEYS,
            "montecarlo",
        )
        if "n" in mc:
            cfg.n = int(mc["n"])
        cfg.method = mc.get("method", cfg.method)

        # flags override file values; argparse leaves unset flags as None
        def flag(name):
            return getattr(args, name, None)

        if flag("problem") is not None:
            cfg.problem = args.problem
        if flag("filter_kind") is not None:
            cfg.filter_kind = args.filter_kind
        if flag("delta") is not None:
            cfg.constant = args.delta
        if flag("rho") is not None:
            cfg.constant = args.rho
        if flag("delta") is not None and flag("rho") is not None:
            raise ConfigError("give --delta or --rho, not both")
        if flag("guess") is not None:
            cfg.guess = _parse_guess(args.guess)
        if flag("seed") is not None:
            cfg.seed = args.seed
        if flag("threads") is not None:
            cfg.threads = args.threads
        if flag("out_dir") is not None:
            cfg.out_dir = args.out_dir
        if flag("abs_tol") is not None:
            cfg.integrator = {**cfg.integrator, "abs_tol": args.abs_tol}
        if flag("rel_tol") is not None:
            cfg.integrator = {**cfg.integrator, "rel_tol": args.rel_tol}
        if flag("solver_tol") is not None:
            cfg.solver = {**cfg.solver, "residual_tol": args.solver_tol}
        for name in ("start", "floor", "factor", "max_retries"):
            if flag(name) is not None:
                cfg.schedule = {**cfg.schedule, name: getattr(args, name)}
        if flag("n") is not None:
            cfg.n = args.n
        if flag("method") is not None:
            cfg.method = args.method

        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.problem not in PROBLEM_NAMES:
            raise ConfigError(
                f"unknown problem {self.problem!r}; available: {', '.join(PROBLEM_NAMES)}"
            )
        try:
            FilterKind(self.filter_kind)
        except ValueError:
            raise ConfigError(f"unknown filter kind {self.filter_kind!r}") from None
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    # -- builders ------------------------------------------------------------

    def build_problem(self):
        if self.problem == "oscillator":
            if self.spacecraft or self.boundary:
                raise ConfigError("spacecraft/boundary config applies to gto-geo only")
            return OscillatorProblem()
        try:
            params = dataclasses.replace(
                SpacecraftParams(), **{k: float(v) for k, v in self.spacecraft.items()}
            )
            boundary = TransferBoundary.gto_to_geo()
            if self.boundary:
                initial = _check_keys(
                    _require_mapping(self.boundary.get("initial"), "boundary.initial"),
                    _MEE_KEYS, "boundary.initial",
                )
                target = _check_keys(
                    _require_mapping(self.boundary.get("target"), "boundary.target"),
                    _MEE_KEYS - {"L"}, "boundary.target",
                )
                updates = {}
                if initial:
                    updates["initial"] = dataclasses.replace(
                        boundary.initial, **{k: float(v) for k, v in initial.items()}
                    )
                updates.update({f"{k}_f": float(v) for k, v in target.items()})
                if "t_f" in self.boundary:
                    updates["t_f"] = float(self.boundary["t_f"])
                boundary = dataclasses.replace(boundary, **updates)
            return LowThrustProblem(params, boundary)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad gto-geo configuration: {exc}") from None

    def build_filter(self, constant=None) -> SmoothingFilter:
        kind = FilterKind(self.filter_kind)
        if constant is None:
            constant = self.constant
        if kind is FilterKind.HARD_SIGN:
            return SmoothingFilter.hard()
        if constant is None:
            constant = DEFAULT_FLOORS[kind]
        try:
            return SmoothingFilter(kind, constant)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def build_integrator(self, problem) -> IntegratorConfig:
        base = problem.default_integrator_config()
        try:
            return dataclasses.replace(base, **self.integrator)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad integrator settings: {exc}") from None

    def build_root_config(self, problem, batch: bool = False) -> RootSolveConfig:
        base = problem.montecarlo_root_config() if batch else problem.default_root_config()
        try:
            return dataclasses.replace(base, **self.solver)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad solver settings: {exc}") from None

    def build_schedule(self) -> ContinuationSchedule:
        kind = FilterKind(self.filter_kind)
        if kind is FilterKind.HARD_SIGN:
            raise ConfigError("continuation needs a smooth filter (l2 or tanh)")
        try:
            return ContinuationSchedule.for_filter(kind, **self.schedule)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad schedule: {exc}") from None

    def build_domain(self, problem) -> GuessDomain:
        try:
            if self.domain:
                if set(self.domain) != {"lows", "highs"}:
                    raise ConfigError("domain needs both lows and highs")
                return GuessDomain(
                    np.asarray(self.domain["lows"], float),
                    np.asarray(self.domain["highs"], float),
                )
            return GuessDomain.from_problem(problem)
        except ValueError as exc:
            raise ConfigError(f"bad guess domain: {exc}") from None

    def resolve_guess(self, problem, rng) -> np.ndarray:
        """Explicit guess when given, else a seeded draw from the domain."""
        if self.guess is not None:
            guess = np.asarray(self.guess, float)
            if guess.shape != (problem.shooting_dim,):
                raise ConfigError(
                    f"{problem.name} needs a guess with {problem.shooting_dim} "
                    f"components, got {guess.size}"
                )
            return guess
        return self.build_domain(problem).sample(rng)


# -- artifact io --------------------------------------------------------------


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _ensure_out_dir(cfg: RunConfig) -> str:
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory: {exc}") from None
    return cfg.out_dir


def _report_dict(cfg, problem, filt, report, traj):
    out = {
        "problem": problem.name,
        "filter": {"kind": filt.kind.value, "constant": filt.constant},
        "cost": None,
        "metrics": {},
    }
    out.update(report.to_dict())
    if traj is not None:
        out["cost"] = float(problem.cost_of(traj))
        out["metrics"] = {
            k: (int(v) if isinstance(v, (int, np.integer)) else float(v))
            for k, v in problem.summary_metrics(traj, filt).items()
        }
    return out


# -- commands ------------------------------------------------------------------


def cmd_solve(cfg: RunConfig) -> int:
    problem = cfg.build_problem()
    filt = cfg.build_filter()
    integ = cfg.build_integrator(problem)
    root_cfg = cfg.build_root_config(problem)
    rng = np.random.default_rng(cfg.seed)
    guess = cfg.resolve_guess(problem, rng)
    out_dir = _ensure_out_dir(cfg)

    report, traj = solve_problem(problem, guess, filt, integ, root_cfg)
    payload = _report_dict(cfg, problem, filt, report, traj)
    payload["guess"] = [float(v) for v in guess]
    write_json(payload, os.path.join(out_dir, "report.json"))
    if traj is not None:
        traj.to_csv(os.path.join(out_dir, "trajectory.csv"), problem.state_names)

    if report.converged:
        print(
            f"{problem.name}: converged in {report.iterations} iterations, "
            f"residual {report.residual_norm:.3e}, cost {payload['cost']:.10g}"
        )
        return 0
    print(
        f"{problem.name}: did not converge ({report.reason}), "
        f"residual {report.residual_norm:.3e}",
        file=sys.stderr,
    )
    return 1


def cmd_continuation(cfg: RunConfig) -> int:
    problem = cfg.build_problem()
    schedule = cfg.build_schedule()
    integ = cfg.build_integrator(problem)
    root_cfg = cfg.build_root_config(problem)
    rng = np.random.default_rng(cfg.seed)
    guess = cfg.resolve_guess(problem, rng)
    out_dir = _ensure_out_dir(cfg)

    crep = continue_solve(
        problem, guess, FilterKind(cfg.filter_kind), schedule, integ, root_cfg,
        rng_seed=rng,
    )
    history = {"problem": problem.name, "guess": [float(v) for v in guess]}
    history.update(crep.to_dict())
    write_json(history, os.path.join(out_dir, "history.json"))

    traj = None
    filt = cfg.build_filter(constant=schedule.floor)
    if crep.converged:
        traj = problem.propagate(crep.final_solution, filt, integ)
        traj.to_csv(os.path.join(out_dir, "trajectory.csv"), problem.state_names)
    final_report = crep.steps[-1][1]
    payload = _report_dict(cfg, problem, filt, final_report, traj)
    payload["guess"] = [float(v) for v in guess]
    payload["continuation_steps"] = len(crep.steps)
    write_json(payload, os.path.join(out_dir, "report.json"))

    if crep.converged:
        print(
            f"{problem.name}: continuation reached {schedule.floor:g} in "
            f"{len(crep.steps)} steps, residual {crep.final_residual_norm:.3e}, "
            f"cost {payload['cost']:.10g}"
        )
        return 0
    print(
        f"{problem.name}: continuation stalled at constant "
        f"{crep.steps[-1][0]:g} after {len(crep.steps)} steps",
        file=sys.stderr,
    )
    return 1


def cmd_montecarlo(cfg: RunConfig) -> int:
    problem = cfg.build_problem()
    if cfg.n is None or cfg.n < 1:
        raise ConfigError(f"montecarlo needs --n >= 1, got {cfg.n}")
    if cfg.method not in ("direct", "continuation"):
        raise ConfigError(f"unknown method {cfg.method!r}")
    domain = cfg.build_domain(problem)
    if domain.dim != problem.shooting_dim:
        raise ConfigError(
            f"domain dimension {domain.dim} does not match "
            f"{problem.name}'s shooting dimension {problem.shooting_dim}"
        )
    integ = cfg.build_integrator(problem)
    root_cfg = cfg.build_root_config(problem, batch=True)
    schedule = None
    if cfg.method == "continuation":
        schedule = cfg.build_schedule()
        filt = cfg.build_filter(constant=schedule.start)
    else:
        filt = cfg.build_filter()
    out_dir = _ensure_out_dir(cfg)

    stats, records = run_monte_carlo(
        problem, domain, cfg.n, cfg.seed, method=cfg.method, filt=filt,
        integ=integ, root_cfg=root_cfg, schedule=schedule, threads=cfg.threads,
    )
    payload = stats.to_dict()
    payload["problem"] = problem.name
    payload["filter_kind"] = cfg.filter_kind
    payload["method"] = cfg.method
    payload["seed"] = cfg.seed
    write_json(payload, os.path.join(out_dir, "stats.json"))
    write_records_jsonl(records, os.path.join(out_dir, "records.jsonl"))
    write_records_csv(records, os.path.join(out_dir, "records.csv"))

    print(
        f"{problem.name}: {stats.n_converged}/{stats.n_runs} converged "
        f"({stats.converged_fraction:.2%}), cost mean {stats.cost_mean:.10g}"
    )
    return 0


def cmd_export(cfg: RunConfig) -> int:
    problem = cfg.build_problem()
    if cfg.guess is None:
        raise ConfigError("export needs --guess (the shooting variable to propagate)")
    filt = cfg.build_filter()
    integ = cfg.build_integrator(problem)
    rng = np.random.default_rng(cfg.seed)
    guess = cfg.resolve_guess(problem, rng)
    out_dir = _ensure_out_dir(cfg)

    traj = problem.propagate(guess, filt, integ)
    path = os.path.join(out_dir, "trajectory.csv")
    traj.to_csv(path, problem.state_names)
    print(f"{problem.name}: wrote {traj.n_samples} samples to {path}")
    return 0


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file; flags override it")
    common.add_argument("--problem", choices=PROBLEM_NAMES)
    common.add_argument(
        "--filter", dest="filter_kind", choices=[k.value for k in FilterKind]
    )
    common.add_argument("--delta", type=float, help="L2 filter smoothing constant")
    common.add_argument("--rho", type=float, help="tanh filter smoothing constant")
    common.add_argument(
        "--guess", help="comma-separated shooting variable; omit for a seeded draw"
    )
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--abs-tol", dest="abs_tol", type=float)
    common.add_argument("--rel-tol", dest="rel_tol", type=float)
    common.add_argument(
        "--solver-tol", dest="solver_tol", type=float,
        help="root-solver residual tolerance",
    )

    sched = argparse.ArgumentParser(add_help=False)
    sched.add_argument("--start", type=float, help="first smoothing constant")
    sched.add_argument("--floor", type=float, help="final smoothing constant")
    sched.add_argument("--factor", type=float, help="per-step constant multiplier")
    sched.add_argument("--max-retries", dest="max_retries", type=int)

    parser = argparse.ArgumentParser(
        prog="bangsmooth",
        description="Smoothed bang-bang optimal control by indirect shooting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser(
        "solve", parents=[common],
        help="one shooting solve at a fixed smoothing constant",
    )
    sub.add_parser(
        "continue", parents=[common, sched],
        help="continuation from the start constant down to the floor",
    )
    mc = sub.add_parser(
        "montecarlo", parents=[common, sched],
        help="batch of seeded random-guess solves",
    )
    mc.add_argument("--n", type=int, help="number of runs")
    mc.add_argument("--method", choices=("direct", "continuation"))
    sub.add_parser(
        "export", parents=[common],
        help="propagate a given shooting variable and write the trajectory",
    )
    return parser


_COMMANDS = {
    "solve": cmd_solve,
    "continue": cmd_continuation,
    "montecarlo": cmd_montecarlo,
    "export": cmd_export,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
