"""Minimal-time harmonic oscillator benchmark.

Drive (x1, x2) with x1' = x2, x2' = -x1 + u, |u| <= 1 from a given
state to a given target in least time.  The costates obey l1' = l2,
l2' = -l1, the switching value is S = l2, and the smoothed control is
u = -sat(S).  Shooting variable: eta = (l1(0), l2(0), t_f).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .numerics import IntegratorConfig, RootSolveConfig, Trajectory, refine_zero_crossings
from .problems import IndirectProblem
from .smoothing import ControlBounds, SmoothingFilter, smooth_control

__all__ = ["OscillatorConfig", "OscillatorProblem"]

_BOUNDS = ControlBounds(-1.0, 1.0)


@dataclass(frozen=True)
class OscillatorConfig:
    """Boundary states of the transfer: start (x1, x2) and target."""

    x1_initial: float = 1.0
    x2_initial: float = 1.0
    x1_target: float = 0.0
    x2_target: float = 0.0

    def __post_init__(self) -> None:
        for name in ("x1_initial", "x2_initial", "x1_target", "x2_target"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)


@njit(cache=True)
def _oscillator_rhs(t, y, p):
    # y = (x1, x2, l1, l2); p = (filter code, smoothing constant)
    S = y[3]
    if p[0] == 1.0:
        sat = S / math.sqrt(p[1] + S * S)
    elif p[0] == 2.0:
        sat = math.tanh(S / p[1])
    else:
        sat = 1.0 if S > 0.0 else (-1.0 if S < 0.0 else 0.0)
    u = -sat
    out = np.empty(4)
    out[0] = y[1]
    out[1] = -y[0] + u
    out[2] = y[3]
    out[3] = -y[2]
    return out


class OscillatorProblem(IndirectProblem):
    """Smoothed minimal-time oscillator as a shooting problem."""

    name = "oscillator"
    n_state = 2
    n_costate = 2
    shooting_dim = 3
    free_final_time = True
    state_names = ("x1", "x2", "lam1", "lam2")
    bounds = _BOUNDS
    # (lam1, lam2, tf) sampling box for convergence studies
    guess_domain = ((0.0, 1.0), (0.0, 1.0), (1.0, 3.0))

    def __init__(self, config: OscillatorConfig | None = None):
        self.config = config if config is not None else OscillatorConfig()

    def aug_dynamics(self, t, y, filt):
        y = np.asarray(y, dtype=float)
        return _oscillator_rhs(float(t), y, self.rhs_params(filt))

    def rhs_kernel(self):
        return _oscillator_rhs

    def rhs_params(self, filt):
        return np.array([float(filt.code), float(filt.constant)])

    def initial_augmented_state(self, eta):
        c = self.config
        return np.array([c.x1_initial, c.x2_initial, eta[0], eta[1]])

    def time_span(self, eta):
        return (0.0, float(eta[2]))

    def control_and_switching(self, y, filt):
        S = float(y[3])
        return smooth_control(S, _BOUNDS, filt), S

    def hamiltonian(self, t, y, filt) -> float:
        """Running Hamiltonian; identically zero along an exact
        minimal-time solution because the final time is free."""
        u, _ = self.control_and_switching(y, filt)
        return float(y[2] * y[1] + y[3] * (-y[0] + u) + 1.0)

    def terminal_residual(self, y_final, eta, filt):
        c = self.config
        return np.array(
            [
                y_final[0] - c.x1_target,
                y_final[1] - c.x2_target,
                self.hamiltonian(eta[2], y_final, filt),
            ]
        )

    def cost_of(self, traj: Trajectory) -> float:
        return float(traj.times[-1])

    def switch_times(self, traj: Trajectory, tol: float = 1e-9) -> np.ndarray:
        return refine_zero_crossings(traj, lambda t, y: y[3], tol)

    def default_integrator_config(self) -> IntegratorConfig:
        # the nominal solve needs ~600 accepted steps at 1e-9; the tight
        # step budget makes stray Newton probes into huge-costate
        # regions (near-discontinuous switching) fail fast instead of
        # grinding
        return IntegratorConfig(abs_tol=1e-9, rel_tol=1e-9, max_steps=30_000)

    def default_root_config(self) -> RootSolveConfig:
        # conservative first steps: the sought costates and final time
        # sit within ~2.5 of any Table-domain guess, and letting Newton
        # leap farther mostly lands in spurious short-horizon basins
        return RootSolveConfig(
            residual_tol=1e-9,
            max_iterations=80,
            min_damping=1e-5,
            initial_step_norm=0.5,
            max_step_norm=1e3,
        )

    def summary_metrics(self, traj: Trajectory, filt: SmoothingFilter) -> dict:
        switches = self.switch_times(traj, tol=1e-9)
        return {
            "final_time": float(traj.times[-1]),
            "switches": int(switches.size),
            "first_switch": float(switches[0]) if switches.size else math.nan,
        }
