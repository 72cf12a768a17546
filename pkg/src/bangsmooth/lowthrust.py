"""Minimal-fuel low-thrust orbit transfer in modified equinoctial elements.

A spacecraft moves from an elliptical transfer orbit to the circular
geosynchronous target under a throttled thrust of at most T_max, chosen
to burn the least propellant over a fixed transfer time.  States are
the six equinoctial elements (p, f, g, h, k, L) plus mass; the adjoint
system adds seven costates.  The optimal thrust direction opposes the
primer vector M^T lambda, the throttle is bang-bang in the switching
value S = 1 - g0*Isp*||M^T lambda||/m - lambda_m, and the smoothed
throttle is u = (1 - sat(S))/2.

Shooting variable: eta = (lam_p, lam_f, lam_g, lam_h, lam_k, lam_L,
lam_m)(0), seven components, final time fixed.  The residual stacks the
five terminal element violations (L is free) with lam_L(t_f) and
lam_m(t_f).

Integration runs in canonical units: length = target semilatus rectum,
mass = initial mass, time scaled so mu = 1.  Trajectories returned by
the problem keep those units (meta carries the conversions); fuel and
revolution summaries are reported in kilograms and whole turns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .numerics import IntegratorConfig, RootSolveConfig, Trajectory, refine_zero_crossings
from .problems import IndirectProblem
from .smoothing import ControlBounds, SmoothingFilter, smooth_control

__all__ = [
    "SpacecraftParams",
    "MeeState",
    "TransferBoundary",
    "LowThrustProblem",
    "DegenerateDirectionError",
    "mee_matrices",
    "thrust_direction",
    "switching_function",
    "lowthrust_aug_dynamics",
    "lowthrust_residual",
    "count_revolutions",
    "fuel_consumed",
]

_THROTTLE = ControlBounds(0.0, 1.0)

# below this primer-vector norm the thrust direction is undefined
DEGENERATE_PSI = 1e-14


class DegenerateDirectionError(ValueError):
    """||M^T lambda|| is too small to define a thrust direction."""


@dataclass(frozen=True)
class SpacecraftParams:
    """Engine and gravity constants.

    m0 in kg, T_max in N, I_sp in s, g0 in m/s^2, mu in km^3/s^2.
    """

    m0: float = 1500.0
    T_max: float = 1.0
    I_sp: float = 2000.0
    g0: float = 9.80665
    mu: float = 398600.4418

    def __post_init__(self) -> None:
        for name in ("m0", "T_max", "I_sp", "g0", "mu"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, v)

    @property
    def thrust_to_weight(self) -> float:
        return self.T_max / (self.m0 * self.g0)

    @property
    def max_mass_rate(self) -> float:
        """Full-throttle propellant flow, kg/s."""
        return self.T_max / (self.g0 * self.I_sp)

    @property
    def exhaust_velocity(self) -> float:
        """g0 * I_sp in km/s, matching the km-based gravity constant."""
        return self.g0 * self.I_sp * 1e-3


@dataclass(frozen=True)
class MeeState:
    """One orbit state in modified equinoctial elements (p in km, L in rad)."""

    p: float
    f: float
    g: float
    h: float
    k: float
    L: float

    def __post_init__(self) -> None:
        for name in ("p", "f", "g", "h", "k", "L"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if self.p <= 0.0:
            raise ValueError(f"semilatus rectum must be positive, got {self.p!r}")

    def to_array(self) -> np.ndarray:
        return np.array([self.p, self.f, self.g, self.h, self.k, self.L])


@dataclass(frozen=True)
class TransferBoundary:
    """Fixed-time transfer: full initial element set, target set with L free."""

    initial: MeeState
    p_f: float
    f_f: float
    g_f: float
    h_f: float
    k_f: float
    t_f: float

    def __post_init__(self) -> None:
        for name in ("p_f", "f_f", "g_f", "h_f", "k_f", "t_f"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)
        if self.p_f <= 0.0:
            raise ValueError("target semilatus rectum must be positive")
        if self.t_f <= 0.0:
            raise ValueError("transfer time must be positive")

    @classmethod
    def gto_to_geo(cls) -> "TransferBoundary":
        """The 1000-hour geostationary-transfer-to-geosynchronous case."""
        return cls(
            initial=MeeState(p=11623.0, f=0.75, g=0.0, h=0.0612, k=0.0, L=math.pi),
            p_f=42165.0,
            f_f=0.0,
            g_f=0.0,
            h_f=0.0,
            k_f=0.0,
            t_f=3.6e6,
        )

    def target_array(self) -> np.ndarray:
        return np.array([self.p_f, self.f_f, self.g_f, self.h_f, self.k_f])


def _mee_array(x) -> np.ndarray:
    if isinstance(x, MeeState):
        return x.to_array()
    a = np.asarray(x, dtype=float).ravel()
    if a.shape[0] < 6:
        raise ValueError(f"expected 6 equinoctial elements, got shape {a.shape}")
    return a[:6]


def mee_matrices(x, mu: float):
    """Thrust-influence matrix M (6x3, columns radial/transverse/normal)
    and control-free drift D for two-body equinoctial motion.

    Units follow the inputs: consistent (length, time) for p and mu give
    rates per that time unit and accelerations in length/time^2.
    """
    p, f, g, h, k, L = _mee_array(x)
    cL = math.cos(L)
    sL = math.sin(L)
    w = 1.0 + f * cL + g * sL
    if p <= 0.0:
        raise ValueError(f"semilatus rectum must be positive, got {p!r}")
    if w <= 0.0:
        raise ValueError(f"nonpositive w = 1 + f cos L + g sin L = {w!r}")
    sq = math.sqrt(p / mu)
    s2 = 1.0 + h * h + k * k
    xi = h * sL - k * cL
    M = sq * np.array(
        [
            [0.0, 2.0 * p / w, 0.0],
            [sL, ((w + 1.0) * cL + f) / w, -g * xi / w],
            [-cL, ((w + 1.0) * sL + g) / w, f * xi / w],
            [0.0, 0.0, s2 * cL / (2.0 * w)],
            [0.0, 0.0, s2 * sL / (2.0 * w)],
            [0.0, 0.0, xi / w],
        ]
    )
    D = np.zeros(6)
    D[5] = math.sqrt(mu * p) * (w / p) ** 2
    return M, D


def thrust_direction(M: np.ndarray, lam) -> np.ndarray:
    """Unit thrust direction opposing M^T lambda."""
    v = np.asarray(M, dtype=float).T @ np.asarray(lam, dtype=float)
    n = float(np.linalg.norm(v))
    if n < DEGENERATE_PSI:
        raise DegenerateDirectionError(
            f"||M^T lambda|| = {n!r} leaves the thrust direction undefined"
        )
    return -v / n


def switching_function(x, lam, m: float, lam_m: float, params: SpacecraftParams) -> float:
    """Engine switching value S; thrust is favored where S < 0.

    Physical units: x in km, m in kg, costates conjugate to km/kg states.
    """
    if m <= 0.0:
        raise ValueError(f"mass must be positive, got {m!r}")
    M, _ = mee_matrices(x, params.mu)
    psi = float(np.linalg.norm(M.T @ np.asarray(lam, dtype=float)))
    return 1.0 - params.exhaust_velocity * psi / m - lam_m


def count_revolutions(L0: float, Lf: float) -> int:
    """Whole revolutions swept by the true longitude."""
    if Lf < L0:
        raise ValueError(f"true longitude decreased: {Lf!r} < {L0!r}")
    return int(math.floor((Lf - L0) / (2.0 * math.pi)))


def fuel_consumed(traj: Trajectory, params: SpacecraftParams) -> float:
    """Propellant burned along a canonical-unit trajectory, in kg.

    The mass column is in units of the initial mass, so the drop times
    m0 is the physical consumption.
    """
    m = traj.samples[:, 6]
    return float((m[0] - m[-1]) * params.m0)


@njit(cache=True)
def _lowthrust_rhs(t, y, par):
    # y = (p, f, g, h, k, L, m, lp, lf, lg, lh, lk, lL, lm, integral of u)
    # par = (mu, thrust force, exhaust velocity, filter code, filter constant)
    mu = par[0]
    F = par[1]
    ve = par[2]
    p = y[0]
    f = y[1]
    g = y[2]
    h = y[3]
    k = y[4]
    L = y[5]
    m = y[6]
    lp = y[7]
    lf = y[8]
    lg = y[9]
    lh = y[10]
    lk = y[11]
    lL = y[12]
    lm = y[13]
    out = np.empty(15)
    cL = math.cos(L)
    sL = math.sin(L)
    w = 1.0 + f * cL + g * sL
    if p <= 0.0 or w <= 0.0 or m <= 0.0:
        out[:] = np.nan
        return out
    sq = math.sqrt(p / mu)
    s2 = 1.0 + h * h + k * k
    xi = h * sL - k * cL

    # M^T lambda in (radial, transverse, normal) components
    A = lf * sL - lg * cL
    B = 2.0 * p * lp + lf * ((w + 1.0) * cL + f) + lg * ((w + 1.0) * sL + g)
    G = lL + f * lg - g * lf
    C = xi * G + 0.5 * s2 * (lh * cL + lk * sL)
    vr = sq * A
    vt = sq * B / w
    vn = sq * C / w
    psi = math.sqrt(vr * vr + vt * vt + vn * vn)

    S = 1.0 - ve * psi / m - lm
    if par[3] == 1.0:
        sat = S / math.sqrt(par[4] + S * S)
    elif par[3] == 2.0:
        sat = math.tanh(S / par[4])
    else:
        sat = 1.0 if S > 0.0 else (-1.0 if S < 0.0 else 0.0)
    u = 0.5 * (1.0 - sat)

    DL = math.sqrt(mu * p) * (w / p) * (w / p)
    wL = g * cL - f * sL

    # drift, mass flow, throttle quadrature
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    out[3] = 0.0
    out[4] = 0.0
    out[5] = DL
    out[6] = -u * F / ve
    out[14] = u
    # gravity-gradient part of the costate rates (the L drift)
    out[7] = 1.5 * lL * DL / p
    out[8] = -2.0 * lL * DL * cL / w
    out[9] = -2.0 * lL * DL * sL / w
    out[10] = 0.0
    out[11] = 0.0
    out[12] = -2.0 * lL * DL * wL / w
    out[13] = 0.0

    if psi > 1e-14:
        acc = u * F / m
        ar = -acc * vr / psi
        at = -acc * vt / psi
        an = -acc * vn / psi
        out[0] += sq * (2.0 * p / w) * at
        out[1] += sq * (sL * ar + (((w + 1.0) * cL + f) / w) * at - (g * xi / w) * an)
        out[2] += sq * (-cL * ar + (((w + 1.0) * sL + g) / w) * at + (f * xi / w) * an)
        out[3] += sq * (0.5 * s2 * cL / w) * an
        out[4] += sq * (0.5 * s2 * sL / w) * an
        out[5] += sq * (xi / w) * an

        # dpsi/dx assembled from the component partials of (vr, vt, vn)
        uFm = u * F / m
        dvt = vt / (2.0 * p) + sq * 2.0 * lp / w
        dpsi = (vr * vr / (2.0 * p) + vt * dvt + vn * vn / (2.0 * p)) / psi
        out[7] += uFm * dpsi

        dB = lf * (cL * cL + 1.0) + lg * cL * sL
        dC = xi * lg
        dvt = sq * (dB - (B / w) * cL) / w
        dvn = sq * (dC - (C / w) * cL) / w
        dpsi = (vt * dvt + vn * dvn) / psi
        out[8] += uFm * dpsi

        dB = lf * sL * cL + lg * (sL * sL + 1.0)
        dC = -xi * lf
        dvt = sq * (dB - (B / w) * sL) / w
        dvn = sq * (dC - (C / w) * sL) / w
        dpsi = (vt * dvt + vn * dvn) / psi
        out[9] += uFm * dpsi

        dC = sL * G + h * (lh * cL + lk * sL)
        dpsi = vn * sq * dC / (w * psi)
        out[10] += uFm * dpsi

        dC = -cL * G + k * (lh * cL + lk * sL)
        dpsi = vn * sq * dC / (w * psi)
        out[11] += uFm * dpsi

        dA = lf * cL + lg * sL
        dB = lf * (wL * cL - (w + 1.0) * sL) + lg * (wL * sL + (w + 1.0) * cL)
        dC = (h * cL + k * sL) * G + 0.5 * s2 * (lk * cL - lh * sL)
        dvr = sq * dA
        dvt = sq * (dB - (B / w) * wL) / w
        dvn = sq * (dC - (C / w) * wL) / w
        dpsi = (vr * dvr + vt * dvt + vn * dvn) / psi
        out[12] += uFm * dpsi

        out[13] = -u * F * psi / (m * m)
    return out


class LowThrustProblem(IndirectProblem):
    """Smoothed minimal-fuel transfer as a fixed-time shooting problem."""

    name = "gto-geo"
    n_state = 7
    n_costate = 7
    shooting_dim = 7
    free_final_time = False
    state_names = (
        "p",
        "f",
        "g",
        "h",
        "k",
        "L",
        "m",
        "lam_p",
        "lam_f",
        "lam_g",
        "lam_h",
        "lam_k",
        "lam_L",
        "lam_m",
    )
    bounds = _THROTTLE
    # costate guess sampling box for convergence studies
    guess_domain = ((0.0, 0.1),) * 7

    def __init__(self, params: SpacecraftParams | None = None,
                 boundary: TransferBoundary | None = None):
        self.params = params if params is not None else SpacecraftParams()
        self.boundary = boundary if boundary is not None else TransferBoundary.gto_to_geo()
        # canonical units: length = target semilatus rectum, mass = initial
        # mass, time chosen so the gravity parameter becomes 1
        self.DU = self.boundary.p_f
        self.TU = math.sqrt(self.DU ** 3 / self.params.mu)
        self.MU = self.params.m0
        # thrust force and exhaust velocity in canonical units; the N ->
        # kg km/s^2 conversion is the 1e-3
        self.thrust_canonical = (
            self.params.T_max * 1e-3 * self.TU ** 2 / (self.MU * self.DU)
        )
        self.ve_canonical = self.params.exhaust_velocity * self.TU / self.DU
        self.tf_canonical = self.boundary.t_f / self.TU

    # -- problem definition --------------------------------------------

    def rhs_kernel(self):
        return _lowthrust_rhs

    def rhs_params(self, filt: SmoothingFilter) -> np.ndarray:
        return np.array(
            [1.0, self.thrust_canonical, self.ve_canonical,
             float(filt.code), float(filt.constant)]
        )

    def aug_dynamics(self, t, y, filt):
        y = np.asarray(y, dtype=float)
        if y.size == 15:
            return _lowthrust_rhs(float(t), y, self.rhs_params(filt))
        full = np.append(y, 0.0)
        return _lowthrust_rhs(float(t), full, self.rhs_params(filt))[:14]

    def initial_augmented_state(self, eta):
        b = self.boundary
        x0 = np.array(
            [b.initial.p / self.DU, b.initial.f, b.initial.g,
             b.initial.h, b.initial.k, b.initial.L]
        )
        return np.concatenate([x0, [self.params.m0 / self.MU], np.asarray(eta, float)])

    def pack_integration_state(self, y0_aug):
        # extra quadrature state accumulates the throttle integral
        return np.append(y0_aug, 0.0)

    def time_span(self, eta):
        return (0.0, self.tf_canonical)

    def terminal_residual(self, y_final, eta, filt):
        b = self.boundary
        return np.array(
            [
                y_final[0] - b.p_f / self.DU,
                y_final[1] - b.f_f,
                y_final[2] - b.g_f,
                y_final[3] - b.h_f,
                y_final[4] - b.k_f,
                y_final[12],
                y_final[13],
            ]
        )

    # -- observables -----------------------------------------------------

    def primer_norm(self, y) -> float:
        """||M^T lambda|| at one canonical augmented state."""
        M, _ = mee_matrices(y[:6], 1.0)
        return float(np.linalg.norm(M.T @ np.asarray(y[7:13], dtype=float)))

    def switching_value(self, y) -> float:
        return 1.0 - self.ve_canonical * self.primer_norm(y) / y[6] - y[13]

    def control_and_switching(self, y, filt):
        S = self.switching_value(y)
        return smooth_control(S, _THROTTLE, filt), S

    def hamiltonian(self, y, filt) -> float:
        """Canonical Hamiltonian with the optimal direction substituted;
        conserved along trajectories of the autonomous dynamics."""
        u, _ = self.control_and_switching(y, filt)
        psi = self.primer_norm(y)
        _, D = mee_matrices(y[:6], 1.0)
        F = self.thrust_canonical
        return float(
            u * F / self.ve_canonical * (1.0 - y[13])
            - u * F * psi / y[6]
            + y[12] * D[5]
        )

    def cost_of(self, traj: Trajectory) -> float:
        return fuel_consumed(traj, self.params)

    def switch_times(self, traj: Trajectory, tol: float = 1e-9) -> np.ndarray:
        return refine_zero_crossings(
            traj, lambda t, y: self.switching_value(y), tol
        )

    def finalize_trajectory(self, traj: Trajectory, filt: SmoothingFilter) -> Trajectory:
        n = traj.n_samples
        u = np.empty(n)
        s = np.empty(n)
        for i in range(n):
            u[i], s[i] = self.control_and_switching(traj.samples[i], filt)
        deriv = traj.derivatives
        out = Trajectory(
            times=traj.times,
            samples=np.ascontiguousarray(traj.samples[:, :14]),
            control=u,
            switching=s,
            derivatives=None if deriv is None else np.ascontiguousarray(deriv[:, :14]),
            meta=dict(traj.meta),
        )
        out.meta["throttle_integral"] = float(traj.samples[-1, 14]) * self.TU
        out.meta["time_unit"] = self.TU
        out.meta["length_unit"] = self.DU
        out.meta["mass_unit"] = self.MU
        return out

    # -- defaults and summaries ------------------------------------------

    def default_integrator_config(self) -> IntegratorConfig:
        return IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12, max_steps=400_000)

    def default_root_config(self) -> RootSolveConfig:
        # useful roots sit ~1 away from the guess domain, so start with
        # order-one steps; residuals rest on a ~1e-8 propagation noise
        # floor, which 1e-6 sits safely above
        return RootSolveConfig(
            residual_tol=1e-6,
            max_iterations=60,
            min_damping=1e-4,
            initial_step_norm=1.0,
            max_step_norm=100.0,
        )

    def summary_metrics(self, traj: Trajectory, filt: SmoothingFilter) -> dict:
        s = traj.switching
        sgn = np.sign(s)
        sgn = sgn[sgn != 0.0]
        switches = int(np.count_nonzero(sgn[1:] != sgn[:-1]))
        return {
            "delta_m_kg": fuel_consumed(traj, self.params),
            "final_mass_kg": float(traj.samples[-1, 6] * self.MU),
            "revolutions": count_revolutions(traj.samples[0, 5], traj.samples[-1, 5]),
            "switches": switches,
            "throttle_integral": float(traj.meta["throttle_integral"]),
        }


def lowthrust_aug_dynamics(t, y, filt: SmoothingFilter, params: SpacecraftParams) -> np.ndarray:
    """Augmented state/costate rates in physical units (km, s, kg).

    Mirrors the canonical kernel with physical constants: useful for
    unit-convention checks and as a readable reference of the dynamics.
    """
    par = np.array(
        [params.mu, params.T_max * 1e-3, params.exhaust_velocity,
         float(filt.code), float(filt.constant)]
    )
    y = np.asarray(y, dtype=float)
    full = np.append(y, 0.0) if y.size == 14 else y
    out = _lowthrust_rhs(float(t), full, par)
    return out[:14] if y.size == 14 else out


def lowthrust_residual(eta, filt: SmoothingFilter,
                       integ: IntegratorConfig | None = None,
                       boundary: TransferBoundary | None = None,
                       params: SpacecraftParams | None = None) -> np.ndarray:
    """Shooting residual of the transfer for one guess of eta."""
    problem = LowThrustProblem(params=params, boundary=boundary)
    return problem.residual(eta, filt, integ)
