"""Shared numerical machinery: adaptive Runge-Kutta propagation, dense
trajectory storage, switching-time refinement, finite-difference
Jacobians, and a damped Newton root solver.

The integrator is an embedded explicit Dormand-Prince 5(4) pair with a
PI step-size controller.  The stepping loop is written once and
compiled twice: a plain-Python version that accepts arbitrary callables
and a numba-jitted version used when the dynamics is itself a jitted
kernel, which is what the flight problems provide.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numba.core.dispatcher import Dispatcher

__all__ = [
    "IntegrationError",
    "StepLimitError",
    "BlowupError",
    "EvaluationError",
    "IntegratorConfig",
    "RootSolveConfig",
    "SolveReport",
    "Trajectory",
    "integrate",
    "integrate_final_state",
    "refine_zero_crossings",
    "fd_jacobian",
    "solve_root",
    "write_trajectory_csv",
    "read_trajectory_csv",
]


class EvaluationError(RuntimeError):
    """A residual or dynamics evaluation failed in a recoverable way."""


class IntegrationError(EvaluationError):
    """Base class for propagation failures; always catchable."""


class StepLimitError(IntegrationError):
    """The step budget ran out before reaching the end of the span."""


class BlowupError(IntegrationError):
    """Non-finite derivative, or step size underflow while the state diverges."""


# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0])
_DP_A = np.array(
    [
        [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    ]
)
_DP_B = np.array([35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0])
# fifth-order weights minus the embedded fourth-order weights
_DP_E = np.array(
    [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_BETA = 0.04  # PI controller integral-of-log gain (Lund stabilization)
_EXPO = 0.2 - 0.75 * _BETA

_STATUS_OK = 0
_STATUS_STEP_LIMIT = 1
_STATUS_BAD_DERIVATIVE = 2
_STATUS_UNDERFLOW = 3


def _dp54_loop(rhs, y0, t0, tf, rtol, atol, h_init, max_steps, params, record):
    """Advance y' = rhs(t, y, params) from t0 to tf.  With record != 0
    every accepted step is stored; otherwise only the initial and
    current states are kept (cheap final-state propagation).  Returns
    (status, times, states, derivs, count)."""
    n = y0.shape[0]
    eps = 2.220446049250313e-16

    f0 = rhs(t0, y0, params)
    ok = True
    for i in range(n):
        if not math.isfinite(f0[i]):
            ok = False
    cap = 512 if record != 0 else 2
    ts = np.empty(cap)
    ys = np.empty((cap, n))
    fs = np.empty((cap, n))
    ts[0] = t0
    for i in range(n):
        ys[0, i] = y0[i]
        fs[0, i] = f0[i]
    if not ok:
        return _STATUS_BAD_DERIVATIVE, ts, ys, fs, 1

    # automatic initial step (Hairer-Norsett-Wanner heuristic)
    h = h_init
    if h <= 0.0:
        d0 = 0.0
        d1 = 0.0
        for i in range(n):
            sc = atol + rtol * abs(y0[i])
            d0 += (y0[i] / sc) ** 2
            d1 += (f0[i] / sc) ** 2
        d0 = math.sqrt(d0 / n)
        d1 = math.sqrt(d1 / n)
        if d0 < 1e-5 or d1 < 1e-5:
            h0 = 1e-6
        else:
            h0 = 0.01 * d0 / d1
        if h0 > tf - t0:
            h0 = tf - t0
        y1 = np.empty(n)
        for i in range(n):
            y1[i] = y0[i] + h0 * f0[i]
        f1 = rhs(t0 + h0, y1, params)
        d2 = 0.0
        for i in range(n):
            sc = atol + rtol * abs(y0[i])
            d2 += ((f1[i] - f0[i]) / sc) ** 2
        d2 = math.sqrt(d2 / n) / h0
        dm = max(d1, d2)
        if dm <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / dm) ** 0.2
        h = min(100.0 * h0, h1, tf - t0)

    K = np.empty((7, n))
    ystage = np.empty(n)
    ynew = np.empty(n)
    t = t0
    y = np.empty(n)
    fcur = np.empty(n)
    for i in range(n):
        y[i] = y0[i]
        fcur[i] = f0[i]

    count = 1
    facold = 1e-4
    rejected = False
    attempts = 0
    status = _STATUS_OK

    while t < tf:
        attempts += 1
        if attempts > max_steps:
            status = _STATUS_STEP_LIMIT
            break
        hmin = 16.0 * eps * max(abs(t), abs(tf))
        if h < hmin:
            status = _STATUS_UNDERFLOW
            break
        if t + h >= tf:
            h = tf - t

        for i in range(n):
            K[0, i] = fcur[i]
        for s in range(1, 6):
            for i in range(n):
                acc = 0.0
                for j in range(s):
                    acc += _DP_A[s, j] * K[j, i]
                ystage[i] = y[i] + h * acc
            ks = rhs(t + _DP_C[s] * h, ystage, params)
            for i in range(n):
                K[s, i] = ks[i]
        for i in range(n):
            acc = 0.0
            for j in range(6):
                acc += _DP_B[j] * K[j, i]
            ynew[i] = y[i] + h * acc
        k6 = rhs(t + h, ynew, params)
        for i in range(n):
            K[6, i] = k6[i]

        # scaled RMS error over the fifth/fourth-order difference
        err = 0.0
        bad = False
        for i in range(n):
            ei = 0.0
            for j in range(7):
                ei += _DP_E[j] * K[j, i]
            ei *= h
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            r = ei / sc
            err += r * r
            if not math.isfinite(ynew[i]) or not math.isfinite(ei):
                bad = True
        err = math.sqrt(err / n)

        if bad or not math.isfinite(err):
            h *= 0.1
            rejected = True
            continue

        if err <= 1.0:
            tnew = t + h
            if record != 0:
                if count >= ts.shape[0]:
                    cap2 = 2 * ts.shape[0]
                    ts2 = np.empty(cap2)
                    ys2 = np.empty((cap2, n))
                    fs2 = np.empty((cap2, n))
                    for a in range(count):
                        ts2[a] = ts[a]
                        for i in range(n):
                            ys2[a, i] = ys[a, i]
                            fs2[a, i] = fs[a, i]
                    ts = ts2
                    ys = ys2
                    fs = fs2
                idx = count
                count += 1
            else:
                idx = 1
                count = 2
            ts[idx] = tnew
            for i in range(n):
                ys[idx, i] = ynew[i]
                fs[idx, i] = K[6, i]

            t = tnew
            for i in range(n):
                y[i] = ynew[i]
                fcur[i] = K[6, i]

            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * (facold ** _BETA) * (err ** (-_EXPO))
                if factor > _MAX_FACTOR:
                    factor = _MAX_FACTOR
                elif factor < _MIN_FACTOR:
                    factor = _MIN_FACTOR
            if rejected and factor > 1.0:
                factor = 1.0
            h *= factor
            facold = max(err, 1e-4)
            rejected = False
        else:
            factor = _SAFETY * (err ** (-0.2))
            if factor < _MIN_FACTOR:
                factor = _MIN_FACTOR
            h *= factor
            rejected = True

    return status, ts, ys, fs, count


_dp54_loop_jit = njit(cache=True)(_dp54_loop)


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances and budget for adaptive propagation.

    ``max_steps`` caps attempted steps (accepted plus rejected), so a
    reject storm cannot loop forever.  ``initial_step`` of zero picks
    the first step automatically.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_steps: int = 1_000_000
    initial_step: float = 0.0

    def __post_init__(self) -> None:
        for name in ("abs_tol", "rel_tol"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {v!r}")
        if int(self.max_steps) < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps!r}")
        object.__setattr__(self, "max_steps", int(self.max_steps))
        h0 = float(self.initial_step)
        object.__setattr__(self, "initial_step", h0)
        if not math.isfinite(h0) or h0 < 0.0:
            raise ValueError(f"initial_step must be finite and >= 0, got {h0!r}")


@dataclass
class Trajectory:
    """Accepted-step samples of one propagation.

    ``samples`` holds the full integration state per accepted time;
    ``control`` and ``switching`` carry the throttle and switching
    value per sample once a problem fills them in.  ``derivatives``
    caches the state derivative at each sample (free from the FSAL
    stage of the integrator) and enables cubic Hermite interpolation
    between samples.
    """

    times: np.ndarray
    samples: np.ndarray
    control: np.ndarray | None = None
    switching: np.ndarray | None = None
    derivatives: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.samples = np.asarray(self.samples, dtype=float)
        if self.times.ndim != 1 or self.samples.ndim != 2:
            raise ValueError("times must be 1-d and samples 2-d")
        n = self.times.shape[0]
        if self.samples.shape[0] != n or n < 1:
            raise ValueError("samples and times must align, with at least one sample")
        if n > 1 and not np.all(np.diff(self.times) > 0.0):
            raise ValueError("times must be strictly increasing")
        for name in ("control", "switching"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr, dtype=float)
                if arr.shape != (n,):
                    raise ValueError(f"{name} must have one value per sample")
                setattr(self, name, arr)
        if self.derivatives is not None:
            self.derivatives = np.asarray(self.derivatives, dtype=float)
            if self.derivatives.shape != self.samples.shape:
                raise ValueError("derivatives must match samples in shape")

    @property
    def n_samples(self) -> int:
        return self.times.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def initial_state(self) -> np.ndarray:
        return self.samples[0].copy()

    def final_state(self) -> np.ndarray:
        return self.samples[-1].copy()

    def interpolate(self, t: float) -> np.ndarray:
        """State at time t, cubic Hermite between samples (linear when
        no derivatives are stored)."""
        t = float(t)
        t0, t1 = self.times[0], self.times[-1]
        if not (t0 <= t <= t1):
            raise ValueError(f"t={t} outside [{t0}, {t1}]")
        if self.n_samples == 1:
            return self.samples[0].copy()
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), self.n_samples - 2)
        h = self.times[i + 1] - self.times[i]
        th = (t - self.times[i]) / h
        ya, yb = self.samples[i], self.samples[i + 1]
        if self.derivatives is None:
            return (1.0 - th) * ya + th * yb
        fa, fb = self.derivatives[i], self.derivatives[i + 1]
        th2 = th * th
        th3 = th2 * th
        return (
            (2.0 * th3 - 3.0 * th2 + 1.0) * ya
            + (th3 - 2.0 * th2 + th) * h * fa
            + (-2.0 * th3 + 3.0 * th2) * yb
            + (th3 - th2) * h * fb
        )

    def to_csv(self, path, state_names) -> None:
        write_trajectory_csv(self, path, state_names)


def _run_loop(dynamics, y0, t_span, config, args, record):
    if config is None:
        config = IntegratorConfig()
    y0 = np.ascontiguousarray(np.asarray(y0, dtype=np.float64).ravel())
    if y0.size == 0 or not np.all(np.isfinite(y0)):
        raise ValueError("y0 must be a non-empty finite vector")
    t0, tf = (float(t_span[0]), float(t_span[1]))
    if not (math.isfinite(t0) and math.isfinite(tf)):
        raise ValueError(f"t_span must be finite, got {t_span!r}")
    if tf < t0:
        raise ValueError(f"t_span must satisfy t0 <= tf, got {t_span!r}")

    if isinstance(dynamics, Dispatcher):
        params = np.ascontiguousarray(
            np.asarray(() if args is None else args, dtype=np.float64).ravel()
        )
        rhs = dynamics
        loop = _dp54_loop_jit
    else:
        params = np.empty(0)
        if args is None:
            rhs = lambda t, y, p: np.asarray(dynamics(t, y), dtype=np.float64)
        else:
            rhs = lambda t, y, p: np.asarray(dynamics(t, y, args), dtype=np.float64)
        loop = _dp54_loop

    if tf == t0:
        f0 = np.asarray(rhs(t0, y0, params), dtype=float)
        return (
            np.array([t0]),
            y0.reshape(1, -1).copy(),
            f0.reshape(1, -1).copy(),
        )

    status, ts, ys, fs, count = loop(
        rhs, y0, t0, tf, config.rel_tol, config.abs_tol,
        config.initial_step, config.max_steps, params, record,
    )
    t_reached = ts[count - 1]
    if status == _STATUS_STEP_LIMIT:
        raise StepLimitError(
            f"gave up after {config.max_steps} attempted steps at t={t_reached!r} "
            f"(target {tf!r})"
        )
    if status == _STATUS_BAD_DERIVATIVE:
        raise BlowupError(f"non-finite derivative at t={t_reached!r}")
    if status == _STATUS_UNDERFLOW:
        raise BlowupError(
            f"step size underflow at t={t_reached!r} (finite-time divergence "
            "or unresolvable discontinuity)"
        )
    return ts[:count].copy(), ys[:count].copy(), fs[:count].copy()


def integrate(dynamics, y0, t_span, config: IntegratorConfig | None = None, args=None) -> Trajectory:
    """Propagate dynamics over t_span, returning every accepted step.

    ``dynamics`` is either a plain callable ``f(t, y)`` (or
    ``f(t, y, args)`` when ``args`` is given) or a numba-jitted kernel
    ``f(t, y, params)`` with ``params`` a float64 vector, in which case
    the jitted stepping loop is used.

    Raises StepLimitError when the step budget runs out and
    BlowupError on non-finite derivatives or step-size underflow; both
    are catchable IntegrationError subclasses.
    """
    ts, ys, fs = _run_loop(dynamics, y0, t_span, config, args, 1)
    return Trajectory(times=ts, samples=ys, derivatives=fs)


def integrate_final_state(dynamics, y0, t_span, config: IntegratorConfig | None = None, args=None):
    """Like integrate() but keeps only the endpoint, returning
    (t_final, y_final).  Used by shooting residuals, where storing
    every accepted step of every probe would be pure churn."""
    ts, ys, _ = _run_loop(dynamics, y0, t_span, config, args, 0)
    return float(ts[-1]), ys[-1].copy()


def refine_zero_crossings(traj: Trajectory, scalar, tol: float = 1e-9):
    """Times where ``scalar(t, state)`` changes sign along a trajectory.

    Adjacent samples bracketing a strict sign change are refined by
    bisection on the interpolated trajectory until the bracket is
    shorter than ``tol``.  Tangential zeros (touching without sign
    change) are excluded.
    """
    if not (tol > 0.0):
        raise ValueError(f"tol must be positive, got {tol!r}")
    times = traj.times
    vals = np.array([float(scalar(times[i], traj.samples[i])) for i in range(traj.n_samples)])
    crossings = []
    last_sign = 0.0
    last_idx = -1
    for i in range(traj.n_samples):
        s = math.copysign(1.0, vals[i]) if vals[i] != 0.0 else 0.0
        if s == 0.0:
            continue
        if last_sign != 0.0 and s != last_sign:
            ta, tb = float(times[last_idx]), float(times[i])
            ga = vals[last_idx]
            while tb - ta > tol:
                tm = 0.5 * (ta + tb)
                gm = float(scalar(tm, traj.interpolate(tm)))
                if gm == 0.0:
                    ta = tb = tm
                    break
                if (gm > 0.0) == (ga > 0.0):
                    ta, ga = tm, gm
                else:
                    tb = tm
            crossings.append(0.5 * (ta + tb))
        last_sign = s
        last_idx = i
    return np.array(crossings)


def fd_jacobian(F, x, fd_step: float = 1e-7) -> np.ndarray:
    """Central-difference Jacobian of F at x.

    Column i uses the step fd_step * (|x_i| + 1), giving O(h^2)
    truncation error.
    """
    if not (fd_step > 0.0):
        raise ValueError(f"fd_step must be positive, got {fd_step!r}")
    x = np.asarray(x, dtype=float).ravel()
    cols = []
    for i in range(x.size):
        h = fd_step * (abs(x[i]) + 1.0)
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        fp = np.asarray(F(xp), dtype=float).ravel()
        fm = np.asarray(F(xm), dtype=float).ravel()
        cols.append((fp - fm) / (2.0 * h))
    return np.column_stack(cols)


@dataclass(frozen=True)
class RootSolveConfig:
    """Settings for the damped Newton iteration.

    ``max_step_norm`` clamps the length of any single update, and
    ``initial_step_norm`` sets the adaptive clamp's starting value
    (it grows on clean full steps and shrinks when backtracking was
    needed).  A conservative initial clamp keeps wild early Newton
    directions from launching the iterate into spurious basins.
    """

    residual_tol: float = 1e-9
    max_iterations: int = 60
    fd_step: float = 1e-7
    backtrack_factor: float = 0.5
    min_damping: float = 1e-4
    max_step_norm: float = math.inf
    initial_step_norm: float = math.inf

    def __post_init__(self) -> None:
        if not (float(self.residual_tol) > 0.0):
            raise ValueError(f"residual_tol must be positive, got {self.residual_tol!r}")
        if int(self.max_iterations) < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations!r}")
        if not (float(self.fd_step) > 0.0):
            raise ValueError(f"fd_step must be positive, got {self.fd_step!r}")
        if not (0.0 < float(self.backtrack_factor) < 1.0):
            raise ValueError(
                f"backtrack_factor must lie in (0, 1), got {self.backtrack_factor!r}"
            )
        if not (0.0 < float(self.min_damping) < 1.0):
            raise ValueError(f"min_damping must lie in (0, 1), got {self.min_damping!r}")
        if not (float(self.max_step_norm) > 0.0):
            raise ValueError(f"max_step_norm must be positive, got {self.max_step_norm!r}")
        if not (0.0 < float(self.initial_step_norm) <= float(self.max_step_norm)):
            raise ValueError(
                f"initial_step_norm must lie in (0, max_step_norm], got {self.initial_step_norm!r}"
            )
        object.__setattr__(self, "residual_tol", float(self.residual_tol))
        object.__setattr__(self, "max_iterations", int(self.max_iterations))
        object.__setattr__(self, "fd_step", float(self.fd_step))
        object.__setattr__(self, "backtrack_factor", float(self.backtrack_factor))
        object.__setattr__(self, "min_damping", float(self.min_damping))
        object.__setattr__(self, "max_step_norm", float(self.max_step_norm))
        object.__setattr__(self, "initial_step_norm", float(self.initial_step_norm))


@dataclass
class SolveReport:
    """Outcome of one root solve; converged means ||F||_2 <= residual_tol."""

    converged: bool
    solution: np.ndarray
    residual_norm: float
    iterations: int
    wall_time: float
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "converged": bool(self.converged),
            "solution": [float(v) for v in np.asarray(self.solution).ravel()],
            "residual_norm": float(self.residual_norm),
            "iterations": int(self.iterations),
            "wall_time": float(self.wall_time),
            "reason": self.reason,
        }


def _eval_residual_norm(F, x):
    """Evaluate F(x), mapping recoverable failures and non-finite
    output to (None, inf)."""
    try:
        r = np.asarray(F(x), dtype=float).ravel()
    except EvaluationError:
        return None, math.inf
    if not np.all(np.isfinite(r)):
        return None, math.inf
    return r, float(np.linalg.norm(r))


def _lm_step(J, Fx, mu):
    n = J.shape[1]
    A = J.T @ J
    scale = max(float(np.trace(A)) / n, 1e-30)
    try:
        return np.linalg.solve(A + mu * scale * np.eye(n), -J.T @ Fx)
    except np.linalg.LinAlgError:
        return None


def _trust_step(J, Fx, radius):
    """Newton step when it fits inside the radius; otherwise the
    regularized step of the same length.

    Clamping an exploding Newton step geometrically keeps a direction
    dominated by the Jacobian's smallest singular vectors, which is
    useless when J is near singular.  Solving (J^T J + mu I) s = -J^T F
    with mu chosen so ||s|| = radius rotates the step toward the
    gradient instead, which is what makes the walk robust far from a
    root.  Returns (step, used_regularization).
    """
    try:
        U, sig, Vt = np.linalg.svd(J, full_matrices=False)
    except np.linalg.LinAlgError:
        return None, False
    b = U.T @ Fx
    tiny = sig[0] * 1e-14 if sig.size and sig[0] > 0.0 else 0.0
    inv = np.where(sig > tiny, sig, np.inf)
    newton = -(Vt.T @ (b / inv))
    if not np.all(np.isfinite(newton)):
        return None, False
    if float(np.linalg.norm(newton)) <= radius:
        return newton, False
    # mu on the trust boundary: ||s(mu)|| falls monotonically from the
    # Newton length toward 0, so bisect on a bracketed exponent
    def step_norm(mu):
        return float(np.linalg.norm(sig * b / (sig * sig + mu)))

    lo = 0.0
    hi = max(sig[0] ** 2, 1.0) * 1e-12 + 1e-300
    while step_norm(hi) > radius:
        lo = hi
        hi *= 4.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if step_norm(mid) > radius:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    step = -(Vt.T @ (sig * b / (sig * sig + mu)))
    if not np.all(np.isfinite(step)):
        return None, False
    return step, True


def solve_root(F, x0, config: RootSolveConfig | None = None) -> SolveReport:
    """Damped Newton iteration on F(x) = 0 with central-difference
    Jacobians, backtracking line search, and a regularized
    least-squares fallback for singular or unproductive steps.

    Residual evaluations that raise EvaluationError (integration
    failures included) count as infinite residual, so the line search
    simply backs away from them.  Never raises on non-convergence: the
    report carries converged=False and a reason.
    """
    if config is None:
        config = RootSolveConfig()
    started = time.perf_counter()
    x = np.asarray(x0, dtype=float).ravel().copy()

    def report(conv, norm, iters, reason=""):
        return SolveReport(
            converged=bool(conv),
            solution=x.copy(),
            residual_norm=float(norm),
            iterations=int(iters),
            wall_time=time.perf_counter() - started,
            reason=reason,
        )

    Fx, nFx = _eval_residual_norm(F, x)
    if Fx is None:
        return report(False, math.inf, 0, "residual evaluation failed at the initial guess")
    if Fx.size != x.size:
        raise ValueError(
            f"F returns {Fx.size} components for {x.size} unknowns; "
            "the root problem must be square"
        )
    if nFx <= config.residual_tol:
        return report(True, nFx, 0)

    radius = min(config.initial_step_norm, config.max_step_norm)
    for it in range(1, config.max_iterations + 1):
        try:
            J = fd_jacobian(F, x, config.fd_step)
        except EvaluationError:
            return report(False, nFx, it - 1, "jacobian evaluation failed")
        if not np.all(np.isfinite(J)):
            return report(False, nFx, it - 1, "non-finite jacobian")

        dx, regularized = _trust_step(J, Fx, radius)
        if dx is None:
            dx = _lm_step(J, Fx, 1e-10)
            if dx is None or not np.all(np.isfinite(dx)):
                return report(False, nFx, it - 1, "singular jacobian")
        dxn = float(np.linalg.norm(dx))

        # backtracking line search along the (possibly clamped)
        # Newton direction
        accepted = False
        damping = 1.0
        while damping >= config.min_damping:
            xn = x + damping * dx
            Fn, nFn = _eval_residual_norm(F, xn)
            if Fn is not None and nFn < nFx * (1.0 - 1e-4 * damping):
                x, Fx, nFx = xn, Fn, nFn
                accepted = True
                break
            damping *= config.backtrack_factor

        if accepted:
            if damping == 1.0:
                # clean step: let the clamp relax
                radius = min(config.max_step_norm, max(radius * 2.0, 1e-12))
            else:
                # progress needed damping: tighten toward what worked,
                # but never collapse more than 4x per iteration (deeply
                # damped steps would otherwise strand later iterations
                # at a microscopic radius)
                radius = max(damping * min(dxn, radius), 0.25 * radius, 1e-12)
        else:
            # regularized least-squares ladder when the Newton
            # direction makes no progress
            mu = 1e-6
            while mu <= 1e10:
                cand = _lm_step(J, Fx, mu)
                if cand is not None and np.all(np.isfinite(cand)):
                    cn = float(np.linalg.norm(cand))
                    if cn > radius:
                        cand = cand * (radius / cn)
                        cn = radius
                    xn = x + cand
                    Fn, nFn = _eval_residual_norm(F, xn)
                    if Fn is not None and nFn < nFx:
                        x, Fx, nFx = xn, Fn, nFn
                        accepted = True
                        radius = max(cn, 0.25 * radius, 1e-12)
                        break
                mu *= 100.0

        if not accepted:
            return report(False, nFx, it, "no descent step found")
        if nFx <= config.residual_tol:
            return report(True, nFx, it)

    return report(False, nFx, config.max_iterations, "iteration budget exhausted")


def write_trajectory_csv(traj: Trajectory, path, state_names) -> None:
    """Write ``t,<state names...>,u,S`` rows with 17 significant digits
    (lossless for IEEE doubles)."""
    state_names = list(state_names)
    if len(state_names) != traj.dim:
        raise ValueError(
            f"got {len(state_names)} state names for {traj.dim} state components"
        )
    if traj.control is None or traj.switching is None:
        raise ValueError("trajectory needs control and switching values for CSV export")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + state_names + ["u", "S"])
        for i in range(traj.n_samples):
            row = [traj.times[i], *traj.samples[i], traj.control[i], traj.switching[i]]
            writer.writerow([f"{v:.17g}" for v in row])


def read_trajectory_csv(path):
    """Read a trajectory CSV back; returns (header list, float array)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"empty trajectory file {path!r}")
    header = rows[0]
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    return header, data
