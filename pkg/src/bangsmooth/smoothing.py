"""Saturation filters that smooth bang-bang switching laws.

A discontinuous optimal control jumps between its bounds wherever the
switching value S changes sign.  Replacing sign(S) with a smooth
saturation, either the normalized L2 filter x/sqrt(delta + x^2) or a
scaled tanh, turns the control into a differentiable feedback that
approaches the bang-bang limit as the smoothing constant shrinks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

__all__ = [
    "FilterKind",
    "SmoothingFilter",
    "ControlBounds",
    "sat_l2",
    "sat_tanh",
    "smooth_control",
    "hard_control",
]

# integer codes used by the jitted dynamics kernels
HARD_SIGN_CODE = 0
L2_NORM_CODE = 1
TANH_CODE = 2


class FilterKind(Enum):
    """Which saturation replaces sign(S) in the control law."""

    HARD_SIGN = "hard"
    L2_NORM = "l2"
    TANH = "tanh"


_KIND_CODES = {
    FilterKind.HARD_SIGN: HARD_SIGN_CODE,
    FilterKind.L2_NORM: L2_NORM_CODE,
    FilterKind.TANH: TANH_CODE,
}


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def sat_l2(x: float, delta: float) -> float:
    """Normalized L2 saturation x / sqrt(delta + x^2).

    Odd, strictly inside (-1, 1) for delta > 0, and approaching
    sign(x) as delta -> 0+.
    """
    x = _check_finite("x", x)
    delta = float(delta)
    if not (delta > 0.0) or not math.isfinite(delta):
        raise ValueError(f"delta must be a positive finite number, got {delta!r}")
    return x / math.sqrt(delta + x * x)


def sat_tanh(x: float, rho: float) -> float:
    """Scaled hyperbolic tangent saturation tanh(x / rho)."""
    x = _check_finite("x", x)
    rho = float(rho)
    if not (rho > 0.0) or not math.isfinite(rho):
        raise ValueError(f"rho must be a positive finite number, got {rho!r}")
    return math.tanh(x / rho)


@dataclass(frozen=True)
class SmoothingFilter:
    """A saturation kind plus its smoothing constant.

    ``constant`` is delta for the L2 filter and rho for the tanh
    filter; the hard sign ignores it.
    """

    kind: FilterKind
    constant: float = 0.0

    def __post_init__(self) -> None:
        if not isinstance(self.kind, FilterKind):
            raise ValueError(f"kind must be a FilterKind, got {self.kind!r}")
        c = float(self.constant)
        object.__setattr__(self, "constant", c)
        if self.kind is not FilterKind.HARD_SIGN:
            if not (c > 0.0) or not math.isfinite(c):
                raise ValueError(
                    f"{self.kind.value} filter needs a positive finite constant, got {c!r}"
                )

    @classmethod
    def hard(cls) -> "SmoothingFilter":
        return cls(FilterKind.HARD_SIGN, 0.0)

    @classmethod
    def l2(cls, delta: float) -> "SmoothingFilter":
        return cls(FilterKind.L2_NORM, delta)

    @classmethod
    def tanh(cls, rho: float) -> "SmoothingFilter":
        return cls(FilterKind.TANH, rho)

    @property
    def code(self) -> int:
        """Integer kind code for packing into kernel parameter arrays."""
        return _KIND_CODES[self.kind]

    def with_constant(self, constant: float) -> "SmoothingFilter":
        return SmoothingFilter(self.kind, constant)

    def value(self, x: float) -> float:
        """Saturation response in [-1, 1]; sign(x) for the hard kind."""
        if self.kind is FilterKind.L2_NORM:
            return sat_l2(x, self.constant)
        if self.kind is FilterKind.TANH:
            return sat_tanh(x, self.constant)
        x = _check_finite("x", x)
        if x > 0.0:
            return 1.0
        if x < 0.0:
            return -1.0
        return 0.0

    def describe(self) -> str:
        if self.kind is FilterKind.HARD_SIGN:
            return "hard"
        return f"{self.kind.value}({self.constant:g})"


@dataclass(frozen=True)
class ControlBounds:
    """Admissible scalar control interval [u_min, u_max]."""

    u_min: float
    u_max: float

    def __post_init__(self) -> None:
        lo = _check_finite("u_min", self.u_min)
        hi = _check_finite("u_max", self.u_max)
        object.__setattr__(self, "u_min", lo)
        object.__setattr__(self, "u_max", hi)
        if not lo < hi:
            raise ValueError(f"need u_min < u_max, got [{lo}, {hi}]")

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.u_max + self.u_min)

    @property
    def halfwidth(self) -> float:
        return 0.5 * (self.u_max - self.u_min)


def hard_control(S: float, bounds: ControlBounds) -> float:
    """Bang-bang law: u_max for S < 0, u_min for S > 0, midpoint at S = 0."""
    S = _check_finite("S", S)
    if S < 0.0:
        return bounds.u_max
    if S > 0.0:
        return bounds.u_min
    return bounds.midpoint


def smooth_control(S: float, bounds: ControlBounds, filt: SmoothingFilter) -> float:
    """Smoothed bang-bang law.

    u = ((u_max + u_min) - (u_max - u_min) * sat(S)) / 2, which slides
    from u_max (S << 0) to u_min (S >> 0) and reproduces hard_control,
    including its midpoint tie-break, when the filter is the hard sign.
    """
    return bounds.midpoint - bounds.halfwidth * filt.value(S)
