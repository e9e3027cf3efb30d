"""ACC car-following model: parameters, controller right-hand side, equilibria.

The follower accelerates toward a constant-time-gap spacing policy and the
lead vehicle's speed, both sensed with a fixed delay:

    ds/dt = v_lead(t) - v(t)
    dv/dt = k1*[s(t-tau) - eta - th*v(t)] + k2*[v_lead(t-tau) - v(t)]

Everything in this module is algebraic; integration lives in `accstab.sim`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import InfeasibleEquilibrium

__all__ = [
    "AccParams",
    "ParamBounds",
    "VehicleSpec",
    "State",
    "PAPER_BOUNDS",
    "spacing_policy_speed",
    "acceleration",
    "equilibrium",
]


@dataclass(frozen=True)
class AccParams:
    """Controller gains and geometry.

    k1: gain on the spacing-policy error, 1/s^2 (> 0)
    k2: gain on relative velocity, 1/s (>= 0)
    th: desired effective time gap, s (> 0)
    tau: sensor delay, s (>= 0)
    eta: jam space gap, m (>= 0)
    """

    k1: float
    k2: float
    th: float
    tau: float
    eta: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value!r}")
        if self.k1 <= 0.0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if self.k2 < 0.0:
            raise ValueError(f"k2 must be >= 0, got {self.k2}")
        if self.th <= 0.0:
            raise ValueError(f"th must be > 0, got {self.th}")
        if self.tau < 0.0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.eta < 0.0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.k1, self.k2, self.th, self.tau, self.eta)


_PARAM_NAMES = ("k1", "k2", "th", "tau", "eta")


@dataclass(frozen=True)
class ParamBounds:
    """Closed box constraints for calibration, (lower, upper) per parameter."""

    k1: tuple[float, float] = (0.0, 1.0)
    k2: tuple[float, float] = (0.0, 1.0)
    th: tuple[float, float] = (0.0, 3.0)
    tau: tuple[float, float] = (0.0, 1.0)
    eta: tuple[float, float] = (5.0, 15.0)

    def __post_init__(self):
        for name in _PARAM_NAMES:
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"{name} bounds must be finite")
            if lo > hi:
                raise ValueError(f"{name} bounds inverted: {lo} > {hi}")
            if lo < 0.0:
                raise ValueError(f"{name} lower bound must be >= 0, got {lo}")

    def lower(self) -> list[float]:
        return [getattr(self, n)[0] for n in _PARAM_NAMES]

    def upper(self) -> list[float]:
        return [getattr(self, n)[1] for n in _PARAM_NAMES]

    def contains(self, params: AccParams, tol: float = 0.0) -> bool:
        values = params.as_tuple()
        for v, lo, hi in zip(values, self.lower(), self.upper()):
            if v < lo - tol or v > hi + tol:
                return False
        return True


PAPER_BOUNDS = ParamBounds()


@dataclass(frozen=True)
class VehicleSpec:
    """A named vehicle: calibrated parameters plus its minimum ACC operating speed."""

    label: str
    params: AccParams
    min_acc_speed: float = 0.0  # m/s; 0 means ACC works down to standstill

    def __post_init__(self):
        if self.min_acc_speed < 0.0:
            raise ValueError(f"min_acc_speed must be >= 0, got {self.min_acc_speed}")


@dataclass(frozen=True)
class State:
    """Space gap (m) and follower speed (m/s)."""

    s: float
    v: float


def spacing_policy_speed(s: float, params: AccParams) -> float:
    """Desired speed for space gap `s` under the constant-time-gap policy.

    Returns (s - eta)/th; negative for s < eta (callers clamp where needed).
    """
    return (s - params.eta) / params.th


def acceleration(s_delayed: float, v_now: float, v_lead_delayed: float,
                 params: AccParams) -> float:
    """Commanded acceleration from delayed gap, current speed, delayed lead speed."""
    return (params.k1 * (s_delayed - params.eta - params.th * v_now)
            + params.k2 * (v_lead_delayed - v_now))


def equilibrium(ring_length: float, n_vehicles: int,
                params: AccParams) -> tuple[float, float]:
    """Uniform-flow equilibrium (s*, v*) on a ring of length `ring_length`.

    Raises InfeasibleEquilibrium when the per-vehicle gap falls below the jam
    gap (negative equilibrium speed).
    """
    if n_vehicles < 1:
        raise ValueError(f"n_vehicles must be >= 1, got {n_vehicles}")
    if ring_length <= 0.0:
        raise ValueError(f"ring_length must be > 0, got {ring_length}")
    s_star = ring_length / n_vehicles
    v_star = spacing_policy_speed(s_star, params)
    if v_star < 0.0:
        raise InfeasibleEquilibrium(
            f"gap {s_star:.3f} m is below the jam gap {params.eta:.3f} m")
    return s_star, v_star
