"""Follower and platoon simulation for the delayed car-following dynamics.

Single followers integrate against a recorded or scripted lead-speed signal;
platoons chain followers front to back (vehicle i only ever reacts to vehicle
i-1, so the cascade is exact).  Disengagement below a vehicle's minimum ACC
operating speed is recorded without altering the dynamics; a space gap at or
below the collision threshold halts the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .errors import BadHistory, NonFiniteState
from .model import AccParams, VehicleSpec
from ._kernel import TAU_ZERO_CUTOFF

__all__ = [
    "Trajectory",
    "SimConfig",
    "History",
    "Event",
    "SimResult",
    "simulate_follower",
    "simulate_platoon",
    "amplification_metrics",
    "AmplificationRow",
]

_EMPTY = np.empty(0)
_ZERO_PATTERN = np.zeros(1)


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled leader/follower speeds and space gap."""

    t0: float
    dt: float
    lead_speed: np.ndarray
    follower_speed: np.ndarray
    space_gap: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lead_speed", np.asarray(self.lead_speed, float))
        object.__setattr__(self, "follower_speed",
                           np.asarray(self.follower_speed, float))
        object.__setattr__(self, "space_gap", np.asarray(self.space_gap, float))
        if self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        n = len(self.lead_speed)
        if n < 2 or len(self.follower_speed) != n or len(self.space_gap) != n:
            raise ValueError("channels must share one length >= 2")
        for name in ("lead_speed", "follower_speed", "space_gap"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite values")
        if np.any(self.lead_speed < 0.0) or np.any(self.follower_speed < 0.0):
            raise ValueError("speeds must be >= 0")

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.lead_speed))

    def __len__(self) -> int:
        return len(self.lead_speed)


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    dt is the output sampling step; internally the integrator refines to at
    most tau/4 whenever the delay is non-negligible.
    """

    dt: float = 0.1
    duration: float = 60.0
    speed_floor: float = 0.0
    collision_gap: float = 0.0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.duration <= 0.0:
            raise ValueError(f"duration must be > 0, got {self.duration}")


@dataclass(frozen=True)
class History:
    """Initial (s, v) samples covering the delay window [0, tau]."""

    t: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", np.asarray(self.t, float))
        object.__setattr__(self, "s", np.asarray(self.s, float))
        object.__setattr__(self, "v", np.asarray(self.v, float))
        if len(self.t) < 1 or len(self.s) != len(self.t) or len(self.v) != len(self.t):
            raise ValueError("history arrays must share one length >= 1")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0.0):
            raise ValueError("history times must be strictly increasing")

    @classmethod
    def constant(cls, s0: float, v0: float) -> "History":
        return cls(np.array([0.0]), np.array([s0]), np.array([v0]))

    def check_covers(self, tau: float, dt: float) -> None:
        """Raise BadHistory unless [0, tau] is covered at resolution <= dt."""
        fuzz = 1e-9 * max(1.0, tau)
        if tau <= TAU_ZERO_CUTOFF:
            return
        if self.t[0] > fuzz or self.t[-1] < tau - fuzz:
            raise BadHistory(
                f"history spans [{self.t[0]:.4f}, {self.t[-1]:.4f}] s "
                f"but must cover [0, {tau:.4f}] s")
        if len(self.t) > 1 and np.max(np.diff(self.t)) > dt + fuzz:
            raise BadHistory(
                f"history resolution {np.max(np.diff(self.t)):.4f} s "
                f"is coarser than dt = {dt} s")


@dataclass(frozen=True)
class Event:
    """A disengagement or collision, ordered by time within a SimResult."""

    kind: str  # "disengage" | "collision"
    vehicle: int  # follower index, 1-based (0 is the lead)
    time: float
    value: float  # speed (m/s) at disengage, gap (m) at collision


@dataclass(frozen=True)
class SimResult:
    """Platoon output: speed rows 0..N (0 = lead), gap rows for followers 1..N."""

    t: np.ndarray
    speeds: np.ndarray  # shape (N+1, n_samples)
    gaps: np.ndarray  # shape (N, n_samples); row i-1 is vehicle i's gap
    events: list[Event] = field(default_factory=list)

    @property
    def n_followers(self) -> int:
        return self.gaps.shape[0]


class _LeadSignal:
    """Internal: either a piecewise-linear series or a follower's solution buffer."""

    __slots__ = ("mode", "t0", "dt", "vals", "h", "pattern", "v", "dv")

    def __init__(self, mode, t0, dt=0.0, vals=_EMPTY, h=0.0,
                 pattern=_ZERO_PATTERN, v=_EMPTY, dv=_EMPTY):
        self.mode = mode
        self.t0 = t0
        self.dt = dt
        self.vals = vals
        self.h = h
        self.pattern = pattern
        self.v = v
        self.dv = dv

    @classmethod
    def from_series(cls, t0, dt, vals):
        return cls(0, t0, dt=dt, vals=np.ascontiguousarray(vals, dtype=float))

    @classmethod
    def from_buffer(cls, t0, h, pattern, v, dv):
        return cls(1, t0, h=h, pattern=pattern, v=v, dv=dv)

    def at(self, t: float) -> float:
        if self.mode == 0:
            return float(_kernel.linear_eval(t, self.t0, self.dt, self.vals))
        return float(_kernel.pattern_eval(t, self.t0, self.h, self.pattern,
                                          len(self.v), self.v, self.dv))


def _kernel_args(lead: _LeadSignal):
    if lead.mode == 0:
        return (0, lead.t0, lead.dt, lead.vals,
                0.0, 1.0, _ZERO_PATTERN, _EMPTY, _EMPTY)
    return (1, lead.t0, 0.0, _EMPTY,
            lead.t0, lead.h, lead.pattern, lead.v, lead.dv)


def _run_kernel(t_start, h, n_steps, pattern, params: AccParams, s0, v0,
                hist_t, hist_s, lead: _LeadSignal, speed_floor,
                extra_offsets=()):
    mode_args = _kernel_args(lead)
    S, V, dS, dV = _kernel.integrate_follower_kernel(
        t_start, h, n_steps, pattern,
        params.k1, params.k2, params.th, params.tau, params.eta, s0, v0,
        np.ascontiguousarray(hist_t, float), np.ascontiguousarray(hist_s, float),
        mode_args[0], mode_args[1], mode_args[2], mode_args[3],
        mode_args[4], mode_args[5], mode_args[6], mode_args[7], mode_args[8],
        speed_floor,
    )
    if not (np.all(np.isfinite(S)) and np.all(np.isfinite(V))):
        raise NonFiniteState("integration produced non-finite state "
                             f"(params {params})")
    return S, V, dS, dV


def _interp_history(hist: History, times: np.ndarray, which: str) -> np.ndarray:
    ys = hist.s if which == "s" else hist.v
    return np.interp(times, hist.t, ys)


def simulate_follower(lead_speed: np.ndarray, params: AccParams,
                      history: History, cfg: SimConfig) -> Trajectory:
    """Integrate one follower behind a recorded lead-speed series.

    `lead_speed` is sampled at cfg.dt from t=0; values beyond its end are held
    constant.  The follower state is pinned to `history` on [0, tau] and
    integrated on [tau, cfg.duration].  Output is sampled at cfg.dt over the
    full window, follower speed clamped below at cfg.speed_floor.
    """
    lead_speed = np.asarray(lead_speed, float)
    if lead_speed.ndim != 1 or len(lead_speed) < 2:
        raise ValueError("lead_speed must be a 1-D series with >= 2 samples")
    if not np.all(np.isfinite(lead_speed)):
        raise ValueError("lead_speed contains non-finite values")
    tau = params.tau
    history.check_covers(tau, cfg.dt)
    t_start = tau if tau > TAU_ZERO_CUTOFF else 0.0
    if cfg.duration <= t_start + cfg.dt:
        raise ValueError("duration leaves no room to integrate past the delay window")

    n_sub = _kernel.refine_substeps(cfg.dt, tau)
    h = cfg.dt / n_sub
    # data kinks sit at j*dt - t_start relative to the grid; delayed solution
    # knots at tau mod h (handled inside build_pattern)
    extra = ((-t_start) % h,) if t_start > 0.0 else ()
    pattern = _kernel.build_pattern(h, tau, extra)

    s0 = float(_interp_history(history, np.array([t_start]), "s")[0])
    v0 = float(_interp_history(history, np.array([t_start]), "v")[0])
    n_steps = int(math.ceil((cfg.duration - t_start) / h - 1e-9))
    lead = _LeadSignal.from_series(0.0, cfg.dt, lead_speed)
    S, V, dS, dV = _run_kernel(t_start, h, n_steps, pattern, params, s0, v0,
                               history.t, history.s, lead, cfg.speed_floor)

    t_out = cfg.dt * np.arange(int(math.floor(cfg.duration / cfg.dt + 1e-9)) + 1)
    v_out = np.empty_like(t_out)
    s_out = np.empty_like(t_out)
    before = t_out < t_start - 1e-12
    v_out[before] = _interp_history(history, t_out[before], "v")
    s_out[before] = _interp_history(history, t_out[before], "s")
    after = ~before
    v_out[after] = _kernel.sample_pattern(t_out[after], t_start, h, pattern, V, dV)
    s_out[after] = _kernel.sample_pattern(t_out[after], t_start, h, pattern, S, dS)
    lead_out = np.array([lead.at(t) for t in t_out])
    return Trajectory(0.0, cfg.dt, lead_out, v_out, s_out)


def simulate_platoon(lead_profile: np.ndarray, fleet: list[VehicleSpec],
                     init: float, cfg: SimConfig) -> SimResult:
    """Simulate a platoon behind a scripted lead-speed profile.

    Every follower starts at its equilibrium gap behind its leader at speed
    `init` with constant history.  Disengage events are recorded when a
    follower first drops below its minimum ACC speed (dynamics continue);
    the run is truncated at the first collision (gap <= cfg.collision_gap).
    """
    if not fleet:
        raise ValueError("fleet must contain at least one vehicle")
    if init < 0.0:
        raise ValueError(f"init speed must be >= 0, got {init}")
    lead_profile = np.asarray(lead_profile, float)
    if lead_profile.ndim != 1 or len(lead_profile) < 2:
        raise ValueError("lead_profile must be a 1-D series with >= 2 samples")

    # common internal grid fine enough for every vehicle's delay
    n_sub = max(_kernel.refine_substeps(cfg.dt, veh.params.tau) for veh in fleet)
    h = cfg.dt / n_sub
    n_steps = int(math.ceil(cfg.duration / h - 1e-9))
    n_out = int(math.floor(cfg.duration / cfg.dt + 1e-9)) + 1
    t_out = cfg.dt * np.arange(n_out)

    lead = _LeadSignal.from_series(0.0, cfg.dt, lead_profile)
    speeds = [np.array([lead.at(t) for t in t_out])]
    gaps = []
    buffers_v = []  # per vehicle: (pattern, V, dV) on the common grid
    events: list[Event] = []
    collision_time = math.inf
    prev_offsets: tuple[float, ...] = ()

    for idx, veh in enumerate(fleet, start=1):
        p = veh.params
        gap0 = p.eta + p.th * init
        hist = History.constant(gap0, init)
        phi = p.tau % h
        extra = tuple(prev_offsets) + tuple((o + phi) % h for o in prev_offsets)
        pattern = _kernel.build_pattern(h, p.tau, extra)
        horizon = min(cfg.duration, collision_time + cfg.dt)
        steps_i = min(n_steps, int(math.ceil(horizon / h - 1e-9)))
        S, V, dS, dV = _run_kernel(0.0, h, steps_i, pattern, p, gap0, init,
                                   np.array([-max(p.tau, h), 0.0]),
                                   np.array([gap0, gap0]),
                                   lead, cfg.speed_floor)
        rows_t = _pattern_times(0.0, h, pattern, len(S))

        if veh.min_acc_speed > 0.0:
            below = np.nonzero(V < veh.min_acc_speed)[0]
            if len(below):
                j = below[0]
                events.append(Event("disengage", idx, float(rows_t[j]), float(V[j])))
        hit = np.nonzero(S <= cfg.collision_gap)[0]
        if len(hit):
            j = hit[0]
            t_c = float(rows_t[j])
            if t_c < collision_time:
                collision_time = t_c
                events.append(Event("collision", idx, t_c, float(S[j])))

        speeds.append(_kernel.sample_pattern(t_out, 0.0, h, pattern, V, dV))
        gaps.append(_kernel.sample_pattern(t_out, 0.0, h, pattern, S, dS))
        lead = _LeadSignal.from_buffer(0.0, h, pattern, V, dV)
        buffers_v.append((pattern, V, dV))
        prev_offsets = tuple(o for o in pattern[1:])

    if math.isfinite(collision_time):
        keep = t_out <= collision_time + 1e-12
        t_out = t_out[keep]
        speeds = [s[: len(t_out)] for s in speeds]
        gaps = [g[: len(t_out)] for g in gaps]
        events = [e for e in events if e.time <= collision_time + 1e-12]

    events.sort(key=lambda e: (e.time, e.vehicle))
    return SimResult(t_out, np.vstack(speeds), np.vstack(gaps), events)


def _pattern_times(t0: float, h: float, pattern: np.ndarray, n_rows: int) -> np.ndarray:
    n_sub = len(pattern)
    k = np.arange(n_rows) // n_sub
    j = np.arange(n_rows) % n_sub
    return t0 + k * h + pattern[j]


@dataclass(frozen=True)
class AmplificationRow:
    """Per-vehicle disturbance summary; vehicle 0 is the lead (min_gap NaN)."""

    vehicle: int
    amplitude: float  # baseline speed minus the vehicle's minimum speed
    min_speed: float
    min_gap: float


def amplification_metrics(result: SimResult,
                          baseline_speed: float) -> list[AmplificationRow]:
    """Disturbance amplitude, minimum speed, and minimum gap per vehicle."""
    if result.speeds.shape[0] < 1:
        raise ValueError("result has no vehicles")
    rows = []
    for i in range(result.speeds.shape[0]):
        v_min = float(np.min(result.speeds[i]))
        g_min = float(np.min(result.gaps[i - 1])) if i >= 1 else math.nan
        rows.append(AmplificationRow(i, baseline_speed - v_min, v_min, g_min))
    return rows
