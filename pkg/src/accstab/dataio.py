"""Trajectory file ingestion, scripted lead-speed scenarios, CSV export.

Trajectory CSV layout: columns ``time_s, lead_speed, follower_speed,
space_gap_m`` (names remappable), speeds in m/s unless a ``# units=mph``
comment line appears in the header.  Scenario generators reproduce the four
scripted road tests: oscillatory holds, low- and high-speed step ladders, and
repeated speed dips, with linear ramps between set points.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyOverlap, MissingColumn, NonMonotoneTime
from .sim import SimResult, Trajectory
from .stability import StabilityMap

__all__ = [
    "MPH_TO_MPS",
    "mph_to_mps",
    "mps_to_mph",
    "ScenarioSpec",
    "SCENARIO_KINDS",
    "set_points",
    "generate_lead_profile",
    "dip_profile",
    "load_trajectory",
    "save_trajectory",
    "export_sim",
    "export_map",
    "DEFAULT_COLUMNS",
]

MPH_TO_MPS = 0.44704


def mph_to_mps(v):
    return np.asarray(v, float) * MPH_TO_MPS


def mps_to_mph(v):
    return np.asarray(v, float) / MPH_TO_MPS


SCENARIO_KINDS = ("oscillatory", "low_speed_steps", "high_speed_steps",
                  "speed_dips")

_OSC_CYCLES = 4  # per half; holds of 30 s each
_STEP_HOLD = 60.0
_DIP_CRUISE = 45.0
_DIP_HOLD = 5.0


@dataclass(frozen=True)
class ScenarioSpec:
    """One scripted lead-speed scenario.

    ramp_rate is the lead acceleration magnitude between set points (the road
    tests did not record the cruise controller's transition profile, so it is
    a free knob).  hold_jitter > 0 adds a deterministic pseudo-random stretch
    of up to that many seconds to each hold, seeded by `seed`.
    """

    kind: str
    ramp_rate: float = 1.0
    hold_jitter: float = 0.0
    dt: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(
                f"kind must be one of {SCENARIO_KINDS}, got {self.kind!r}")
        if self.ramp_rate <= 0.0:
            raise ValueError(f"ramp_rate must be > 0, got {self.ramp_rate}")
        if self.hold_jitter < 0.0:
            raise ValueError(f"hold_jitter must be >= 0, got {self.hold_jitter}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt}")


def set_points(kind: str) -> list[tuple[float, float]]:
    """(speed m/s, hold s) schedule for a scenario kind."""
    if kind == "oscillatory":
        out = []
        for low in (21.9, 20.1):
            for _ in range(_OSC_CYCLES):
                out.append((24.5, 30.0))
                out.append((low, 30.0))
        return out
    if kind == "low_speed_steps":
        ladder = [15.6, 17.9, 20.1, 22.4, 24.6]
        return [(v, _STEP_HOLD) for v in ladder + ladder[::-1]]
    if kind == "high_speed_steps":
        ladder = [29.1, 31.3, 33.5]
        return [(v, _STEP_HOLD) for v in ladder + ladder[::-1]]
    if kind == "speed_dips":
        out = [(24.6, _DIP_CRUISE)]
        for depth in (2.7, 4.5, 6.7, 8.9):
            for _ in range(2):
                out.append((24.6 - depth, _DIP_HOLD))
                out.append((24.6, _DIP_CRUISE))
        return out
    raise ValueError(f"unknown scenario kind {kind!r}")


def _schedule_to_profile(points: list[tuple[float, float]], ramp_rate: float,
                         dt: float) -> np.ndarray:
    """Piecewise profile: hold each set point, linear ramp to the next."""
    knot_t = [0.0]
    knot_v = [points[0][0]]
    t = 0.0
    for i, (v, hold) in enumerate(points):
        t += hold
        knot_t.append(t)
        knot_v.append(v)
        if i + 1 < len(points):
            nxt = points[i + 1][0]
            ramp = abs(nxt - v) / ramp_rate
            if ramp > 0.0:
                t += ramp
                knot_t.append(t)
                knot_v.append(nxt)
    n = int(math.floor(t / dt + 1e-9)) + 1
    grid = dt * np.arange(n)
    return np.interp(grid, knot_t, knot_v)


def generate_lead_profile(spec: ScenarioSpec) -> np.ndarray:
    """Lead-speed series (m/s) at spec.dt for the scripted scenario."""
    points = set_points(spec.kind)
    if spec.hold_jitter > 0.0:
        rng = np.random.default_rng(spec.seed)
        points = [(v, hold + rng.uniform(0.0, spec.hold_jitter))
                  for v, hold in points]
    return _schedule_to_profile(points, spec.ramp_rate, spec.dt)


def dip_profile(base_speed: float, dip_depth: float, dt: float = 0.1,
                settle: float = 10.0, ramp: float = 5.0, hold: float = 45.0,
                recover: bool = False) -> np.ndarray:
    """Single slow-down event: settle at base, ramp down over `ramp` seconds,
    hold the low speed, optionally ramp back up and settle again."""
    if dip_depth <= 0.0 or dip_depth > base_speed:
        raise ValueError("dip_depth must be in (0, base_speed]")
    low = base_speed - dip_depth
    knot_t = [0.0, settle, settle + ramp, settle + ramp + hold]
    knot_v = [base_speed, base_speed, low, low]
    if recover:
        knot_t += [settle + 2 * ramp + hold, settle + 2 * ramp + 2 * hold]
        knot_v += [base_speed, base_speed]
    n = int(math.floor(knot_t[-1] / dt + 1e-9)) + 1
    grid = dt * np.arange(n)
    return np.interp(grid, knot_t, knot_v)


DEFAULT_COLUMNS = {
    "time": "time_s",
    "lead": "lead_speed",
    "follower": "follower_speed",
    "gap": "space_gap_m",
}


def load_trajectory(path, columns: dict | None = None,
                    dt: float = 0.1) -> Trajectory:
    """Read a trajectory CSV and resample all channels to a uniform `dt`.

    `columns` remaps logical names {time, lead, follower, gap} to file column
    headers.  A ``# units=mph`` comment line switches speed units; the gap is
    always meters.  Channels may carry NaN at their edges; resampling uses the
    common valid window and raises EmptyOverlap if there is none.
    """
    path = Path(path)
    colmap = dict(DEFAULT_COLUMNS)
    if columns:
        colmap.update(columns)
    units = "mps"
    header = None
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                directive = line.lstrip("#").strip().replace(" ", "")
                if directive.startswith("units="):
                    units = directive.split("=", 1)[1].lower()
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
                continue
            rows.append(line)
    if header is None or not rows:
        raise MissingColumn(f"{path}: no header or data rows")
    if units not in ("mps", "mph", "m/s"):
        raise ValueError(f"{path}: unknown units directive {units!r}")

    idx = {}
    for logical, name in colmap.items():
        if name not in header:
            raise MissingColumn(f"{path}: column {name!r} (for {logical}) missing;"
                                f" file has {header}")
        idx[logical] = header.index(name)

    data = np.genfromtxt(rows, delimiter=",", dtype=float)
    data = np.atleast_2d(data)
    t = data[:, idx["time"]]
    if np.any(~np.isfinite(t)) or np.any(np.diff(t) <= 0.0):
        raise NonMonotoneTime(f"{path}: time column must be strictly increasing")

    factor = MPH_TO_MPS if units == "mph" else 1.0
    channels = {
        "lead": data[:, idx["lead"]] * factor,
        "follower": data[:, idx["follower"]] * factor,
        "gap": data[:, idx["gap"]],
    }
    lo = t[0]
    hi = t[-1]
    for name, y in channels.items():
        good = np.isfinite(y)
        if not good.any():
            raise EmptyOverlap(f"{path}: channel {name} has no finite samples")
        lo = max(lo, t[good][0])
        hi = min(hi, t[good][-1])
    if hi - lo < dt:
        raise EmptyOverlap(
            f"{path}: channels overlap only on [{lo:.3f}, {hi:.3f}] s")

    n = int(math.floor((hi - lo) / dt + 1e-9)) + 1
    grid = lo + dt * np.arange(n)
    out = {}
    for name, y in channels.items():
        good = np.isfinite(y)
        out[name] = np.interp(grid, t[good], y[good])
    return Trajectory(lo, dt, out["lead"], out["follower"], out["gap"])


def save_trajectory(traj: Trajectory, path, units: str = "mps") -> Path:
    """Write a trajectory CSV round-trippable through load_trajectory."""
    path = Path(path)
    factor = 1.0 / MPH_TO_MPS if units == "mph" else 1.0
    with open(path, "w", newline="") as fh:
        fh.write(f"# units={units}\n")
        writer = csv.writer(fh)
        writer.writerow(list(DEFAULT_COLUMNS.values()))
        for i, t in enumerate(traj.t):
            writer.writerow([f"{t:.17g}",
                             f"{traj.lead_speed[i] * factor:.17g}",
                             f"{traj.follower_speed[i] * factor:.17g}",
                             f"{traj.space_gap[i]:.17g}"])
    return path


def export_sim(result: SimResult, path) -> tuple[Path, Path]:
    """Write SimResult series and events CSVs; returns (series, events) paths.

    Series layout: ``time_s, speed_0..speed_N, gap_1..gap_N`` with speed_0 the
    lead vehicle.  Events: ``kind,vehicle,time_s,value`` sorted by time.
    """
    path = Path(path)
    events_path = path.with_name(path.stem + "_events.csv")
    n = result.n_followers
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s"] + [f"speed_{i}" for i in range(n + 1)]
                        + [f"gap_{i}" for i in range(1, n + 1)])
        for j, t in enumerate(result.t):
            row = [f"{t:.17g}"]
            row += [f"{result.speeds[i, j]:.17g}" for i in range(n + 1)]
            row += [f"{result.gaps[i, j]:.17g}" for i in range(n)]
            writer.writerow(row)
    with open(events_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "vehicle", "time_s", "value"])
        for e in result.events:
            writer.writerow([e.kind, e.vehicle, f"{e.time:.17g}", f"{e.value:.17g}"])
    return path, events_path


def export_map(stab_map: StabilityMap, path) -> Path:
    """Write a stability map as ``k1,k2,verdict`` rows (k1-major order)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k1", "k2", "verdict"])
        for i, k1 in enumerate(stab_map.k1_grid):
            for j, k2 in enumerate(stab_map.k2_grid):
                writer.writerow([f"{k1:.17g}", f"{k2:.17g}",
                                 stab_map.verdicts[i, j]])
    return path
