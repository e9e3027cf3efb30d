"""Parameter calibration against measured leader/follower trajectories.

The objective replays the recorded lead speed through the candidate model,
pinning the simulated state to the measurement over the delay window [0, tau],
and scores the mean squared speed error over [tau, T] (trapezoidal, averaged
over the actual window so candidates with different delays are compared on
the windows their own dynamics define).

Optimization is a seeded Latin-hypercube multistart of Nelder-Mead with box
projection; candidates outside the box never reach the simulator.  Any start
whose simulation blows up scores +inf and is rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import LengthMismatch, NoFeasibleCandidate
from .model import AccParams, ParamBounds, PAPER_BOUNDS
from .sim import History, SimConfig, Trajectory, simulate_follower
from ._kernel import TAU_ZERO_CUTOFF

__all__ = [
    "CalibrationConfig",
    "CalibrationResult",
    "mse_speed",
    "rmse_spacing",
    "objective",
    "calibrate",
    "evaluate_test_errors",
]


@dataclass(frozen=True)
class CalibrationConfig:
    bounds: ParamBounds = PAPER_BOUNDS
    n_multistarts: int = 4
    max_evals: int = 600  # per start
    rng_seed: int = 0
    dt: float = 0.1
    train_fraction: float = 0.5  # used by callers that split a full recording

    def __post_init__(self):
        if self.n_multistarts < 1:
            raise ValueError("n_multistarts must be >= 1")
        if self.max_evals < 100:
            raise ValueError("max_evals must be >= 100")
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must be in (0, 1]")


def _trapz_mean(y2: np.ndarray, dt: float) -> float:
    window = (len(y2) - 1) * dt
    return float(np.trapezoid(y2, dx=dt) / window)


def mse_speed(simulated: np.ndarray, measured: np.ndarray, dt: float) -> float:
    """Mean squared speed error, trapezoidal over the common window, (m/s)^2."""
    simulated = np.asarray(simulated, float)
    measured = np.asarray(measured, float)
    if simulated.shape != measured.shape:
        raise LengthMismatch(
            f"series lengths differ: {simulated.shape} vs {measured.shape}")
    if len(simulated) < 2:
        raise LengthMismatch("need at least 2 samples")
    return _trapz_mean((simulated - measured) ** 2, dt)


def rmse_spacing(simulated: np.ndarray, measured: np.ndarray, dt: float) -> float:
    """Root mean squared spacing error over the common window, m."""
    return math.sqrt(mse_speed(simulated, measured, dt))


def _measured_history(train: Trajectory, tau: float) -> History:
    """Pin (s, v) to the measurement on [0, tau] (relative to the train start)."""
    if tau <= TAU_ZERO_CUTOFF:
        return History.constant(train.space_gap[0], train.follower_speed[0])
    dt = train.dt
    n_full = int(math.floor(tau / dt + 1e-9))
    t = list(dt * np.arange(n_full + 1))
    s = list(train.space_gap[: n_full + 1])
    v = list(train.follower_speed[: n_full + 1])
    if t[-1] < tau - 1e-12:
        rel = np.arange(len(train)) * dt
        t.append(tau)
        s.append(float(np.interp(tau, rel, train.space_gap)))
        v.append(float(np.interp(tau, rel, train.follower_speed)))
    return History(np.array(t), np.array(s), np.array(v))


def objective(candidate: AccParams, train: Trajectory, dt: float) -> float:
    """MSE of simulated vs measured follower speed over [tau, T].

    Simulation failures (blow-up, infeasible candidates) score +inf.
    """
    tau = candidate.tau
    duration = (len(train) - 1) * dt
    if duration <= tau + 2 * dt:
        return math.inf
    try:
        hist = _measured_history(train, tau)
        cfg = SimConfig(dt=dt, duration=duration)
        sim = simulate_follower(train.lead_speed, candidate, hist, cfg)
    except Exception:
        return math.inf
    j0 = int(math.ceil(tau / dt - 1e-9))
    sim_v = sim.follower_speed[j0:]
    meas_v = train.follower_speed[j0: len(sim_v) + j0]
    if len(sim_v) != len(meas_v) or len(sim_v) < 2:
        return math.inf
    value = mse_speed(sim_v, meas_v, dt)
    return value if math.isfinite(value) else math.inf


@dataclass(frozen=True)
class CalibrationResult:
    params: AccParams
    train_mse_speed: float
    test_errors: dict = field(default_factory=dict)
    evals_used: int = 0
    converged: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "params": {
                "k1": self.params.k1, "k2": self.params.k2,
                "th": self.params.th, "tau": self.params.tau,
                "eta": self.params.eta,
            },
            "train_mse_speed": self.train_mse_speed,
            "test_errors": self.test_errors,
            "evals_used": self.evals_used,
            "converged": self.converged,
            "diagnostics": self.diagnostics,
        }


def _params_from_vector(x: np.ndarray) -> AccParams:
    return AccParams(float(x[0]), float(x[1]), float(x[2]), float(x[3]),
                     float(x[4]))


def calibrate(train: Trajectory, cfg: CalibrationConfig) -> CalibrationResult:
    """Fit the five model parameters to a training trajectory.

    Deterministic for fixed (train, cfg): starts come from a seeded Latin
    hypercube, each start runs bound-projected Nelder-Mead, and the best
    start (ties to the lowest index) gets one polish run from its optimum.

    Raises NoFeasibleCandidate when every start is rejected.
    """
    lo = np.array(cfg.bounds.lower())
    hi = np.array(cfg.bounds.upper())
    sampler = qmc.LatinHypercube(d=5, seed=cfg.rng_seed)
    starts = lo + sampler.random(cfg.n_multistarts) * (hi - lo)

    evals = 0
    incumbent: list[float] = [math.inf]

    def fun(x: np.ndarray) -> float:
        nonlocal evals
        assert np.all(x >= lo - 1e-12) and np.all(x <= hi + 1e-12), \
            f"candidate left the bounds box: {x}"
        evals += 1
        value = objective(_params_from_vector(x), train, cfg.dt)
        if value < incumbent[-1]:
            incumbent.append(value)
        return value

    bounds = list(zip(lo, hi))
    options = {"maxfev": cfg.max_evals, "xatol": 1e-9, "fatol": 1e-14,
               "adaptive": True}
    records = []
    best_idx = -1
    best_fun = math.inf
    best_x = None
    best_success = False
    for i, x0 in enumerate(starts):
        res = minimize(fun, x0, method="Nelder-Mead", bounds=bounds,
                       options=options)
        records.append({
            "start": [float(v) for v in x0],
            "x": [float(v) for v in res.x],
            "fun": float(res.fun),
            "nfev": int(res.nfev),
            "success": bool(res.success),
        })
        if res.fun < best_fun:
            best_idx, best_fun, best_x = i, float(res.fun), res.x.copy()
            best_success = bool(res.success)

    if not math.isfinite(best_fun):
        raise NoFeasibleCandidate("all multistarts returned +inf")

    polish = minimize(fun, best_x, method="Nelder-Mead", bounds=bounds,
                      options=options)
    if polish.fun <= best_fun:
        best_fun = float(polish.fun)
        best_x = polish.x.copy()
        best_success = best_success or bool(polish.success)

    near = [r for r in records
            if math.isfinite(r["fun"])
            and r["fun"] <= best_fun + max(1e-9, 0.01 * abs(best_fun))]
    scatter = {}
    names = ("k1", "k2", "th", "tau", "eta")
    for d, name in enumerate(names):
        vals = [r["x"][d] for r in near]
        span = (max(vals) - min(vals)) if vals else 0.0
        scale = max(abs(best_x[d]), hi[d] - lo[d], 1e-12)
        scatter[name] = span / scale
    wide_scatter = bool(max(scatter.values()) > 0.05) if scatter else False

    deltas = np.diff(np.array(incumbent)[np.isfinite(incumbent)])
    assert np.all(deltas <= 0.0), "incumbent objective increased"

    params = _params_from_vector(best_x)
    return CalibrationResult(
        params=params,
        train_mse_speed=best_fun,
        evals_used=evals,
        converged=bool(best_success and not wide_scatter),
        diagnostics={
            "starts": records,
            "polish_fun": float(polish.fun),
            "best_start": best_idx,
            "param_scatter": scatter,
            "wide_scatter": wide_scatter,
        },
    )


def evaluate_test_errors(params: AccParams, scenarios: dict[str, Trajectory],
                         dt: float) -> dict[str, dict]:
    """Speed and spacing RMSE per named scenario under measured-history replay.

    Per-scenario failures are recorded ({"error": ...}), never raised.
    """
    out: dict[str, dict] = {}
    for name, traj in scenarios.items():
        try:
            tau = params.tau
            duration = (len(traj) - 1) * dt
            hist = _measured_history(traj, tau)
            sim = simulate_follower(traj.lead_speed, params, hist,
                                    SimConfig(dt=dt, duration=duration))
            j0 = int(math.ceil(tau / dt - 1e-9))
            speed = math.sqrt(mse_speed(sim.follower_speed[j0:],
                                        traj.follower_speed[j0:], dt))
            gap = rmse_spacing(sim.space_gap[j0:], traj.space_gap[j0:], dt)
            out[name] = {"speed_rmse": speed, "spacing_rmse": gap}
        except Exception as exc:  # pragma: no cover - defensive
            out[name] = {"error": f"{type(exc).__name__}: {exc}"}
    return out


def attach_test_errors(result: CalibrationResult,
                       scenarios: dict[str, Trajectory],
                       dt: float) -> CalibrationResult:
    return replace(result,
                   test_errors=evaluate_test_errors(result.params, scenarios, dt))
