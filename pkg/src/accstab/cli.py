"""Command-line front end: simulate, calibrate, stability, map, amplify.

Every subcommand reads an optional TOML config file (one table per command)
and applies command-line flags on top.  All outputs are CSV/JSON files under
--out; exit status is 0 only when every requested file was written.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from . import calib, dataio, presets, sim, stability
from .errors import AccStabError
from .model import AccParams, ParamBounds

__all__ = ["main", "entry"]


class ConfigError(Exception):
    """Invalid or missing configuration; message names the offending key."""


def _load_config(path: str | None, section: str) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    with open(p, "rb") as fh:
        data = tomllib.load(fh)
    table = data.get(section, {})
    if not isinstance(table, dict):
        raise ConfigError(f"config section [{section}] must be a table")
    return table


def _setting(args, cfg: dict, key: str, default=None, required: bool = False):
    """Flag value if given, else config value, else default."""
    flag = getattr(args, key.replace(".", "_"), None)
    if flag is not None:
        return flag
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"missing required key {key!r}")
    return default


def _parse_fleet(text: str) -> list:
    """'A/min×7', 'A/min*7', or a comma list of preset labels."""
    text = text.strip()
    for sep in ("×", "*"):
        if sep in text:
            label, _, count = text.partition(sep)
            try:
                n = int(count.strip())
            except ValueError:
                raise ConfigError(f"fleet count must be an integer in {text!r}")
            return _fleet_of(label.strip(), n)
    return [_vehicle(lbl.strip()) for lbl in text.split(",") if lbl.strip()]


def _vehicle(label: str):
    try:
        return presets.vehicle(label)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]))


def _fleet_of(label: str, n: int) -> list:
    if n < 1:
        raise ConfigError(f"fleet size must be >= 1, got {n}")
    return [_vehicle(label)] * n


def _parse_scenario(text: str, dt: float, seed: int) -> np.ndarray:
    """Named scripted scenario or 'dip:<depth>[@<base>]' (base 22.4 m/s)."""
    text = text.strip()
    if text.startswith("dip:"):
        body = text[4:]
        base = 22.4
        if "@" in body:
            body, _, base_s = body.partition("@")
            base = float(base_s)
        try:
            depth = float(body)
        except ValueError:
            raise ConfigError(f"bad dip depth in scenario {text!r}")
        if not 0.0 < depth <= base:
            raise ConfigError(f"scenario dip depth out of range in {text!r}")
        return dataio.dip_profile(base, depth, dt=dt)
    if text not in dataio.SCENARIO_KINDS:
        raise ConfigError(
            f"unknown scenario {text!r}; use one of {dataio.SCENARIO_KINDS} "
            f"or dip:<depth>[@<base>]")
    return dataio.generate_lead_profile(
        dataio.ScenarioSpec(kind=text, dt=dt, seed=seed))


def _out_dir(args, cfg) -> Path:
    out = _setting(args, cfg, "out", default=".")
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _params_from_args(args, cfg) -> AccParams:
    preset = _setting(args, cfg, "preset")
    if preset:
        return _vehicle(preset).params
    values = {}
    for key in ("k1", "k2", "th", "tau", "eta"):
        v = _setting(args, cfg, key)
        if v is None:
            raise ConfigError(f"missing required key {key!r} "
                              "(or give --preset)")
        values[key] = float(v)
    try:
        return AccParams(**values)
    except ValueError as exc:
        raise ConfigError(f"bad parameter value: {exc}")


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, "simulate")
    seed = int(_setting(args, cfg, "seed", 0))
    dt = float(_setting(args, cfg, "dt", 0.1))
    fleet = _parse_fleet(str(_setting(args, cfg, "fleet", required=True)))
    profile = _parse_scenario(str(_setting(args, cfg, "scenario", required=True)),
                              dt, seed)
    init = _setting(args, cfg, "init")
    init = float(init) if init is not None else float(profile[0])
    duration = float(_setting(args, cfg, "duration",
                              (len(profile) - 1) * dt))
    run_cfg = sim.SimConfig(
        dt=dt, duration=duration,
        speed_floor=float(_setting(args, cfg, "speed_floor", 0.0)),
        collision_gap=float(_setting(args, cfg, "collision_gap", 0.0)))
    result = sim.simulate_platoon(profile, fleet, init, run_cfg)
    out = _out_dir(args, cfg)
    series, events = dataio.export_sim(result, out / "sim_series.csv")
    rows = sim.amplification_metrics(result, init)
    summary = {
        "baseline_speed": init,
        "fleet": [v.label for v in fleet],
        "vehicles": [
            {"vehicle": r.vehicle, "amplitude": r.amplitude,
             "min_speed": r.min_speed,
             "min_gap": None if math.isnan(r.min_gap) else r.min_gap}
            for r in rows
        ],
        "events": [{"kind": e.kind, "vehicle": e.vehicle,
                    "time": e.time, "value": e.value}
                   for e in result.events],
    }
    amp_path = out / "amplification.json"
    amp_path.write_text(json.dumps(summary, indent=2))
    print(f"wrote {series}, {events}, {amp_path}")
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_config(args.config, "calibrate")
    train_path = Path(str(_setting(args, cfg, "train", required=True)))
    if not train_path.exists():
        raise ConfigError(f"train file not found: {train_path}")
    dt = float(_setting(args, cfg, "dt", 0.1))
    bounds_cfg = cfg.get("bounds", {})
    bounds_kwargs = {}
    for key in ("k1", "k2", "th", "tau", "eta"):
        if key in bounds_cfg:
            pair = bounds_cfg[key]
            if (not isinstance(pair, (list, tuple)) or len(pair) != 2):
                raise ConfigError(f"bounds.{key} must be [lower, upper]")
            bounds_kwargs[key] = (float(pair[0]), float(pair[1]))
    try:
        bounds = ParamBounds(**bounds_kwargs)
    except ValueError as exc:
        raise ConfigError(f"bad bounds: {exc}")
    cal_cfg = calib.CalibrationConfig(
        bounds=bounds,
        n_multistarts=int(_setting(args, cfg, "multistarts", 4)),
        max_evals=int(_setting(args, cfg, "max_evals", 600)),
        rng_seed=int(_setting(args, cfg, "seed", 0)),
        dt=dt,
        train_fraction=float(_setting(args, cfg, "split", 0.5)),
    )
    full = dataio.load_trajectory(train_path, dt=dt)
    n_train = max(3, int(len(full) * cal_cfg.train_fraction))
    train = sim.Trajectory(full.t0, dt, full.lead_speed[:n_train],
                           full.follower_speed[:n_train],
                           full.space_gap[:n_train])
    result = calib.calibrate(train, cal_cfg)

    scenarios = {"train": train}
    test_args = list(args.test or [])
    for key, value in cfg.get("test", {}).items():
        test_args.append(f"{key}={value}")
    for item in test_args:
        name, _, path = item.partition("=")
        if not path:
            raise ConfigError(f"test entry must be name=path, got {item!r}")
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"test file not found: {p}")
        scenarios[name] = dataio.load_trajectory(p, dt=dt)
    result = replace(result,
                     test_errors=calib.evaluate_test_errors(result.params,
                                                            scenarios, dt))
    out = _out_dir(args, cfg)
    json_path = out / "calibration.json"
    json_path.write_text(json.dumps(result.to_dict(), indent=2))
    csv_path = out / "test_errors.csv"
    with open(csv_path, "w") as fh:
        fh.write("scenario,speed_rmse_mps,spacing_rmse_m\n")
        for name, row in result.test_errors.items():
            if "error" in row:
                fh.write(f"{name},error,error\n")
            else:
                fh.write(f"{name},{row['speed_rmse']:.6g},"
                         f"{row['spacing_rmse']:.6g}\n")
    print(f"wrote {json_path}, {csv_path} "
          f"(train MSE {result.train_mse_speed:.3e})")
    return 0


def cmd_stability(args) -> int:
    cfg = _load_config(args.config, "stability")
    params = _params_from_args(args, cfg)
    omega_max = _setting(args, cfg, "omega_max")
    rep = stability.report(
        params,
        omega_max=float(omega_max) if omega_max is not None else None,
        n_samples=int(_setting(args, cfg, "n_samples", 2000)),
        tol=float(_setting(args, cfg, "tol", 1e-6)))
    doc = rep.to_dict()
    doc["params"] = {"k1": params.k1, "k2": params.k2, "th": params.th,
                     "tau": params.tau, "eta": params.eta}
    ring_n = _setting(args, cfg, "ring_n")
    if ring_n is not None:
        roots = stability.ring_mode_stability(params, int(ring_n))
        doc["ring"] = {
            "n_vehicles": int(ring_n),
            "stable": bool(all(r.real < 0.0 for r in roots)),
            "modes": [{"re": r.real, "im": r.imag} for r in roots],
        }
    out = _out_dir(args, cfg)
    path = out / "stability.json"
    path.write_text(json.dumps(doc, indent=2))
    verdict = "string stable" if rep.string_stable else "string unstable"
    print(f"{verdict}; peak gain {rep.peak_gain:.4f} at "
          f"{rep.peak_omega:.4f} rad/s; wrote {path}")
    return 0


def _parse_range(text, key) -> tuple[float, float]:
    if isinstance(text, (list, tuple)) and len(text) == 2:
        return float(text[0]), float(text[1])
    parts = str(text).split(":")
    if len(parts) != 2:
        raise ConfigError(f"{key} must be lo:hi, got {text!r}")
    return float(parts[0]), float(parts[1])


def cmd_map(args) -> int:
    cfg = _load_config(args.config, "map")
    k1_range = _parse_range(_setting(args, cfg, "k1_range", "0.01:1.0"),
                            "k1_range")
    k2_range = _parse_range(_setting(args, cfg, "k2_range", "0.0:1.0"),
                            "k2_range")
    try:
        grid = stability.stability_map(
            k1_range, k2_range,
            resolution=int(_setting(args, cfg, "resolution", 51)),
            th=float(_setting(args, cfg, "th", required=True)),
            tau=float(_setting(args, cfg, "tau", required=True)),
            eta=float(_setting(args, cfg, "eta", 10.0)))
    except ValueError as exc:
        raise ConfigError(f"bad map grid: {exc}")
    out = _out_dir(args, cfg)
    path = dataio.export_map(grid, out / "stability_map.csv")
    n_stable = int(np.sum(grid.verdicts == stability.VERDICT_STABLE))
    print(f"wrote {path} ({n_stable}/{grid.verdicts.size} cells stable)")
    return 0


def cmd_amplify(args) -> int:
    cfg = _load_config(args.config, "amplify")
    seed = int(_setting(args, cfg, "seed", 0))
    dt = float(_setting(args, cfg, "dt", 0.1))
    label = str(_setting(args, cfg, "preset", required=True))
    veh = _vehicle(label)
    profile = _parse_scenario(str(_setting(args, cfg, "scenario", "dip:2.7")),
                              dt, seed)
    init = _setting(args, cfg, "init")
    init = float(init) if init is not None else float(profile[0])
    n_max = int(_setting(args, cfg, "n_max", 15))
    if n_max < 1:
        raise ConfigError(f"n_max must be >= 1, got {n_max}")
    duration = float(_setting(args, cfg, "duration", (len(profile) - 1) * dt))
    run_cfg = sim.SimConfig(dt=dt, duration=duration)

    out = _out_dir(args, cfg)
    path = out / "amplify.csv"
    with open(path, "w") as fh:
        fh.write("platoon_length,amplitude_last,min_speed_last,min_gap_last,"
                 "event_kind,event_vehicle,event_time_s,event_value\n")
        for length in range(2, n_max + 1) if n_max >= 2 else [1]:
            result = sim.simulate_platoon(profile, [veh] * (length - 1),
                                          init, run_cfg)
            rows = sim.amplification_metrics(result, init)
            last = rows[-1]
            if result.events:
                e = result.events[0]
                fh.write(f"{length},{last.amplitude:.6g},{last.min_speed:.6g},"
                         f"{last.min_gap:.6g},{e.kind},{e.vehicle},"
                         f"{e.time:.6g},{e.value:.6g}\n")
                print(f"platoon length {length}: terminal {e.kind} "
                      f"(vehicle {e.vehicle} at {e.time:.1f} s)")
                break
            fh.write(f"{length},{last.amplitude:.6g},{last.min_speed:.6g},"
                     f"{last.min_gap:.6g},,,,\n")
    print(f"wrote {path}")
    return 0


_CONFIG_KEYS = {
    "simulate": "fleet, scenario, init, dt, duration, speed_floor, "
                "collision_gap, out, seed",
    "calibrate": "train, dt, split, multistarts, max_evals, seed, out, "
                 "bounds.{k1,k2,th,tau,eta}, test.<name>",
    "stability": "preset | k1,k2,th,tau,eta; omega_max, n_samples, tol, "
                 "ring_n, out",
    "map": "k1_range, k2_range, resolution, th, tau, eta, out",
    "amplify": "preset, scenario, init, n_max, dt, duration, out, seed",
}


def _add_common(p):
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--out", help="output directory (default: current)")
    p.add_argument("--seed", type=int, help="RNG seed for anything stochastic")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="accstab",
        description="Car-following stability toolkit: simulate platoons, "
                    "calibrate the delayed spacing-policy model, classify "
                    "plant and string stability.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a platoon simulation",
                       epilog=f"config keys ([simulate]): {_CONFIG_KEYS['simulate']}")
    _add_common(p)
    p.add_argument("--fleet", help="preset fleet, e.g. 'A/min×7' or 'A/min*7'")
    p.add_argument("--scenario", help="oscillatory | low_speed_steps | "
                                      "high_speed_steps | speed_dips | "
                                      "dip:<depth>[@<base>]")
    p.add_argument("--init", type=float, help="equilibrium init speed m/s")
    p.add_argument("--dt", type=float, help="output step s (default 0.1)")
    p.add_argument("--duration", type=float, help="horizon s")
    p.add_argument("--speed-floor", dest="speed_floor", type=float)
    p.add_argument("--collision-gap", dest="collision_gap", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit model parameters to a trajectory",
                       epilog=f"config keys ([calibrate]): {_CONFIG_KEYS['calibrate']}")
    _add_common(p)
    p.add_argument("--train", help="training trajectory CSV")
    p.add_argument("--dt", type=float, help="resample step s (default 0.1)")
    p.add_argument("--split", type=float,
                   help="training fraction of the file (default 0.5)")
    p.add_argument("--multistarts", type=int)
    p.add_argument("--max-evals", dest="max_evals", type=int)
    p.add_argument("--test", action="append", metavar="NAME=PATH",
                   help="extra evaluation scenario (repeatable)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("stability", help="plant/string stability report",
                       epilog=f"config keys ([stability]): {_CONFIG_KEYS['stability']}")
    _add_common(p)
    p.add_argument("--preset", help="vehicle preset label, e.g. A/min")
    for key in ("k1", "k2", "th", "tau", "eta"):
        p.add_argument(f"--{key}", type=float)
    p.add_argument("--omega-max", dest="omega_max", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--ring-n", dest="ring_n", type=int,
                   help="also analyze an N-vehicle ring")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("map", help="stability map over the (k1, k2) plane",
                       epilog=f"config keys ([map]): {_CONFIG_KEYS['map']}")
    _add_common(p)
    p.add_argument("--k1-range", dest="k1_range", help="lo:hi")
    p.add_argument("--k2-range", dest="k2_range", help="lo:hi")
    p.add_argument("--resolution", type=int)
    p.add_argument("--th", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--eta", type=float)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("amplify", help="platoon-length sweep to first event",
                       epilog=f"config keys ([amplify]): {_CONFIG_KEYS['amplify']}")
    _add_common(p)
    p.add_argument("--preset", help="homogeneous fleet preset label")
    p.add_argument("--scenario", help="default dip:2.7")
    p.add_argument("--init", type=float)
    p.add_argument("--n-max", dest="n_max", type=int,
                   help="largest platoon length (default 15)")
    p.add_argument("--dt", type=float)
    p.add_argument("--duration", type=float)
    p.set_defaults(func=cmd_amplify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AccStabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def entry() -> None:  # console_scripts target
    sys.exit(main())


if __name__ == "__main__":
    entry()
