"""Built-in vehicle presets.

Fourteen calibrated parameter sets (seven 2018 vehicles, each at its minimum
and maximum following setting). Vehicles A-D cut their ACC off below 25 mph
(11.176 m/s); vehicles E-G operate to standstill. Two synthetic `demo/*`
presets are included for exercising the string-stable branch; they are not
calibrated vehicles.
"""

from __future__ import annotations

from .model import AccParams, VehicleSpec

__all__ = ["PRESETS", "TABLE_LABELS", "vehicle", "fleet", "MPH_TO_MPS"]

MPH_TO_MPS = 0.44704

_MIN_ACC_MAKE1 = 25.0 * MPH_TO_MPS  # 11.176 m/s, exact conversion

#          label     k1     k2     th     tau    eta     min ACC speed
_TABLE = [
    ("A/min", 0.052, 0.338, 0.819, 0.948, 8.030, _MIN_ACC_MAKE1),
    ("A/max", 0.012, 0.167, 2.054, 0.992, 5.960, _MIN_ACC_MAKE1),
    ("B/min", 0.052, 0.190, 0.725, 0.468, 6.849, _MIN_ACC_MAKE1),
    ("B/max", 0.022, 0.116, 2.020, 0.153, 8.210, _MIN_ACC_MAKE1),
    ("C/min", 0.029, 0.269, 0.907, 0.368, 10.070, _MIN_ACC_MAKE1),
    ("C/max", 0.018, 0.152, 1.986, 0.324, 13.814, _MIN_ACC_MAKE1),
    ("D/min", 0.051, 0.280, 0.544, 0.284, 13.400, _MIN_ACC_MAKE1),
    ("D/max", 0.022, 0.221, 1.853, 0.935, 14.956, _MIN_ACC_MAKE1),
    ("E/min", 0.051, 0.165, 1.127, 0.419, 5.170, 0.0),
    ("E/max", 0.053, 0.142, 1.785, 0.839, 9.370, 0.0),
    ("F/min", 0.071, 0.191, 0.696, 0.582, 10.090, 0.0),
    ("F/max", 0.041, 0.164, 1.734, 0.922, 6.033, 0.0),
    ("G/min", 0.070, 0.253, 0.549, 0.993, 14.500, 0.0),
    ("G/max", 0.046, 0.129, 1.764, 0.994, 5.131, 0.0),
]

_DEMO = [
    # analytically string-stable at tau=0: k1*th^2 + 2*th*k2 = 2.8 >= 2
    ("demo/stable", 0.5, 0.2, 2.0, 0.0, 10.0, 0.0),
    # string-unstable reference point in the (k1, k2) plane
    ("demo/unstable", 0.2, 0.2, 1.5, 0.1, 10.0, 0.0),
]

PRESETS: dict[str, VehicleSpec] = {
    label: VehicleSpec(label, AccParams(k1, k2, th, tau, eta), v_min)
    for label, k1, k2, th, tau, eta, v_min in _TABLE + _DEMO
}

TABLE_LABELS: tuple[str, ...] = tuple(label for label, *_ in _TABLE)


def vehicle(label: str) -> VehicleSpec:
    """Look up a preset by label, e.g. ``"A/min"``."""
    try:
        return PRESETS[label]
    except KeyError:
        known = ", ".join(PRESETS)
        raise KeyError(f"unknown vehicle preset {label!r}; known: {known}") from None


def fleet(label: str, n: int) -> list[VehicleSpec]:
    """A homogeneous platoon of `n` copies of the given preset."""
    if n < 1:
        raise ValueError(f"fleet size must be >= 1, got {n}")
    return [vehicle(label)] * n
