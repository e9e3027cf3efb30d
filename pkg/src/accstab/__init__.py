"""Car-following stability toolkit for adaptive cruise control models.

Models a delayed constant-time-gap controller, simulates single followers and
platoons, classifies plant and string stability, and calibrates parameters
from leader/follower trajectory data.
"""

from .model import (AccParams, ParamBounds, PAPER_BOUNDS, State, VehicleSpec,
                    acceleration, equilibrium, spacing_policy_speed)
from .presets import PRESETS, TABLE_LABELS, fleet, vehicle
from .sim import (History, SimConfig, SimResult, Trajectory,
                  amplification_metrics, simulate_follower, simulate_platoon)
from .stability import (StabilityMap, StabilityReport, plant_stability,
                        report, ring_mode_stability, stability_map,
                        string_stability, transfer_gain)
from .calib import (CalibrationConfig, CalibrationResult, calibrate,
                    evaluate_test_errors, mse_speed, objective, rmse_spacing)

__version__ = "0.1.0"

__all__ = [
    "AccParams", "ParamBounds", "PAPER_BOUNDS", "State", "VehicleSpec",
    "acceleration", "equilibrium", "spacing_policy_speed",
    "PRESETS", "TABLE_LABELS", "fleet", "vehicle",
    "History", "SimConfig", "SimResult", "Trajectory",
    "amplification_metrics", "simulate_follower", "simulate_platoon",
    "StabilityMap", "StabilityReport", "plant_stability", "report",
    "ring_mode_stability", "stability_map", "string_stability",
    "transfer_gain",
    "CalibrationConfig", "CalibrationResult", "calibrate",
    "evaluate_test_errors", "mse_speed", "objective", "rmse_spacing",
    "__version__",
]
