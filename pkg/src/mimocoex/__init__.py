"""Uplink rate engine for human and machine devices sharing a large array.

The package models one cell where a base station with many antennas serves
two device classes at once: a few high-rate human users and a crowd of
low-duty machines that pick their short pilots at random.  Three ways of
carving up the coherence interval are implemented, each with closed-form
achievable rates, their infinite-antenna limits, a Monte Carlo verifier for
the closed forms, and a max-min power/pilot-length optimizer that traces the
rate trade-off between the two classes.
"""

from .scenario import (ConfigError, Device, DeviceClass, DropConfig, Scenario,
                       dbm_to_watt, watt_to_dbm, noise_power_watt, pathloss_db,
                       beta_from_distance_km, drop_devices, make_rng,
                       scenario_from_json, scenario_to_json)
from .pilots import PilotPlan, Scheme, SchemeConfig, draw_pilot_plan, gram_matrix
from .rates import (PowerAllocation, RateReport, SinrBreakdown, UNBOUNDED,
                    asymptotic_machine_rates, asymptotic_sinr, compute_sinr,
                    gamma_bar_sc1, gamma_bar_sc2, gamma_bar_sc3,
                    gamma_given_plan, gamma_orthogonal, rates)
from .mc import (McEstimate, McSample, UatfEstimate, estimate_gamma_moment,
                 estimate_orthogonality_defect, estimate_uatf_components,
                 simulate_training)
from .optimizer import (AntennaPoint, OptimizationProblem, PilotPowerMode,
                        RateRegionPoint, antenna_sweep, best_point,
                        maxmin_power_control, optimize_pilot_length,
                        rate_region_sweep)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "Device", "DeviceClass", "DropConfig", "Scenario",
    "dbm_to_watt", "watt_to_dbm", "noise_power_watt", "pathloss_db",
    "beta_from_distance_km", "drop_devices", "make_rng",
    "scenario_from_json", "scenario_to_json",
    "PilotPlan", "Scheme", "SchemeConfig", "draw_pilot_plan", "gram_matrix",
    "PowerAllocation", "RateReport", "SinrBreakdown", "UNBOUNDED",
    "asymptotic_machine_rates", "asymptotic_sinr", "compute_sinr",
    "gamma_bar_sc1", "gamma_bar_sc2", "gamma_bar_sc3",
    "gamma_given_plan", "gamma_orthogonal", "rates",
    "McEstimate", "McSample", "UatfEstimate", "estimate_gamma_moment",
    "estimate_orthogonality_defect", "estimate_uatf_components",
    "simulate_training",
    "AntennaPoint", "OptimizationProblem", "PilotPowerMode", "RateRegionPoint",
    "antenna_sweep", "best_point", "maxmin_power_control",
    "optimize_pilot_length", "rate_region_sweep",
    "__version__",
]
