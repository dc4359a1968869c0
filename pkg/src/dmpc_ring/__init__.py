"""Distributed model-predictive car following on a single-lane ring road.

Each vehicle picks its acceleration by scoring a grid of low-order action
curves over a short horizon and Boltzmann-averaging the plans; vehicles can
iterate best responses to their neighbours' shared plans before acting.
"""
__version__ = "0.1.0"

from .core import (DT, GAMMA, VEHICLE_LENGTH, KinematicState, NoiseSpec, RingGeometry,
                   VehicleParams, fleet_headways, step_fleet, wrap_position)
from .utility import UtilityParams
from .policy import ActionCurve, HorizonPlan, SearchGrid, best_response, boltzmann_weights
from .coordination import CATALOG, AlgorithmSpec, algorithm, tau_loop
from .simulator import KickSpec, OrderParameters, ScenarioConfig, order_parameters, run, simulate
from .mechanism import SweepSpec, benefit_curve, optimize_v_star
from .stability import analyse, classify, find_fixed_point, policy_jacobian, z_roots

__all__ = [
    "DT", "GAMMA", "VEHICLE_LENGTH", "KinematicState", "NoiseSpec", "RingGeometry",
    "VehicleParams", "fleet_headways", "step_fleet", "wrap_position", "UtilityParams",
    "ActionCurve", "HorizonPlan", "SearchGrid", "best_response", "boltzmann_weights", "CATALOG",
    "AlgorithmSpec", "algorithm", "tau_loop", "KickSpec", "OrderParameters", "ScenarioConfig",
    "order_parameters", "run", "simulate", "SweepSpec", "benefit_curve", "optimize_v_star",
    "analyse", "classify", "find_fixed_point", "policy_jacobian", "z_roots",
]
