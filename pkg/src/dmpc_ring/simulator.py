"""Closed-loop fleet simulation on the ring and its order parameters."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .coordination import AlgorithmSpec, algorithm, search_grid, tau_loop
from .core import (NoiseSpec, RingGeometry, VehicleParams, odometer_headways, step_fleet,
                   wrap_position)
from .policy import pack_coefficients
from .utility import UtilityParams

log = logging.getLogger(__name__)

INITIAL_CONDITIONS = ("uniform", "kicked")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class KickSpec:
    """Constant braking of one vehicle at the start of the run, while it still moves.

    ``mode="floor"`` executes ``min(policy action, magnitude)``, so the kicked
    vehicle brakes at least as hard as the kick but may still brake harder to
    avoid its leader; ``mode="override"`` replaces the action outright.
    """

    magnitude: float = -1.0
    duration: float = 6.0
    vehicle: int = -1
    mode: str = "floor"

    def __post_init__(self):
        if self.mode not in ("floor", "override"):
            raise ValueError("kick mode must be 'floor' or 'override'")
        if self.duration < 0:
            raise ValueError("kick duration must be non-negative")


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: RingGeometry
    algorithm: AlgorithmSpec = field(default_factory=lambda: algorithm("AS1D_g"))
    utility: UtilityParams = field(default_factory=UtilityParams)
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    duration: float = 600.0
    transient_skip: float | None = None
    initial: str = "kicked"
    kick: KickSpec = field(default_factory=KickSpec)
    initial_speed: float | None = None

    def __post_init__(self):
        if self.initial not in INITIAL_CONDITIONS:
            raise ValueError(f"initial condition must be one of {INITIAL_CONDITIONS}")
        if not self.duration > self.skip >= 0:
            raise ValueError("need duration > transient_skip >= 0")
        n, c = self.geometry.vehicle_count, self.geometry.circumference
        if n * self.vehicle.length > c:
            raise ValueError(f"{n} vehicles of length {self.vehicle.length} do not fit on {c} m")

    @property
    def skip(self) -> float:
        return self.duration / 2 if self.transient_skip is None else self.transient_skip

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.vehicle.dt))

    @property
    def start_speed(self) -> float:
        return self.utility.v_star - 1.0 if self.initial_speed is None else self.initial_speed


@dataclass
class OrderParameters:
    V: float
    A: float


@dataclass
class FleetTrajectory:
    """States at the start of each step and the actions executed during it."""

    dt: float
    circumference: float
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    u: np.ndarray
    d: np.ndarray
    tau_deltas: np.ndarray
    min_gap: np.ndarray
    safety_events: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.v)

    @property
    def time(self) -> np.ndarray:
        return np.arange(self.steps) * self.dt


def init_fleet(config: ScenarioConfig):
    """Equally spaced fleet at ``v* - 1`` with zero acceleration."""
    n, c = config.geometry.vehicle_count, config.geometry.circumference
    x = np.arange(n) * (c / n)
    return x, np.full(n, float(config.start_speed)), np.zeros(n)


def apply_kick(velocity: float, elapsed: float, kick: KickSpec = KickSpec()):
    """Override for the kicked vehicle, or ``None`` once the window ends or it has stopped."""
    if 0.0 <= elapsed < kick.duration and velocity > 0:
        return kick.magnitude
    return None


def run(config: ScenarioConfig, on_step=None) -> FleetTrajectory:
    """Simulate the closed loop: negotiation, kick override, physical update.

    ``on_step(k, x, v, a, result, gaps)`` is called after each negotiation,
    before the kick override; handy for diagnostics that need the pre-update
    state (``gaps`` are the odometer headways the negotiation used).
    """
    geo, veh, spec = config.geometry, config.vehicle, config.algorithm
    n, c, dt = geo.vehicle_count, geo.circumference, veh.dt
    steps = config.steps
    grid = search_grid(spec.order)
    coef = pack_coefficients(config.utility, spec.utility_form, veh.length)
    kicked = config.kick.vehicle % n if config.initial == "kicked" else None

    rec = {k: np.empty((steps, n)) for k in "xvaud"}
    deltas = np.empty((steps, spec.iterations + 1))
    min_gap = np.empty(steps)
    events = []
    odo, v, a = init_fleet(config)
    x = odo.copy()
    u_prev = np.zeros(n)
    for k in range(steps):
        d = odometer_headways(odo, c)
        try:
            result = tau_loop(x, v, a, spec, config.utility, c, veh, grid, coef, d)
        except (FloatingPointError, ValueError) as exc:
            raise SimulationError(f"step {k}: {exc}") from exc
        if on_step is not None:
            on_step(k, x, v, a, result, d)
        u = result.actions
        if kicked is not None:
            override = apply_kick(v[kicked], k * dt, config.kick)
            if override is not None:
                u = u.copy()
                u[kicked] = override if config.kick.mode == "override" else min(u[kicked], override)
        gaps = d - veh.length
        min_gap[k] = gaps.min()
        if min_gap[k] < 0:
            for i in np.flatnonzero(gaps < 0):
                events.append({"step": k, "agent": int(i), "gap": float(gaps[i])})
        for name, arr in zip("xvaud", (x, v, a, u, d)):
            rec[name][k] = arr
        deltas[k] = result.deltas
        noise = config.noise.draws(k, n) if config.noise.active else None
        odo, v, a = step_fleet(odo, v, a, u, u_prev, veh, c, noise, wrap=False)
        bad = ~(np.isfinite(odo) & np.isfinite(v) & np.isfinite(a))
        if bad.any():
            raise SimulationError(f"step {k}: non-finite state for agent {int(np.flatnonzero(bad)[0])}")
        x = wrap_position(odo, c)
        u_prev = u
    if events:
        log.warning("%d negative bumper gaps recorded, minimum %.3f m", len(events), min_gap.min())
    return FleetTrajectory(dt, c, rec["x"], rec["v"], rec["a"], rec["u"], rec["d"],
                           deltas, min_gap, events)


def order_parameters(traj: FleetTrajectory, transient_skip: float) -> OrderParameters:
    """Mean speed and mean instantaneous speed spread after the transient."""
    start = int(round(transient_skip / traj.dt))
    tail = traj.v[start:]
    if len(tail) == 0:
        raise ValueError("no steps left after skipping transients")
    return OrderParameters(V=float(tail.mean()), A=float(np.mean(tail.max(axis=1) - tail.min(axis=1))))


def simulate(config: ScenarioConfig) -> tuple[FleetTrajectory, OrderParameters]:
    traj = run(config)
    return traj, order_parameters(traj, config.skip)
