"""Ring geometry, kinematic state and the physical vehicle map.

Vehicles move on a single-lane ring of circumference ``C``. Vehicle ``i`` is
always behind vehicle ``i + 1`` and the leader of the last vehicle is the first
one. The physical map is a noisy particle model whose acceleration follows an
AR(1) response to the executed control input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DT = 1.0 / 6.0
GAMMA = math.sqrt(0.7)
VEHICLE_LENGTH = 3.9
U_MIN, U_MAX = -6.0, 4.0


@dataclass(frozen=True)
class RingGeometry:
    circumference: float
    vehicle_count: int

    def __post_init__(self):
        if not (self.circumference > 0 and math.isfinite(self.circumference)):
            raise ValueError(f"circumference must be positive, got {self.circumference}")
        if int(self.vehicle_count) != self.vehicle_count or self.vehicle_count < 1:
            raise ValueError(f"vehicle_count must be a positive integer, got {self.vehicle_count}")

    @property
    def density(self) -> float:
        return self.vehicle_count / self.circumference

    @classmethod
    def from_density(cls, density: float, circumference: float = 314.0) -> "RingGeometry":
        """Nearest integer fleet for a target density on a fixed ring."""
        return cls(circumference, int(round(density * circumference)))


@dataclass(frozen=True)
class KinematicState:
    x: float
    v: float
    a: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.v, self.a)):
            raise ValueError(f"non-finite kinematic state {self}")


@dataclass(frozen=True)
class VehicleParams:
    length: float = VEHICLE_LENGTH
    gamma: float = GAMMA
    dt: float = DT
    u_min: float = U_MIN
    u_max: float = U_MAX

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be below u_max")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.length > 0:
            raise ValueError("vehicle length must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of the IID normal disturbances and the run seed."""

    sigma_x: float = 0.0
    sigma_v: float = 0.0
    sigma_a: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.sigma_x, self.sigma_v, self.sigma_a) < 0:
            raise ValueError("noise standard deviations must be non-negative")

    @property
    def active(self) -> bool:
        return self.sigma_x > 0 or self.sigma_v > 0 or self.sigma_a > 0

    def draws(self, step: int, n: int) -> np.ndarray:
        """Disturbances ``(eps_x, eps_v, eps_a)`` for every vehicle at one step.

        The stream is keyed by ``(seed, step)`` through the Philox counter, row
        ``i`` belongs to vehicle ``i``; the result does not depend on how the
        fleet update is scheduled.
        """
        if not self.active:
            return np.zeros((n, 3))
        bitgen = np.random.Philox(key=self.seed, counter=[0, 0, 0, step])
        z = np.random.Generator(bitgen).standard_normal((n, 3))
        return z * np.array([self.sigma_x, self.sigma_v, self.sigma_a])


def wrap_position(x, circumference):
    """Map positions onto ``[0, C)``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite position")
    if circumference <= 0:
        raise ValueError("circumference must be positive")
    out = np.mod(x, circumference)
    # fmod rounding can land exactly on C for tiny negative inputs
    out = np.where(out >= circumference, 0.0, out)
    return out if out.ndim else float(out)


def headway(x_i, x_lead, circumference):
    """Forward distance from ``x_i`` to ``x_lead`` modulo the ring."""
    return wrap_position(np.asarray(x_lead, dtype=float) - np.asarray(x_i, dtype=float),
                         circumference)


def fleet_headways(x: np.ndarray, circumference: float) -> np.ndarray:
    return headway(x, np.roll(x, -1), circumference)


def odometer_headways(odometer: np.ndarray, circumference: float) -> np.ndarray:
    """Centre distances from unwrapped positions.

    Agrees with :func:`fleet_headways` while vehicle order is preserved and
    turns negative, rather than wrapping to nearly ``C``, once a vehicle's
    centre passes its leader's.
    """
    d = np.roll(odometer, -1) - odometer
    d[-1] += circumference
    return d


def step_vehicle(state: KinematicState, u: float, u_prev: float, params: VehicleParams,
                 circumference: float, noise=(0.0, 0.0, 0.0)) -> KinematicState:
    """Advance one vehicle by one period of the physical map."""
    for name, val in (("u", u), ("u_prev", u_prev)):
        if not params.u_min <= val <= params.u_max:
            raise ValueError(f"{name}={val} outside [{params.u_min}, {params.u_max}]")
    ex, ev, ea = noise
    x, v, a = step_fleet(np.array([state.x]), np.array([state.v]), np.array([state.a]),
                         np.array([u]), np.array([u_prev]), params, circumference,
                         np.array([[ex, ev, ea]]))
    return KinematicState(float(x[0]), float(v[0]), float(a[0]))


def step_fleet(x, v, a, u, u_prev, params: VehicleParams, circumference: float, noise=None,
               wrap: bool = True):
    """Synchronous update of all vehicles; every output is computed from time ``t``.

    ``wrap=False`` leaves positions unwrapped (odometer readings).
    """
    dt, g = params.dt, params.gamma
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and np.all(np.isfinite(a))):
        bad = int(np.flatnonzero(~(np.isfinite(x) & np.isfinite(v) & np.isfinite(a)))[0])
        raise FloatingPointError(f"non-finite state for vehicle {bad}")
    x_new = x + v * dt
    v_new = v + a * dt
    a_new = g * a + (u - g * u_prev)
    if noise is not None:
        x_new = x_new + noise[:, 0]
        v_new = v_new + noise[:, 1]
        a_new = a_new + noise[:, 2]
    return (wrap_position(x_new, circumference) if wrap else x_new), v_new, a_new
