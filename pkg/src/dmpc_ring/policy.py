"""Single-agent best response over a grid of polynomial action curves.

A plan over the horizon ``h = 0..H`` is parameterised as
``u_h = u0 + u1 * h * dt`` (``u1`` absent for constant plans). Every grid
curve is scored, infeasible curves are masked out, and the executed plan is
the Boltzmann average of the grid plans with weights ``exp(lam * U)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .core import DT, KinematicState, VehicleParams, headway
from .utility import (AnticipatedState, UtilityParams, effective_cumulative,
                      effective_g_transformed)

HORIZON = 7
LAMBDA = 200.0


@dataclass(frozen=True)
class ActionCurve:
    u0: float
    u1: float | None = None

    @property
    def order(self) -> int:
        return 0 if self.u1 is None else 1


@dataclass(frozen=True)
class HorizonPlan:
    actions: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.actions) - 1

    @property
    def first(self) -> float:
        return float(self.actions[0])

    @classmethod
    def zeros(cls, horizon: int = HORIZON) -> "HorizonPlan":
        return cls(np.zeros(horizon + 1))


def expand_coefficients(u0, u1, horizon: int = HORIZON, dt: float = DT) -> np.ndarray:
    """Plans for arrays of curve coefficients, shape ``(..., H + 1)``."""
    h = np.arange(horizon + 1) * dt
    return np.asarray(u0, dtype=float)[..., None] + np.asarray(u1, dtype=float)[..., None] * h


def expand_curve(curve: ActionCurve, horizon: int = HORIZON, dt: float = DT) -> HorizonPlan:
    if curve.order not in (0, 1):
        raise ValueError("only constant and linear curves are supported")
    return HorizonPlan(expand_coefficients(curve.u0, curve.u1 or 0.0, horizon, dt))


def feasibility_mask(coefficients: np.ndarray, bounds=(-6.0, 4.0), horizon: int = HORIZON,
                     dt: float = DT) -> np.ndarray:
    """True where the expanded curve stays within bounds; linear curves peak at the ends."""
    lo, hi = bounds
    u0, u1 = coefficients[:, 0], coefficients[:, 1]
    end = u0 + u1 * horizon * dt
    # tolerance absorbs rounding in grid values that sit exactly on a bound
    tol = 1e-12
    return (u0 >= lo - tol) & (u0 <= hi + tol) & (end >= lo - tol) & (end <= hi + tol)


def rollout_offsets(plans: np.ndarray, dt: float = DT):
    """Plan-dependent parts of the noise-free rollout.

    For a vehicle with state ``(x, v, a)`` and ``b = v + a*dt`` the rollout
    gives, for every horizon step ``h``, the speed proxy
    ``v_hat[h+1] + u_h*dt = b + speed_off[h]`` and the anticipated front
    ``travel[h+1] + v_hat[h+1]*dt = dt*v + (h+1)*dt*b + front_off[h]``.
    """
    speed_off = dt * np.cumsum(plans, axis=-1)
    front_off = dt * np.cumsum(speed_off - dt * plans, axis=-1)
    return speed_off, front_off


def state_terms(v, a, horizon: int = HORIZON, dt: float = DT):
    """State-dependent parts matching :func:`rollout_offsets`."""
    b = v + a * dt
    steps = np.arange(1, horizon + 2) * dt
    return b, dt * v[:, None] + b[:, None] * steps


@dataclass
class SearchGrid:
    """Evenly spaced curve coefficients with a pre-computed feasibility mask."""

    order: int = 1
    u0_range: tuple = (-6.0, 4.0)
    u0_count: int = 41
    u1_range: tuple = (-1.0, 1.0)
    u1_count: int = 11
    lam: float = LAMBDA
    horizon: int = HORIZON
    dt: float = DT
    bounds: tuple = (-6.0, 4.0)
    coefficients: np.ndarray = field(init=False, repr=False)
    plans: np.ndarray = field(init=False, repr=False)
    mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.order not in (0, 1):
            raise ValueError("grid order must be 0 or 1")
        u0 = np.linspace(*self.u0_range, self.u0_count)
        u1 = np.linspace(*self.u1_range, self.u1_count) if self.order == 1 else np.zeros(1)
        c0, c1 = np.meshgrid(u0, u1, indexing="ij")
        self.coefficients = np.column_stack([c0.ravel(), c1.ravel()])
        self.plans = expand_coefficients(c0.ravel(), c1.ravel(), self.horizon, self.dt)
        self.mask = feasibility_mask(self.coefficients, self.bounds, self.horizon, self.dt)
        assert self.mask.any(), "every grid curve is infeasible"
        self.speed_off, self.front_off = rollout_offsets(self.plans, self.dt)
        # (H + 1, G) copies for the compiled kernel
        self.speed_off_t = np.ascontiguousarray(self.speed_off.T)
        self.front_off_t = np.ascontiguousarray(self.front_off.T)
        self._backward = {}

    def backward_factor(self, kappa2_v: float) -> np.ndarray:
        """Plan-dependent factor of the backward penalty, ``(H + 1, G)``."""
        if kappa2_v not in self._backward:
            self._backward[kappa2_v] = np.exp(-kappa2_v * self.speed_off_t)
        return self._backward[kappa2_v]

    @property
    def size(self) -> int:
        return len(self.coefficients)

    @property
    def spacing(self) -> tuple:
        s0 = (self.u0_range[1] - self.u0_range[0]) / (self.u0_count - 1)
        s1 = (self.u1_range[1] - self.u1_range[0]) / (self.u1_count - 1) if self.order else 0.0
        return s0, s1


def anticipate(state: KinematicState, plan, dt: float = DT,
               circumference: float | None = None) -> AnticipatedState:
    """Noise-free rollout with a one-period lag between plan and acceleration.

    ``plan`` may carry leading batch dimensions; the rollout is computed for
    each plan independently.
    """
    plan = np.asarray(plan, dtype=float)
    shape = plan.shape[:-1] + (plan.shape[-1] + 1,)
    acc = np.empty(shape)
    acc[..., 0] = state.a
    acc[..., 1:] = plan
    vel = np.empty(shape)
    vel[..., 0] = state.v
    vel[..., 1:] = state.v + dt * np.cumsum(acc[..., :-1], axis=-1)
    travel = np.empty(shape)
    travel[..., 0] = 0.0
    travel[..., 1:] = dt * np.cumsum(vel[..., :-1], axis=-1)
    x = state.x + travel
    if circumference is not None:
        x = np.mod(x, circumference)
    return AnticipatedState(x=x, v=vel, a=acc, travel=travel)


@dataclass(frozen=True)
class DecisionState:
    """Perceived states keyed by offset from the ego (0 ego, +1 leader, -1 follower)."""

    states: dict
    circumference: float

    def __getitem__(self, offset: int) -> KinematicState:
        return self.states[offset]

    def gap(self, offset: int) -> float:
        """Centre headway from vehicle ``offset`` to vehicle ``offset + 1``."""
        return float(headway(self.states[offset].x, self.states[offset + 1].x,
                             self.circumference))


def boltzmann_weights(utilities: np.ndarray, mask: np.ndarray, lam: float) -> np.ndarray:
    """Softmax over the last axis restricted to masked-in points, shifted by the max."""
    u = np.where(mask, utilities, -np.inf)
    top = np.max(u, axis=-1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise FloatingPointError("no finite utility among feasible grid points")
    w = np.exp(lam * (u - top))
    return w / np.sum(w, axis=-1, keepdims=True)


def argmax_index(utilities: np.ndarray, grid: SearchGrid) -> int:
    """Grid argmax; ties go to the smaller ``|u0|`` and then the smaller ``|u1|``."""
    u = np.where(grid.mask, utilities, -np.inf)
    best = np.flatnonzero(u == u.max())
    c = grid.coefficients[best]
    order = np.lexsort((np.abs(c[:, 1]), np.abs(c[:, 0])))
    return int(best[order[0]])


def grid_utilities(decision: DecisionState, grid: SearchGrid, utility_form: str,
                   objective: str, params: UtilityParams, lead_plan=None,
                   follower_plan=None, vehicle: VehicleParams = VehicleParams()) -> np.ndarray:
    """Effective utility of every grid plan for one agent."""
    dt, C, H = vehicle.dt, decision.circumference, grid.horizon
    zero = np.zeros(H + 1)
    lead_plan = zero if lead_plan is None else np.asarray(lead_plan, dtype=float)
    ego = anticipate(decision[0], grid.plans, dt, C)
    if utility_form == "g-transformed":
        # bounded rationality: the leader is anticipated with a zero plan
        lead = anticipate(decision[1], zero, dt, C)
        return effective_g_transformed(grid.plans, ego, zero, lead, decision.gap(0), params,
                                       dt, vehicle.length)
    if utility_form != "cumulative":
        raise ValueError(f"unknown utility form {utility_form!r}")
    lead = anticipate(decision[1], lead_plan, dt, C)
    kwargs = {}
    if objective == "centralized-local":
        follower_plan = zero if follower_plan is None else np.asarray(follower_plan, dtype=float)
        kwargs = dict(follower=anticipate(decision[-1], follower_plan, dt, C),
                      u_follower=follower_plan, headway_follower=decision.gap(-1))
    return effective_cumulative(grid.plans, ego, lead_plan, lead, decision.gap(0), params, dt,
                                objective=objective, length=vehicle.length, **kwargs)


def best_response(decision: DecisionState, grid: SearchGrid, algorithm, params: UtilityParams,
                  lead_plan=None, follower_plan=None,
                  vehicle: VehicleParams = VehicleParams()) -> HorizonPlan:
    """Boltzmann-averaged plan of one agent given its neighbours' plans.

    ``algorithm`` supplies ``utility_form`` and ``objective``. Neighbour plans
    that are not given read as zero sequences.
    """
    util = grid_utilities(decision, grid, algorithm.utility_form, algorithm.objective, params,
                          lead_plan, follower_plan, vehicle)
    p = boltzmann_weights(util, grid.mask, grid.lam)
    return HorizonPlan(p @ grid.plans)


def pack_coefficients(params: UtilityParams, utility_form: str, length: float) -> np.ndarray:
    w3 = params.w3_g if utility_form == "g-transformed" else params.w3_c
    coef = np.empty(11)
    coef[_kernel.V_STAR] = params.v_star
    coef[_kernel.K1] = params.kappa1
    coef[_kernel.K2V] = params.kappa2_v
    coef[_kernel.K20] = params.kappa2_0
    coef[_kernel.K3C] = params.kappa3_c
    coef[_kernel.K3V] = params.kappa3_v
    coef[_kernel.K3D] = params.kappa3_d
    coef[_kernel.W1] = params.w1
    coef[_kernel.W2] = params.w2
    coef[_kernel.W3] = w3
    coef[_kernel.LENGTH] = length
    return coef


def fleet_utilities(x, v, a, board: np.ndarray, grid: SearchGrid, utility_form: str,
                    objective: str, params: UtilityParams, circumference: float,
                    vehicle: VehicleParams = VehicleParams(), coef=None, gaps=None) -> np.ndarray:
    """Utilities of every grid plan for every agent at once, shape ``(N, G)``.

    ``board`` holds each vehicle's current plan, ``(N, H + 1)``; agent ``i``
    reads its leader's row ``i + 1`` and, for the centralized-local
    objective, its follower's row ``i - 1``.
    """
    dt = vehicle.dt
    g_form = utility_form == "g-transformed"
    if g_form:
        board = np.zeros_like(board)
    if coef is None:
        coef = pack_coefficients(params, utility_form, vehicle.length)
    b, front0 = state_terms(v, a, grid.horizon, dt)
    plan_speed, plan_front = rollout_offsets(board, dt)
    speed = b[:, None] + plan_speed
    front = front0 + plan_front
    if gaps is None:
        gaps = headway(x, np.roll(x, -1), circumference)
    rear = objective == "centralized-local"
    out = np.empty((len(x), grid.size))
    return _kernel.utility_kernel(b, front0, gaps, np.roll(front, -1, axis=0),
                                  np.roll(speed, -1, axis=0), np.roll(gaps, 1),
                                  np.roll(front, 1, axis=0), np.roll(speed, 1, axis=0),
                                  grid.speed_off_t, grid.front_off_t,
                                  grid.backward_factor(params.kappa2_v), grid.mask, coef,
                                  g_form, rear, out)
