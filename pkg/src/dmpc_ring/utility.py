"""Per-period utility components and the effective utilities built from them.

All component functions broadcast over numpy arrays, so the same code scores
a single horizon step or a whole grid of candidate plans at once.

Speeds entering the components are the one-step-ahead proxies
``v_next + u * dt`` where ``v_next`` is the anticipated velocity one period
ahead of the horizon step being scored.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DT, VEHICLE_LENGTH


@dataclass(frozen=True)
class UtilityParams:
    v_star: float = 10.49
    kappa1: float = 0.7
    kappa2_v: float = 10.0
    kappa2_0: float = 0.25
    kappa3_c: float = 0.6
    kappa3_v: float = 0.3
    kappa3_d: float = 1.0
    w1: float = 1.0
    w2: float = -1.0
    w3_g: float = -10.0
    w3_c: float = -20.0

    def __post_init__(self):
        if not self.v_star > 0:
            raise ValueError("v_star must be positive")
        kappas = (self.kappa1, self.kappa2_v, self.kappa2_0,
                  self.kappa3_c, self.kappa3_v, self.kappa3_d)
        if min(kappas) <= 0:
            raise ValueError("all kappa parameters must be positive")
        if not (self.w1 > 0 and self.w2 < 0 and self.w3_g < 0 and self.w3_c < 0):
            raise ValueError("weights must satisfy w1 > 0, w2 < 0, w3 < 0")


@dataclass(frozen=True)
class AnticipatedState:
    """Noise-free rollout of one vehicle over the planning horizon.

    ``x``, ``v``, ``a`` have length ``H + 2``; ``x`` is wrapped onto the ring
    while ``travel`` is the unwrapped distance covered since the start, which
    is what gap computations use.
    """

    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    travel: np.ndarray

    @property
    def horizon(self) -> int:
        return self.v.shape[-1] - 2


def collision_risk_shape(r):
    return np.exp(-r * r - r)


def u1_forward(v_next, u, params: UtilityParams, dt: float = DT):
    """Reward for moving forward, peaked at the ideal speed."""
    dev = (np.asarray(v_next) + np.asarray(u) * dt - params.v_star) / (params.kappa1 * params.v_star)
    return np.exp(-dev * dev)


def u2_backward(v_next, u, params: UtilityParams, dt: float = DT):
    """Penalty for moving backward; monotone decreasing in speed."""
    return np.exp(-params.kappa2_v * (np.asarray(v_next) + np.asarray(u) * dt + params.kappa2_0))


def collision_scale(speed_ego, speed_lead, params: UtilityParams):
    """Distance scale of the collision risk from the two speed proxies."""
    speed_ego = np.asarray(speed_ego, dtype=float)
    closing = np.maximum(speed_ego - np.asarray(speed_lead, dtype=float), 0.0)
    return params.kappa3_c + params.kappa3_v * np.abs(speed_ego) + params.kappa3_d * closing


def u3_from_gap(gap, scale):
    """Risk from a bumper gap and its scale; one whenever the bodies overlap."""
    gap = np.asarray(gap, dtype=float)
    scale = np.asarray(scale, dtype=float)
    assert np.all(scale > 0), "collision scale must be positive"
    r = np.where(gap > 0, gap / scale, 0.0)
    return np.where(gap > 0, collision_risk_shape(r), 1.0)


def bumper_gap(headway0, travel_ego, v_ego_next, travel_lead, v_lead_next,
               dt: float = DT, length_ego: float = VEHICLE_LENGTH,
               length_lead: float = VEHICLE_LENGTH):
    """Anticipated gap between the ego's front bumper and the leader's rear bumper.

    ``headway0`` is the modular centre distance at the current time; the
    anticipated travel of each vehicle is added unwrapped so the gap stays
    ring-consistent even when a rollout crosses the origin.
    """
    lead_front = headway0 + np.asarray(travel_lead) + np.asarray(v_lead_next) * dt - length_lead / 2
    ego_front = np.asarray(travel_ego) + np.asarray(v_ego_next) * dt + length_ego / 2
    return lead_front - ego_front


def u3_collision(ego: AnticipatedState, lead: AnticipatedState, h, u_ego, u_lead,
                 headway0: float, params: UtilityParams, dt: float = DT,
                 length_ego: float = VEHICLE_LENGTH, length_lead: float = VEHICLE_LENGTH):
    """Pairwise collision risk between the ego and the vehicle ahead at horizon step ``h``."""
    gap = bumper_gap(headway0, ego.travel[..., h + 1], ego.v[..., h + 1],
                     lead.travel[..., h + 1], lead.v[..., h + 1], dt, length_ego, length_lead)
    scale = collision_scale(ego.v[..., h + 1] + u_ego * dt, lead.v[..., h + 1] + u_lead * dt,
                            params)
    return u3_from_gap(gap, scale)


def _maybe_float(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def _risk_series(ego, lead, u_ego, u_lead, headway0, params, dt, length):
    h = np.arange(np.shape(u_ego)[-1])
    return u3_collision(ego, lead, h, np.asarray(u_ego), np.asarray(u_lead), headway0,
                        params, dt, length, length)


def effective_cumulative(u_ego, ego: AnticipatedState, u_lead, lead: AnticipatedState,
                         headway_lead: float, params: UtilityParams, dt: float = DT,
                         objective: str = "own", follower: AnticipatedState | None = None,
                         u_follower=None, headway_follower: float | None = None,
                         length: float = VEHICLE_LENGTH):
    """Horizon sum of weighted per-period utilities.

    With ``objective="centralized-local"`` the immediate follower's collision
    term (the only other fleet term that moves with the ego's plan) is added.
    """
    u_ego = np.asarray(u_ego, dtype=float)
    u_lead = np.asarray(u_lead, dtype=float)
    H1 = u_ego.shape[-1]
    if u_lead.shape[-1] != H1 or ego.v.shape[-1] != H1 + 1 or lead.v.shape[-1] != H1 + 1:
        raise ValueError("plan and anticipation lengths do not match")
    v_next = ego.v[..., 1:]
    total = (params.w1 * u1_forward(v_next, u_ego, params, dt)
             + params.w2 * u2_backward(v_next, u_ego, params, dt)
             + params.w3_c * _risk_series(ego, lead, u_ego, u_lead, headway_lead, params, dt, length))
    if objective == "centralized-local":
        if follower is None or u_follower is None or headway_follower is None:
            raise ValueError("centralized-local objective needs the follower rollout")
        u_follower = np.asarray(u_follower, dtype=float)
        if u_follower.shape[-1] != H1:
            raise ValueError("follower plan length does not match")
        total = total + params.w3_c * _risk_series(follower, ego, u_follower, u_ego,
                                                   headway_follower, params, dt, length)
    elif objective != "own":
        raise ValueError(f"unknown objective {objective!r}")
    return _maybe_float(np.sum(total, axis=-1))


def effective_g_transformed(u_ego, ego: AnticipatedState, u_lead, lead: AnticipatedState,
                            headway_lead: float, params: UtilityParams, dt: float = DT,
                            length: float = VEHICLE_LENGTH):
    """Bounded-rationality utility: first-period speed terms plus the worst-case risk."""
    u_ego = np.asarray(u_ego, dtype=float)
    risk = _risk_series(ego, lead, u_ego, np.asarray(u_lead, dtype=float), headway_lead,
                        params, dt, length)
    return _maybe_float(params.w1 * u1_forward(ego.v[..., 1], u_ego[..., 0], params, dt)
                        + params.w2 * u2_backward(ego.v[..., 1], u_ego[..., 0], params, dt)
                        + params.w3_g * np.max(risk, axis=-1))
