"""Iterated best response across the fleet within one time step.

Every round is a synchronous (Jacobi) update: all agents respond to the plans
posted in the previous round, then the board is swapped. The executed action
of each agent is the first element of its final plan.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .core import VehicleParams
from .policy import (HORIZON, LAMBDA, SearchGrid, boltzmann_weights, fleet_utilities,
                     pack_coefficients)
from .utility import UtilityParams

UTILITY_FORMS = ("g-transformed", "cumulative")
OBJECTIVES = ("own", "centralized-local")

# name: (utility form, curve order, objective, default iterations)
CATALOG = {
    "AS1D_g": ("g-transformed", 0, "own", 0),
    "AS2D_g": ("g-transformed", 1, "own", 0),
    "AS1D_c": ("cumulative", 0, "own", 0),
    "AS2D_c": ("cumulative", 1, "own", 0),
    "IAS1D_c": ("cumulative", 0, "own", 2),
    "IAS2D_c": ("cumulative", 1, "own", 2),
    "CAS1D_c": ("cumulative", 0, "centralized-local", 2),
    "CAS2D_c": ("cumulative", 1, "centralized-local", 2),
}


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    utility_form: str
    order: int
    objective: str
    iterations: int

    def __post_init__(self):
        if self.utility_form not in UTILITY_FORMS:
            raise ValueError(f"unknown utility form {self.utility_form!r}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.order not in (0, 1):
            raise ValueError("curve order must be 0 or 1")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.utility_form == "g-transformed" and (self.iterations or self.objective != "own"):
            raise ValueError("g-transformed utility runs without iteration on the own objective")
        if self.name.startswith("AS") and self.iterations:
            raise ValueError(f"{self.name} is not iterated")

    @property
    def ahead(self) -> int:
        return attention_set(self, self.iterations)[0]

    @property
    def behind(self) -> int:
        return attention_set(self, self.iterations)[1]


def algorithm(name: str, iterations: int | None = None) -> AlgorithmSpec:
    """Catalog lookup; ``iterations`` overrides the default depth of iterated variants."""
    try:
        form, order, objective, default_t = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {sorted(CATALOG)}") from None
    return AlgorithmSpec(name, form, order, objective,
                         default_t if iterations is None else int(iterations))


def attention_set(spec: AlgorithmSpec, tau: int) -> tuple[int, int]:
    """Vehicles ahead and behind whose state can influence the ego after round ``tau``."""
    reach = min(tau + 1, spec.iterations + 1)
    return reach, reach if spec.objective == "centralized-local" else 0


@dataclass
class PlanBoard:
    plans: np.ndarray
    tau: int = 0

    @classmethod
    def zeros(cls, n: int, horizon: int = HORIZON) -> "PlanBoard":
        return cls(np.zeros((n, horizon + 1)))


def share_plans(board: PlanBoard, ahead: int, behind: int = 0) -> dict:
    """Per-offset views of the board; row ``i`` of view ``l`` is vehicle ``i + l``'s plan."""
    return {l: np.roll(board.plans, -l, axis=0) for l in range(-behind, ahead + 1) if l}


@lru_cache(maxsize=None)
def search_grid(order: int, horizon: int = HORIZON, lam: float = LAMBDA) -> SearchGrid:
    return SearchGrid(order=order, horizon=horizon, lam=lam)


@dataclass
class TauResult:
    actions: np.ndarray
    board: PlanBoard
    deltas: list = field(default_factory=list)


def tau_loop(x, v, a, spec: AlgorithmSpec, params: UtilityParams, circumference: float,
             vehicle: VehicleParams = VehicleParams(), grid: SearchGrid | None = None,
             coef=None, gaps=None) -> TauResult:
    """Run ``T + 1`` synchronous best-response rounds from an all-zero board.

    ``gaps`` overrides the modular centre headways derived from ``x``.
    """
    grid = grid or search_grid(spec.order)
    if coef is None:
        coef = pack_coefficients(params, spec.utility_form, vehicle.length)
    board = PlanBoard.zeros(len(x), grid.horizon)
    deltas = []
    for tau in range(spec.iterations + 1):
        util = fleet_utilities(x, v, a, board.plans, grid, spec.utility_form, spec.objective,
                               params, circumference, vehicle, coef, gaps)
        if not np.all(np.isfinite(util[:, grid.mask])):
            agent = int(np.flatnonzero(~np.all(np.isfinite(util[:, grid.mask]), axis=1))[0])
            raise FloatingPointError(f"non-finite utility for agent {agent} in round {tau}")
        plans = boltzmann_weights(util, grid.mask, grid.lam) @ grid.plans
        deltas.append(float(np.max(np.abs(plans - board.plans))))
        board = PlanBoard(plans, tau + 1)
    return TauResult(board.plans[:, 0].copy(), board, deltas)


def with_iterations(spec: AlgorithmSpec, iterations: int) -> AlgorithmSpec:
    return replace(spec, iterations=iterations)
