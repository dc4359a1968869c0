"""Offline choice of the ideal speed ``v*`` that maximises flow without waves.

For every density a grid of ``v*`` values is simulated from the kicked
initial condition. A point is feasible when its speed-spread amplitude stays
within ``amplitude_bound + amplitude_tol``; ``v*_opt`` is the feasible point
with the highest mean speed.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import config_digest, to_jsonable, write_csv, write_json
from .coordination import algorithm as lookup_algorithm
from .core import RingGeometry
from .simulator import ScenarioConfig, simulate

log = logging.getLogger(__name__)

BASELINE_V_STAR = 10.49
BENEFIT_CURVES = (
    ("baseline", "AS1D_g", False),
    ("VSA", "AS1D_g", True),
    ("IAS2D_c", "IAS2D_c", True),
    ("CAS2D_c", "CAS2D_c", True),
)


def default_v_star_grid(lo: float = 2.0, hi: float = 12.0, step: float = 0.5) -> tuple:
    count = int(round((hi - lo) / step)) + 1
    return tuple(float(v) for v in np.round(lo + step * np.arange(count), 10))


@dataclass(frozen=True)
class SweepSpec:
    vehicle_counts: tuple = (36, 38, 40)
    v_star_grid: tuple = field(default_factory=default_v_star_grid)
    amplitude_bound: float = 0.0
    amplitude_tol: float = 0.1
    circumference: float = 314.0
    template: ScenarioConfig | None = None

    def __post_init__(self):
        grid = tuple(float(v) for v in self.v_star_grid)
        if not grid:
            raise ValueError("v* grid is empty")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("v* grid must be strictly ascending")
        if not self.amplitude_tol > 0:
            raise ValueError("amplitude tolerance must be positive")
        if self.amplitude_bound < 0:
            raise ValueError("amplitude bound must be non-negative")
        if not self.vehicle_counts:
            raise ValueError("no densities requested")
        object.__setattr__(self, "v_star_grid", grid)
        object.__setattr__(self, "vehicle_counts", tuple(int(n) for n in self.vehicle_counts))

    @property
    def threshold(self) -> float:
        return self.amplitude_bound + self.amplitude_tol

    def scenario(self, algorithm_name: str, vehicle_count: int, v_star: float,
                 iterations: int | None = None) -> ScenarioConfig:
        base = self.template or ScenarioConfig(RingGeometry(self.circumference, vehicle_count))
        spec = lookup_algorithm(algorithm_name, iterations)
        return replace(base, geometry=RingGeometry(self.circumference, vehicle_count),
                       algorithm=spec, utility=replace(base.utility, v_star=float(v_star)),
                       initial="kicked")


@dataclass
class SweepPoint:
    algorithm: str
    vehicle_count: int
    density: float
    v_star: float
    V: float
    A: float
    feasible: bool
    safety_events: int = 0


@dataclass
class OptimalSpeed:
    algorithm: str
    vehicle_count: int
    density: float
    v_star_opt: float | None
    V: float | None
    A: float | None
    feasible_count: int

    @property
    def found(self) -> bool:
        return self.v_star_opt is not None


def _run_point(args):
    config, threshold = args
    traj, op = simulate(config)
    return SweepPoint(config.algorithm.name, config.geometry.vehicle_count, config.geometry.density,
                      config.utility.v_star, op.V, op.A, bool(op.A <= threshold),
                      len(traj.safety_events))


class PointCache:
    """On-disk memo of sweep points keyed by the full scenario configuration."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, config, threshold):
        return self.directory / f"{config_digest([__version__, config, threshold])}.json"

    def get(self, config, threshold):
        path = self._path(config, threshold)
        if path.exists():
            return SweepPoint(**json.loads(path.read_text()))
        return None

    def put(self, config, threshold, point):
        write_json(self._path(config, threshold), point)


def run_points(configs, threshold: float, jobs: int = 1, cache: PointCache | None = None):
    """Simulate every configuration; output order follows ``(algorithm, density, v*)``."""
    todo, done = [], []
    for cfg in configs:
        hit = cache.get(cfg, threshold) if cache else None
        (done.append(hit) if hit is not None else todo.append(cfg))
    args = [(cfg, threshold) for cfg in todo]
    fresh = []

    def collect(results):
        # results arrive in submission order; each is cached as soon as it exists
        for cfg, point in zip(todo, results):
            if cache:
                cache.put(cfg, threshold, point)
            fresh.append(point)

    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            collect(pool.map(_run_point, args))
    else:
        collect(map(_run_point, args))
    return sorted(done + fresh, key=lambda p: (p.algorithm, p.density, p.v_star))


def select_optimum(points, threshold: float) -> OptimalSpeed:
    """Highest-V feasible point of one (algorithm, density) family; ties go to lower v*."""
    first = points[0]
    feasible = [p for p in points if p.A <= threshold]
    if not feasible:
        log.warning("%s at N=%d: no feasible v* (min A = %.3f)", first.algorithm,
                    first.vehicle_count, min(p.A for p in points))
        return OptimalSpeed(first.algorithm, first.vehicle_count, first.density, None, None, None, 0)
    best = max(feasible, key=lambda p: (p.V, -p.v_star))
    return OptimalSpeed(first.algorithm, first.vehicle_count, first.density, best.v_star, best.V,
                        best.A, len(feasible))


def feasibility_violations(points, threshold: float):
    """v* values that are infeasible while a larger tested v* is feasible."""
    out = []
    ordered = sorted(points, key=lambda p: p.v_star)
    for i, p in enumerate(ordered):
        if p.A > threshold and any(q.A <= threshold for q in ordered[i + 1:]):
            out.append(p.v_star)
    return out


def optimize_v_star(sweep: SweepSpec, algorithm_name: str, jobs: int = 1,
                    cache: PointCache | None = None, iterations: int | None = None):
    """Per-density ``v*_opt``; returns ``(points, optima)``."""
    configs = [sweep.scenario(algorithm_name, n, vs, iterations)
               for n in sweep.vehicle_counts for vs in sweep.v_star_grid]
    points = run_points(configs, sweep.threshold, jobs, cache)
    optima = []
    for n in sorted(sweep.vehicle_counts):
        family = [p for p in points if p.vehicle_count == n]
        bad = feasibility_violations(family, sweep.threshold)
        if bad:
            log.info("%s at N=%d: infeasible v* below a feasible one: %s", algorithm_name, n, bad)
        optima.append(select_optimum(family, sweep.threshold))
    return points, optima


@dataclass
class BenefitRow:
    curve: str
    algorithm: str
    vehicle_count: int
    density: float
    v_star: float | None
    V: float | None
    A: float | None


def benefit_curve(sweep: SweepSpec, jobs: int = 1, cache: PointCache | None = None,
                  curves=BENEFIT_CURVES):
    """Fleet speed against density for the baseline and the three controlled curves."""
    rows, sweeps = [], {}
    for curve, name, optimized in curves:
        if optimized:
            if name not in sweeps:
                sweeps[name] = optimize_v_star(sweep, name, jobs, cache)
            for opt in sweeps[name][1]:
                rows.append(BenefitRow(curve, name, opt.vehicle_count, opt.density, opt.v_star_opt,
                                       opt.V, opt.A))
        else:
            configs = [sweep.scenario(name, n, BASELINE_V_STAR) for n in sweep.vehicle_counts]
            for p in run_points(configs, sweep.threshold, jobs, cache):
                rows.append(BenefitRow(curve, name, p.vehicle_count, p.density, p.v_star, p.V, p.A))
    return rows, sweeps


SWEEP_COLUMNS = ("algorithm", "density", "v_star", "V", "A", "feasible")
BENEFIT_COLUMNS = ("curve", "algorithm", "vehicle_count", "density", "v_star", "V", "A")


def write_sweep_csv(path, points):
    return write_csv(path, SWEEP_COLUMNS,
                     [(p.algorithm, p.density, p.v_star, p.V, p.A, p.feasible) for p in points])


def write_optima_json(path, optima):
    return write_json(path, [to_jsonable(o) for o in optima])


def write_benefit_csv(path, rows):
    return write_csv(path, BENEFIT_COLUMNS, [tuple(getattr(r, c) for c in BENEFIT_COLUMNS)
                                             for r in rows])
