"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one ``criterion N: PASS/FAIL ...`` line that is printed in
the terminal summary. Sweep points can be memoised across sessions by setting
``DMPC_RING_ACCEPT_CACHE`` to a directory; without it every point is run fresh.
Criteria 2 and 3 simulate about 150 ten-minute scenarios and are marked slow.
"""
import os
import subprocess
import sys
import time
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from oracles import scalar_cumulative, scalar_g_transformed

from dmpc_ring.cli import time_steps, timing_stats
from dmpc_ring.config import resolve, sweep_spec
from dmpc_ring.coordination import algorithm, search_grid, tau_loop, with_iterations
from dmpc_ring.core import KinematicState, RingGeometry
from dmpc_ring.mechanism import BASELINE_V_STAR, PointCache, benefit_curve, optimize_v_star
from dmpc_ring.policy import boltzmann_weights, fleet_utilities, pack_coefficients
from dmpc_ring.simulator import ScenarioConfig, run, simulate
from dmpc_ring.stability import MARGINAL, STABLE, UNSTABLE, analyse
from dmpc_ring.utility import UtilityParams

C = 314.0
TESTS = Path(__file__).parent


def report(number, ok, detail, status=None):
    status = status or ("PASS" if ok else "FAIL")
    line = f"criterion {number}: {status:4s} {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


@pytest.fixture(scope="module")
def cache():
    where = os.environ.get("DMPC_RING_ACCEPT_CACHE")
    return PointCache(where) if where else None


@pytest.fixture(scope="module")
def sweep():
    # the same resolution path as `dmpc-ring sweep`, so a shared cache is hit
    return sweep_spec(resolve(overrides=["sweep.vehicle_counts=[36, 38, 40]"]))


@pytest.fixture(scope="module")
def benefit(sweep, cache):
    return benefit_curve(sweep, cache=cache)


# ----------------------------------------------------------------------------------------------

def test_criterion_1_two_regimes():
    spec = algorithm("AS1D_g")
    _, low = simulate(ScenarioConfig(RingGeometry(C, 24), spec))
    _, high = simulate(ScenarioConfig(RingGeometry(C, 38), spec))
    ok = low.A < 0.1 and high.A > 3.0
    report(1, ok, f"N=24 A={low.A:.4f} (<0.1), N=38 A={high.A:.3f} (>3)")
    assert ok


@pytest.mark.slow
def test_criterion_2_optimal_speed_points(sweep, cache):
    at = replace(sweep, vehicle_counts=(38,))
    assert algorithm("IAS2D_c").iterations == 2
    (_, (vsa,)) = optimize_v_star(at, "AS1D_g", cache=cache)
    (_, (ias,)) = optimize_v_star(at, "IAS2D_c", cache=cache)
    a, b = vsa.v_star_opt, ias.v_star_opt
    found = a is not None and b is not None
    exact = found and abs(a - 3.5) <= 0.5 and abs(b - 9.0) <= 0.5
    ordered = found and b - a >= 4.0
    ok = exact or ordered
    report(2, ok, f"rho=0.121 v*_opt AS1D_g={a} (3.5+-0.5), IAS2D_c={b} (9.0+-0.5); "
                  f"difference {None if not found else b - a} (fallback >= 4)")
    assert ok


@pytest.mark.slow
def test_criterion_3_benefit_ratio(benefit):
    rows, _ = benefit
    by = {}
    for r in rows:
        by.setdefault(r.curve, {})[r.vehicle_count] = r
    counts = sorted(by["baseline"])
    base = [by["baseline"][n] for n in counts]
    ias = [by["IAS2D_c"][n] for n in counts]
    cas = [by["CAS2D_c"][n] for n in counts]
    assert all(r.v_star == BASELINE_V_STAR for r in base)
    found = all(r.V is not None for r in ias + cas)
    ratio = np.mean([r.V for r in ias]) / np.mean([r.V for r in base]) if found else float("nan")
    smooth = found and all(r.A <= 0.2 for r in ias)
    cas_ok = found and all(c.V >= i.V - 0.1 for c, i in zip(cas, ias))
    ok = found and ratio >= 1.7 and smooth and cas_ok
    fmt = lambda rs: ", ".join(f"{r.V:.3f}" if r.V is not None else "none" for r in rs)
    report(3, ok, f"V ratio {ratio:.3f} (>=1.7); IAS2D_c A max "
                  f"{max((r.A for r in ias if r.A is not None), default=float('nan')):.3f} (<=0.2); "
                  f"V base [{fmt(base)}] IAS [{fmt(ias)}] CAS [{fmt(cas)}] (CAS >= IAS-0.1)")
    assert ok


def test_criterion_4_tau_loop_converges_by_two_rounds():
    params = UtilityParams(v_star=7.5)
    spec = algorithm("IAS2D_c")
    deep = with_iterations(spec, 4)
    grid = search_grid(spec.order)
    coef = pack_coefficients(params, spec.utility_form, 3.9)
    worst = []

    def compare(k, x, v, a, result, gaps):
        ref = tau_loop(x, v, a, deep, params, C, grid=grid, coef=coef, gaps=gaps)
        worst.append(float(np.max(np.abs(ref.actions - result.actions))))

    run(ScenarioConfig(RingGeometry(C, 38), spec, params), on_step=compare)
    top = max(worst)
    ok = top < 0.05
    report(4, ok, f"max |u(T=2) - u(T=4)| = {top:.2e} m/s^2 over {len(worst)} steps (<0.05)")
    assert ok


def test_criterion_5_zero_iterations_is_plain_best_response():
    geo = RingGeometry(C, 38)
    a = run(ScenarioConfig(geo, algorithm("IAS2D_c", 0), duration=100 / 6))
    b = run(ScenarioConfig(geo, algorithm("AS2D_c"), duration=100 / 6))
    diff = float(np.max(np.abs(a.u - b.u)))
    ok = a.steps == 100 and diff <= 1e-12
    report(5, ok, f"max |u(IAS2D_c, T=0) - u(AS2D_c)| = {diff:.1e} over {a.steps} steps (<=1e-12)")
    assert ok


def _brute_force(form, objective, states, gaps, board, params, grid):
    """Utility of every grid curve by explicit loops, independent of the vectorised code."""
    ego, lead, fol = states[0], states[1], states[-1]
    values = np.full(grid.size, -np.inf)
    u0s = np.linspace(-6.0, 4.0, 41)
    u1s = np.linspace(-1.0, 1.0, 11)
    times = np.arange(8) / 6
    idx = 0
    for u0 in u0s:
        for u1 in u1s:
            plan = [u0 + u1 * t for t in times]
            if min(plan) >= -6.0 - 1e-12 and max(plan) <= 4.0 + 1e-12:
                if form == "g-transformed":
                    values[idx] = scalar_g_transformed(ego, plan, lead, gaps[0], params)
                else:
                    rear = (fol, board[-1], gaps[-1]) if objective == "centralized-local" else None
                    values[idx] = scalar_cumulative(ego, plan, lead, board[1], gaps[0], params,
                                                    rear=rear)
            idx += 1
    return values, np.array([(u0, u1) for u0 in u0s for u1 in u1s])


def test_criterion_6_boltzmann_average_tracks_the_exhaustive_argmax():
    rng = np.random.default_rng(6)
    grid = search_grid(1)
    params = UtilityParams()
    names = ("AS2D_c", "AS2D_g", "CAS2D_c")
    n = 4
    checked = within = 0
    worst = (0.0, 0.0)
    for trial in range(1000):
        spec = algorithm(names[trial % 3])
        v = rng.uniform(0.0, 12.0, n)
        a = rng.uniform(-3.0, 3.0, n)
        # a short ring sized to the random gaps, so the follower is close as well
        gaps = rng.uniform(5.0, 30.0, n)
        ring = float(gaps.sum())
        x = np.concatenate([[0.0], np.cumsum(gaps[:-1])])
        board = grid.plans[rng.integers(0, grid.size, n)] * rng.integers(0, 2)
        coef = pack_coefficients(params, spec.utility_form, 3.9)
        util = fleet_utilities(x, v, a, board, grid, spec.utility_form, spec.objective, params,
                               ring, coef=coef, gaps=gaps)[0]
        averaged = boltzmann_weights(util, grid.mask, grid.lam) @ grid.coefficients
        states = {o: KinematicState(0.0, v[o % n], a[o % n]) for o in (-1, 0, 1)}
        brute, coefficients = _brute_force(spec.utility_form, spec.objective, states,
                                           {0: gaps[0], -1: gaps[-1]}, {1: board[1], -1: board[-1]},
                                           params, grid)
        assert np.array_equal(np.isfinite(brute), grid.mask)
        assert np.allclose(coefficients, grid.coefficients)
        top2 = np.sort(brute[np.isfinite(brute)])[-2:]
        if top2[1] - top2[0] <= 5.0 / grid.lam:
            continue
        checked += 1
        best = coefficients[np.argmax(brute)]
        err = np.abs(averaged - best)
        worst = (max(worst[0], err[0]), max(worst[1], err[1]))
        within += bool(err[0] <= 0.25 + 1e-12 and err[1] <= 0.2 + 1e-12)
    ok = checked > 0 and within == checked
    report(6, ok, f"{within}/{checked} decisive states within one grid step "
                  f"(max |du0| {worst[0]:.3f} <= 0.25, |du1| {worst[1]:.3f} <= 0.2)")
    assert ok


def test_criterion_7_stability_verdicts():
    geo = RingGeometry(C, 36)
    params = UtilityParams()
    expected = {"AS1D_c": (UNSTABLE,), "IAS1D_c": (UNSTABLE,), "IAS2D_c": (STABLE,),
                "AS2D_c": (MARGINAL, UNSTABLE)}
    parts, ok = [], True
    for name, allowed in expected.items():
        rep = analyse(geo, algorithm(name), params)
        sum_bx = float(rep.jacobian.beta_x.sum())
        good = rep.verdict in allowed and abs(sum_bx) <= 1e-6
        if name == "AS2D_c" and rep.verdict == UNSTABLE:
            # an unstable verdict only counts with a shallow (not stop-and-go) limit wave
            _, op = simulate(ScenarioConfig(geo, algorithm(name)))
            good = good and op.A < 1.0
            parts.append(f"AS2D_c wave A={op.A:.3f} (<1)")
        ok &= good
        parts.append(f"{name} {rep.verdict} |z|max={np.max(np.abs(rep.spectrum.bracket)):.4f} "
                     f"sum bx={sum_bx:.1e} [{'ok' if good else 'expected ' + '/'.join(allowed)}]")
    report(7, ok, "; ".join(parts))
    assert ok


def test_criterion_8_property_suites_run_quickly():
    suites = [
        "test_core.py::test_headways_sum_to_circumference",
        "test_core.py::test_headway_conservation_under_noisy_steps",
        "test_simulator.py::test_seeded_determinism",
        "test_policy.py::test_boltzmann_shift_invariance",
        "test_policy.py::test_boltzmann_plan_stays_feasible",
        "test_coordination.py::test_ring_translational_equivariance",
        "test_policy.py::test_anticipation_superposition",
        "test_stability.py::test_conjugate_symmetry",
    ]
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(TESTS / s) for s in suites]], capture_output=True, text=True,
                          cwd=TESTS.parent)
    elapsed = time.perf_counter() - start
    ok = proc.returncode == 0 and elapsed < 60.0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    report(8, ok, f"{len(suites)} property suites: {summary} in {elapsed:.1f}s (<60s)")
    assert ok, proc.stdout[-3000:]


def test_criterion_9_step_time():
    sc = ScenarioConfig(RingGeometry(C, 30), algorithm("IAS2D_c", 2), initial="uniform")
    stats = timing_stats(time_steps(sc, 1000, 20))
    mean = stats["mean_ms"]
    pct = f"p50 {stats['p50_ms']:.2f} p90 {stats['p90_ms']:.2f} p99 {stats['p99_ms']:.2f} ms"
    if mean <= 10.0:
        report(9, True, f"N=30 IAS2D_c T=2 mean {mean:.2f} ms (<=10); {pct}")
    elif mean <= 20.0:
        warnings.warn(f"mean step time {mean:.2f} ms is above the 10 ms target")
        report(9, True, f"N=30 IAS2D_c T=2 mean {mean:.2f} ms (>10, soft limit 20); {pct}",
               status="WARN")
    else:
        report(9, False, f"N=30 IAS2D_c T=2 mean {mean:.2f} ms (>20 soft limit); {pct}")
        pytest.fail(f"mean step time {mean:.2f} ms exceeds the 20 ms soft limit")
