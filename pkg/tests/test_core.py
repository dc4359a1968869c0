import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmpc_ring.core import (DT, GAMMA, KinematicState, NoiseSpec, RingGeometry, VehicleParams,
                            fleet_headways, headway, odometer_headways, step_fleet, step_vehicle,
                            wrap_position)

C = 314.0


def test_constants():
    assert DT == pytest.approx(1 / 6)
    assert GAMMA ** 2 == pytest.approx(0.7)


def test_geometry_density_and_rounding():
    g = RingGeometry.from_density(0.121)
    assert g.vehicle_count == 38
    assert g.density == pytest.approx(38 / 314)
    assert RingGeometry.from_density(0.115).vehicle_count == 36
    assert RingGeometry.from_density(0.127).vehicle_count == 40


@pytest.mark.parametrize("c, n", [(0.0, 10), (-1.0, 10), (math.inf, 10), (314.0, 0), (314.0, 2.5)])
def test_geometry_rejects_bad_input(c, n):
    with pytest.raises(ValueError):
        RingGeometry(c, n)


def test_lone_vehicle_follows_itself_one_lap_ahead():
    assert odometer_headways(np.array([12.5]), 314.0).tolist() == [314.0]


def test_kinematic_state_rejects_nan():
    with pytest.raises(ValueError):
        KinematicState(0.0, float("nan"), 0.0)


def test_wrap_position_edges():
    assert wrap_position(314.0, C) == 0.0
    assert wrap_position(-1.0, C) == pytest.approx(313.0)
    # a tiny negative number must not land on C itself
    assert 0.0 <= wrap_position(-1e-17, C) < C
    with pytest.raises(ValueError):
        wrap_position(float("inf"), C)


def test_headway_across_origin():
    assert headway(310.0, 4.0, C) == pytest.approx(8.0)
    assert headway(4.0, 310.0, C) == pytest.approx(306.0)


def test_step_vehicle_hand_computed():
    # x' = x + v dt, v' = v + a dt, a' = g a + u - g u_prev
    params = VehicleParams()
    s = step_vehicle(KinematicState(313.0, 12.0, 0.6), 1.0, -0.5, params, C)
    assert s.x == pytest.approx(313.0 + 12.0 / 6 - C)
    assert s.v == pytest.approx(12.1)
    assert s.a == pytest.approx(math.sqrt(0.7) * 0.6 + 1.0 + math.sqrt(0.7) * 0.5)


def test_step_vehicle_noise_is_additive():
    params = VehicleParams()
    s0 = step_vehicle(KinematicState(10.0, 5.0, 0.0), 0.0, 0.0, params, C)
    s1 = step_vehicle(KinematicState(10.0, 5.0, 0.0), 0.0, 0.0, params, C, noise=(0.1, -0.2, 0.3))
    assert (s1.x - s0.x, s1.v - s0.v, s1.a - s0.a) == pytest.approx((0.1, -0.2, 0.3))


def test_step_vehicle_rejects_out_of_bounds_action():
    with pytest.raises(ValueError):
        step_vehicle(KinematicState(0, 0, 0), 4.5, 0.0, VehicleParams(), C)


def test_step_fleet_rejects_non_finite():
    x = np.zeros(3)
    with pytest.raises(FloatingPointError):
        step_fleet(x, np.array([1.0, np.nan, 1.0]), x, x, x, VehicleParams(), C)


def test_noise_draws_keyed_by_seed_and_step():
    spec = NoiseSpec(0.1, 0.2, 0.3, seed=7)
    a = spec.draws(5, 4)
    assert np.array_equal(a, NoiseSpec(0.1, 0.2, 0.3, seed=7).draws(5, 4))
    assert not np.array_equal(a, spec.draws(6, 4))
    assert not np.array_equal(a, NoiseSpec(0.1, 0.2, 0.3, seed=8).draws(5, 4))
    # rows belong to vehicles: a larger fleet extends, not reshuffles, the stream
    assert np.array_equal(spec.draws(5, 6)[:4], a)
    assert np.array_equal(NoiseSpec().draws(0, 3), np.zeros((3, 3)))


def test_odometer_headways_match_modular_while_ordered():
    x = np.array([0.0, 10.0, 25.0, 300.0])
    assert np.allclose(odometer_headways(x, C), fleet_headways(x, C))
    # a follower that overtook its leader shows up as a negative distance
    assert odometer_headways(np.array([0.0, 12.0, 11.0]), 100.0)[1] == pytest.approx(-1.0)


@given(st.lists(st.floats(0, C, exclude_max=True), min_size=2, max_size=40, unique=True),
       st.floats(-1e3, 1e3))
def test_headways_sum_to_circumference(xs, shift):
    x = np.sort(np.array(xs))
    d = fleet_headways(wrap_position(x + shift, C), C)
    assert d.sum() == pytest.approx(C, rel=1e-9) or np.any(d == 0)
    assert np.all(d >= 0) and np.all(d < C)


@given(st.integers(2, 30), st.floats(0.5, 2.0), st.integers(0, 2 ** 31))
def test_headway_conservation_under_noisy_steps(n, speed_scale, seed):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0, C, n))
    v = rng.uniform(0, 10 * speed_scale, n)
    a = rng.uniform(-2, 2, n)
    odo = x.copy()
    noise = NoiseSpec(0.01, 0.01, 0.01, seed=seed)
    u_prev = np.zeros(n)
    for k in range(20):
        u = rng.uniform(-6, 4, n)
        odo, v, a = step_fleet(odo, v, a, u, u_prev, VehicleParams(), C, noise.draws(k, n),
                               wrap=False)
        u_prev = u
        assert odometer_headways(odo, C).sum() == pytest.approx(C, rel=1e-12)
