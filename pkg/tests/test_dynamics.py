import math

import numpy as np
import pytest

from dynamics import (
    ANGLES,
    IW,
    N_INPUT,
    N_STATE,
    POSITION,
    RATES,
    VELOCITIES,
    DroneParams,
    TankParams,
    TankState,
    clamp_state,
    hover_thrust,
    ltv_matrices,
    moments_of_inertia,
    plant_matrices,
    predict_matrices,
    saturate,
    spray_rate,
    step,
    system_mass,
    tank_step,
)


def test_tank_step_decrements_height(tank_params):
    tank = TankState.at_height(0.3556, tank_params)
    after = tank_step(tank, tank_params, 1.0)
    assert tank.h_s - after.h_s == pytest.approx(1.4e-5 / 0.0225, rel=1e-12)
    assert after.h_s == pytest.approx(0.35498, abs=1e-5)
    assert after.m_s == pytest.approx(tank_params.rho_s * tank_params.l_L**2 * after.h_s, abs=1e-12)


def test_empty_tank_stays_empty(tank_params):
    empty = TankState.at_height(0.0, tank_params)
    after = tank_step(empty, tank_params, 1.0)
    assert after.h_s == 0.0 and after.m_s == 0.0
    assert spray_rate(after, tank_params) == 0.0


def test_tank_step_clamps_at_zero(tank_params):
    nearly = TankState.at_height(1e-5, tank_params)
    after = tank_step(nearly, tank_params, 10.0)
    assert after.h_s == 0.0 and after.empty


def test_zero_dt_leaves_tank_unchanged(full_tank, tank_params):
    assert tank_step(full_tank, tank_params, 0.0) == full_tank
    with pytest.raises(ValueError):
        tank_step(full_tank, tank_params, -0.1)


def test_full_tank_mass(full_tank, drone):
    assert full_tank.m_s == pytest.approx(8.0, rel=1e-12)
    assert system_mass(full_tank, drone) == pytest.approx(8.3, rel=1e-12)
    assert system_mass(TankState(0.0, 0.0), drone) == drone.m_d


def test_tank_volume_constructor():
    params = TankParams.from_volume(4e-3)
    assert params.h_s0 == pytest.approx(4e-3 / 0.0225)
    with pytest.raises(ValueError):
        TankParams.from_volume(1.0)
    with pytest.raises(ValueError):
        TankParams(Q_s=-1.0)


def test_empty_tank_inertia_is_drone_inertia(drone, tank_params):
    empty = TankState.at_height(0.0, tank_params)
    assert moments_of_inertia(empty, drone, tank_params) == (drone.I_dx, drone.I_dy, drone.I_dz)


def test_yaw_inertia_depends_only_on_mass(drone, tank_params):
    tank = TankState.at_height(0.2, tank_params)
    _, _, iz = moments_of_inertia(tank, drone, tank_params)
    assert iz == pytest.approx(drone.I_dz + tank.m_s * tank_params.l_L**2 / 6.0, rel=1e-14)


def _quadrature_inertia(h_s, l_L, l_D, rho, order=4):
    """Solution inertia about the system mass center by Gauss-Legendre.

    The square prism is rotated 45 degrees about z, its bottom l_D below
    the mass center; the integrand is quadratic so the rule is exact.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = l_L / 2.0
    a = half * nodes
    b = half * nodes
    z = -l_D + h_s / 2.0 + (h_s / 2.0) * nodes
    wa = half * weights
    wz = (h_s / 2.0) * weights
    ix = iy = iz = 0.0
    c = 1.0 / math.sqrt(2.0)
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            x = c * (ai - bj)
            y = c * (ai + bj)
            for k, zk in enumerate(z):
                w = rho * wa[i] * wa[j] * wz[k]
                ix += w * (y * y + zk * zk)
                iy += w * (x * x + zk * zk)
                iz += w * (x * x + y * y)
    return ix, iy, iz


def test_inertia_matches_prism_integrals(drone, rng):
    for _ in range(50):
        l_L = rng.uniform(0.05, 0.3)
        l_D = rng.uniform(0.1, 0.5)
        h_s = rng.uniform(0.01, 0.9)
        params = TankParams(l_L=l_L, l_D=l_D, h_s0=h_s, height=1.0)
        tank = TankState.at_height(h_s, params)
        got = moments_of_inertia(tank, drone, params)
        want = _quadrature_inertia(h_s, l_L, l_D, params.rho_s)
        base = (drone.I_dx, drone.I_dy, drone.I_dz)
        for g, w, b in zip(got, want, base):
            assert g - b == pytest.approx(w, rel=1e-6)


def test_inertia_example_tank(drone, tank_params):
    tank = TankState.at_height(0.2, tank_params)
    want = _quadrature_inertia(0.2, 0.15, 0.2, 1000.0)
    got = moments_of_inertia(tank, drone, tank_params)
    assert got[0] - drone.I_dx == pytest.approx(want[0], rel=1e-6)


def test_mass_and_inertia_shrink_along_flight(drone, tank_params, full_tank):
    tank = full_tank
    prev_m = system_mass(tank, drone)
    prev_i = moments_of_inertia(tank, drone, tank_params)
    for _ in range(600):
        tank = tank_step(tank, tank_params, 1.0)
        m = system_mass(tank, drone)
        inertia = moments_of_inertia(tank, drone, tank_params)
        assert m <= prev_m and m >= drone.m_d
        assert all(a <= b for a, b in zip(inertia, prev_i))
        prev_m, prev_i = m, inertia
    assert tank.empty


def test_zero_dt_gives_identity():
    mats = ltv_matrices(2.0, (0.2, 0.2, 0.4), 0.0, 9.81)
    assert np.array_equal(mats.A, np.eye(N_STATE))
    assert np.array_equal(mats.B, np.zeros((N_STATE, N_INPUT)))


def test_ltv_block_structure():
    dt, g, m = 0.1, 9.81, 3.0
    inertia = (0.3, 0.5, 0.7)
    mats = ltv_matrices(m, inertia, dt, g)
    expected = np.eye(N_STATE)
    expected[ANGLES, RATES] = dt * np.eye(3)
    expected[VELOCITIES, ANGLES] = dt * np.array([[0, -g, 0], [g, 0, 0], [0, 0, 0]])
    expected[POSITION, VELOCITIES] = dt * np.eye(3)
    assert np.array_equal(mats.A, expected)

    B = np.zeros((N_STATE, N_INPUT))
    B[RATES, 1:] = dt * np.diag([1 / i for i in inertia])
    B[IW, 0] = -dt / m
    assert np.array_equal(mats.B, B)


def test_doubling_mass_halves_thrust_gain():
    light = ltv_matrices(2.0, (0.2, 0.2, 0.4), 0.1, 9.81)
    heavy = ltv_matrices(4.0, (0.2, 0.2, 0.4), 0.1, 9.81)
    assert heavy.B[IW, 0] == pytest.approx(light.B[IW, 0] / 2.0)


def test_ltv_rejects_bad_arguments():
    with pytest.raises(ValueError):
        ltv_matrices(0.0, (0.2, 0.2, 0.4), 0.1, 9.81)
    with pytest.raises(ValueError):
        ltv_matrices(1.0, (0.2, 0.0, 0.4), 0.1, 9.81)


def test_step_zero_and_thrust_only(full_tank, drone, tank_params):
    mats = plant_matrices(full_tank, drone, tank_params, 0.1)
    assert np.array_equal(step(np.zeros(N_STATE), np.zeros(N_INPUT), mats), np.zeros(N_STATE))
    out = step(np.zeros(N_STATE), np.array([5.0, 0, 0, 0]), mats)
    m = system_mass(full_tank, drone)
    expected = np.zeros(N_STATE)
    expected[IW] = -0.1 * 5.0 / m
    assert out == pytest.approx(expected, abs=1e-15)


def test_step_matches_explicit_arithmetic(full_tank, drone, tank_params, rng):
    mats = plant_matrices(full_tank, drone, tank_params, 0.1)
    x = rng.normal(size=N_STATE)
    u = rng.normal(size=N_INPUT)
    out = step(x, u, mats)
    for i in range(N_STATE):
        want = sum(mats.A[i, j] * x[j] for j in range(N_STATE)) + sum(mats.B[i, j] * u[j] for j in range(N_INPUT))
        assert abs(out[i] - want) <= 1e-13


def test_step_is_linear(full_tank, drone, tank_params, rng):
    mats = plant_matrices(full_tank, drone, tank_params, 0.1)
    x1, x2 = rng.normal(size=(2, N_STATE))
    u1, u2 = rng.normal(size=(2, N_INPUT))
    a, b = 0.7, -1.3
    lhs = step(a * x1 + b * x2, a * u1 + b * u2, mats)
    rhs = a * step(x1, u1, mats) + b * step(x2, u2, mats)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_hover_thrust():
    assert hover_thrust(8.3, 9.81) == pytest.approx(81.423)
    assert hover_thrust(2.0, 9.81) < hover_thrust(3.0, 9.81)
    with pytest.raises(ValueError):
        hover_thrust(0.0, 9.81)


def test_saturate_limits(drone):
    m = 8.3
    state = np.zeros(N_STATE)
    ok, clipped = saturate(np.array([1.0, 2.0, -3.0, 0.5]), state, drone, m)
    assert not clipped and np.array_equal(ok, [1.0, 2.0, -3.0, 0.5])

    high, clipped = saturate(np.array([1e6, 0, 0, 0]), state, drone, m)
    assert clipped
    assert hover_thrust(m, drone.g) + high[0] == pytest.approx(440.0)

    low, _ = saturate(np.array([-1e6, -1e6, 1e6, -1e6]), state, drone, m)
    assert hover_thrust(m, drone.g) + low[0] == pytest.approx(0.0, abs=1e-12)
    assert low[1] == -81.4 and low[2] == 81.4 and low[3] == -5.5


def test_clamp_state_enforces_limits(drone):
    x = np.zeros(N_STATE)
    x[0] = 1.0
    x[4] = -2.0
    x[VELOCITIES] = [10.0, 0.0, 0.0]
    out, clamped = clamp_state(x, drone)
    assert clamped
    assert out[0] == pytest.approx(drone.angle_max)
    assert out[4] == pytest.approx(-drone.omega_max)
    assert np.linalg.norm(out[VELOCITIES]) == pytest.approx(drone.v_max)
    same, clamped = clamp_state(np.zeros(N_STATE), drone)
    assert not clamped and np.array_equal(same, np.zeros(N_STATE))


def test_prediction_follows_spray_schedule(full_tank, drone, tank_params):
    mats = predict_matrices(full_tank, drone, tank_params, 0.1, 5)
    assert len(mats) == 5
    assert np.array_equal(mats[0].B, plant_matrices(full_tank, drone, tank_params, 0.1).B)
    gains = [abs(m.B[IW, 0]) for m in mats]
    assert all(a < b for a, b in zip(gains, gains[1:]))


def test_drone_params_must_be_positive():
    with pytest.raises(ValueError):
        DroneParams(m_d=0.0)
