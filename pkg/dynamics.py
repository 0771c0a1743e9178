"""Linear time-varying model of a spraying drone.

State (12): roll, pitch, yaw, body rates p q r, body velocities u v w and
inertial position x y z, all deviations from hover. Input (4): thrust
deviation f_t and torques tau_x, tau_y, tau_z. Mass and inertia shrink as
the square-prism tank empties, which makes A_k and B_k time-varying.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

N_STATE = 12
N_INPUT = 4

STATE_LABELS = ("phi", "theta", "psi", "p", "q", "r", "u", "v", "w", "x", "y", "z")

# state slots
ANGLES = slice(0, 3)
RATES = slice(3, 6)
VELOCITIES = slice(6, 9)
POSITION = slice(9, 12)
IX, IY, IZ = 9, 10, 11
IW = 8


@dataclass(frozen=True)
class DroneParams:
    m_d: float = 0.3
    I_dx: float = 0.2
    I_dy: float = 0.2
    I_dz: float = 0.4
    f_th_max: float = 440.0
    tau_rp_max: float = 81.4
    tau_y_max: float = 5.5
    v_max: float = 7.0
    angle_max: float = math.radians(15.0)
    omega_max: float = math.radians(15.0)
    g: float = 9.81

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"drone parameter {name} must be positive, got {value}")


@dataclass(frozen=True)
class TankParams:
    l_L: float = 0.15
    l_D: float = 0.2
    rho_s: float = 1000.0
    Q_s: float = 1.4e-5
    h_s0: float = 8e-3 / 0.15**2
    height: float = 0.4

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"tank parameter {name} must be positive, got {value}")
        if self.h_s0 > self.height:
            raise ValueError(f"initial solution height {self.h_s0} exceeds tank height {self.height}")

    @classmethod
    def from_volume(cls, volume, **kwargs):
        l_L = kwargs.get("l_L", cls.l_L)
        return cls(h_s0=volume / l_L**2, **kwargs)


@dataclass(frozen=True)
class TankState:
    h_s: float
    m_s: float

    @classmethod
    def full(cls, params):
        return cls.at_height(params.h_s0, params)

    @classmethod
    def at_height(cls, h_s, params):
        h_s = max(float(h_s), 0.0)
        return cls(h_s, params.rho_s * params.l_L**2 * h_s)

    @property
    def empty(self):
        return self.h_s <= 0.0


@dataclass(frozen=True)
class LtvMatrices:
    A: np.ndarray
    B: np.ndarray


def spray_rate(tank, params):
    """Volumetric spray rate; nothing leaves an empty tank."""
    return 0.0 if tank.empty else params.Q_s


def tank_step(tank, params, dt):
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    if dt == 0 or tank.empty:
        return TankState.at_height(tank.h_s, params)
    return TankState.at_height(tank.h_s - dt * params.Q_s / params.l_L**2, params)


def system_mass(tank, drone):
    return drone.m_d + tank.m_s


def moments_of_inertia(tank, drone, params):
    """Drone plus solution inertia about the body axes."""
    m_s, h_s = tank.m_s, tank.h_s
    lateral = m_s * (params.l_D - h_s / 2.0) ** 2 + m_s / 12.0 * (params.l_L**2 + h_s**2)
    return (
        drone.I_dx + lateral,
        drone.I_dy + lateral,
        drone.I_dz + m_s / 6.0 * params.l_L**2,
    )


def ltv_matrices(m, inertias, dt, g):
    if not m > 0:
        raise ValueError(f"mass must be positive, got {m}")
    if any(not i > 0 for i in inertias):
        raise ValueError(f"inertias must be positive, got {inertias}")
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    I3 = np.eye(3)
    A = np.eye(N_STATE)
    A[ANGLES, RATES] = dt * I3
    A[VELOCITIES, ANGLES] = dt * np.array([[0.0, -g, 0.0], [g, 0.0, 0.0], [0.0, 0.0, 0.0]])
    A[POSITION, VELOCITIES] = dt * I3
    B = np.zeros((N_STATE, N_INPUT))
    B[RATES, 1:] = dt * np.diag([1.0 / i for i in inertias])
    B[IW, 0] = -dt / m
    return LtvMatrices(A, B)


def plant_matrices(tank, drone, params, dt):
    return ltv_matrices(system_mass(tank, drone), moments_of_inertia(tank, drone, params), dt, drone.g)


def predict_matrices(tank, drone, params, dt, horizon):
    """A_{k+i}, B_{k+i} for i = 0..horizon-1, spraying continuously at Q_s."""
    mats = []
    for _ in range(horizon):
        mats.append(plant_matrices(tank, drone, params, dt))
        tank = tank_step(tank, params, dt)
    return mats


def step(state, u, mats):
    return mats.A @ state + mats.B @ u


def hover_thrust(m, g):
    if not m > 0:
        raise ValueError(f"mass must be positive, got {m}")
    return m * g


def saturate(u, state, params, m):
    """Clamp the input to the actuator limits.

    Total thrust ``m*g + f_t`` is kept in [0, f_th_max]. Returns the
    clamped input and whether anything was clipped. ``state`` is accepted
    for limit policies that depend on attitude; the current limits do not.
    """
    hover = hover_thrust(m, params.g)
    out = np.array(u, dtype=float)
    out[0] = np.clip(out[0], -hover, params.f_th_max - hover)
    out[1:3] = np.clip(out[1:3], -params.tau_rp_max, params.tau_rp_max)
    out[3] = np.clip(out[3], -params.tau_y_max, params.tau_y_max)
    return out, bool(np.any(out != u))


def clamp_state(state, params):
    """Enforce speed, roll/pitch and angular-rate limits after a step."""
    out = np.array(state, dtype=float)
    out[0:2] = np.clip(out[0:2], -params.angle_max, params.angle_max)
    out[RATES] = np.clip(out[RATES], -params.omega_max, params.omega_max)
    speed = np.linalg.norm(out[VELOCITIES])
    if speed > params.v_max:
        out[VELOCITIES] *= params.v_max / speed
    return out, bool(np.any(out != state))


def hover_state(x, y, z=0.0):
    s = np.zeros(N_STATE)
    s[IX], s[IY], s[IZ] = x, y, z
    return s


def planar_position(state):
    return np.asarray(state)[..., IX:IY + 1]
