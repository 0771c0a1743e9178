"""Scenario files: dotenv-style ``key = value`` lines with dotted keys.

    # 100 m farm, three drones
    method = d2oc
    operation_time = 180
    initial_positions = 0,0; 100,0; 0,100
    tank.volume = 0.008
    d_comm = inf

Every key that is left out takes its default (the reference drone, tank and control parameters
plus the default weed map). Lists are comma separated, lists of
points ``;`` separated.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from dotenv.parser import parse_stream

from agrosim import HerbicideParams, SignConvention
from d2oc import ControlWeights
from density import DensityField, default_field
from dynamics import N_INPUT, N_STATE, DroneParams, TankParams
from errors import ConfigError, InvalidFieldError

log = logging.getLogger(__name__)

METHODS = ("d2oc", "lm", "smc")
UNLIMITED = ("inf", "unlimited", "none", "")


def _number(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


def _positive(text):
    value = _number(text)
    if value <= 0:
        raise ValueError("must be positive")
    return value


def _nonnegative(text):
    value = _number(text)
    if value < 0:
        raise ValueError("must be nonnegative")
    return value


def _count(text):
    value = int(text)
    if value < 1:
        raise ValueError("must be at least 1")
    return value


def _natural(text):
    value = int(text)
    if value < 0:
        raise ValueError("must be nonnegative")
    return value


def _numbers(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return [_number(p) for p in parts]


def _points(text):
    out = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        xy = _numbers(chunk)
        if len(xy) != 2:
            raise ValueError(f"expected 'x,y', got {chunk.strip()!r}")
        out.append(xy)
    return out


def _matrices(text):
    out = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        m = _numbers(chunk)
        if len(m) != 4:
            raise ValueError(f"expected 'a,b,c,d' for a 2x2 matrix, got {chunk.strip()!r}")
        out.append([m[0:2], m[2:4]])
    return out


def _range(text):
    if text.strip().lower() in UNLIMITED:
        return math.inf
    return _positive(text)


def _method(text):
    value = text.strip().lower()
    if value not in METHODS:
        raise ValueError(f"expected one of {', '.join(METHODS)}")
    return value


def _convention(text):
    return SignConvention(text.strip().lower())


_DRONE = DroneParams()
_TANK = TankParams()
_HERB = HerbicideParams()
_FIELD = default_field()

# key -> (parser, default); None defaults are filled in by build_scenario
SCHEMA = {
    "method": (_method, "d2oc"),
    "seed": (int, 0),
    "n_agents": (_count, 3),
    "initial_positions": (_points, None),
    "altitude": (_positive, 2.0),
    "operation_time": (_nonnegative, 180.0),
    "dt": (_positive, 0.1),
    "horizon": (_count, 60),
    "n_samples": (_count, 1000),
    "d_comm": (_range, math.inf),
    "dose_scale": (_positive, 500.0),
    "grid.cell_size": (_positive, 0.1),
    "wasserstein_every": (_natural, 300),
    "field.domain": (_numbers, list(_FIELD.domain)),
    "field.means": (_points, _FIELD.means.tolist()),
    "field.covariances": (_matrices, _FIELD.covariances.tolist()),
    "field.weights": (_numbers, _FIELD.weights.tolist()),
    "drone.m_d": (_positive, _DRONE.m_d),
    "drone.i_dx": (_positive, _DRONE.I_dx),
    "drone.i_dy": (_positive, _DRONE.I_dy),
    "drone.i_dz": (_positive, _DRONE.I_dz),
    "drone.f_th_max": (_positive, _DRONE.f_th_max),
    "drone.tau_rp_max": (_positive, _DRONE.tau_rp_max),
    "drone.tau_y_max": (_positive, _DRONE.tau_y_max),
    "drone.v_max": (_positive, _DRONE.v_max),
    "drone.angle_max_deg": (_positive, math.degrees(_DRONE.angle_max)),
    "drone.omega_max_deg": (_positive, math.degrees(_DRONE.omega_max)),
    "drone.g": (_positive, _DRONE.g),
    "tank.l_l": (_positive, _TANK.l_L),
    "tank.l_d": (_positive, _TANK.l_D),
    "tank.rho_s": (_positive, _TANK.rho_s),
    "tank.q_s": (_positive, _TANK.Q_s),
    "tank.volume": (_positive, 8e-3),
    "tank.height": (_positive, _TANK.height),
    "herbicide.ld50": (_positive, _HERB.ld50),
    "herbicide.concentration": (_positive, _HERB.concentration),
    "herbicide.sign_convention": (_convention, SignConvention.AS_WRITTEN),
    "control.q": (_numbers, None),
    "control.r": (_numbers, None),
    "alpha.profile": (_numbers, []),
    "mpc.horizon": (_count, 20),
    "smc.n_bases": (_count, 40),
    "smc.speed": (_positive, 3.5),
    "smc.resolution": (_positive, 1.0),
    "smc.exponent": (_positive, 1.5),
}


@dataclass(frozen=True)
class SmcParams:
    n_bases: int = 40
    speed: float = 3.5
    resolution: float = 1.0
    exponent: float = 1.5


@dataclass(frozen=True)
class ScenarioConfig:
    field: DensityField
    n_agents: int
    initial_positions: np.ndarray
    altitude: float
    operation_time: float
    dt: float
    horizon: int
    n_samples: int
    d_comm: float
    method: str
    drone: DroneParams
    tank: TankParams
    herbicide: HerbicideParams
    weights: ControlWeights
    seed: int
    dose_scale: float
    cell_size: float
    mpc_horizon: int
    smc: SmcParams
    alpha_profile: tuple = ()
    wasserstein_every: int = 300
    source: str = "<defaults>"

    @property
    def steps(self):
        return int(round(self.operation_time / self.dt))

    @property
    def domain(self):
        return self.field.domain

    @property
    def centralized(self):
        return math.isinf(self.d_comm)

    def with_overrides(self, **changes):
        cfg = replace(self, **{k: v for k, v in changes.items() if v is not None})
        if cfg.method not in METHODS:
            raise ConfigError(f"unknown method {cfg.method!r}", key="method")
        return cfg

    def items(self):
        """Effective settings as (key, text) pairs, sorted by key."""
        d = self.drone
        t = self.tank
        fmt = _fmt
        rows = {
            "method": self.method,
            "seed": str(self.seed),
            "n_agents": str(self.n_agents),
            "initial_positions": "; ".join(f"{fmt(x)},{fmt(y)}" for x, y in self.initial_positions),
            "altitude": fmt(self.altitude),
            "operation_time": fmt(self.operation_time),
            "dt": fmt(self.dt),
            "horizon": str(self.horizon),
            "n_samples": str(self.n_samples),
            "d_comm": "inf" if self.centralized else fmt(self.d_comm),
            "dose_scale": fmt(self.dose_scale),
            "grid.cell_size": fmt(self.cell_size),
            "wasserstein_every": str(self.wasserstein_every),
            "field.domain": ",".join(fmt(v) for v in self.field.domain),
            "field.means": "; ".join(",".join(fmt(v) for v in m) for m in self.field.means),
            "field.covariances": "; ".join(",".join(fmt(v) for v in c.reshape(-1)) for c in self.field.covariances),
            "field.weights": ",".join(fmt(v) for v in self.field.weights),
            "drone.m_d": fmt(d.m_d),
            "drone.i_dx": fmt(d.I_dx),
            "drone.i_dy": fmt(d.I_dy),
            "drone.i_dz": fmt(d.I_dz),
            "drone.f_th_max": fmt(d.f_th_max),
            "drone.tau_rp_max": fmt(d.tau_rp_max),
            "drone.tau_y_max": fmt(d.tau_y_max),
            "drone.v_max": fmt(d.v_max),
            "drone.angle_max_deg": fmt(math.degrees(d.angle_max)),
            "drone.omega_max_deg": fmt(math.degrees(d.omega_max)),
            "drone.g": fmt(d.g),
            "tank.l_l": fmt(t.l_L),
            "tank.l_d": fmt(t.l_D),
            "tank.rho_s": fmt(t.rho_s),
            "tank.q_s": fmt(t.Q_s),
            "tank.volume": fmt(t.h_s0 * t.l_L**2),
            "tank.height": fmt(t.height),
            "herbicide.ld50": fmt(self.herbicide.ld50),
            "herbicide.concentration": fmt(self.herbicide.concentration),
            "herbicide.sign_convention": self.herbicide.sign_convention.value,
            "control.q": ",".join(fmt(v) for v in np.diag(self.weights.Q)),
            "control.r": ",".join(fmt(v) for v in np.diag(self.weights.R)),
            "alpha.profile": ",".join(fmt(v) for v in self.alpha_profile),
            "mpc.horizon": str(self.mpc_horizon),
            "smc.n_bases": str(self.smc.n_bases),
            "smc.speed": fmt(self.smc.speed),
            "smc.resolution": fmt(self.smc.resolution),
            "smc.exponent": fmt(self.smc.exponent),
        }
        return sorted(rows.items())


def _fmt(value):
    return repr(float(value))


def default_positions(domain, n):
    """Domain corners first, then edge midpoints."""
    x0, y0, x1, y1 = domain
    xm, ym = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    spots = [(x0, y0), (x1, y0), (x0, y1), (x1, y1), (xm, y0), (x1, ym), (xm, y1), (x0, ym)]
    if n > len(spots):
        raise ConfigError(f"no default start for {n} agents; list initial_positions", key="initial_positions")
    return np.array(spots[:n], dtype=float)


def _key_line(original):
    """Line of the binding itself; dotenv starts ``original`` at the blank lines before it."""
    text = original.string
    return original.line + text[: len(text) - len(text.lstrip())].count("\n")


def read_bindings(stream):
    """Raw ``key -> (value, line)`` from a dotenv-format stream."""
    raw = {}
    for binding in parse_stream(stream):
        line = _key_line(binding.original)
        if binding.error:
            raise ConfigError(f"cannot parse {binding.original.string.strip()!r}", line=line)
        if binding.key is None:
            continue
        key = binding.key.strip().lower()
        if key not in SCHEMA:
            raise ConfigError("unknown setting", key=key, line=line)
        if binding.value is None:
            raise ConfigError("setting has no value", key=key, line=line)
        if key in raw:
            raise ConfigError(f"duplicate setting, first given on line {raw[key][1]}", key=key, line=line)
        raw[key] = (binding.value.strip(), line)
    return raw


def build_scenario(raw, source="<string>"):
    values = {}
    for key, (parser, default) in SCHEMA.items():
        if key in raw:
            text, line = raw[key]
            try:
                values[key] = parser(text)
            except ValueError as e:
                raise ConfigError(f"invalid value {text!r}: {e}", key=key, line=line) from e
        else:
            values[key] = default

    def fail(message, key):
        line = raw[key][1] if key in raw else None
        return ConfigError(message, key=key, line=line)

    domain = values["field.domain"]
    if len(domain) != 4:
        raise fail("expected x_min,y_min,x_max,y_max", "field.domain")
    try:
        field = DensityField(values["field.means"], values["field.covariances"], values["field.weights"], tuple(domain))
    except InvalidFieldError as e:
        keys = [k for k in ("field.weights", "field.covariances", "field.means", "field.domain") if k in raw]
        raise fail(str(e), keys[0] if keys else "field.weights") from e

    dt = values["dt"]
    op_time = values["operation_time"]
    steps = round(op_time / dt)
    if abs(steps * dt - op_time) > 1e-9 * max(1.0, op_time):
        raise fail(f"operation_time {op_time!r} is not a whole number of {dt!r} s steps", "operation_time")

    n = values["n_agents"]
    if values["initial_positions"] is None:
        positions = default_positions(field.domain, n)
    else:
        positions = np.array(values["initial_positions"], dtype=float).reshape(-1, 2)
        if len(positions) != n:
            raise fail(f"{len(positions)} positions for {n} agents", "initial_positions")
        if not np.all(field.contains(positions)):
            raise fail(f"initial positions must lie inside {field.domain}", "initial_positions")

    try:
        drone = DroneParams(
            m_d=values["drone.m_d"], I_dx=values["drone.i_dx"], I_dy=values["drone.i_dy"],
            I_dz=values["drone.i_dz"], f_th_max=values["drone.f_th_max"],
            tau_rp_max=values["drone.tau_rp_max"], tau_y_max=values["drone.tau_y_max"],
            v_max=values["drone.v_max"], angle_max=math.radians(values["drone.angle_max_deg"]),
            omega_max=math.radians(values["drone.omega_max_deg"]), g=values["drone.g"],
        )
    except ValueError as e:
        raise ConfigError(str(e), key="drone") from e
    try:
        tank = TankParams.from_volume(
            values["tank.volume"], l_L=values["tank.l_l"], l_D=values["tank.l_d"],
            rho_s=values["tank.rho_s"], Q_s=values["tank.q_s"], height=values["tank.height"],
        )
    except ValueError as e:
        raise fail(str(e), "tank.volume") from e
    herbicide = HerbicideParams(
        values["herbicide.ld50"], values["herbicide.concentration"], values["herbicide.sign_convention"]
    )

    q, r = values["control.q"], values["control.r"]
    table = ControlWeights.reference()
    q = np.diag(table.Q) if q is None else np.array(q)
    r = np.diag(table.R) if r is None else np.array(r)
    if len(q) != N_STATE:
        raise fail(f"expected {N_STATE} diagonal entries, got {len(q)}", "control.q")
    if len(r) != N_INPUT:
        raise fail(f"expected {N_INPUT} diagonal entries, got {len(r)}", "control.r")
    try:
        weights = ControlWeights.from_diagonals(q, r)
    except ValueError as e:
        raise fail(str(e), "control.q" if "Q" in str(e) else "control.r") from e

    profile = tuple(values["alpha.profile"])
    if profile and (min(profile) < 0 or sum(profile) <= 0):
        raise fail("profile must be nonnegative with a positive sum", "alpha.profile")

    return ScenarioConfig(
        field=field,
        n_agents=n,
        initial_positions=positions,
        altitude=values["altitude"],
        operation_time=op_time,
        dt=dt,
        horizon=values["horizon"],
        n_samples=values["n_samples"],
        d_comm=values["d_comm"],
        method=values["method"],
        drone=drone,
        tank=tank,
        herbicide=herbicide,
        weights=weights,
        seed=values["seed"],
        dose_scale=values["dose_scale"],
        cell_size=values["grid.cell_size"],
        mpc_horizon=values["mpc.horizon"],
        smc=SmcParams(values["smc.n_bases"], values["smc.speed"], values["smc.resolution"], values["smc.exponent"]),
        alpha_profile=profile,
        wasserstein_every=values["wasserstein_every"],
        source=source,
    )


def parse_scenario(text, source="<string>"):
    return build_scenario(read_bindings(io.StringIO(text)), source)


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        raw = read_bindings(fh)
    cfg = build_scenario(raw, str(path))
    log.info("[config] %s: %s, %d agents, %d steps of %.3g s", path, cfg.method, cfg.n_agents, cfg.steps, cfg.dt)
    return cfg
