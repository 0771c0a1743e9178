"""Comparison planners: lawn-mower sweeps and spectral multi-scale coverage.

Both produce planar reference points that a finite-horizon LQ tracker
(``mpc_track``) follows on the same LTV drone model the D2OC controller
uses.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
import osqp
import scipy.sparse as sparse

from agrosim import spray_footprint
from d2oc import PredictionPlan, build_kkt, condensed_qp, solve_condensed
from dynamics import RATES, hover_thrust
from errors import ConfigError

log = logging.getLogger(__name__)

SMC_MARGIN = 0.5  # m; cosine-basis gradients vanish on the boundary
ROLL_PITCH = slice(0, 2)
LIMIT_SHRINK = 1e-3  # keeps solver tolerance inside the post-step clamps


@dataclass(frozen=True)
class WaypointPath:
    """Reference point ``points[i]`` is due at step ``times[i]``."""

    times: np.ndarray
    points: np.ndarray
    domain: tuple = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=int).reshape(-1)
        points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(times) != len(points):
            raise ValueError(f"{len(times)} time indices for {len(points)} waypoints")
        if np.any(np.diff(times) <= 0):
            raise ValueError("waypoint time indices must be strictly increasing")
        if self.domain is not None and len(points):
            x0, y0, x1, y1 = self.domain
            tol = 1e-9
            if (points[:, 0].min() < x0 - tol or points[:, 0].max() > x1 + tol
                    or points[:, 1].min() < y0 - tol or points[:, 1].max() > y1 + tol):
                raise ValueError(f"waypoints leave the domain {self.domain}")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "points", points)

    def __len__(self):
        return len(self.times)

    @property
    def length(self):
        if len(self.points) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def segment(self, k, horizon):
        """Waypoints due at steps k+1..k+horizon; the last one is held."""
        idx = np.searchsorted(self.times, np.arange(k + 1, k + horizon + 1), side="left")
        return self.points[np.minimum(idx, len(self.points) - 1)]


def _strip_sweep(x_lo, x_hi, y_lo, y_hi, pitch, start):
    """Serpentine polyline over one vertical strip, starting near ``start``."""
    width = x_hi - x_lo
    if width < pitch - 1e-9:
        raise ConfigError(f"strip {width:.3f} m wide is narrower than one {pitch:.3f} m spray lane",
                          key="n_agents")
    n_lanes = max(int(math.ceil(width / pitch - 1e-9)), 1)
    lanes = np.minimum(x_lo + pitch / 2.0 + pitch * np.arange(n_lanes), x_hi - pitch / 2.0)
    if y_hi - y_lo < pitch:
        bottom = top = (y_lo + y_hi) / 2.0
    else:
        bottom, top = y_lo + pitch / 2.0, y_hi - pitch / 2.0

    if start is not None and abs(start[0] - x_hi) < abs(start[0] - x_lo):
        lanes = lanes[::-1]
    upward = start is None or abs(start[1] - y_lo) <= abs(start[1] - y_hi)
    vertices = []
    for x in lanes:
        ends = (bottom, top) if upward else (top, bottom)
        vertices.append((x, ends[0]))
        vertices.append((x, ends[1]))
        upward = not upward
    return np.array(vertices)


def _resample(polyline, count):
    """``count + 1`` points at arc lengths L*i/count, i = 0..count."""
    seg = np.linalg.norm(np.diff(polyline, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    targets = s[-1] * np.linspace(0.0, 1.0, count + 1)
    return np.column_stack([np.interp(targets, s, polyline[:, 0]), np.interp(targets, s, polyline[:, 1])])


def lawnmower_plan(domain, n_agents, op_time, dt, altitude, starts=None):
    """Split the domain into equal vertical strips and sweep each one.

    Lane pitch is the spray footprint side at ``altitude``. Strips are
    handed out to agents in order of their starting x coordinate.
    """
    if n_agents < 1:
        raise ValueError(f"n_agents must be at least 1, got {n_agents}")
    x0, y0, x1, y1 = domain
    steps = int(round(op_time / dt))
    pitch = spray_footprint(altitude)
    width = (x1 - x0) / n_agents
    order = list(range(n_agents))
    if starts is not None:
        starts = np.asarray(starts, dtype=float).reshape(n_agents, 2)
        order = sorted(range(n_agents), key=lambda r: (starts[r, 0], r))

    paths = [None] * n_agents
    for strip, agent in enumerate(order):
        lo = x0 + strip * width
        hi = x1 if strip == n_agents - 1 else lo + width
        start = None if starts is None else starts[agent]
        poly = _strip_sweep(lo, hi, y0, y1, pitch, start)
        points = _resample(poly, steps)
        paths[agent] = WaypointPath(np.arange(0, steps + 1), points, domain=tuple(domain))
        log.debug("[lm] agent %d strip [%.2f, %.2f] path %.1f m", agent, lo, hi, paths[agent].length)
    return paths


@dataclass(frozen=True)
class TrackingLimits:
    """Box limits a tracking plan must respect.

    ``angle`` bounds roll and pitch and ``rate`` the body rates, matching
    ``clamp_state``; ``u_lo``/``u_hi`` are the actuator bounds in
    deviation coordinates, matching ``saturate``.
    """

    angle: float
    rate: float
    u_lo: np.ndarray
    u_hi: np.ndarray

    @classmethod
    def for_drone(cls, drone, m):
        hover = hover_thrust(m, drone.g)
        lo = np.array([-hover, -drone.tau_rp_max, -drone.tau_rp_max, -drone.tau_y_max])
        hi = np.array([drone.f_th_max - hover, drone.tau_rp_max, drone.tau_rp_max, drone.tau_y_max])
        return cls(drone.angle_max, drone.omega_max, lo, hi)

    def shrunk(self):
        s = 1.0 - LIMIT_SHRINK
        return replace(self, angle=s * self.angle, rate=s * self.rate, u_lo=s * self.u_lo, u_hi=s * self.u_hi)


def _plan_excess(z, P, u_bar, limits):
    """Largest amount by which a planned horizon breaks ``limits``.

    Roll and pitch at the first predicted step follow from the current
    rates alone, so they are not checked.
    """
    u = u_bar.reshape(-1)
    x = z - np.einsum("tnk,k->tn", P, u)
    excess = [
        np.abs(x[:, RATES]).max() - limits.rate,
        (u - np.tile(limits.u_hi, len(z))).max(),
        (np.tile(limits.u_lo, len(z)) - u).max(),
    ]
    if len(z) > 1:
        excess.append(np.abs(x[1:, ROLL_PITCH]).max() - limits.angle)
    return float(max(excess))


def _bounded_plan(G, rhs, z, P, limits, dt):
    """Tracking plan under box limits on rates, roll/pitch and inputs.

    Rates are bounded from the first predicted step, roll/pitch from the
    second. The second-step angle band is widened to what one rate step
    can still reach from the first, so the problem is always feasible
    from a clamped state.
    """
    T, n, mT = P.shape
    lim = limits.shrunk()
    rows, lo, hi = [], [], []
    for i in range(T):
        rows.append(-P[i, RATES])
        lo.append(-lim.rate - z[i, RATES])
        hi.append(lim.rate - z[i, RATES])
        if i == 0:
            continue
        a_lo, a_hi = np.full(2, -lim.angle), np.full(2, lim.angle)
        if i == 1:
            first = z[0, ROLL_PITCH]
            a_lo = np.minimum(a_lo, first + dt * lim.rate)
            a_hi = np.maximum(a_hi, first - dt * lim.rate)
        rows.append(-P[i, ROLL_PITCH])
        lo.append(a_lo - z[i, ROLL_PITCH])
        hi.append(a_hi - z[i, ROLL_PITCH])
    rows.append(np.eye(mT))
    lo.append(np.tile(lim.u_lo, T))
    hi.append(np.tile(lim.u_hi, T))

    solver = osqp.OSQP()
    solver.setup(
        P=sparse.triu(sparse.csc_matrix(G), format="csc"),
        q=-rhs,
        A=sparse.csc_matrix(np.vstack(rows)),
        l=np.concatenate(lo),
        u=np.concatenate(hi),
        verbose=False,
        eps_abs=1e-7,
        eps_rel=1e-7,
        polish=True,
        max_iter=20000,
    )
    res = solver.solve()
    if res.info.status not in ("solved", "solved inaccurate") or res.x is None:
        log.warning("[mpc] bounded tracking QP %s; keeping the unconstrained input", res.info.status)
        return None
    return np.asarray(res.x).reshape(T, mT // T)


def mpc_track(reference, state, mats_seq, w, horizon, limits=None):
    """First input of the LQ problem tracking ``reference[:horizon]``.

    Each reference point acts as a unit-mass singleton subset, so this is
    the D2OC horizon problem with known targets. With ``limits`` the
    closed-form plan is kept when it stays inside them; otherwise the same
    problem is re-solved with the limits as box constraints.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    ref = np.asarray(reference, dtype=float).reshape(-1, 2)
    if len(ref) < horizon:
        ref = np.vstack([ref, np.repeat(ref[-1:], horizon - len(ref), axis=0)])
    plan = PredictionPlan.tracking(ref[:horizon])
    sys = build_kkt(plan, state, mats_seq[:horizon], w)
    G, rhs, z, P = condensed_qp(sys)
    u_bar = solve_condensed(G, rhs).reshape(horizon, sys.m)
    if limits is None:
        return u_bar[0].copy()

    excess = _plan_excess(z, P, u_bar, limits)
    if excess <= 0:
        return u_bar[0].copy()
    log.debug("[mpc] closed-form plan exceeds limits by %.3g, solving bounded QP", excess)
    bounded = _bounded_plan(G, rhs, z, P, limits, sys.A_blocks[0][0, RATES.start])
    if bounded is None:
        return u_bar[0].copy()
    return bounded[0].copy()


@dataclass
class SmcState:
    """Spectral coverage state over a rectangular domain.

    ``coeffs`` are the reference cosine coefficients c_k, ``accum`` the
    running sum W_k of basis values along all agents' trajectories and
    ``elapsed`` the accumulated time. All coefficient arrays are K x K.
    """

    n_bases: int
    domain: tuple
    n_agents: int
    coeffs: np.ndarray
    spectral: np.ndarray
    norms: np.ndarray
    accum: np.ndarray = None
    elapsed: float = 0.0
    margin: float = SMC_MARGIN

    def __post_init__(self):
        if self.accum is None:
            self.accum = np.zeros_like(self.coeffs)

    @property
    def lengths(self):
        x0, y0, x1, y1 = self.domain
        return x1 - x0, y1 - y0

    def copy(self):
        return replace(self, accum=self.accum.copy())


def _basis_norms(k, lx, ly):
    fac = np.where(k == 0, 1.0, 1.0 / math.sqrt(2.0))
    return math.sqrt(lx * ly) * np.outer(fac, fac)


def smc_state(values, grid, n_agents, n_bases=40, exponent=1.5):
    """Cosine coefficients of a gridded density (any positive scale).

    Spectral weights are (1 + |k|^2)^(-exponent).
    """
    if n_bases < 1:
        raise ValueError(f"n_bases must be at least 1, got {n_bases}")
    values = np.asarray(values, dtype=float)
    total = values.sum() * grid.cell_area
    if not total > 0:
        raise ValueError("density has no mass on the grid")
    rho = values / total
    domain = grid.extent
    x0, y0, x1, y1 = domain
    lx, ly = x1 - x0, y1 - y0
    k = np.arange(n_bases)
    xs, ys = grid.axis_centers()
    cx = np.cos(np.pi * np.outer(k, xs - x0) / lx)
    cy = np.cos(np.pi * np.outer(k, ys - y0) / ly)
    norms = _basis_norms(k, lx, ly)
    coeffs = cx @ rho @ cy.T * grid.cell_area / norms
    kx, ky = np.meshgrid(k, k, indexing="ij")
    spectral = (1.0 + kx**2 + ky**2) ** (-exponent)
    return SmcState(n_bases, domain, n_agents, coeffs, spectral, norms)


def _inside(smc, positions):
    x0, y0, x1, y1 = smc.domain
    m = smc.margin
    p = np.asarray(positions, dtype=float).reshape(-1, 2)
    return np.column_stack([np.clip(p[:, 0], x0 + m, x1 - m), np.clip(p[:, 1], y0 + m, y1 - m)])


def _basis(smc, positions):
    """Basis values and gradients at ``positions``: (Na, K, K) each."""
    x0, y0, _, _ = smc.domain
    lx, ly = smc.lengths
    k = np.arange(smc.n_bases)
    ax, ay = np.pi * k / lx, np.pi * k / ly
    px = np.outer(positions[:, 0] - x0, ax)
    py = np.outer(positions[:, 1] - y0, ay)
    cx, sx, cy, sy = np.cos(px), np.sin(px), np.cos(py), np.sin(py)
    f = cx[:, :, None] * cy[:, None, :] / smc.norms
    gx = -(ax * sx)[:, :, None] * cy[:, None, :] / smc.norms
    gy = -cx[:, :, None] * (ay * sy)[:, None, :] / smc.norms
    return f, gx, gy


def _coverage_error(smc):
    if smc.elapsed <= 0:
        return -smc.coeffs
    return smc.accum / (smc.n_agents * smc.elapsed) - smc.coeffs


def ergodic_metric(smc):
    return float(np.sum(smc.spectral * _coverage_error(smc) ** 2))


def smc_commands(smc, positions, speed):
    """Max-speed velocity steepest-descending the ergodic metric.

    With nothing accumulated yet the error is -c_k, which points agents up
    the smoothed density gradient.
    """
    p = _inside(smc, positions)
    _, gx, gy = _basis(smc, p)
    weight = smc.spectral * _coverage_error(smc)
    b = np.column_stack([np.sum(weight * gx, axis=(1, 2)), np.sum(weight * gy, axis=(1, 2))])
    norm = np.linalg.norm(b, axis=1)
    out = np.zeros_like(b)
    moving = norm > 1e-300
    out[moving] = -speed * b[moving] / norm[moving, None]
    return out


def smc_accumulate(smc, positions, dt):
    """Add the agents' basis values for one step of length ``dt``."""
    f, _, _ = _basis(smc, _inside(smc, positions))
    smc.accum += f.sum(axis=0) * dt
    smc.elapsed += dt
    return smc


def smc_step(smc, positions, dt, v_max):
    """One first-order SMC step: commands from the current state, then accumulate."""
    commands = smc_commands(smc, positions, v_max)
    smc_accumulate(smc, positions, dt)
    return commands


def smc_reference(smc, positions, dt, speed, horizon):
    """Roll the SMC law forward ``horizon`` steps on a scratch copy.

    Returns (horizon, Na, 2) reference points; ``smc`` is left untouched.
    """
    scratch = smc.copy()
    p = _inside(smc, positions)
    out = np.empty((horizon, len(p), 2))
    for i in range(horizon):
        v = smc_step(scratch, p, dt, speed)
        p = _inside(smc, p + v * dt)
        out[i] = p
    return out
