"""Episode execution: one step loop shared by D2OC and the two baselines."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

import agrosim
from baselines import TrackingLimits, lawnmower_plan, mpc_track, smc_accumulate, smc_reference, smc_state
from d2oc import AgentLedger, D2ocController, alpha_schedule, share_weights
from density import GridSpec, mixture_pdf, sample_points
from dynamics import (
    IZ,
    TankState,
    clamp_state,
    hover_state,
    plant_matrices,
    planar_position,
    predict_matrices,
    saturate,
    step,
    system_mass,
    tank_step,
)
from errors import D2ocError, RunError
from transport import DiscreteMeasure, wasserstein_lp

log = logging.getLogger(__name__)

LEDGER_TOL = 1e-9


@dataclass
class Diagnostics:
    saturations: np.ndarray
    state_clamps: np.ndarray
    wasserstein: list = field(default_factory=list)  # (step, W^2) samples
    ledger_error: float = 0.0


@dataclass
class RunResult:
    """Everything a run produced.

    ``states[r, k]`` is agent r's state at step k (k = 0..M);
    ``tank_heights`` follows the same indexing. ``alphas[r, k-1]`` is the
    weight of agent-point k in the trajectory measure.
    """

    config: object
    states: np.ndarray
    tank_heights: np.ndarray
    alphas: np.ndarray
    grid: agrosim.DoseGrid
    cloud: object
    released: float
    diagnostics: Diagnostics

    @property
    def method(self):
        return self.config.method

    @property
    def positions(self):
        return planar_position(self.states)

    @property
    def steps(self):
        return self.states.shape[1] - 1

    @property
    def total_dosage(self):
        """Grams of active ingredient released, on or off the farm."""
        return self.released

    @property
    def deposited(self):
        return agrosim.total_deposited(self.grid)

    @property
    def reduction_rate(self):
        return agrosim.reduction_rate(self.grid)

    @property
    def max_survival(self):
        return agrosim.max_survival_density(self.grid)

    def metrics(self):
        return {
            "total_dosage_g": self.total_dosage,
            "deposited_g": self.deposited,
            "discarded_g": self.grid.discarded,
            "reduction_rate_pct": self.reduction_rate,
            "max_survival_density": self.max_survival,
            "saturations": int(self.diagnostics.saturations.sum()),
            "state_clamps": int(self.diagnostics.state_clamps.sum()),
            "ledger_error": self.diagnostics.ledger_error,
        }


def _agent_points(positions, alphas, stride):
    """Flatten (n, M, 2) agent-points, merging ``stride`` consecutive ones."""
    pts, wts = [], []
    for r in range(len(positions)):
        p, a = positions[r], alphas[r]
        if stride > 1:
            starts = np.arange(0, len(a), stride)
            w = np.add.reduceat(a, starts)
            mass = np.add.reduceat(p * a[:, None], starts)
            keep = w > 0
            p = mass[keep] / w[keep, None]
            a = w[keep]
        pts.append(p)
        wts.append(a)
    return np.concatenate(pts), np.concatenate(wts)


def _trajectory_w2(positions, alphas, cloud, stride=1):
    pts, wts = _agent_points(positions, alphas, stride)
    keep = wts > 0
    if not keep.any():
        raise ValueError("trajectory has no weighted agent-points")
    wts = wts[keep] / wts[keep].sum()
    reference = DiscreteMeasure.from_cloud(cloud)
    return wasserstein_lp(DiscreteMeasure(pts[keep], wts), reference).total_cost


def trajectory_wasserstein(result, cloud, stride=1):
    """Squared 2-Wasserstein distance from all agent-points to ``cloud``.

    Agent-points are the planar positions at steps 1..M weighted by their
    alpha, normalized to unit mass.
    """
    if stride < 1:
        raise ValueError(f"stride must be at least 1, got {stride}")
    return _trajectory_w2(result.positions[:, 1:], result.alphas, cloud, stride)


class _Episode:
    """Mutable per-run state; ``run_scenario`` is the public entry point."""

    def __init__(self, cfg):
        self.cfg = cfg
        n, M = cfg.n_agents, cfg.steps
        self.states = np.zeros((n, M + 1, 12))
        self.heights = np.zeros((n, M + 1))
        self.alphas = np.zeros((n, M))
        self.tanks = [TankState.full(cfg.tank) for _ in range(n)]
        for r, (x, y) in enumerate(cfg.initial_positions):
            self.states[r, 0] = hover_state(x, y)
            self.heights[r, 0] = self.tanks[r].h_s
        self.cloud = sample_points(cfg.field, cfg.n_samples, cfg.seed)
        self.grid = agrosim.new_dose_grid(cfg.field, GridSpec.for_domain(cfg.domain, cfg.cell_size))
        self.released = 0.0
        self.diag = Diagnostics(np.zeros(n, dtype=int), np.zeros(n, dtype=int))
        self.controllers = None
        self.paths = None
        self.smc = None

    def setup(self):
        cfg = self.cfg
        if cfg.method == "d2oc":
            schedule = alpha_schedule(cfg.n_agents, cfg.steps, cfg.alpha_profile or None)
            self.controllers = [
                D2ocController(AgentLedger(r, self.cloud, schedule), cfg.weights, cfg.horizon,
                               cfg.drone, cfg.tank, cfg.dt)
                for r in range(cfg.n_agents)
            ]
        elif cfg.method == "lm":
            self.paths = lawnmower_plan(cfg.domain, cfg.n_agents, cfg.operation_time, cfg.dt,
                                        cfg.altitude, starts=cfg.initial_positions)
        else:
            coarse = GridSpec.for_domain(cfg.domain, cfg.smc.resolution)
            values = mixture_pdf(cfg.field, coarse.centers())
            self.smc = smc_state(values, coarse, cfg.n_agents, cfg.smc.n_bases, cfg.smc.exponent)
        if cfg.method != "d2oc" and cfg.steps:
            self.alphas[:] = 1.0 / (cfg.n_agents * cfg.steps)

    def _tracking_input(self, reference, state, tank):
        cfg = self.cfg
        mats = predict_matrices(tank, cfg.drone, cfg.tank, cfg.dt, cfg.mpc_horizon)
        limits = TrackingLimits.for_drone(cfg.drone, system_mass(tank, cfg.drone))
        return mpc_track(reference, state, mats, cfg.weights, cfg.mpc_horizon, limits=limits)

    def advance(self, k):
        cfg = self.cfg
        positions = planar_position(self.states[:, k])
        refs = None
        if self.smc is not None:
            refs = smc_reference(self.smc, positions, cfg.dt, cfg.smc.speed, cfg.mpc_horizon)

        for r in range(cfg.n_agents):
            try:
                self._advance_agent(r, k, refs)
            except (D2ocError, ValueError, np.linalg.LinAlgError) as e:
                raise RunError(str(e), step=k, agent=r) from e

        if self.controllers is not None:
            self._share(k)
        if self.smc is not None:
            smc_accumulate(self.smc, positions, cfg.dt)

    def _advance_agent(self, r, k, refs):
        cfg = self.cfg
        state, tank = self.states[r, k], self.tanks[r]
        if self.controllers is not None:
            u = self.controllers[r].control(state, tank, k)
        elif self.paths is not None:
            u = self._tracking_input(self.paths[r].segment(k, cfg.mpc_horizon), state, tank)
        else:
            u = self._tracking_input(refs[:, r], state, tank)

        u, clipped = saturate(u, state, cfg.drone, system_mass(tank, cfg.drone))
        nxt = step(state, u, plant_matrices(tank, cfg.drone, cfg.tank, cfg.dt))
        nxt, clamped = clamp_state(nxt, cfg.drone)
        if clipped:
            self.diag.saturations[r] += 1
            log.debug("[run] step %d agent %d: input saturated", k, r)
        if clamped:
            self.diag.state_clamps[r] += 1
            log.debug("[run] step %d agent %d: state clamped", k, r)

        after = tank_step(tank, cfg.tank, cfg.dt)
        volume = (tank.h_s - after.h_s) * cfg.tank.l_L**2
        side = agrosim.spray_footprint(cfg.altitude - nxt[IZ])
        _, released = agrosim.deposit(self.grid, planar_position(nxt), side, volume / cfg.dt,
                                      cfg.herbicide.concentration, cfg.dt)
        self.released += released

        self.states[r, k + 1] = nxt
        self.tanks[r] = after
        self.heights[r, k + 1] = after.h_s
        if self.controllers is not None:
            self.alphas[r, k] = self.controllers[r].commit(planar_position(nxt), k)

    def _share(self, k):
        cfg = self.cfg
        ledgers = [c.ledger for c in self.controllers]
        ledgers = share_weights(ledgers, planar_position(self.states[:, k + 1]), cfg.d_comm)
        worst = 0.0
        for c, ledger in zip(self.controllers, ledgers):
            c.ledger = ledger
            worst = max(worst, ledger.cloud.ledger_error())
        self.diag.ledger_error = max(self.diag.ledger_error, worst)
        if worst > LEDGER_TOL:
            log.warning("[d2oc] step %d: mass ledger off by %.3e", k, worst)

    def sample_wasserstein(self, k):
        w2 = _trajectory_w2(planar_position(self.states[:, 1:k + 1]), self.alphas[:, :k], self.cloud)
        self.diag.wasserstein.append((k, w2))
        log.debug("[run] step %d: W2^2 to reference %.4f", k, w2)


def run_scenario(cfg):
    """Run one episode; deterministic for a given config and seed."""
    started = time.perf_counter()
    ep = _Episode(cfg)
    ep.setup()
    M = cfg.steps
    mode = "centralized" if cfg.centralized else f"d_comm={cfg.d_comm:g} m"
    log.info("[run] %s, %d agents, %d steps (%s)", cfg.method, cfg.n_agents, M, mode)

    tick = max(M // 10, 1)
    every = cfg.wasserstein_every
    for k in range(M):
        ep.advance(k)
        done = k + 1
        if every and done % every == 0 and done < M:
            ep.sample_wasserstein(done)
        if done % tick == 0:
            log.info("[run] %s %3d%% (step %d/%d)", cfg.method, 100 * done // M, done, M)
    if every and M:
        ep.sample_wasserstein(M)

    agrosim.apply_survival(ep.grid, cfg.herbicide, cfg.dose_scale)
    elapsed = time.perf_counter() - started
    result = RunResult(cfg, ep.states, ep.heights, ep.alphas, ep.grid, ep.cloud, ep.released, ep.diag)
    log.info(
        "[run] %s done in %.1f s: dosage %.3f g, reduction %.2f %%, max survival %.3f",
        cfg.method, elapsed, result.total_dosage, result.reduction_rate, result.max_survival,
    )
    return result
