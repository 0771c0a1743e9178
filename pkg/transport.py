#!/usr/bin/env python3
"""Exact discrete optimal transport between weighted point sets.

``wasserstein_lp`` solves the full transportation LP (squared 2-Wasserstein
cost) with POT's network simplex. ``single_sink_plan`` is the closed form
used when all mass flows into one agent-point.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import ot

from errors import InfeasibleError

log = logging.getLogger(__name__)

MASS_TOL = 1e-9
EMD_MAX_ITER = 10_000_000


@dataclass(frozen=True)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(points) != len(weights):
            raise ValueError(f"{len(points)} points but {len(weights)} weights")
        if np.any(weights < 0):
            raise ValueError("measure weights must be nonnegative")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def mass(self):
        return float(self.weights.sum())

    @classmethod
    def from_cloud(cls, cloud):
        """Unit-mass measure over the cloud's current weights."""
        weights = np.asarray(cloud.weights, dtype=float)
        return cls(cloud.positions, weights / weights.sum())


@dataclass(frozen=True)
class TransportPlan:
    """Sparse plan: ``sources[e] -> sinks[e]`` carries ``masses[e]``.

    Sources index the first measure (agent-points y_i), sinks the second
    (sample points q_j).
    """

    sources: np.ndarray
    sinks: np.ndarray
    masses: np.ndarray
    total_cost: float

    def dense(self, n_sources, n_sinks):
        g = np.zeros((n_sources, n_sinks))
        np.add.at(g, (self.sources, self.sinks), self.masses)
        return g

    def sink_marginal(self, n_sinks):
        out = np.zeros(n_sinks)
        np.add.at(out, self.sinks, self.masses)
        return out

    def source_marginal(self, n_sources):
        out = np.zeros(n_sources)
        np.add.at(out, self.sources, self.masses)
        return out


EMPTY_PLAN = TransportPlan(np.zeros(0, int), np.zeros(0, int), np.zeros(0), 0.0)


def squared_distances(a, b):
    return ot.dist(np.asarray(a, dtype=float), np.asarray(b, dtype=float), metric="sqeuclidean")


def wasserstein_lp(mu1, mu2):
    """Optimal plan and squared 2-Wasserstein cost between two measures."""
    if abs(mu1.mass - mu2.mass) > MASS_TOL:
        raise InfeasibleError(f"measures carry different mass: {mu1.mass!r} vs {mu2.mass!r}")
    cost = squared_distances(mu1.points, mu2.points)
    # network simplex wants identical sums to machine precision
    b = mu2.weights * (mu1.mass / mu2.mass) if mu2.mass > 0 else mu2.weights
    gamma, info = ot.emd(mu1.weights, b, cost, numItermax=EMD_MAX_ITER, log=True)
    if info.get("warning"):
        log.warning("[ot] network simplex: %s", info["warning"])
    gamma = np.maximum(gamma, 0.0)
    src, snk = np.nonzero(gamma)
    masses = gamma[src, snk]
    return TransportPlan(src, snk, masses, float(np.sum(masses * cost[src, snk])))


def single_sink_plan(y, cloud, alpha):
    """Move ``alpha`` mass from the cloud into the single point ``y``.

    Nearest sample points are drained first (ties by lowest index); the
    last one is split. With one sink this greedy fill is the LP optimum.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    available = cloud.remaining
    if alpha > available + 1e-12:
        raise InfeasibleError(f"requested {alpha!r} but only {available!r} mass remains")
    if alpha == 0:
        return EMPTY_PLAN
    d2 = np.sum((cloud.positions - np.asarray(y, dtype=float)) ** 2, axis=1)
    order = np.argsort(d2, kind="stable")
    w = cloud.weights[order]
    before = np.concatenate([[0.0], np.cumsum(w)[:-1]])
    take = np.clip(alpha - before, 0.0, w)
    used = take > 0
    sinks = order[used]
    masses = take[used]
    return TransportPlan(np.zeros(len(sinks), int), sinks, masses, float(np.sum(masses * d2[sinks])))
