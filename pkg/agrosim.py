"""Herbicide deposition on the dose grid and weed survival metrics."""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from density import rasterize_density

log = logging.getLogger(__name__)

FOOTPRINT_ALTITUDES = (1.5, 3.0)
FOOTPRINT_SIDES = (3.0, 5.5)

_warned_altitude = False


class SignConvention(str, enum.Enum):
    AS_WRITTEN = "as_written"
    LD50_NORMALIZED = "ld50_normalized"


@dataclass(frozen=True)
class HerbicideParams:
    ld50: float = 134.2
    concentration: float = 495.3  # g active ingredient per m^3 of solution
    sign_convention: SignConvention = SignConvention.AS_WRITTEN

    def __post_init__(self):
        if not self.ld50 > 0:
            raise ValueError(f"ld50 must be positive, got {self.ld50}")
        if not self.concentration > 0:
            raise ValueError(f"concentration must be positive, got {self.concentration}")
        object.__setattr__(self, "sign_convention", SignConvention(self.sign_convention))


@dataclass
class DoseGrid:
    """Per-cell weed density and accumulated dose, arrays indexed [ix, iy].

    ``dose`` is grams of active ingredient per cell. ``discarded`` tallies
    the mass that landed outside the grid.
    """

    spec: object
    rho0: np.ndarray
    dose: np.ndarray
    rhoF: np.ndarray
    discarded: float = 0.0

    def copy(self):
        return DoseGrid(self.spec, self.rho0.copy(), self.dose.copy(), self.rhoF.copy(), self.discarded)


def new_dose_grid(field, grid):
    rho0 = rasterize_density(field, grid)
    return DoseGrid(grid, rho0, np.zeros_like(rho0), rho0.copy(), 0.0)


def spray_footprint(altitude):
    """Side of the square spray area; linear in altitude between 1.5 m and 3 m."""
    global _warned_altitude
    lo, hi = FOOTPRINT_ALTITUDES
    if not lo <= altitude <= hi:
        if not _warned_altitude:
            log.warning("[spray] altitude %.3f m outside [%.1f, %.1f] m, clamping", altitude, lo, hi)
            _warned_altitude = True
        altitude = min(max(altitude, lo), hi)
    s_lo, s_hi = FOOTPRINT_SIDES
    return s_lo + (altitude - lo) * (s_hi - s_lo) / (hi - lo)


def _overlap(edges_lo, cell, lo, hi):
    """Length of [lo, hi] inside each cell [edges_lo, edges_lo + cell]."""
    return np.clip(np.minimum(edges_lo + cell, hi) - np.maximum(edges_lo, lo), 0.0, None)


def deposit(grid, position, side, spray_rate, conc, dt):
    """Spread one step's released mass uniformly over the spray square.

    Each cell gets mass proportional to its exact overlap with the square;
    mass outside the grid is added to ``grid.discarded``. Mutates and
    returns ``grid``; the released mass is also returned.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    released = spray_rate * dt * conc
    if released <= 0:
        return grid, 0.0
    spec = grid.spec
    x0, y0 = spec.origin
    h = spec.cell_size
    px, py = float(position[0]), float(position[1])
    half = side / 2.0
    lo_x, hi_x, lo_y, hi_y = px - half, px + half, py - half, py + half

    i0 = max(int(math.floor((lo_x - x0) / h)), 0)
    i1 = min(int(math.ceil((hi_x - x0) / h)), spec.nx)
    j0 = max(int(math.floor((lo_y - y0) / h)), 0)
    j1 = min(int(math.ceil((hi_y - y0) / h)), spec.ny)
    landed = 0.0
    if i1 > i0 and j1 > j0:
        ox = _overlap(x0 + np.arange(i0, i1) * h, h, lo_x, hi_x)
        oy = _overlap(y0 + np.arange(j0, j1) * h, h, lo_y, hi_y)
        share = np.outer(ox, oy) * (released / (side * side))
        grid.dose[i0:i1, j0:j1] += share
        landed = float(share.sum())
    grid.discarded += released - landed
    return grid, released


def survival(rho0, x_c, params):
    """Surviving weed density after dose ``x_c``.

    As written the response is rho0 / (1 + exp(log x + log LD50)), i.e.
    rho0 / (1 + x * LD50); the normalized convention divides by LD50.
    """
    x_c = np.asarray(x_c, dtype=float)
    if np.any(x_c < 0):
        raise ValueError("herbicide dose cannot be negative")
    if params.sign_convention is SignConvention.AS_WRITTEN:
        kill = x_c * params.ld50
    else:
        kill = x_c / params.ld50
    out = np.asarray(rho0, dtype=float) / (1.0 + kill)
    return float(out) if out.ndim == 0 else out


def apply_survival(grid, params, dose_scale=1.0):
    grid.rhoF = survival(grid.rho0, dose_scale * grid.dose, params)
    return grid


def reduction_rate(grid):
    total = grid.rho0.sum()
    if total <= 0:
        return 0.0
    return float(100.0 * (grid.rho0 - grid.rhoF).sum() / total)


def max_survival_density(grid):
    return float(grid.rhoF.max())


def survival_histogram(grid, bins=10):
    """Percent of cells per density interval [0, 0.1), ..., [0.9, 1.0]."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(np.clip(grid.rhoF, 0.0, 1.0), bins=edges)
    return 100.0 * counts / counts.sum(), edges


def total_deposited(grid):
    return float(grid.dose.sum())
