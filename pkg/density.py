"""Reference weed-density fields, weighted sample-point clouds and grids.

A field is a Gaussian mixture over an axis-aligned rectangular farm. The
controller sees it as a cloud of equally weighted sample points; the
agronomic evaluation sees it rasterized on a fine grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.stats import multivariate_normal as mvn

from errors import InvalidFieldError

MAX_SAMPLE_ATTEMPTS = 100  # rejection rounds per point before giving up


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DensityField:
    """Gaussian mixture over ``domain = (x_min, y_min, x_max, y_max)`` in metres."""

    means: np.ndarray
    covariances: np.ndarray
    weights: np.ndarray
    domain: tuple

    def __post_init__(self):
        means = _frozen(self.means).reshape(-1, 2)
        covs = _frozen(self.covariances).reshape(-1, 2, 2)
        weights = _frozen(self.weights).reshape(-1)
        if not (len(means) == len(covs) == len(weights)) or len(means) == 0:
            raise InvalidFieldError("means, covariances and weights must have the same nonzero length")
        if np.any(weights < 0):
            raise InvalidFieldError("mixture weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidFieldError(f"mixture weights sum to {weights.sum()!r}, expected 1")
        for c in covs:
            if not np.allclose(c, c.T) or np.linalg.det(c) <= 0 or c[0, 0] <= 0:
                raise InvalidFieldError(f"covariance {c.tolist()} is not symmetric positive-definite")
        x0, y0, x1, y1 = (float(v) for v in self.domain)
        if x1 <= x0 or y1 <= y0:
            raise InvalidFieldError(f"domain {self.domain} has no area")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "domain", (x0, y0, x1, y1))

    @property
    def n_components(self):
        return len(self.weights)

    def contains(self, points):
        x0, y0, x1, y1 = self.domain
        p = np.atleast_2d(points)
        return (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)


@dataclass(frozen=True)
class SampleCloud:
    """Sample points q_j with their current weights β_j.

    ``consumed`` is the mass already transported out of the cloud, so
    ``weights.sum() + consumed`` stays at 1.
    """

    positions: np.ndarray
    weights: np.ndarray
    consumed: float = 0.0

    def __post_init__(self):
        positions = _frozen(self.positions).reshape(-1, 2)
        weights = _frozen(self.weights).reshape(-1)
        if len(positions) == 0:
            raise InvalidFieldError("a sample cloud needs at least one point")
        if len(weights) != len(positions):
            raise InvalidFieldError("one weight per sample point is required")
        if np.any(weights < 0):
            raise InvalidFieldError("sample weights must be nonnegative")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "consumed", float(self.consumed))

    def __len__(self):
        return len(self.weights)

    @property
    def remaining(self):
        return float(self.weights.sum())

    def ledger_error(self):
        """Deviation of the mass ledger from 1."""
        return abs(self.remaining + self.consumed - 1.0)

    def with_weights(self, weights, consumed):
        return SampleCloud(self.positions, np.maximum(weights, 0.0), consumed)


@dataclass(frozen=True)
class GridSpec:
    origin: tuple
    cell_size: float
    nx: int
    ny: int

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be positive, got {self.cell_size}")
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid needs at least one cell, got {self.nx}x{self.ny}")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def for_domain(cls, domain, cell_size):
        x0, y0, x1, y1 = domain
        nx = int(round((x1 - x0) / cell_size))
        ny = int(round((y1 - y0) / cell_size))
        return cls((x0, y0), cell_size, max(nx, 1), max(ny, 1))

    @property
    def extent(self):
        x0, y0 = self.origin
        return (x0, y0, x0 + self.nx * self.cell_size, y0 + self.ny * self.cell_size)

    @property
    def cell_area(self):
        return self.cell_size * self.cell_size

    def axis_centers(self):
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.nx) + 0.5) * self.cell_size
        ys = y0 + (np.arange(self.ny) + 0.5) * self.cell_size
        return xs, ys

    def centers(self):
        """Cell centers as an (nx, ny, 2) array indexed [ix, iy]."""
        xs, ys = self.axis_centers()
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx, gy], axis=-1)


def default_field(domain=(0.0, 0.0, 100.0, 100.0)):
    """Default weed map for the 100 m farm.

    The global maximum sits at (12, 82) with a second patch
    centered at (20, 40). The third component and the covariances
    are chosen to fill the rest of the field.
    """
    return DensityField(
        means=[[12.0, 82.0], [20.0, 40.0], [72.0, 35.0]],
        covariances=[
            [[60.0, 0.0], [0.0, 60.0]],
            [[80.0, 0.0], [0.0, 50.0]],
            [[150.0, 30.0], [30.0, 100.0]],
        ],
        weights=[0.4, 0.3, 0.3],
        domain=domain,
    )


def mixture_pdf(field, points):
    """Mixture PDF evaluated at ``points`` (..., 2)."""
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 2)
    out = np.zeros(len(flat))
    for mean, cov, w in zip(field.means, field.covariances, field.weights):
        if w == 0:
            continue
        out += w * mvn.pdf(flat, mean=mean, cov=cov).reshape(-1)
    return out.reshape(pts.shape[:-1])


def sample_points(field, n, seed):
    """Draw ``n`` i.i.d. points from the mixture, restricted to the domain.

    Components are picked by inverse CDF, positions come from
    Cholesky-transformed standard normals; points outside the domain are
    redrawn for at most MAX_SAMPLE_ATTEMPTS rounds.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(field.covariances)
    cdf = np.cumsum(field.weights)
    cdf[-1] = 1.0

    points = np.empty((n, 2))
    pending = np.arange(n)
    for _ in range(MAX_SAMPLE_ATTEMPTS):
        k = len(pending)
        comp = np.searchsorted(cdf, rng.random(k), side="right")
        comp = np.minimum(comp, field.n_components - 1)
        z = rng.standard_normal((k, 2))
        draw = field.means[comp] + np.einsum("kij,kj->ki", chol[comp], z)
        inside = field.contains(draw)
        points[pending[inside]] = draw[inside]
        pending = pending[~inside]
        if len(pending) == 0:
            break
    else:
        raise InvalidFieldError(
            f"{len(pending)} of {n} samples fell outside the domain after "
            f"{MAX_SAMPLE_ATTEMPTS} attempts; mixture mass lies outside {field.domain}"
        )
    return SampleCloud(points, np.full(n, 1.0 / n), 0.0)


def rasterize_density(field, grid):
    """Mixture PDF at each cell center, scaled so the maximum is exactly 1.

    Returns an (nx, ny) array indexed [ix, iy].
    """
    gx0, gy0, gx1, gy1 = grid.extent
    x0, y0, x1, y1 = field.domain
    tol = 1e-9 * max(1.0, abs(gx1), abs(gy1))
    if gx0 > x0 + tol or gy0 > y0 + tol or gx1 < x1 - tol or gy1 < y1 - tol:
        raise InvalidFieldError(f"grid {grid.extent} does not cover the field domain {field.domain}")
    values = mixture_pdf(field, grid.centers())
    peak = values.max()
    if not peak > 0:
        raise InvalidFieldError("density vanishes on every cell; cannot normalize")
    return values / peak


@dataclass
class DensityStats:
    """Summary used by logging and the CLI."""

    peak_cell: tuple
    peak_position: tuple
    mass_in_domain: float = dc_field(default=float("nan"))


def describe(field, grid):
    values = rasterize_density(field, grid)
    ix, iy = np.unravel_index(np.argmax(values), values.shape)
    centers = grid.centers()
    raw = mixture_pdf(field, centers)
    return DensityStats(
        peak_cell=(int(ix), int(iy)),
        peak_position=(float(centers[ix, iy, 0]), float(centers[ix, iy, 1])),
        mass_in_domain=float(raw.sum() * grid.cell_area),
    )
