"""CSV and SVG output of a run.

Numbers are written with ``repr`` so a CSV read back gives the exact
floats. Output depends only on the result, never on wall-clock time, so
re-exporting the same result reproduces the same bytes.
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from agrosim import survival_histogram
from dynamics import N_STATE, STATE_LABELS

log = logging.getLogger(__name__)

TRAJECTORY_HEADER = ["step", "agent", "time", *STATE_LABELS, "h_s", "alpha"]
GRID_HEADER = ["ix", "iy", "x", "y", "rho0", "dose", "rhoF"]
CANVAS_PX = 800
LEVELS = 256


def _num(v):
    return repr(float(v))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def export_trajectory_csv(result, path):
    cfg = result.config
    n, steps = result.states.shape[0], result.steps
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for k in range(steps + 1):
            for r in range(n):
                alpha = result.alphas[r, k - 1] if k > 0 else 0.0
                w.writerow([k, r, _num(k * cfg.dt), *map(_num, result.states[r, k]),
                            _num(result.tank_heights[r, k]), _num(alpha)])
    return path


def read_trajectory_csv(path):
    """Inverse of ``export_trajectory_csv``: (states, tank_heights, alphas)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRAJECTORY_HEADER:
        raise ValueError(f"{path}: not a trajectory file")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path}: no trajectory rows")
    n = max(int(row[1]) for row in body) + 1
    steps = max(int(row[0]) for row in body)
    states = np.zeros((n, steps + 1, N_STATE))
    heights = np.zeros((n, steps + 1))
    alphas = np.zeros((n, steps))
    for row in body:
        k, r = int(row[0]), int(row[1])
        states[r, k] = [float(v) for v in row[3:3 + N_STATE]]
        heights[r, k] = float(row[3 + N_STATE])
        if k > 0:
            alphas[r, k - 1] = float(row[4 + N_STATE])
    return states, heights, alphas


def export_grid_csv(grid, path):
    xs, ys = grid.spec.axis_centers()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(GRID_HEADER)
        for ix in range(grid.spec.nx):
            x = _num(xs[ix])
            for iy in range(grid.spec.ny):
                w.writerow([ix, iy, x, _num(ys[iy]), _num(grid.rho0[ix, iy]),
                            _num(grid.dose[ix, iy]), _num(grid.rhoF[ix, iy])])
    return path


def summary_rows(result):
    rows = [(key, _num(value)) for key, value in result.metrics().items()]
    percent, edges = survival_histogram(result.grid)
    rows += [(f"hist_{edges[i]:.1f}_{edges[i + 1]:.1f}", _num(p)) for i, p in enumerate(percent)]
    rows += [(f"w2_step_{k}", _num(v)) for k, v in result.diagnostics.wasserstein]
    rows += [(f"config.{key}", text) for key, text in result.config.items()]
    return rows


def export_summary_csv(result, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(["metric", "value"])
        w.writerows(summary_rows(result))
    return path


def export_csv(result, out_dir):
    """trajectories.csv, grid.csv and summary.csv under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [
        export_trajectory_csv(result, out / "trajectories.csv"),
        export_grid_csv(result.grid, out / "grid.csv"),
        export_summary_csv(result, out / "summary.csv"),
    ]
    log.info("[export] wrote %s", ", ".join(p.name for p in paths))
    return paths


def color(level):
    """Colormap entry for level 0..255: blue (0) to red (255)."""
    return f"#{level:02x}00{255 - level:02x}"


def quantize(values, vmin=0.0, vmax=1.0):
    span = vmax - vmin
    if span <= 0:
        return np.zeros(np.shape(values), dtype=int)
    scaled = (np.asarray(values, dtype=float) - vmin) / span
    return np.clip(np.rint(scaled * (LEVELS - 1)), 0, LEVELS - 1).astype(int)


def export_svg_heatmap(values, path, vmin=0.0, vmax=1.0, title=None):
    """Heatmap of an (nx, ny) array, one user unit per cell, y up.

    Runs of equal level along a row are merged into one rectangle.
    """
    values = getattr(values, "rhoF", values)
    levels = quantize(values, vmin, vmax)
    nx, ny = levels.shape
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>\n',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS_PX}" height="{CANVAS_PX}" '
        f'viewBox="0 0 {nx} {ny}" preserveAspectRatio="none" shape-rendering="crispEdges">\n',
        f"<!-- {LEVELS}-level colormap: rgb(l, 0, 255 - l); l = 0 at {vmin!r} (blue), "
        f"l = 255 at {vmax!r} (red) -->\n",
    ]
    if title:
        parts.append(f"<title>{title}</title>\n")
    for iy in range(ny):
        row = levels[:, iy]
        y = ny - 1 - iy
        cuts = np.concatenate([[0], np.flatnonzero(np.diff(row)) + 1, [nx]])
        for a, b in zip(cuts[:-1], cuts[1:]):
            parts.append(f'<rect x="{a}" y="{y}" width="{b - a}" height="1" fill="{color(int(row[a]))}"/>\n')
    parts.append("</svg>\n")
    Path(path).write_text("".join(parts), encoding="utf-8")
    return path


def export_run(result, out_dir):
    """CSV files plus initial-density and survival heatmaps."""
    out = Path(out_dir)
    paths = export_csv(result, out)
    paths.append(export_svg_heatmap(result.grid.rho0, out / "density.svg", title="initial weed density"))
    paths.append(export_svg_heatmap(result.grid.rhoF, out / "survival.svg", title="surviving weed density"))
    log.info("[export] %d files in %s", len(paths), out)
    return paths
