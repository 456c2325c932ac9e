"""Exhaustive grid search over LED placements of small planar hanging types.

Every inner vertex lies on the sheet of points whose depth to its two
children's leaves agree.  In the plane that sheet is a hyperbola branch
(a line when the children have equal heights), so one signed offset per
inner vertex parametrizes all LED trees of the type.  The oracle samples
those offsets on a box, keeps the shortest feasible tree and zooms in.
It is independent of the solver and only meant for verification.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionUnsupported, EmptyFeasibleGrid, ParameterViolation
from .solver import Solution, Status
from .tree import HangingType, evaluate

MAX_LEAVES = 4


@dataclass(frozen=True)
class GridSpec:
    """``points`` samples per offset on ``[-extent, extent]`` (relative to the leaf
    span), followed by ``zoom`` refinements around the incumbent.  An empty box is
    widened fourfold up to ``widen`` times.

    By default the point count is odd, so zero offsets (the stretched tree) are on
    the grid, and is chosen to keep about 10^4 samples per level."""

    points: int | None = None
    extent: float = 3.0
    zoom: int = 12
    widen: int = 3

    def __post_init__(self):
        if (self.points is not None and self.points < 3) or self.extent <= 0 or self.zoom < 0:
            raise ParameterViolation("grid needs points >= 3, extent > 0 and zoom >= 0")

    def resolution(self, k: int) -> int:
        if self.points is not None:
            return self.points
        return 101 if k <= 2 else 23


def _sheet_points(p1, p2, h1, h2, s):
    """Planar sheet points with signed offsets ``s``; NaN where the pair is infeasible."""
    diff = p1 - p2
    dist = np.linalg.norm(diff, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = diff / dist[:, None]
        a = 0.5 * (h1 - h2)
        eps = 0.5 * dist
        b2 = eps * eps - a * a
        b = np.sqrt(np.where(b2 >= 0, b2, np.nan))
        e = np.stack([-w[:, 1], w[:, 0]], axis=1)
        # cosh(u) with s = b sinh(u); a collapsed branch only admits s = 0
        ch = np.where(b > 0, np.sqrt(1.0 + (s / np.where(b > 0, b, 1.0)) ** 2), np.where(s == 0, 1.0, np.nan))
        ch = np.where(b2 >= 0, ch, np.nan)
    centre = 0.5 * (p1 + p2)
    return centre + (a * ch)[:, None] * w + s[:, None] * e


def _lengths_on_grid(ht: HangingType, offsets: np.ndarray) -> np.ndarray:
    """Total lengths for each row of ``offsets`` (one column per inner vertex); NaN if infeasible."""
    top = ht.topology
    m = offsets.shape[0]
    pos = np.empty((top.n_t, m, 2))
    h = np.zeros((top.n_t, m))
    pos[top.n_v:] = ht.leaf_coords[:, None, :]
    total = np.zeros(m)
    for v in top.postorder:
        if top.is_leaf(v):
            continue
        a, b = top.children[v]
        p = _sheet_points(pos[a], pos[b], h[a], h[b], offsets[:, v])
        la = np.linalg.norm(p - pos[a], axis=1)
        lb = np.linalg.norm(p - pos[b], axis=1)
        pos[v] = p
        h[v] = np.maximum(la + h[a], lb + h[b])
        total += la + lb
    return total, pos[: top.n_v]


def brute_force_oracle(hanging_type: HangingType, grid_spec: GridSpec | None = None) -> Solution:
    """Shortest LED tree found on the offset grid, returned with status ``GridBest``."""
    grid_spec = grid_spec or GridSpec()
    ht = hanging_type
    top = ht.topology
    if ht.dim != 2:
        raise DimensionUnsupported("the grid oracle works in the plane only")
    if top.n_l > MAX_LEAVES:
        raise ParameterViolation(f"the grid oracle handles at most {MAX_LEAVES} leaves")
    pts = ht.leaf_coords
    span = float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1))) or 1.0
    k = top.n_v
    npts = grid_spec.resolution(k)
    best_len, best_pos, best_off = np.inf, None, None

    def search(lo, hi):
        nonlocal best_len, best_pos, best_off
        axes = [np.linspace(lo[i], hi[i], npts) for i in range(k)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k)
        total, pos = _lengths_on_grid(ht, mesh)
        total = np.where(np.isfinite(total), total, np.inf)
        j = int(np.argmin(total))
        if np.isfinite(total[j]) and total[j] < best_len:
            best_len, best_pos, best_off = float(total[j]), pos[:, j, :].copy(), mesh[j].copy()

    # the feasible offsets may start far out, so widen the box until something is found
    extent = grid_spec.extent * span
    for _ in range(grid_spec.widen + 1):
        lo, hi = np.full(k, -extent), np.full(k, extent)
        search(lo, hi)
        if best_off is not None:
            break
        extent *= 4.0
    else:
        raise EmptyFeasibleGrid("no sampled offset combination gives an LED tree")
    for level in range(grid_spec.zoom):
        step = (hi - lo) / (npts - 1)
        lo = best_off - 2.0 * step
        hi = best_off + 2.0 * step
        search(lo, hi)
    inst = evaluate(ht, best_pos)
    return Solution(ht, best_pos, inst.lengths.copy(), inst.total_length, Status.GRID_BEST,
                    trace={"offsets": best_off.tolist(), "grid": npts, "zoom": grid_spec.zoom})
