"""Matplotlib figures: planar tree drawings (SVG) and feasible-region bitmaps (PNG).

Only the object-oriented API is used so that no GUI backend is touched.
SVG output is made byte-stable by fixing the hash salt and dropping the
date metadata.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from matplotlib import rcParams
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .errors import DimensionUnsupported, ParameterViolation
from .tree import LedTreeInstance

PROJECTION_NOTE = "2D projection on the leaf principal axes: drawn edge lengths are not the true lengths"


@dataclass(frozen=True)
class RenderSpec:
    width: float = 6.0
    height: float = 6.0
    dpi: int = 100
    edge_width: float = 1.4
    marker_size: float = 6.0
    font_size: float = 9.0
    root_marker: str = "s"
    show_years: bool = True

    def __post_init__(self):
        if min(self.width, self.height, self.dpi, self.edge_width, self.marker_size, self.font_size) <= 0:
            raise ParameterViolation("render sizes must be positive")


def principal_projection(instance: LedTreeInstance) -> np.ndarray:
    """All vertex coordinates mapped onto the first two principal axes of the leaves."""
    leaves = instance.hanging_type.leaf_coords
    mean = leaves.mean(axis=0)
    _, _, Vt = np.linalg.svd(leaves - mean, full_matrices=False)
    axes = np.zeros((leaves.shape[1], 2))
    k = min(2, Vt.shape[0])
    axes[:, :k] = Vt[:k].T
    for j in range(k):
        i = int(np.argmax(np.abs(axes[:, j])))
        if axes[i, j] < 0:
            axes[:, j] = -axes[:, j]
    return (instance.coords - mean) @ axes


def _planar(instance: LedTreeInstance, project: bool):
    n = instance.hanging_type.dim
    if n == 2:
        return np.asarray(instance.coords), False
    if not project:
        raise DimensionUnsupported(f"cannot draw a {n}-dimensional tree without projection")
    if n == 1:
        return np.column_stack([instance.coords[:, 0], np.zeros(instance.coords.shape[0])]), True
    return principal_projection(instance), True


def tree_figure(instance: LedTreeInstance, spec: RenderSpec | None = None, years=None,
                project: bool = False) -> Figure:
    spec = spec or RenderSpec()
    top = instance.topology
    ht = instance.hanging_type
    xy, projected = _planar(instance, project)
    fig = Figure(figsize=(spec.width, spec.height), dpi=spec.dpi)
    ax = fig.add_subplot(1, 1, 1)
    for j, c in enumerate(top.edge_child):
        p = top.parent[c]
        (line,) = ax.plot(xy[[p, c], 0], xy[[p, c], 1], color="0.25", lw=spec.edge_width, zorder=1)
        line.set_gid(f"edge-{j}")
    for v in range(top.n_t):
        if v == top.root:
            (mk,) = ax.plot(*xy[v], marker=spec.root_marker, ms=spec.marker_size * 1.3, color="C3",
                            ls="none", zorder=3)
            mk.set_gid("root")
        elif top.is_leaf(v):
            (mk,) = ax.plot(*xy[v], marker="o", ms=spec.marker_size, color="C0", ls="none", zorder=3)
            mk.set_gid(f"leaf-{v}")
            ax.annotate(ht.label(v), xy[v], xytext=(4, 4), textcoords="offset points", fontsize=spec.font_size)
        else:
            (mk,) = ax.plot(*xy[v], marker="o", ms=spec.marker_size * 0.8, color="0.1", ls="none", zorder=3)
            mk.set_gid(f"inner-{v}")
        if years is not None and spec.show_years and not top.is_leaf(v) and v in years:
            label = ht.label(v)
            text = f"{label} {years[v]:.0f}" if label else f"{years[v]:.0f}"
            ax.annotate(text, xy[v], xytext=(4, -10), textcoords="offset points",
                        fontsize=spec.font_size * 0.85, color="C3")
    ax.set_aspect("equal", adjustable="datalim")
    ax.margins(0.12)
    ax.set_xticks([])
    ax.set_yticks([])
    for side in ax.spines.values():
        side.set_visible(False)
    if projected:
        note = fig.text(0.02, 0.02, PROJECTION_NOTE, fontsize=spec.font_size * 0.75, color="0.35")
        note.set_gid("projection-note")
    return fig


def render_svg(instance: LedTreeInstance, spec: RenderSpec | None = None, years=None,
               project: bool = False) -> str:
    """SVG drawing: leaves as labelled dots, inner vertices as dots, the root as a square."""
    fig = tree_figure(instance, spec, years, project)
    FigureCanvasSVG(fig)
    buf = io.StringIO()
    old = rcParams["svg.hashsalt"]
    rcParams["svg.hashsalt"] = "ledtree"
    try:
        fig.savefig(buf, format="svg", metadata={"Date": None})
    finally:
        rcParams["svg.hashsalt"] = old
    return buf.getvalue()


def probe_figure(result, path) -> None:
    """PNG of a feasible-region bitmap with its refined boundary points."""
    fig = Figure(figsize=(5, 5), dpi=110)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    e = float(result.s[-1])
    ax.imshow(result.bitmap.astype(float), origin="lower", extent=(-e, e, -e, e), cmap="Greys", vmin=0, vmax=1.6,
              interpolation="nearest")
    pts = np.asarray(result.boundary_points)
    if pts.size:
        ax.plot(pts[:, 0], pts[:, 1], ".", ms=1.0, color="C3")
    ax.set_xlabel("s")
    ax.set_ylabel("t")
    ax.set_title(f"{result.example_id}: {result.components} component(s), {result.holes} hole(s)", fontsize=9)
    fig.savefig(path, format="png", metadata={"Software": None})
