"""Geometry of the set of LED placements for a fixed hanging type.

Every inner vertex ``v`` with children ``v1, v2`` of heights ``h1, h2`` must
satisfy ``|v - v1| - |v - v2| = h2 - h1``: it lives on one sheet of a
rotational hyperboloid with foci ``v1, v2``.  This module builds those
sheets, classifies regular points, constructs first-order feasible
(tangent) directions and evaluates the two-parameter pair-region probes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    AntiparallelBlock,
    CoincidentChildren,
    DegenerateFoci,
    InfeasiblePair,
    NotFeasible,
    ParameterViolation,
    StretchInfeasible,
    TangentDirectionForbidden,
    UnknownExample,
)
from .tree import HangingType, LedTreeInstance, build_topology, evaluate, feasibility_tolerance

_EPS = 1e-12


def sibling_existence_check(v1, v2, h1: float, h2: float, tol: float = 0.0) -> bool:
    """True iff some parent position puts both children at equal depth."""
    d = float(np.linalg.norm(np.asarray(v1, float) - np.asarray(v2, float)))
    return d >= abs(h2 - h1) - tol


@dataclass(frozen=True, eq=False)
class HyperboloidSheet:
    v1: np.ndarray
    v2: np.ndarray
    h1: float
    h2: float
    a: float
    eps: float
    b: float
    center: np.ndarray
    w: np.ndarray
    collapsed: bool = False

    @property
    def vertex(self) -> np.ndarray:
        """Apex of the sheet; it lies on the segment between the foci."""
        return self.center + self.a * self.w

    def gap(self, p) -> float:
        p = np.asarray(p, float)
        return float(np.linalg.norm(p - self.v1) - np.linalg.norm(p - self.v2) - (self.h2 - self.h1))

    def contains(self, p, rtol: float = 1e-10) -> bool:
        scale = 1.0 + self.eps + abs(self.h1) + abs(self.h2)
        return abs(self.gap(p)) <= rtol * scale

    def point(self, u: float, e=None) -> np.ndarray:
        """Point ``center + a cosh(u) w + b sinh(u) e`` with ``e`` a unit vector orthogonal to ``w``.

        ``e`` defaults to the first coordinate axis made orthogonal to ``w``.
        """
        if e is None:
            e = self.normal_direction()
        e = np.asarray(e, float)
        e = e - (e @ self.w) * self.w
        nrm = np.linalg.norm(e)
        if nrm < _EPS:
            raise ValueError("offset direction is parallel to the focal axis")
        e = e / nrm
        return self.center + self.a * math.cosh(u) * self.w + self.b * math.sinh(u) * e

    def normal_direction(self) -> np.ndarray:
        basis = np.eye(self.w.size)
        k = int(np.argmin(np.abs(self.w)))
        e = basis[k] - self.w[k] * self.w
        return e / np.linalg.norm(e)


def hyperboloid_sheet(v1, v2, h1: float, h2: float) -> HyperboloidSheet:
    v1 = np.asarray(v1, float)
    v2 = np.asarray(v2, float)
    diff = v1 - v2
    dist = float(np.linalg.norm(diff))
    if dist == 0.0:
        raise DegenerateFoci("coincident foci: every point of space is admissible")
    if not sibling_existence_check(v1, v2, h1, h2, tol=_EPS * (dist + abs(h1) + abs(h2))):
        raise InfeasiblePair(f"focal distance {dist:g} < height difference {abs(h2 - h1):g}")
    a = 0.5 * (h1 - h2)
    eps = 0.5 * dist
    b2 = eps * eps - a * a
    collapsed = b2 <= (_EPS * (eps + abs(a))) ** 2 * 4
    b = math.sqrt(max(b2, 0.0))
    if collapsed:
        b = 0.0
        a = math.copysign(eps, a) if a != 0 else 0.0
    return HyperboloidSheet(v1, v2, float(h1), float(h2), a, eps, b, 0.5 * (v1 + v2), diff / dist, collapsed)


def root_on_segment(child_1, child_2, h1: float, h2: float) -> np.ndarray:
    """Equal-depth parent position on the segment joining two children."""
    c1 = np.asarray(child_1, float)
    c2 = np.asarray(child_2, float)
    d = float(np.linalg.norm(c2 - c1))
    if d == 0.0:
        raise CoincidentChildren("children coincide; the parent position is not determined")
    if d < abs(h2 - h1) - _EPS * (d + abs(h1) + abs(h2)):
        raise InfeasiblePair(f"child distance {d:g} < height difference {abs(h2 - h1):g}")
    t = min(1.0, max(0.0, (d + h2 - h1) / (2.0 * d)))
    return c1 + t * (c2 - c1)


def sheet_placement(hanging_type: HangingType, offsets=None, rng=None, spread: float = 0.0) -> np.ndarray:
    """Bottom-up placement with each inner vertex on its sheet.

    With ``spread == 0`` every vertex sits at its sheet apex, i.e. on the
    segment joining its children (the stretched tree).  Otherwise vertex
    ``v`` is moved along the sheet by hyperbolic parameter ``offsets[v]``
    (drawn as ``spread * N(0, 1)`` when ``rng`` is given) in a random
    direction orthogonal to the focal axis.
    """
    top = hanging_type.topology
    n = hanging_type.dim
    pos = np.zeros((top.n_t, n))
    pos[top.n_v:] = hanging_type.leaf_coords
    h = np.zeros(top.n_t)
    for v in top.postorder:
        if top.is_leaf(v):
            continue
        a, b = top.children[v]
        d = float(np.linalg.norm(pos[a] - pos[b]))
        if d == 0.0:
            if abs(h[a] - h[b]) > _EPS * (1.0 + h[a] + h[b]):
                raise StretchInfeasible(v)
            pos[v] = pos[a]
            h[v] = h[a]
            continue
        try:
            sheet = hyperboloid_sheet(pos[a], pos[b], h[a], h[b])
        except InfeasiblePair:
            raise StretchInfeasible(v) from None
        u = 0.0
        if offsets is not None:
            u = float(offsets[v])
        elif rng is not None and spread > 0:
            u = spread * float(rng.standard_normal())
        if u == 0.0 or sheet.collapsed:
            p = root_on_segment(pos[a], pos[b], h[a], h[b])
        else:
            e = rng.standard_normal(n) if rng is not None else None
            if n == 1:
                p = sheet.vertex
            else:
                try:
                    p = sheet.point(u, e)
                except ValueError:
                    p = sheet.point(u)
        pos[v] = p
        h[v] = max(np.linalg.norm(p - pos[a]) + h[a], np.linalg.norm(p - pos[b]) + h[b])
    return pos[: top.n_v].copy()


def random_feasible_placement(hanging_type: HangingType, rng, spread: float = 0.5) -> np.ndarray:
    return sheet_placement(hanging_type, rng=rng, spread=spread)


# -- regularity ---------------------------------------------------------------


@dataclass
class RegularityReport:
    classification: str
    violations: list = field(default_factory=list)

    @property
    def regular(self) -> bool:
        return not self.violations


def classify_regularity(instance: LedTreeInstance, tol: float = 1e-9) -> RegularityReport:
    """Regular iff no edge is degenerate and the two leaf paths leave every inner
    vertex in different directions.  Lengths are compared against ``tol`` times
    the mean edge length."""
    res = instance.residuals
    if res.size and np.max(np.abs(res)) > feasibility_tolerance(instance):
        raise NotFeasible(f"LED residual {np.max(np.abs(res)):.3g} exceeds feasibility tolerance")
    top = instance.topology
    mean_edge = instance.total_length / top.n_e
    len_tol = tol * (mean_edge if mean_edge > 0 else 1.0)
    violations = [("ZeroLengthEdge", j) for j in range(top.n_e) if instance.lengths[j] <= len_tol]
    for i in range(top.n_v):
        ul, ur = instance.u_left(i), instance.u_right(i)
        if ul is None or ur is None:
            continue
        if np.linalg.norm(ul - ur) <= tol:
            violations.append(("CoincidentLeafDirections", i))
    return RegularityReport("Regular" if not violations else "Singular", violations)


# -- tangent directions -------------------------------------------------------


def propagate_speed(q_prev, alpha_prev, u_prev_minus, u_prev_up, alpha_cur, u_cur_minus, u_cur_plus) -> float:
    """Speed of a parent that keeps its leaf paths equal to first order when
    its child on the path moves with velocity ``q_prev * alpha_prev``."""
    den = float(np.dot(alpha_cur, np.asarray(u_cur_minus) - np.asarray(u_cur_plus)))
    if abs(den) < _EPS:
        raise TangentDirectionForbidden("direction is tangent to the parent's sheet")
    num = q_prev * float(np.dot(alpha_prev, np.asarray(u_prev_minus) + np.asarray(u_prev_up)))
    return num / den


@dataclass
class TangentDirection:
    seed: int
    w: np.ndarray
    path: list
    alphas: dict
    speeds: dict
    tau: np.ndarray

    @property
    def flat(self) -> np.ndarray:
        return self.tau.ravel()


def _segment_velocity(c1, c2, h1, h2, dc1, dc2, dh1, dh2) -> np.ndarray:
    D = c2 - c1
    d = float(np.linalg.norm(D))
    e = D / d
    dD = dc2 - dc1
    dd = float(e @ dD)
    t = (d + h2 - h1) / (2 * d)
    dt = (dh2 - dh1) / (2 * d) - (h2 - h1) * dd / (2 * d * d)
    return dc1 + dt * D + t * dD


def _off_path_unit(instance, v, on_path_child):
    a, b = instance.topology.children[v]
    other = b if on_path_child == a else a
    return instance.unit(v, other)


def height_preserving_direction(instance: LedTreeInstance, seed: int, w,
                                keep_root_on_segment: bool = False,
                                tangent_tol: float = 1e-9) -> TangentDirection:
    """First-order feasible motion started by moving ``seed`` with velocity ``w``.

    Every strict ancestor moves orthogonally to the edge towards its child off
    the path, so its height is preserved to first order.  With
    ``keep_root_on_segment`` the root instead tracks the equal-depth point on
    the segment joining its children; it must sit there already.
    """
    top = instance.topology
    w = np.asarray(w, float)
    ul, ur = instance.u_left(seed), instance.u_right(seed)
    if ul is None or ur is None:
        raise TangentDirectionForbidden(f"vertex {seed} coincides with a child")
    if abs(w @ (ul - ur)) > tangent_tol * max(1.0, np.linalg.norm(w)):
        raise TangentDirectionForbidden(f"w is not tangent to the sheet of vertex {seed}")

    path = top.root_path(seed)
    vel = {seed: w.copy()}
    alphas, speeds = {}, {}
    dh = {seed: float(w @ ur)}
    for k in range(1, len(path)):
        p, prev = path[k], path[k - 1]
        u_plus = instance.unit(p, prev)
        u_minus = _off_path_unit(instance, p, prev)
        if u_plus is None or u_minus is None:
            raise TangentDirectionForbidden(f"zero-length edge at vertex {p}")
        is_root = p == top.root
        if is_root and keep_root_on_segment:
            a, b = top.children[p]
            on_seg = root_on_segment(instance.coords[a], instance.coords[b], instance.height[a], instance.height[b])
            if np.linalg.norm(on_seg - instance.coords[p]) > 1e-9 * (1.0 + instance.height[p]):
                raise TangentDirectionForbidden("the root is not on the segment joining its children")
            zero = np.zeros_like(w)
            dca = vel.get(a, zero)
            dcb = vel.get(b, zero)
            vel[p] = _segment_velocity(
                instance.coords[a], instance.coords[b], instance.height[a], instance.height[b],
                dca, dcb, dh.get(a, 0.0), dh.get(b, 0.0),
            )
            break
        if np.linalg.norm(u_plus + u_minus) < _EPS ** 0.5:
            raise AntiparallelBlock(f"edges at vertex {p} are antiparallel")
        ref = -u_plus if is_root else instance.u_up(p)
        alpha = ref - (ref @ u_minus) * u_minus
        nrm = np.linalg.norm(alpha)
        if nrm < _EPS:
            raise TangentDirectionForbidden(f"no height-preserving direction at vertex {p}")
        alpha /= nrm
        if prev == seed:
            u_prev_minus = ur
        else:
            u_prev_minus = _off_path_unit(instance, prev, path[k - 2])
        q = propagate_speed(1.0, vel[prev], u_prev_minus, -u_plus, alpha, u_minus, u_plus)
        alphas[p], speeds[p] = alpha, q
        vel[p] = q * alpha
        dh[p] = float(vel[p] @ u_minus)

    tau = np.zeros((top.n_v, instance.hanging_type.dim))
    for v, vv in vel.items():
        tau[v] = vv
    return TangentDirection(seed, w, path, alphas, speeds, tau)


def sheet_tangent(instance: LedTreeInstance, i: int, rng=None) -> np.ndarray:
    """A unit vector tangent to the sheet through inner vertex ``i``."""
    ul, ur = instance.u_left(i), instance.u_right(i)
    normal = ul - ur
    nn = np.linalg.norm(normal)
    n = instance.hanging_type.dim
    if rng is None:
        g = ul + ur
        if np.linalg.norm(g) < _EPS:
            g = np.eye(n)[int(np.argmin(np.abs(ul)))]
    else:
        g = rng.standard_normal(n)
    if nn > _EPS:
        normal = normal / nn
        g = g - (g @ normal) * normal
    return g / np.linalg.norm(g)


# -- two-parameter pair-region probes -----------------------------------------

PAIR_EXAMPLES = ("nested_collinear", "shifted_collinear", "cross")


def _check_params(example_id: str, a: float, c: float) -> None:
    if example_id not in PAIR_EXAMPLES:
        raise UnknownExample(f"unknown example {example_id!r}; choose from {PAIR_EXAMPLES}")
    if example_id in ("nested_collinear", "shifted_collinear"):
        if not 0 < c < a:
            raise ParameterViolation(f"{example_id} needs 0 < c < a (got a={a}, c={c})")
    elif not (a > 0 and c > 0 and c != a):
        raise ParameterViolation(f"cross needs a, c > 0 and c != a (got a={a}, c={c})")


def pair_region_hanging_type(example_id: str, a: float, c: float) -> HangingType:
    """Four leaves A, B, C, D with topology ((A,B),(C,D)).  For
    ``shifted_collinear`` the parameter ``c`` is the half-width ``d``."""
    _check_params(example_id, a, c)
    if example_id == "nested_collinear":
        leaves = [(-a, 0), (a, 0), (-c, 0), (c, 0)]
    elif example_id == "shifted_collinear":
        d = c
        leaves = [(-a - d, 0), (-a + d, 0), (a - d, 0), (a + d, 0)]
    else:
        leaves = [(-a, 0), (a, 0), (0, -c), (0, c)]
    # 0 = root, 1 = X (parent of A, B), 2 = Y (parent of C, D); leaves 3..6
    top = build_topology([(0, 1, 2), (1, 3, 4), (2, 5, 6)], 4)
    return HangingType(top, np.array(leaves, float), ("A", "B", "C", "D"), ("R", "X", "Y"))


def pair_region_inner(example_id: str, a: float, c: float, s: float, t: float):
    """Positions of X and Y for parameters ``(s, t)``."""
    if example_id == "nested_collinear":
        return np.array([0.0, s]), np.array([0.0, t])
    if example_id == "shifted_collinear":
        return np.array([-a, s]), np.array([a, t])
    return np.array([0.0, s]), np.array([t, 0.0])


def pair_region_margin(example_id: str, params: dict, s, t):
    """Signed slack of the root existence inequality; feasible where ``>= 0``."""
    a, c = float(params["a"]), float(params["c"])
    _check_params(example_id, a, c)
    s = np.asarray(s, float)
    t = np.asarray(t, float)
    if example_id == "nested_collinear":
        return np.abs(t - s) - np.abs(np.hypot(a, s) - np.hypot(c, t))
    if example_id == "shifted_collinear":
        d = c
        return np.hypot(2 * a, t - s) - np.abs(np.hypot(d, s) - np.hypot(d, t))
    return np.hypot(t, s) - np.abs(np.hypot(a, s) - np.hypot(c, t))


def pair_region_membership(example_id: str, params: dict, s, t):
    m = pair_region_margin(example_id, params, s, t)
    return bool(m >= 0) if np.ndim(m) == 0 else m >= 0


@dataclass
class ImplicitCurve:
    """``sum coeffs[(i, j)] * s**i * t**j == 0``; ``kind == 'all_plane'`` means no boundary."""

    kind: str
    coeffs: dict

    def __call__(self, s, t):
        s = np.asarray(s, float)
        t = np.asarray(t, float)
        out = np.zeros(np.broadcast(s, t).shape)
        for (i, j), k in self.coeffs.items():
            out = out + k * s ** i * t ** j
        return out

    def solve_t(self, s: float) -> list[float]:
        if not self.coeffs:
            return []
        deg = max(j for _, j in self.coeffs)
        poly = np.zeros(deg + 1)
        for (i, j), k in self.coeffs.items():
            poly[deg - j] += k * s ** i
        nz = np.flatnonzero(np.abs(poly) > 0)
        if nz.size == 0:
            return []
        roots = np.roots(poly[nz[0]:])
        return sorted(float(r.real) for r in roots if abs(r.imag) <= 1e-12 * (1 + abs(r.real)))

    def as_json(self) -> dict:
        return {
            "kind": self.kind,
            "terms": [{"s_power": i, "t_power": j, "coefficient": float(k)} for (i, j), k in sorted(self.coeffs.items())],
        }


def pair_region_boundary(example_id: str, params: dict) -> ImplicitCurve:
    a, c = float(params["a"]), float(params["c"])
    _check_params(example_id, a, c)
    if example_id == "nested_collinear":
        return ImplicitCurve("hyperbola", {
            (2, 0): 4 * c * c,
            (1, 1): -4 * (a * a + c * c),
            (0, 2): 4 * a * a,
            (0, 0): -((a * a - c * c) ** 2),
        })
    if example_id == "cross":
        return ImplicitCurve("quartic", {
            (2, 2): 1.0,
            (2, 0): c * c,
            (0, 2): a * a,
            (0, 0): -((a * a - c * c) ** 2) / 4,
        })
    return ImplicitCurve("all_plane", {})


@dataclass
class ProbeResult:
    example_id: str
    params: dict
    s: np.ndarray
    t: np.ndarray
    bitmap: np.ndarray  # [t index, s index], t ascending
    components: int
    holes: int
    boundary: ImplicitCurve
    boundary_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    @property
    def full(self) -> bool:
        return bool(self.bitmap.all())

    def summary(self) -> dict:
        return {
            "example": self.example_id,
            "params": self.params,
            "grid": int(self.s.size),
            "range": float(self.s[-1]),
            "feasible_fraction": float(self.bitmap.mean()),
            "components": self.components,
            "holes": self.holes,
            "full_grid": self.full,
            "boundary": self.boundary.as_json(),
        }


_FOUR = ndimage.generate_binary_structure(2, 1)


def count_components(bitmap: np.ndarray) -> tuple[int, int]:
    """Number of 4-connected feasible components and of bounded infeasible ones (holes)."""
    _, n_comp = ndimage.label(bitmap, structure=_FOUR)
    lab_out, n_out = ndimage.label(~bitmap, structure=_FOUR)
    border = set(np.unique(np.concatenate([lab_out[0], lab_out[-1], lab_out[:, 0], lab_out[:, -1]])))
    holes = sum(1 for k in range(1, n_out + 1) if k not in border)
    return int(n_comp), int(holes)


def refine_boundary(example_id: str, params: dict, s, t, bitmap, iterations: int = 80) -> np.ndarray:
    """Bisect every horizontal membership change of the grid down to the sign change of the margin."""
    rows, cols = np.nonzero(bitmap[:, 1:] != bitmap[:, :-1])
    if rows.size == 0:
        return np.zeros((0, 2))
    tt = t[rows]
    lo = s[cols].copy()
    hi = s[cols + 1].copy()
    mlo = pair_region_margin(example_id, params, lo, tt) >= 0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        mm = pair_region_margin(example_id, params, mid, tt) >= 0
        same = mm == mlo
        lo = np.where(same, mid, lo)
        hi = np.where(same, hi, mid)
    return np.column_stack([0.5 * (lo + hi), tt])


def probe_region(example_id: str, a: float, c: float, grid: int = 512, extent: float = 10.0) -> ProbeResult:
    params = {"a": float(a), "c": float(c)}
    _check_params(example_id, a, c)
    s = np.linspace(-extent, extent, grid)
    t = np.linspace(-extent, extent, grid)
    S, T = np.meshgrid(s, t)
    bitmap = pair_region_margin(example_id, params, S, T) >= 0
    comps, holes = count_components(bitmap)
    pts = refine_boundary(example_id, params, s, t, bitmap)
    return ProbeResult(example_id, params, s, t, bitmap, comps, holes,
                       pair_region_boundary(example_id, params), pts)


def write_pgm(bitmap: np.ndarray, path) -> None:
    """Binary PGM, feasible pixels white; the first image row is the largest ``t``."""
    img = np.where(bitmap[::-1], 255, 0).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = map(int, parts[1].split())
    img = np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)
    return (img[::-1] > 127)
