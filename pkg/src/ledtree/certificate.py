"""Optimality certificates for length-minimizing LED trees.

At a placement ``beta`` with all edges active (``z = lambda(beta)``) the
relaxed problem

    min sum(z)  s.t.  A z = 0,  lambda_j(beta) - z_j <= 0

is convex, so multipliers ``(x, y)`` satisfying its KKT system prove that
``beta`` is a global minimizer there; strictly positive ``y`` carries the
conclusion over to the original equal-depth problem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDirections, NotFeasible, NotRegular
from .feasible import classify_regularity
from .tree import LedTreeInstance, feasibility_tolerance

TOL_STAT = 1e-6
TOL_COPLANAR = 1e-6
TOL_ANGLE = 1e-8


@dataclass
class DualCertificate:
    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    method: str = "top_down"
    out_of_span: dict = field(default_factory=dict)

    def as_json(self) -> dict:
        return {
            "method": self.method,
            "y": self.y.tolist(),
            "x": self.x.tolist(),
            "z": self.z.tolist(),
            "out_of_span_residual": {str(k): float(v) for k, v in self.out_of_span.items()},
        }


def _require_regular(instance: LedTreeInstance) -> None:
    try:
        rep = classify_regularity(instance)
    except NotFeasible as exc:
        raise NotRegular(str(exc)) from None
    if not rep.regular:
        raise NotRegular(f"singular point: {rep.violations}")


def recover_duals(instance: LedTreeInstance, strict: bool = True) -> DualCertificate:
    """Propagate edge multipliers from the root downwards.

    Both root edges get ``y = 1``; at each further inner vertex the two child
    multipliers solve ``y_L u_L + y_R u_R = -y_U u_U`` in the least-squares
    sense, and ``x_i = 1 - y_R``.  With ``strict=False`` singular 2x2 systems
    are solved with the minimum-norm solution instead of raising.
    """
    _require_regular(instance)
    top = instance.topology
    y = np.zeros(top.n_e)
    x = np.zeros(top.n_v)
    resid = {}
    r = top.root
    y[top.left_edge(r)] = 1.0
    y[top.right_edge(r)] = 1.0
    x[r] = 1.0 - y[top.right_edge(r)]
    for i in top.depth_order():
        if i == r:
            continue
        ul, ur, uu = instance.u_left(i), instance.u_right(i), instance.u_up(i)
        M = np.column_stack([ul, ur])
        rhs = -y[top.up_edge(i)] * uu
        cross2 = 1.0 - float(ul @ ur) ** 2
        if cross2 < 1e-14:
            if strict:
                raise DegenerateDirections(f"child directions at vertex {i} are parallel")
            sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
        else:
            sol = np.linalg.solve(M.T @ M, M.T @ rhs)
        y[top.left_edge(i)], y[top.right_edge(i)] = sol
        resid[i] = float(np.linalg.norm(M @ sol - rhs))
        x[i] = 1.0 - sol[1]
    return DualCertificate(y, x, instance.lengths.copy(), "top_down", resid)


def global_duals(instance: LedTreeInstance) -> DualCertificate:
    """Multipliers from one least-squares solve of the full stationarity system.

    ``y = 1 + A^T x`` satisfies the z-stationarity identities exactly; ``x``
    minimizes the norm of the beta-gradient of the Lagrangian.  Used where
    the top-down recursion is singular.
    """
    _require_regular(instance)
    top = instance.topology
    A = top.constraint_matrix
    G = lengths_jacobian(instance)
    # G^T (1 + A^T x) = 0  ->  (G^T A^T) x = -G^T 1
    M = G.T @ A.T
    rhs = -G.T @ np.ones(top.n_e)
    x = np.linalg.lstsq(M, rhs, rcond=None)[0]
    y = 1.0 + A.T @ x
    return DualCertificate(y, x, instance.lengths.copy(), "global_lsq", {})


def lengths_jacobian(instance: LedTreeInstance) -> np.ndarray:
    """``d lambda_j / d beta`` as an ``(n_e, n_v * n)`` matrix."""
    top = instance.topology
    n = instance.hanging_type.dim
    G = np.zeros((top.n_e, top.n_v * n))
    for j, c in enumerate(top.edge_child):
        p = top.parent[c]
        d = instance.coords[p] - instance.coords[c]
        nrm = np.linalg.norm(d)
        if nrm == 0:
            continue
        g = d / nrm
        G[j, p * n:(p + 1) * n] += g
        if c < top.n_v:
            G[j, c * n:(c + 1) * n] -= g
    return G


@dataclass
class KKTBlock:
    residual: float
    tol: float
    passed: bool

    def as_json(self) -> dict:
        return {"residual": self.residual, "tol": self.tol, "passed": self.passed}


@dataclass
class KKTReport:
    blocks: dict
    min_y: float
    certified: bool
    vertex_stationarity: list
    reason: str = ""

    @property
    def verdict(self) -> str:
        return "CERTIFIED" if self.certified else "NOT_CERTIFIED"

    def as_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "certified": self.certified,
            "min_y": self.min_y,
            "blocks": {k: b.as_json() for k, b in self.blocks.items()},
            "vertex_stationarity": self.vertex_stationarity,
            "reason": self.reason,
        }


def verify_kkt(instance: LedTreeInstance, certificate: DualCertificate,
               tol: float = TOL_STAT, tol_feas: float | None = None) -> KKTReport:
    top = instance.topology
    A = top.constraint_matrix
    y, x, z = certificate.y, certificate.x, certificate.z
    if tol_feas is None:
        tol_feas = feasibility_tolerance(instance)

    grad = (lengths_jacobian(instance).T @ y).reshape(top.n_v, -1)
    per_vertex = np.linalg.norm(grad, axis=1)
    stat_beta = float(per_vertex.max())

    r = top.root
    ident = [abs(y[top.left_edge(r)] + y[top.right_edge(r)] - 2.0)]
    for i in range(top.n_v):
        ident.append(abs(y[top.right_edge(i)] - (1.0 - x[i])))
        if i != r:
            ident.append(abs(y[top.left_edge(i)] + y[top.right_edge(i)] - y[top.up_edge(i)] - 1.0))
    stat_z = float(max(ident))

    phi = float(np.max(np.abs(A @ z))) if top.n_v else 0.0
    f = instance.lengths - z
    f_max = float(f.max())
    comp = abs(float(y @ f))
    min_y = float(y.min())

    blocks = {
        "stationarity_beta": KKTBlock(stat_beta, tol, stat_beta <= tol),
        "stationarity_z": KKTBlock(stat_z, tol, stat_z <= tol),
        "primal_phi": KKTBlock(phi, tol_feas, phi <= tol_feas),
        "primal_f": KKTBlock(f_max, tol_feas, f_max <= tol_feas),
        "complementarity": KKTBlock(comp, tol_feas * max(1.0, float(np.abs(y).max())), True),
        "dual_sign": KKTBlock(-min_y, 0.0, min_y >= 0.0),
    }
    blocks["complementarity"].passed = comp <= blocks["complementarity"].tol
    failed = [k for k, b in blocks.items() if not b.passed]
    positive = min_y > 0.0
    certified = not failed and positive
    reason = ""
    if failed:
        reason = "failed blocks: " + ", ".join(failed)
    elif not positive:
        reason = "a multiplier is zero; optimality does not transfer"
    return KKTReport(blocks, min_y, certified, [float(v) for v in per_vertex], reason)


def certify(instance: LedTreeInstance, tol: float = TOL_STAT) -> tuple[DualCertificate | None, KKTReport]:
    """Recover multipliers (falling back to the global solve) and verify them."""
    try:
        cert = recover_duals(instance)
    except NotRegular as exc:
        report = KKTReport({}, float("nan"), False, [], f"not regular: {exc}")
        return None, report
    except DegenerateDirections:
        cert = global_duals(instance)
    return cert, verify_kkt(instance, cert, tol)


# -- geometric checks ---------------------------------------------------------


def _angle(a, b) -> float:
    c = float(np.clip(a @ b, -1.0, 1.0))
    return math.acos(c)


@dataclass
class VertexGeometry:
    vertex: int
    is_root: bool
    collinearity_defect: float | None = None
    antiparallel: list = field(default_factory=list)
    coplanarity_defect: float | None = None
    child_angle: float | None = None
    root_child: bool = False
    cone_interior: bool | None = None
    properly_forked: bool | None = None
    angle_to_up: float | None = None
    angle_to_child: float | None = None

    def as_json(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class GeometricReport:
    vertices: list
    properly_forked: bool
    tol: float

    @property
    def root_collinearity_defect(self) -> float:
        return next(v.collinearity_defect for v in self.vertices if v.is_root)

    @property
    def max_coplanarity_defect(self) -> float:
        vals = [v.coplanarity_defect for v in self.vertices if v.coplanarity_defect is not None]
        return max(vals, default=0.0)

    @property
    def root_child_angles(self) -> list:
        return [v.child_angle for v in self.vertices if v.root_child]

    @property
    def not_properly_forked(self) -> bool:
        return not self.properly_forked

    def passes(self, tol_collinear=TOL_STAT, tol_coplanar=TOL_COPLANAR, tol_angle=TOL_ANGLE) -> bool:
        ok = self.root_collinearity_defect < tol_collinear
        ok &= self.max_coplanarity_defect < tol_coplanar
        ok &= all(a >= 2 * math.pi / 3 - tol_angle for a in self.root_child_angles)
        if self.properly_forked:
            ok &= all(v.cone_interior for v in self.vertices if not v.is_root)
            ok &= all(not v.antiparallel for v in self.vertices)
        return bool(ok)

    def as_json(self) -> dict:
        return {
            "properly_forked": self.properly_forked,
            "root_collinearity_defect": self.root_collinearity_defect,
            "max_coplanarity_defect": self.max_coplanarity_defect,
            "root_child_angles": self.root_child_angles,
            "vertices": [v.as_json() for v in self.vertices],
        }


def geometric_checks(instance: LedTreeInstance, tol: float = 1e-9) -> GeometricReport:
    """Necessary conditions for a stationary point, evaluated vertex by vertex."""
    top = instance.topology
    records = []
    forked = True
    for i in range(top.n_v):
        ul, ur = instance.u_left(i), instance.u_right(i)
        rec = VertexGeometry(i, i == top.root)
        if ul is None or ur is None:
            rec.properly_forked = False
            forked = False
            records.append(rec)
            continue
        rec.child_angle = _angle(ul, ur)
        if i == top.root:
            rec.collinearity_defect = float(np.linalg.norm(ul + ur))
            records.append(rec)
            continue
        uu = instance.u_up(i)
        if uu is None:
            rec.properly_forked = False
            forked = False
            records.append(rec)
            continue
        rec.root_child = top.parent[i] == top.root
        for name, a, b in (("L,-U", ul, uu), ("R,-U", ur, uu), ("L,-R", ul, ur)):
            if np.linalg.norm(a + b) < tol:
                rec.antiparallel.append(name)
        M = np.column_stack([ul, ur, uu])
        sv = np.linalg.svd(M, compute_uv=False)
        rec.coplanarity_defect = float(sv[2]) if sv.size >= 3 else 0.0
        distinct = min(np.linalg.norm(ul - ur), np.linalg.norm(ul - uu), np.linalg.norm(ur - uu)) > tol
        rec.properly_forked = bool(distinct)
        forked &= rec.properly_forked
        w = ul + ur
        if np.linalg.norm(w) > tol:
            rec.angle_to_up = _angle(w / np.linalg.norm(w), -uu)
            rec.angle_to_child = _angle(w / np.linalg.norm(w), ur)
        if rec.properly_forked:
            coef, *_ = np.linalg.lstsq(np.column_stack([ul, ur]), -uu, rcond=None)
            in_span = np.linalg.norm(np.column_stack([ul, ur]) @ coef + uu) < max(tol, TOL_COPLANAR)
            rec.cone_interior = bool(in_span and coef[0] > 0 and coef[1] > 0)
        records.append(rec)
    return GeometricReport(records, bool(forked), tol)
