"""Minimization of total tree length over LED placements of a hanging type.

The default method solves the convex relaxation

    min sum(z)  s.t.  A z = 0,  lambda_j(beta) <= z_j

with a log-barrier Newton scheme (equality constraints handled exactly in
the Newton system), then polishes the result with Newton's method on the
KKT system of the original equal-depth problem.  ``penalty_descent`` is a
quadratic-penalty alternative built on L-BFGS.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize

from .certificate import KKTReport, certify, geometric_checks
from .errors import InfeasibleError, NonConvergence, StretchInfeasible
from .feasible import root_on_segment, sheet_placement
from .tree import HangingType, LedTreeInstance, evaluate

log = logging.getLogger(__name__)

METHODS = ("relaxation_interior", "penalty_descent")


class Status(str, Enum):
    CERTIFIED = "CertifiedOptimal"
    UNCERTIFIED = "StationaryUncertified"
    NO_STATIONARY = "NoStationaryPoint"
    INFEASIBLE = "Infeasible"
    GRID_BEST = "GridBest"


@dataclass
class SolveOptions:
    tol_feas: float = 1e-9
    tol_stat: float = 1e-6
    max_iter: int = 400
    restarts: int = 1
    seed: int = 0
    method: str = "relaxation_interior"
    perturbation: float = 0.1
    repair: bool = True

    def __post_init__(self):
        if self.tol_feas <= 0 or self.tol_stat <= 0:
            raise ValueError("tolerances must be positive")
        if self.restarts < 1:
            raise ValueError("restart count must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {METHODS}")


@dataclass
class Solution:
    hanging_type: HangingType
    placement: np.ndarray
    z: np.ndarray
    total_length: float
    status: Status
    kkt: KKTReport | None = None
    trace: dict = field(default_factory=dict)
    restarts: list = field(default_factory=list)

    @property
    def instance(self) -> LedTreeInstance:
        return evaluate(self.hanging_type, self.placement)

    @property
    def certified(self) -> bool:
        return self.status is Status.CERTIFIED


# -- edge geometry ------------------------------------------------------------


class _Edges:
    """Vectorized lengths, Jacobian and Hessian blocks for one hanging type."""

    def __init__(self, ht: HangingType):
        top = ht.topology
        self.ht = ht
        self.nv, self.n, self.ne = top.n_v, ht.dim, top.n_e
        self.child = np.asarray(top.edge_child)
        self.par = np.asarray(top.parent)[self.child]
        self.inner_child = self.child < self.nv
        self.A = top.constraint_matrix
        self.leaves = ht.leaf_coords

    def coords(self, beta):
        return np.vstack([beta.reshape(self.nv, self.n), self.leaves])

    def diffs(self, beta):
        c = self.coords(beta)
        return c[self.par] - c[self.child]

    def lengths(self, beta, mu=0.0):
        d = self.diffs(beta)
        s = np.sqrt(np.einsum("ij,ij->i", d, d) + mu * mu)
        return s - mu, d, s

    def jacobian(self, d, s):
        n = self.n
        G = np.zeros((self.ne, self.nv * n))
        g = d / s[:, None]
        rows = np.arange(self.ne)
        for k in range(n):
            G[rows, self.par * n + k] += g[:, k]
            ic = self.inner_child
            G[rows[ic], self.child[ic] * n + k] -= g[ic, k]
        return G

    def weighted_hessian(self, d, s, weights):
        """``sum_j weights_j * Hess(lambda_j)`` over beta."""
        n = self.n
        H = np.zeros((self.nv * n, self.nv * n))
        eye = np.eye(n)
        for j in range(self.ne):
            wj = weights[j]
            if wj == 0.0:
                continue
            K = wj * (eye - np.outer(d[j], d[j]) / (s[j] * s[j])) / s[j]
            p = self.par[j] * n
            H[p:p + n, p:p + n] += K
            if self.inner_child[j]:
                c = self.child[j] * n
                H[c:c + n, c:c + n] += K
                H[p:p + n, c:c + n] -= K
                H[c:c + n, p:p + n] -= K
        return H

    def ultrametric_slack(self, lengths, pad):
        """``z > lengths`` with ``A z = 0``: edge spans of a strictly increasing level function."""
        top = self.ht.topology
        level = np.zeros(top.n_t)
        for v in top.postorder:
            if v < self.nv:
                a, b = top.children[v]
                level[v] = max(level[a] + lengths[top.edge_of[a]], level[b] + lengths[top.edge_of[b]]) + pad
        return level[self.par] - level[self.child]


def _scale(ht: HangingType) -> float:
    pts = ht.leaf_coords
    span = float(np.max(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))
    return span if span > 0 else 1.0


# -- barrier method on the relaxation -------------------------------------------


def _barrier(E: _Edges, beta0, scale, max_iter, gap_rel=1e-9, trace=None):
    nb = E.nv * E.n
    ne = E.ne
    mu_min = 1e-9 * scale
    mu = 1e-3 * scale
    lam, _, _ = E.lengths(beta0, mu)
    z = E.ultrametric_slack(lam * 1.05, 0.05 * scale)
    x = np.concatenate([beta0.ravel(), z])
    C = np.zeros((E.nv, nb + ne))
    C[:, nb:] = E.A
    t = ne / max(z.sum(), 1e-300)
    tmax = ne / (gap_rel * scale)
    newton_steps = 0

    def F(xv, tt, mm):
        lam_, _, _ = E.lengths(xv[:nb], mm)
        g = xv[nb:] - lam_
        if np.any(g <= 0):
            return math.inf
        return tt * xv[nb:].sum() - np.log(g).sum()

    while True:
        # restore strict feasibility after a smoothing change
        lam, _, _ = E.lengths(x[:nb], mu)
        g = x[nb:] - lam
        if np.any(g <= 1e-300):
            ult = E.ultrametric_slack(np.zeros(ne), 1.0)
            need = np.max((1e-6 * scale - g) / ult)
            x[nb:] += max(need, 0.0) * ult
        for _ in range(100):
            lam, d, s = E.lengths(x[:nb], mu)
            g = x[nb:] - lam
            G = E.jacobian(d, s)
            ig = 1.0 / g
            ig2 = ig * ig
            grad = np.concatenate([G.T @ ig, t - ig])
            H = np.zeros((nb + ne, nb + ne))
            H[:nb, :nb] = (G.T * ig2) @ G + E.weighted_hessian(d, s, ig)
            H[:nb, nb:] = -(G.T * ig2)
            H[nb:, :nb] = H[:nb, nb:].T
            H[nb:, nb:] = np.diag(ig2)
            H[np.diag_indices(nb + ne)] += 1e-14 * np.trace(H) / (nb + ne)
            K = np.block([[H, C.T], [C, np.zeros((E.nv, E.nv))]])
            rhs = np.concatenate([-grad, np.zeros(E.nv)])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            dx = sol[:nb + ne]
            dec = -float(grad @ dx)
            newton_steps += 1
            if dec / 2 <= 1e-11:
                break
            f0 = F(x, t, mu)
            step = 1.0
            while step > 1e-12:
                f1 = F(x + step * dx, t, mu)
                if f1 <= f0 - 0.25 * step * dec:
                    break
                step *= 0.5
            else:
                break
            x = x + step * dx
            if newton_steps > max_iter * 20:
                raise NonConvergence("barrier centering exceeded the iteration cap")
        if t >= tmax and mu <= mu_min:
            break
        t = min(t * 20.0, tmax)
        mu = max(mu_min, mu * 0.05)
    if trace is not None:
        trace["barrier_newton_steps"] = newton_steps
        trace["barrier_t"] = t
    return x[:nb].reshape(E.nv, E.n), x[nb:]


# -- quadratic penalty ----------------------------------------------------------


def _penalty(E: _Edges, beta0, scale, max_iter, trace=None):
    mu = 1e-8 * scale
    beta = beta0.ravel().copy()
    rho = 1.0 / scale
    outer = 0
    while rho <= 1e9 / scale:
        def fun(b, rho=rho):
            lam, d, s = E.lengths(b, mu)
            r = E.A @ lam
            G = E.jacobian(d, s)
            val = lam.sum() + 0.5 * rho * float(r @ r)
            grad = G.T @ (1.0 + rho * (E.A.T @ r))
            return val, grad

        res = optimize.minimize(fun, beta, jac=True, method="L-BFGS-B",
                                options={"maxiter": max_iter * 5, "gtol": 1e-12 * scale, "ftol": 1e-15})
        beta = res.x
        rho *= 10.0
        outer += 1
    if trace is not None:
        trace["penalty_rounds"] = outer
    beta = beta.reshape(E.nv, E.n)
    lam, _, _ = E.lengths(beta)
    return beta, lam


# -- KKT polish on the original problem ----------------------------------------


def _polish(E: _Edges, beta0, scale, iters=40):
    """Newton on ``grad L = G^T (1 + A^T x) = 0, A lambda = 0``; ``None`` on failure."""
    beta = beta0.ravel().copy()
    nb = beta.size
    lam, d, s = E.lengths(beta)
    if np.any(s < 1e-9 * scale):
        return None, None
    G = E.jacobian(d, s)
    J = E.A @ G
    x = np.linalg.lstsq(J.T, -G.T @ np.ones(E.ne), rcond=None)[0]

    def resid(b, xv):
        lam_, d_, s_ = E.lengths(b)
        G_ = E.jacobian(d_, s_)
        y = 1.0 + E.A.T @ xv
        return np.concatenate([G_.T @ y, (E.A @ lam_) / scale]), (lam_, d_, s_, G_, y)

    r, cache = resid(beta, x)
    for _ in range(iters):
        nr = np.linalg.norm(r)
        if nr < 1e-14:
            break
        lam, d, s, G, y = cache
        if np.any(s < 1e-9 * scale):
            return None, None
        W = E.weighted_hessian(d, s, y)
        J = E.A @ G
        K = np.block([[W, J.T], [J / scale, np.zeros((E.nv, E.nv))]])
        try:
            step = np.linalg.solve(K, -r)
        except np.linalg.LinAlgError:
            return None, None
        a = 1.0
        while a > 1e-6:
            b_new = beta + a * step[:nb]
            x_new = x + a * step[nb:]
            r_new, c_new = resid(b_new, x_new)
            if np.linalg.norm(r_new) < (1 - 1e-4 * a) * nr:
                break
            a *= 0.5
        else:
            break
        beta, x, r, cache = b_new, x_new, r_new, c_new
    if np.linalg.norm(r) > 1e-10:
        return None, None
    return beta.reshape(E.nv, E.n), x


def _sheet_tree(ht: HangingType, S: np.ndarray):
    """Bottom-up LED placement with vertex ``v`` at offset ``S[v]`` (its component
    across the focal axis) on the sheet of its children; ``None`` if some pair is
    infeasible."""
    top = ht.topology
    pos = np.vstack([np.zeros((top.n_v, ht.dim)), ht.leaf_coords])
    h = np.zeros(top.n_t)
    for v in top.postorder:
        if top.is_leaf(v):
            continue
        a, b = top.children[v]
        diff = pos[a] - pos[b]
        d = float(np.linalg.norm(diff))
        half = 0.5 * (h[a] - h[b])
        if d == 0.0:
            if abs(half) > 1e-12 * (1.0 + h[a]):
                return None
            pos[v], h[v] = pos[a], h[a]
            continue
        b2 = 0.25 * d * d - half * half
        if b2 < 0.0:
            return None
        w = diff / d
        off = S[v] - (S[v] @ w) * w
        if b2 == 0.0:
            off = 0.0 * off
            stretch = 1.0
        else:
            stretch = math.sqrt(1.0 + float(off @ off) / b2)
        p = 0.5 * (pos[a] + pos[b]) + half * stretch * w + off
        pos[v] = p
        h[v] = max(np.linalg.norm(p - pos[a]) + h[a], np.linalg.norm(p - pos[b]) + h[b])
    return pos[: top.n_v]


def _sheet_offsets(ht: HangingType, beta) -> np.ndarray:
    top = ht.topology
    coords = np.vstack([np.asarray(beta, float), ht.leaf_coords])
    return np.array([coords[v] - 0.5 * (coords[top.left(v)] + coords[top.right(v)]) for v in range(top.n_v)])


def _repair(ht: HangingType, beta, fallback, rng, starts: int = 6, max_evals: int = 4000):
    """Shortest LED tree found by derivative-free descent in sheet coordinates.

    Starts from the sheet projection of ``beta``, from ``fallback`` (a known LED
    placement) and from random sheet placements.  Singular minimizers sit on the
    border of the feasible offsets, where Powell stalls, so Nelder-Mead finishes
    on small problems.  Returns ``None`` if no start is feasible."""
    top = ht.topology
    bad = 1e6 * (1.0 + _scale(ht))

    def length(flat):
        placement = _sheet_tree(ht, flat.reshape(top.n_v, ht.dim))
        return bad if placement is None else evaluate(ht, placement).total_length

    candidates = [beta, fallback]
    for _ in range(5 * starts):
        if len(candidates) >= starts + 2:
            break
        try:
            candidates.append(sheet_placement(ht, rng=rng, spread=1.0))
        except StretchInfeasible:
            continue
    best_x, best_f = None, bad
    for cand in candidates:
        x0 = _sheet_offsets(ht, cand).ravel()
        if length(x0) >= bad:
            continue
        res = optimize.minimize(length, x0, method="Powell",
                                options={"maxfev": max_evals, "xtol": 1e-10, "ftol": 1e-14})
        x, f = (res.x, res.fun) if res.fun < length(x0) else (x0, length(x0))
        if x.size <= 16:
            res = optimize.minimize(length, x, method="Nelder-Mead",
                                    options={"maxfev": max_evals, "xatol": 1e-11, "fatol": 1e-15})
            if res.fun < f:
                x, f = res.x, res.fun
        if f < best_f:
            best_x, best_f = x, f
    if best_x is None:
        return None
    return _sheet_tree(ht, best_x.reshape(top.n_v, ht.dim))


def _match_lengths(E: _Edges, beta, z, scale, rng):
    """Placement whose edge lengths equal the relaxation lengths ``z``; ``None`` if
    least squares cannot close the gap.  Such a placement is an LED tree (``A z = 0``)
    whose length equals the relaxation lower bound."""
    mu = 1e-9 * scale

    def fun(b):
        lam, _, _ = E.lengths(b, mu)
        return lam - z

    def jac(b):
        _, d, s = E.lengths(b, mu)
        return E.jacobian(d, s)

    start = np.asarray(beta, float).ravel()
    for k in range(4):
        b0 = start + (1e-3 * scale * k) * rng.standard_normal(start.size) + 1e-9 * scale
        res = optimize.least_squares(fun, b0, jac=jac, method="lm" if E.ne >= start.size else "trf",
                                     xtol=1e-15, ftol=1e-15, gtol=1e-15,
                                     max_nfev=200 * start.size)
        if np.max(np.abs(res.fun)) <= 1e-8 * scale:
            return res.x.reshape(E.nv, E.n)
    return None


def _snap_root(ht: HangingType, beta: np.ndarray) -> np.ndarray:
    inst = evaluate(ht, beta)
    top = ht.topology
    r = top.root
    ul, ur = inst.u_left(r), inst.u_right(r)
    if ul is None or ur is None or np.linalg.norm(ul + ur) >= 1e-6:
        return beta
    a, b = top.children[r]
    try:
        p = root_on_segment(inst.coords[a], inst.coords[b], inst.height[a], inst.height[b])
    except Exception:  # pragma: no cover - children coincide
        return beta
    out = np.array(beta, copy=True)
    out[r] = p
    return out


# -- public operations ----------------------------------------------------------


def stretched_tree(hanging_type: HangingType) -> np.ndarray:
    """Every inner vertex at the equal-depth point of the segment joining its children.

    Raises StretchInfeasible carrying the inner vertex where a merge fails."""
    return sheet_placement(hanging_type)


def _initial_points(ht: HangingType, options: SolveOptions, init=None):
    rng = np.random.default_rng(options.seed)
    base = None
    if init is not None:
        base = np.asarray(init, float).reshape(ht.topology.n_v, ht.dim)
    else:
        try:
            base = stretched_tree(ht)
        except StretchInfeasible:
            for _ in range(50):
                try:
                    base = sheet_placement(ht, rng=rng, spread=1.5)
                    break
                except StretchInfeasible:
                    continue
    if base is None:
        raise InfeasibleError("no LED tree of this hanging type was found")
    inits = [base]
    attempts = 0
    while len(inits) < options.restarts and attempts < 50 * options.restarts:
        attempts += 1
        try:
            inits.append(sheet_placement(ht, rng=rng, spread=options.perturbation))
        except StretchInfeasible:
            scale = _scale(ht)
            inits.append(base + options.perturbation * scale * rng.standard_normal(base.shape))
    return inits


def solve_relaxation(hanging_type: HangingType, init=None, options: SolveOptions | None = None):
    """Barrier solve of the convex relaxation from ``init`` (stretched tree by default)."""
    options = options or SolveOptions()
    if init is None:
        init = _initial_points(hanging_type, options)[0]
    E = _Edges(hanging_type)
    return _barrier(E, np.asarray(init, float).reshape(E.nv, E.n), _scale(hanging_type), options.max_iter)


def relaxation_residuals(hanging_type: HangingType, placement, z) -> dict:
    """Equality residual ``A z`` and inequality values ``lambda_j - z_j`` of a relaxation point."""
    inst = evaluate(hanging_type, placement)
    z = np.asarray(z, float)
    return {
        "phi": hanging_type.topology.constraint_matrix @ z,
        "f": inst.lengths - z,
        "objective": float(z.sum()),
    }


def _classify(ht: HangingType, beta, options: SolveOptions):
    inst = evaluate(ht, beta)
    lam_total = inst.total_length
    if np.max(np.abs(inst.residuals)) > options.tol_feas * (1.0 + lam_total):
        return Status.NO_STATIONARY, None, "equal-depth residual above tolerance"
    if np.min(inst.lengths) < 1e-7 * lam_total:
        return Status.NO_STATIONARY, None, "edge length collapsed to zero"
    for i in range(ht.topology.n_v):
        ul, ur = inst.u_left(i), inst.u_right(i)
        if np.linalg.norm(ul - ur) < 1e-7:
            return Status.NO_STATIONARY, None, f"coincident leaf directions at vertex {i}"
    _, report = certify(inst, options.tol_stat)
    if report.certified:
        return Status.CERTIFIED, report, ""
    if report.blocks and report.blocks["stationarity_beta"].passed and report.blocks["stationarity_z"].passed:
        return Status.UNCERTIFIED, report, report.reason
    return Status.NO_STATIONARY, report, report.reason


_RANK = {Status.CERTIFIED: 0, Status.UNCERTIFIED: 1, Status.NO_STATIONARY: 2}


def _solve_once(ht: HangingType, E: _Edges, init, options: SolveOptions):
    scale = _scale(ht)
    trace = {"method": options.method}
    if options.method == "relaxation_interior":
        beta, z = _barrier(E, init, scale, options.max_iter, trace=trace)
    else:
        beta, z = _penalty(E, init, scale, options.max_iter, trace=trace)
    polished, _ = _polish(E, beta, scale)
    trace["polished"] = polished is not None
    if polished is not None:
        beta = polished
    beta = _snap_root(ht, beta)
    status, report, reason = _classify(ht, beta, options)
    relaxation_value = float(np.sum(z))
    inst = evaluate(ht, beta)
    if options.repair and status is Status.NO_STATIONARY and np.max(np.abs(inst.residuals)) > options.tol_feas * (1.0 + inst.total_length):
        # slack edges: the relaxation point is not an LED tree; look for one with
        # the same edge lengths first, else descend along the sheets
        matched = _match_lengths(E, beta, z, scale, np.random.default_rng(options.seed))
        trace["length_match"] = matched is not None
        if matched is not None:
            polished, _ = _polish(E, matched, scale)
            beta = _snap_root(ht, polished if polished is not None else matched)
            status, report, reason = _classify(ht, beta, options)
        else:
            beta = _repair(ht, beta, init, np.random.default_rng(options.seed))
            if beta is None:
                raise InfeasibleError("relaxation point could not be mapped to an LED tree")
        inst = evaluate(ht, beta)
    if status is not Status.NO_STATIONARY:
        z = inst.lengths.copy()
    trace["reason"] = reason
    trace["led_feasible"] = bool(np.max(np.abs(inst.residuals)) <= options.tol_feas * (1.0 + inst.total_length))
    trace["relaxation_objective"] = relaxation_value
    gap = inst.total_length - relaxation_value
    trace["lower_bound_gap"] = gap
    if status is Status.NO_STATIONARY:
        # the relaxation bounds every LED tree from below, so a closed gap proves optimality
        trace["singular_minimizer"] = bool(gap <= options.tol_stat * (1.0 + inst.total_length))
    return Solution(ht, beta, np.asarray(z), inst.total_length, status, report, trace)


def minimize(hanging_type: HangingType, init=None, options: SolveOptions | None = None) -> Solution:
    """Shortest LED tree of ``hanging_type``; restarts from perturbed stretched trees.

    Raises InfeasibleError when no LED tree of the type can be constructed.
    """
    options = options or SolveOptions()
    E = _Edges(hanging_type)
    inits = _initial_points(hanging_type, options, init)
    runs = []
    for k, beta0 in enumerate(inits):
        sol = _solve_once(hanging_type, E, beta0, options)
        log.debug("restart %d: length %.12g status %s", k, sol.total_length, sol.status.value)
        runs.append(sol)
    best = min(runs, key=lambda s: (_RANK[s.status], s.total_length))
    best.restarts = [
        {"total_length": s.total_length, "status": s.status.value, "placement": s.placement.tolist()}
        for s in runs
    ]
    return best


def solution_to_dict(sol: Solution) -> dict:
    from .treeio import floats, tree_to_dict

    inst = sol.instance
    doc = {
        "status": sol.status.value,
        "total_length": inst.total_length,
        "tree": tree_to_dict(sol.hanging_type, sol.placement),
        "edge_lengths": floats(inst.lengths),
        "z": floats(sol.z),
        "led_residuals": floats(inst.residuals),
        "heights": floats(inst.height[: sol.hanging_type.topology.n_v]),
        "trace": sol.trace,
        "restarts": [{"total_length": r["total_length"], "status": r["status"]} for r in sol.restarts],
    }
    if sol.kkt is not None:
        doc["kkt"] = sol.kkt.as_json()
    if sol.status is Status.CERTIFIED:
        doc["geometry"] = geometric_checks(inst).as_json()
    return doc
