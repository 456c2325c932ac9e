import math

import numpy as np
import pytest

from ledtree.errors import InfeasibleError, StretchInfeasible
from ledtree.feasible import sheet_placement
from ledtree.solver import (
    SolveOptions,
    Status,
    minimize,
    relaxation_residuals,
    solution_to_dict,
    solve_relaxation,
    stretched_tree,
)
from ledtree.tree import evaluate
from ledtree.treeio import dump_json
from conftest import random_hanging_type, three_leaf

S3 = math.sqrt(3.0)


def one_variable_oracle(f, lo, hi, n=10_001):
    s = np.linspace(lo, hi, n)
    k = int(np.argmin(f(s)))
    for _ in range(60):
        lo, hi = s[max(k - 1, 0)], s[min(k + 1, n - 1)]
        s = np.linspace(lo, hi, 11)
        k = int(np.argmin(f(s)))
        n = 11
    return float(s[k]), float(f(s[k]))


def test_isosceles_against_calculus_oracle(isosceles):
    # X = (0, s) on the bisector, root on segment XC: 2 sqrt(1 + s^2) + (2 - s)
    s_star, lam_star = one_variable_oracle(lambda s: 2 * np.sqrt(1 + s * s) + (2 - s), -3, 2)
    sol = minimize(isosceles)
    assert sol.status is Status.CERTIFIED
    assert sol.total_length == pytest.approx(lam_star, abs=1e-9)
    assert sol.total_length == pytest.approx(2 + S3, abs=1e-12)
    np.testing.assert_allclose(sol.placement[0], [0.0, s_star], atol=1e-6)
    assert sol.kkt.min_y >= 1 - 1e-6


def test_square_against_symmetry_oracle(square):
    u_star, lam_star = one_variable_oracle(lambda u: 4 * np.sqrt((1 - u) ** 2 + 1) + 2 * u, 0, 1)
    sol = minimize(square)
    assert sol.status is Status.CERTIFIED
    assert sol.total_length == pytest.approx(lam_star, abs=1e-9)
    assert u_star == pytest.approx(1 - 1 / S3, abs=1e-7)
    np.testing.assert_allclose(sol.placement, [[-u_star, 0], [u_star, 0], [0, 0]], atol=1e-6)


@pytest.mark.parametrize("method", ["relaxation_interior", "penalty_descent"])
def test_methods_agree(isosceles, square, method):
    for ht, lam in ((isosceles, 2 + S3), (square, 2 + 2 * S3)):
        sol = minimize(ht, options=SolveOptions(method=method))
        assert sol.status is Status.CERTIFIED
        assert sol.total_length == pytest.approx(lam, abs=1e-9)


def test_collinear_is_infeasible(collinear):
    with pytest.raises(StretchInfeasible):
        stretched_tree(collinear)
    with pytest.raises(InfeasibleError):
        minimize(collinear)


def test_two_leaf(two_leaf):
    sol = minimize(two_leaf)
    assert sol.status is Status.CERTIFIED
    np.testing.assert_allclose(sol.placement, [[0.0, 0.0]], atol=1e-9)


def test_relaxation_of_isosceles_is_tight(isosceles):
    beta, z = solve_relaxation(isosceles)
    res = relaxation_residuals(isosceles, beta, z)
    assert res["objective"] == pytest.approx(2 + S3, abs=1e-7)
    # barrier smoothing leaves residuals at the 1e-9 scale
    assert np.max(np.abs(res["phi"])) < 1e-8
    assert np.max(res["f"]) <= 1e-8
    assert np.min(res["f"]) > -1e-7  # every inequality active


def test_slack_relaxation_point_is_valid_but_worse(square):
    sol = minimize(square)
    z = sol.instance.lengths.copy()
    A = square.topology.constraint_matrix
    # lengthening every leaf edge by the same amount keeps A z = 0
    z_new = z.copy()
    for v in (3, 4):
        z_new[square.topology.edge_of[v]] += 0.3
    for v in (5, 6):
        z_new[square.topology.edge_of[v]] += 0.3
    res = relaxation_residuals(square, sol.placement, z_new)
    assert np.max(np.abs(res["phi"])) < 1e-12
    assert np.all(res["f"] <= 0) and np.min(res["f"]) < 0
    assert res["objective"] > sol.total_length


def test_fixed_beta_optimal_z_is_lengths(square):
    inst = evaluate(square, stretched_tree(square))
    res = relaxation_residuals(square, inst.placement, inst.lengths)
    assert np.max(np.abs(res["phi"])) < 1e-12
    assert res["objective"] == pytest.approx(inst.total_length)


def test_restarts_agree(rng):
    found = 0
    while found < 5:
        ht = random_hanging_type(rng, (4, 6))
        try:
            screen = minimize(ht, options=SolveOptions(repair=False))
        except InfeasibleError:
            continue
        if screen.status is not Status.CERTIFIED:
            continue
        sol = minimize(ht, options=SolveOptions(restarts=4, seed=found))
        diam = sol.instance.diameter()
        for r in sol.restarts:
            assert np.max(np.abs(np.array(r["placement"]) - sol.placement)) <= 1e-6 * diam
        found += 1


def test_uncertified_results_are_led_trees(rng):
    """Whatever the status, the returned placement satisfies the equal-depth constraints
    and never undercuts the relaxation lower bound."""
    seen = 0
    while seen < 6:
        ht = random_hanging_type(rng, (3, 4))
        try:
            sol = minimize(ht)
        except InfeasibleError:
            continue
        if sol.status is Status.CERTIFIED:
            continue
        inst = sol.instance
        assert np.max(np.abs(inst.residuals)) <= 1e-9 * (1 + inst.total_length)
        assert sol.total_length >= sol.trace["relaxation_objective"] - 1e-7
        seen += 1


def test_solution_document_is_json(isosceles):
    doc = solution_to_dict(minimize(isosceles))
    text = dump_json(doc)
    assert '"status": "CertifiedOptimal"' in text
    assert doc["kkt"]["verdict"] == "CERTIFIED"
    assert doc["geometry"]["root_collinearity_defect"] < 1e-8


def test_deterministic_given_seed(square):
    a = minimize(square, options=SolveOptions(restarts=3, seed=7))
    b = minimize(square, options=SolveOptions(restarts=3, seed=7))
    assert np.array_equal(a.placement, b.placement)


@pytest.mark.parametrize("bad", [dict(tol_feas=0), dict(restarts=0), dict(method="newton")])
def test_option_validation(bad):
    with pytest.raises(ValueError):
        SolveOptions(**bad)


def test_three_dimensional_instance():
    ht = three_leaf([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.5]])
    sol = minimize(ht)
    assert sol.status is Status.CERTIFIED
    # the optimum lies in the plane of the leaves
    n = np.cross(ht.leaf_coords[1] - ht.leaf_coords[0], ht.leaf_coords[2] - ht.leaf_coords[0])
    assert np.max(np.abs((sol.placement - ht.leaf_coords[0]) @ n)) < 1e-8


def test_init_is_honoured(isosceles):
    init = sheet_placement(isosceles, offsets=[0.5, 0.2], rng=np.random.default_rng(3))
    sol = minimize(isosceles, init=init)
    assert sol.total_length == pytest.approx(2 + S3, abs=1e-9)
