import numpy as np
import pytest

from picardmc.allocation import Allocation, budget_total
from picardmc.combinatorics import coeff_A
from picardmc.config import loads_config
from picardmc.fields import TestField
from picardmc.heat import SpaceTimeGrid
from picardmc.iteration import (
    InitialData,
    IterationError,
    evaluate_term_mc,
    first_term_quadrature,
    iterate_nested,
    iterate_solution,
    nested_budget,
    picard_quadrature,
    solve_nested,
    solve_terms,
    triple_norm_estimate,
    zero_data,
)
from picardmc.streams import RandomStream
from picardmc.terms import (
    DU0,
    U0,
    W,
    ExpansionTooLarge,
    Prod,
    expand_terms,
    operator_term_count,
    scalar_summand_count,
    scalar_terms,
    term_signature,
    twin,
)


def bump_source(d, mode="exact"):
    a = [TestField.gaussian_bump(d, 0.8, 1.0, [0.2 * (i + 1)] + [0.0] * (d - 1)) for i in range(d)]
    return InitialData(d, a, mode=mode)


# --- term bookkeeping -------------------------------------------------------


def test_operator_term_counts():
    assert [operator_term_count(n) for n in range(5)] == [1, 2, 5, 26, 677]
    for n in range(5):
        plan = expand_terms(n, 2)
        assert len(plan.terms) == operator_term_count(n)
        assert plan.counts == {k: coeff_A(k, n) for k in range(1, 2**n + 1) if coeff_A(k, n)}


def test_scalar_counts():
    assert scalar_summand_count(2, 3) == 901
    assert scalar_summand_count(2, 3, "convective") == 49
    assert len(scalar_terms(2, 3)) == 901
    assert len(scalar_terms(2, 3, convention="convective")) == 49


def test_n2_listing():
    names = [str(t) for t in expand_terms(2, 3).terms]
    assert names == [
        "u0",
        "w(.)(u0 . du0)",
        "w(.)(u0 . dw(.)(u0 . du0))",
        "w(.)(w(.)(u0 . du0) . du0)",
        "w(.)(w(.)(u0 . du0) . dw(.)(u0 . du0))",
    ]
    assert [term_signature(t) for t in expand_terms(2, 3).terms] == [(0, 0, 1), (1, 0, 2), (1, 1, 3), (2, 0, 3), (2, 1, 4)]


def test_twin_and_degree():
    t = W(Prod(U0(), DU0()))
    assert t.degree == 2 and twin(U0()) == DU0() and str(twin(t)).startswith("dw")


def test_expansion_guard():
    with pytest.raises(ExpansionTooLarge) as info:
        expand_terms(5, 3, cap=1000)
    assert "677" in str(info.value) or "terms" in str(info.value)


def test_groups_stabilize():
    a = expand_terms(3, 1).counts
    b = expand_terms(4, 1).counts
    for k in range(1, 4):
        assert a[k] == b[k]


# --- evaluation ---------------------------------------------------------------


def test_zero_field_gives_zero():
    grid = SpaceTimeGrid(np.zeros((2, 2)), np.array([0.5, 1.0]))
    sol = solve_terms(zero_data(2), grid, 2, Allocation.constant(2, 50), RandomStream(0))
    assert np.all(sol.values.value == 0) and np.all(sol.grad_values.value == 0)


def test_degree_homogeneity():
    src = bump_source(2)
    x, t = np.array([[0.1, 0.0]]), np.array([0.7])
    lam = 1.7
    for term in expand_terms(2, 2).terms:
        a = evaluate_term_mc(term, src, x, t, 500, RandomStream(3))
        b = evaluate_term_mc(term, src.scaled(lam), x, t, 500, RandomStream(3))
        np.testing.assert_allclose(b.value.value, lam**term.degree * a.value.value, rtol=1e-12, atol=1e-300)
        np.testing.assert_allclose(b.grad.value, lam**term.degree * a.grad.value, rtol=1e-12, atol=1e-300)


@pytest.mark.parametrize("d", [1, 2])
def test_first_term_matches_quadrature(d):
    src = bump_source(d)
    term = expand_terms(1, d).terms[1]
    x = np.full(d, 0.1)
    ref_v, ref_g = first_term_quadrature(src, x, 0.8)
    est = evaluate_term_mc(term, src, x[None], np.array([0.8]), 100000, RandomStream(8))
    assert np.all(np.abs(est.value.value[0] - ref_v) <= 4 * est.value.stderr[0] + 1e-6)
    assert np.all(np.abs(est.grad.value[0] - ref_g) <= 4 * est.grad.stderr[0] + 1e-6)


def test_u2_matches_recursive_quadrature():
    src = InitialData(1, [TestField.gaussian_bump(1, 1.0, 0.8, [0.3])], [TestField.gaussian_bump(1, 0.5, 1.0, [-0.2])])
    grid = SpaceTimeGrid(np.array([[0.0], [0.5]]), np.array([0.6, 0.9]))
    sol = solve_terms(src, grid, 2, Allocation.constant(2, 40000), RandomStream(12))
    ref_v, ref_g = picard_quadrature(src, 2, grid.x, grid.t, 20, 14)
    assert np.all(np.abs(sol.values.value - ref_v) <= 4 * sol.values.stderr)
    assert np.all(np.abs(sol.grad_values.value - ref_g) <= 4 * sol.grad_values.stderr)


def test_mc_leaves_reduce_to_exact():
    src = bump_source(1, "mc")
    exact = bump_source(1)
    grid = SpaceTimeGrid(np.array([[0.2]]), np.array([0.5]))
    sol = solve_terms(src, grid, 0, Allocation.constant(0, 20000), RandomStream(2))
    assert abs(sol.values.value[0, 0] - exact.exact_value(grid.x, grid.t)[0, 0]) <= 4 * sol.values.stderr[0, 0]


def test_budget_and_counts():
    assert budget_total(Allocation(1, {1: 3, 2: 4}), 1, 3) == 54
    grid = SpaceTimeGrid(np.zeros((1, 1)), np.array([0.5]))
    sol = solve_terms(bump_source(1), grid, 1, Allocation(1, {1: 3, 2: 4}), RandomStream(0))
    assert sol.budget_used == budget_total(Allocation(1, {1: 3, 2: 4}), 1, 1)
    assert sol.term_counts == {1: 1, 2: 1}
    assert sol.variance_bound is not None and sol.variance_bound > 0


def test_per_point_streams_change_samples_not_target():
    src = bump_source(1)
    grid = SpaceTimeGrid(np.array([[0.0], [0.4]]), np.array([0.5, 0.5]))
    a = solve_terms(src, grid, 1, Allocation.constant(1, 20000), RandomStream(5))
    b = solve_terms(src, grid, 1, Allocation.constant(1, 20000), RandomStream(5), per_point_streams=True)
    assert not np.array_equal(a.values.value, b.values.value)
    sd = np.sqrt(a.values.stderr**2 + b.values.stderr**2)
    assert np.all(np.abs(a.values.value - b.values.value) <= 5 * sd + 1e-12)


def test_workers_bit_identical():
    src = bump_source(2)
    grid = SpaceTimeGrid(np.zeros((1, 2)), np.array([0.5]))
    a = solve_terms(src, grid, 1, Allocation.constant(1, 10000), RandomStream(5), chunk_size=1000)
    b = solve_terms(src, grid, 1, Allocation.constant(1, 10000), RandomStream(5), chunk_size=1000, workers=3)
    assert np.array_equal(a.values.value, b.values.value)


# --- norms ------------------------------------------------------------------------


def test_triple_norm_examples():
    grid = SpaceTimeGrid(np.array([[0.0, 0.0], [3.0, 4.0]]), np.array([1.0, 1.0]))
    vals = np.array([[1.0, 0.0], [0.1, 0.0]])
    grads = np.zeros((2, 2, 2))
    assert triple_norm_estimate(grid, vals, grads) == pytest.approx(1.0)
    grads[1, 0, 1] = 0.5
    assert triple_norm_estimate(grid, vals, grads) == pytest.approx(2.5)


def test_triple_norm_refinement_converges():
    f = TestField.gaussian_bump(1, 1.0, 1.0, [0.0])
    src = InitialData(1, [f])

    def norm(n):
        grid = SpaceTimeGrid.box([-6.0], [6.0], n, [0.5])
        return triple_norm_estimate(grid, src.exact_value(grid.x, grid.t), src.exact_grad(grid.x, grid.t))

    coarse, fine = norm(61), norm(241)
    assert abs(coarse - fine) <= 0.05 * fine


# --- nested baseline ----------------------------------------------------------------


def test_nested_budget():
    assert nested_budget([10, 10, 10]) == 70
    assert nested_budget([5]) == 10
    with pytest.raises(IterationError):
        nested_budget([])


def test_nested_level0_is_heat_mc():
    src = bump_source(1)
    grid = SpaceTimeGrid(np.array([[0.1]]), np.array([0.5]))
    sol = solve_nested(src, grid, [20000], RandomStream(1))
    exact = src.exact_value(grid.x, grid.t)
    assert abs(sol.values.value[0, 0] - exact[0, 0]) <= 4 * sol.values.stderr[0, 0]
    assert sol.method == "nested" and sol.budget_used == 40000


def test_nested_level1_agrees_with_terms():
    src = bump_source(1)
    grid = SpaceTimeGrid(np.array([[0.1]]), np.array([0.6]))
    ref_v, _ = picard_quadrature(src, 1, grid.x, grid.t, 20, 14)
    sol = solve_nested(src, grid, [200, 4000], RandomStream(2))
    # the reported error ignores lower-level noise; allow a generous margin
    assert abs(sol.values.value[0, 0] - ref_v[0, 0]) <= 0.05


# --- config entry points ------------------------------------------------------------

CFG = """
d: 1
n: 1
seed: 3
budget: 20000
grid: {points: [[0.0], [0.3]], times: [0.5]}
a:
  - {kind: gaussian_bump, params: [1.0, 1.0, 0.0]}
"""


def test_iterate_solution_from_config():
    cfg = loads_config(CFG)
    sol = iterate_solution(cfg)
    assert sol.values.value.shape == (2, 1)
    assert sol.budget_used <= 20000
    again = iterate_solution(cfg)
    assert np.array_equal(sol.values.value, again.values.value)


def test_full_mode_is_rejected_by_terms():
    cfg = loads_config(CFG).replace(mode="full")
    with pytest.raises(IterationError):
        iterate_solution(cfg)
    with pytest.raises(IterationError):
        iterate_nested(loads_config(CFG))
