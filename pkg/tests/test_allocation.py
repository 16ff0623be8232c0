import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from picardmc.allocation import (
    Allocation,
    AllocationError,
    ObjectiveParams,
    allocate_exact,
    allocate_paper,
    allocate_uniform,
    allocation_table,
    budget_total,
    continuous_optimum,
    kkt_ratios,
    min_variance_report,
    objective_Z,
    closed_form_proportions,
)


def test_allocation_validation():
    with pytest.raises(AllocationError):
        Allocation(1, {1: 3})
    with pytest.raises(AllocationError):
        Allocation(1, {1: 3, 2: 0})
    with pytest.raises(AllocationError):
        Allocation(0, {1: 1.5})
    a = Allocation(1, {2: 4, 1: 3})
    assert list(a.entries) == [1, 2] and a.scaled(2)[2] == 8


def test_single_group_n0():
    p = ObjectiveParams(0, 3, 1.0, N_budget=600)
    a = allocate_exact(p)
    assert a[1] == 600 // (3 * 2)
    assert budget_total(a, 0, 3) == 600


def test_budget_example():
    assert budget_total(Allocation(1, {1: 3, 2: 4}), 1, 3) == 54
    with pytest.raises(AllocationError):
        budget_total(Allocation(1, {1: 3, 2: 4}), 2, 3)


@pytest.mark.parametrize("n,d,B,N", [(1, 3, 0.5, 10**4), (2, 3, 1.0, 10**5), (2, 1, 2.0, 5 * 10**4), (3, 2, 0.7, 10**6)])
def test_exact_beats_alternatives_and_respects_budget(n, d, B, N):
    p = ObjectiveParams(n, d, B, N_budget=N)
    ex = allocate_exact(p)
    assert budget_total(ex, n, d) <= N
    assert N - budget_total(ex, n, d) < min(p.cost(k) for k in p.groups)
    for other in (allocate_uniform(p), allocate_paper(p)):
        assert budget_total(other, n, d) <= N
        assert objective_Z(ex, p) <= objective_Z(other, p) * (1 + 1e-12)


def test_exact_is_integer_optimal_two_groups():
    p = ObjectiveParams(1, 2, 1.3, N_budget=3000)
    a1, a2 = p.cost(1), p.cost(2)
    best = math.inf
    for n1 in range(1, 3000 // a1 + 1):
        n2 = (3000 - a1 * n1) // a2
        if n2 >= 1:
            best = min(best, objective_Z(Allocation(1, {1: n1, 2: n2}), p))
    assert objective_Z(allocate_exact(p), p) == pytest.approx(best, rel=1e-12)


def test_random_search_never_wins():
    p = ObjectiveParams(2, 3, 0.9, N_budget=20000)
    z = objective_Z(allocate_exact(p), p)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        w = rng.dirichlet(np.ones(4))
        nk = {k: max(1, int(w[k - 1] * 20000 / p.cost(k))) for k in p.groups}
        alloc = Allocation(2, nk)
        if budget_total(alloc, 2, 3) <= 20000:
            assert objective_Z(alloc, p) >= z * (1 - 1e-12)


def test_kkt_and_scaling():
    p = ObjectiveParams(2, 3, 1.0, N_budget=10**7)
    r = kkt_ratios(p)
    assert np.ptp(r) / r.mean() < 1e-10
    z1 = min_variance_report(p).z_continuous
    z2 = min_variance_report(ObjectiveParams(2, 3, 1.0, N_budget=10**8)).z_continuous
    assert z1 / z2 == pytest.approx(10.0, rel=1e-9)


def test_continuous_closed_form():
    p = ObjectiveParams(2, 3, 0.8, N_budget=10**8)
    cont = continuous_optimum(p)
    z = sum(p.weight(k) / cont[k] for k in p.groups)
    s = sum(math.sqrt(p.weight(k) * p.cost(k)) for k in p.groups)
    assert z == pytest.approx(s**2 / p.N_budget, rel=1e-12)
    assert sum(p.cost(k) * cont[k] for k in p.groups) == pytest.approx(p.N_budget)


def test_water_filling_pins_small_groups():
    p = ObjectiveParams(3, 3, 0.01, N_budget=2000)
    cont = continuous_optimum(p)
    assert min(cont.values()) == 1.0
    assert sum(p.cost(k) * cont[k] for k in p.groups) == pytest.approx(2000)


def test_infeasible_budget():
    with pytest.raises(AllocationError):
        allocate_exact(ObjectiveParams(2, 3, 1.0, N_budget=10))


def test_closed_form_verbatim_overspends():
    p = ObjectiveParams(2, 3, 1.0, N_budget=10**6)
    raw = closed_form_proportions(p)
    assert raw[1] / raw[2] == pytest.approx(2 / math.pi)
    verbatim = allocate_paper(p, rescale=False)
    assert budget_total(verbatim, 2, 3) > 10**6


def test_table_rows():
    p = ObjectiveParams(1, 2, 1.0, N_budget=1000)
    a = allocate_exact(p)
    rows = allocation_table(a, p)
    assert [r["k"] for r in rows] == [1, 2]
    assert sum(r["spend"] for r in rows) == budget_total(a, 1, 2)
    assert sum(r["z"] for r in rows) == pytest.approx(objective_Z(a, p))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 3), st.integers(1, 4), st.floats(0.05, 3.0), st.integers(1000, 10**6))
def test_exact_properties(n, d, B, N):
    p = ObjectiveParams(n, d, B, N_budget=N)
    if N < p.min_budget:
        return
    a = allocate_exact(p)
    assert all(v >= 1 for v in a.entries.values())
    assert budget_total(a, n, d) <= N
    assert objective_Z(a, p) <= objective_Z(allocate_uniform(p), p) * (1 + 1e-12)
