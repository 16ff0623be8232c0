"""Distribution of a variate budget across degree groups.

Group ``k`` (terms of u_0-degree ``k``, ``k = 1..2^n``) holds ``A(k, n)``
terms, each estimated with ``N(k)`` samples costing ``d (k + 1)`` standard
variates apiece.  The variance proxy is

    Z = sum_k W(k)^2 A(k, n) B^(2k) / N(k)

and the spend is ``Y = sum_k A(k, n) N(k) d (k + 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from .combinatorics import coeff_A
from .sampling import unit_ball_volume


class AllocationError(ValueError):
    pass


@dataclass(frozen=True)
class Allocation:
    """Per-group sample counts ``N(k)`` for ``k = 1..2^n``."""

    n: int
    entries: Dict[int, int]

    def __post_init__(self):
        want = set(range(1, 2**self.n + 1))
        if set(self.entries) != want:
            raise AllocationError(f"allocation must cover k = 1..{2**self.n}, got {sorted(self.entries)}")
        bad = {k: v for k, v in self.entries.items() if int(v) != v or v < 1}
        if bad:
            raise AllocationError(f"every N(k) must be a positive integer; offending entries {bad}")
        object.__setattr__(self, "entries", {k: int(self.entries[k]) for k in sorted(self.entries)})

    @classmethod
    def constant(cls, n: int, value: int) -> "Allocation":
        return cls(n, {k: value for k in range(1, 2**n + 1)})

    def __getitem__(self, k: int) -> int:
        return self.entries[k]

    def scaled(self, factor: int) -> "Allocation":
        return Allocation(self.n, {k: v * factor for k, v in self.entries.items()})


@dataclass(frozen=True)
class ObjectiveParams:
    n: int
    d: int
    B: float
    t: float = 1.0
    N_budget: int = 10**6
    with_t: bool = False

    def __post_init__(self):
        if self.n < 0 or self.d < 1:
            raise AllocationError("need n >= 0 and d >= 1")
        if self.B < 0:
            raise AllocationError("B must be non-negative")
        if not self.t > 0:
            raise AllocationError("t must be positive")

    @property
    def groups(self) -> List[int]:
        return list(range(1, 2**self.n + 1))

    def cost(self, k: int) -> int:
        """``a_k``: variates spent per sample of group ``k``."""
        return coeff_A(k, self.n) * self.d * (k + 1)

    def weight(self, k: int) -> float:
        """``c_k``: numerator of the group-``k`` objective term."""
        c = unit_ball_volume(k) ** 2 * coeff_A(k, self.n) * self.B ** (2 * k)
        if self.with_t:
            c *= max(self.t**k, self.t ** (2 * k))
        return c

    @property
    def min_budget(self) -> int:
        return sum(self.cost(k) for k in self.groups)


def budget_total(alloc: Allocation, n: int, d: int) -> int:
    """Exact spend ``sum_k A(k, n) N(k) d (k + 1)``."""
    if alloc.n != n:
        raise AllocationError(f"allocation is for n={alloc.n}, not n={n}")
    return sum(coeff_A(k, n) * alloc[k] * d * (k + 1) for k in range(1, 2**n + 1))


def constraint_Y(alloc: Allocation, p: ObjectiveParams) -> int:
    return budget_total(alloc, p.n, p.d)


def objective_Z(alloc: Allocation, p: ObjectiveParams) -> float:
    return math.fsum(p.weight(k) / alloc[k] for k in p.groups)


def variance_aggregate(alloc: Allocation, t: float, B: float, n: int, d: int) -> float:
    """Upper bound ``sum_k max(t^k, t^2k) W(k)^2 A(k, n) B^2k / N(k)``."""
    p = ObjectiveParams(n, d, B, t, with_t=True)
    return objective_Z(alloc, p)


def _check_feasible(p: ObjectiveParams):
    if p.N_budget < p.min_budget:
        raise AllocationError(f"budget {p.N_budget} is below the minimal feasible spend {p.min_budget} (all N(k) = 1)")


def continuous_optimum(p: ObjectiveParams) -> Dict[int, float]:
    """Real-valued minimizer of Z subject to Y = N_budget and N(k) >= 1.

    Unclamped groups satisfy ``N(k) = lam sqrt(c_k / a_k)``; groups whose
    share would fall below one are pinned at one and the rest re-solved.
    """
    _check_feasible(p)
    c = {k: p.weight(k) for k in p.groups}
    a = {k: p.cost(k) for k in p.groups}
    pinned: Dict[int, float] = {}
    while True:
        free = [k for k in p.groups if k not in pinned]
        rest = p.N_budget - sum(a[k] for k in pinned)
        denom = math.fsum(math.sqrt(c[k] * a[k]) for k in free)
        if not free:
            return pinned
        if denom == 0.0:
            # zero weights: every split is optimal; spread evenly in spend
            share = rest / len(free)
            return {**pinned, **{k: max(1.0, share / a[k]) for k in free}}
        lam = rest / denom
        sol = {k: lam * math.sqrt(c[k] / a[k]) for k in free}
        low = [k for k in free if sol[k] < 1.0]
        if not low:
            return {**pinned, **sol}
        for k in low:
            pinned[k] = 1.0


def _greedy_fill(n_k: Dict[int, int], p: ObjectiveParams) -> Dict[int, int]:
    """Spend leftover budget one sample at a time on the best Z-decrease per variate."""
    c = {k: p.weight(k) for k in p.groups}
    a = {k: p.cost(k) for k in p.groups}
    left = p.N_budget - sum(a[k] * n_k[k] for k in p.groups)
    while True:
        best, gain = None, -1.0
        for k in p.groups:  # ascending k, strict > keeps ties on the smaller k
            if a[k] > left:
                continue
            g = c[k] / (n_k[k] * (n_k[k] + 1)) / a[k]
            if g > gain:
                best, gain = k, g
        if best is None:
            return n_k
        n_k[best] += 1
        left -= a[best]


def _exchange(n_k: Dict[int, int], p: ObjectiveParams) -> Dict[int, int]:
    """Pairwise local search: give up a few samples of one group to buy another.

    Mixed costs make the greedy fill slightly suboptimal; trading
    ``ceil(a_k / a_j)`` samples of ``j`` for one of ``k`` (then refilling)
    removes most of that gap.
    """
    c = {k: p.weight(k) for k in p.groups}
    a = {k: p.cost(k) for k in p.groups}

    def z(nk):
        return math.fsum(c[k] / nk[k] for k in p.groups)

    best = z(n_k)
    improved = True
    while improved:
        improved = False
        for j in p.groups:
            for k in p.groups:
                if j == k:
                    continue
                for drop in range(1, -(-a[k] // a[j]) + 1):
                    if n_k[j] - drop < 1:
                        break
                    trial = dict(n_k)
                    trial[j] -= drop
                    trial[k] += 1
                    if sum(a[g] * trial[g] for g in p.groups) > p.N_budget:
                        continue
                    trial = _greedy_fill(trial, p)
                    zt = z(trial)
                    if zt < best * (1 - 1e-15):
                        n_k, best, improved = trial, zt, True
    return n_k


def allocate_exact(p: ObjectiveParams) -> Allocation:
    """Lagrange optimum, floored, greedily topped up, then polished by exchanges."""
    cont = continuous_optimum(p)
    n_k = {k: max(1, math.floor(v)) for k, v in cont.items()}
    return Allocation(p.n, _exchange(_greedy_fill(n_k, p), p))


def allocate_uniform(p: ObjectiveParams) -> Allocation:
    _check_feasible(p)
    each = p.N_budget // p.min_budget
    return Allocation.constant(p.n, max(1, each))


def closed_form_proportions(p: ObjectiveParams) -> Dict[int, float]:
    """Displayed closed form ``N d^{-3/2} W(k) B^k / sum_r W(r) B^r`` (unrounded)."""
    w = {k: unit_ball_volume(k) * p.B**k for k in p.groups}
    tot = math.fsum(w.values())
    if tot == 0.0:
        w = {k: 1.0 if k == 1 else 0.0 for k in p.groups}
        tot = 1.0
    return {k: p.N_budget * p.d**-1.5 * w[k] / tot for k in p.groups}


def allocate_paper(p: ObjectiveParams, rescale: bool = True) -> Allocation:
    """The closed-form proportions ``W(k) B^k``.

    With ``rescale=False`` the displayed formula is used verbatim (nearest
    integer, minimum one), whatever it spends.  By default the same
    proportions are scaled so that the spend fits the budget, which makes
    the objective comparison with :func:`allocate_exact` fair.
    """
    _check_feasible(p)
    raw = closed_form_proportions(p)
    if not rescale:
        return Allocation(p.n, {k: max(1, int(round(v))) for k, v in raw.items()})
    a = {k: p.cost(k) for k in p.groups}

    def build(scale: float) -> Dict[int, int]:
        return {k: max(1, math.floor(scale * raw[k])) for k in p.groups}

    def spend(nk):
        return sum(a[k] * nk[k] for k in p.groups)

    lo, hi = 0.0, 1.0
    while spend(build(hi)) <= p.N_budget:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if spend(build(mid)) <= p.N_budget:
            lo = mid
        else:
            hi = mid
    return Allocation(p.n, build(lo))


@dataclass(frozen=True)
class VarianceReport:
    z_opt: float
    z_continuous: float
    closed_form_expression: float
    allocation: Allocation = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "z_opt": self.z_opt,
            "z_continuous": self.z_continuous,
            "closed_form_expression": self.closed_form_expression,
            "allocation": {str(k): v for k, v in self.allocation.entries.items()},
        }


def closed_form_min_variance(p: ObjectiveParams) -> float:
    """``d^{3/2}/N * sum_m W(m)A(m,n)B^m * sum_r sqrt(r+1) W(r)A(r,n)B^r``."""
    s1 = math.fsum(unit_ball_volume(m) * coeff_A(m, p.n) * p.B**m for m in p.groups)
    s2 = math.fsum(math.sqrt(r + 1) * unit_ball_volume(r) * coeff_A(r, p.n) * p.B**r for r in p.groups)
    return p.d**1.5 * s1 * s2 / p.N_budget


def min_variance_report(p: ObjectiveParams) -> VarianceReport:
    alloc = allocate_exact(p)
    cont = continuous_optimum(p)
    z_cont = math.fsum(p.weight(k) / cont[k] for k in p.groups)
    return VarianceReport(objective_Z(alloc, p), z_cont, closed_form_min_variance(p), alloc)


def allocation_table(alloc: Allocation, p: ObjectiveParams) -> List[dict]:
    """Rows (k, A(k,n), N(k), spend, Z-contribution) for display."""
    return [
        {
            "k": k,
            "A": coeff_A(k, p.n),
            "N": alloc[k],
            "spend": p.cost(k) * alloc[k],
            "z": p.weight(k) / alloc[k],
        }
        for k in p.groups
    ]


def kkt_ratios(p: ObjectiveParams) -> np.ndarray:
    """``c_k / (a_k N_k^2)`` at the unclamped continuous optimum (constant in k)."""
    cont = continuous_optimum(p)
    return np.array([p.weight(k) / (p.cost(k) * cont[k] ** 2) for k in p.groups if cont[k] > 1.0])
