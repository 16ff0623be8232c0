"""Symbolic Picard expansion.

The recursion ``u_{n+1} = u_0 + w (.) v_n``, ``du_{n+1} = du_0 + dw (.) v_n``
with ``v_n = u_n . du_n`` is expanded by distributing products over sums.
Every term of ``u_n`` is either the leaf ``u_0`` or ``W(Prod(T, dS))`` for
terms ``T, S`` of ``u_{n-1}``, where ``dS`` is the gradient twin of ``S``
(``du_0`` for the leaf, ``DW(X)`` for ``W(X)``).  Grouping by the number of
``u_0``-type leaves gives exactly the coefficients of ``P_n``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Tuple

from .combinatorics import coeff_A, d_sequence, poly


class TermTree:
    """Base class of expansion nodes (immutable, hashable)."""

    __slots__ = ()

    @property
    def degree(self) -> int:
        raise NotImplementedError


@dataclass(frozen=True)
class U0(TermTree):
    @property
    def degree(self) -> int:
        return 1

    def __str__(self):
        return "u0"


@dataclass(frozen=True)
class DU0(TermTree):
    @property
    def degree(self) -> int:
        return 1

    def __str__(self):
        return "du0"


@dataclass(frozen=True)
class Prod(TermTree):
    """``left . right``: a u-type factor contracted with a gradient-type factor."""

    left: TermTree
    right: TermTree

    @property
    def degree(self) -> int:
        return self.left.degree + self.right.degree

    def __str__(self):
        return f"({self.left} . {self.right})"


@dataclass(frozen=True)
class W(TermTree):
    """Plain heat convolution ``w (.) child``."""

    child: TermTree

    @property
    def degree(self) -> int:
        return self.child.degree

    def __str__(self):
        return f"w(.){self.child}"


@dataclass(frozen=True)
class DW(TermTree):
    """Gradient of a heat convolution ``dw (.) child``."""

    child: TermTree

    @property
    def degree(self) -> int:
        return self.child.degree

    def __str__(self):
        return f"dw(.){self.child}"


def twin(term: TermTree) -> TermTree:
    """Gradient counterpart of a u-term."""
    if isinstance(term, U0):
        return DU0()
    if isinstance(term, W):
        return DW(term.child)
    raise TypeError(f"{term} is not a u-term")


def term_signature(term: TermTree) -> Tuple[int, int, int]:
    """``(plain convolutions, gradient convolutions, u0-degree)``; ``l1 + l2 = degree - 1``."""
    if isinstance(term, (U0, DU0)):
        return 0, 0, 1
    if isinstance(term, Prod):
        a = term_signature(term.left)
        b = term_signature(term.right)
        return a[0] + b[0], a[1] + b[1], a[2] + b[2]
    l1, l2, k = term_signature(term.child)
    return (l1 + 1, l2, k) if isinstance(term, W) else (l1, l2 + 1, k)


class ExpansionTooLarge(MemoryError):
    pass


def operator_term_count(n: int) -> int:
    """Number of operator-level terms of ``u_n`` (``P_n(1)``)."""
    return poly(n)(1)


@lru_cache(maxsize=8)
def _u_terms(n: int) -> Tuple[TermTree, ...]:
    if n == 0:
        return (U0(),)
    prev = _u_terms(n - 1)
    return (U0(),) + tuple(W(Prod(a, twin(b))) for a in prev for b in prev)


@dataclass(frozen=True)
class ExpansionPlan:
    """Operator-level expansion of ``u_n``; ``terms[0]`` is the leaf ``u_0``."""

    n: int
    d: int
    terms: Tuple[TermTree, ...]

    @property
    def groups(self) -> Dict[int, List[TermTree]]:
        out: Dict[int, List[TermTree]] = {}
        for t in self.terms:
            out.setdefault(t.degree, []).append(t)
        return dict(sorted(out.items()))

    @property
    def counts(self) -> Dict[int, int]:
        return dict(sorted(Counter(t.degree for t in self.terms).items()))

    def scalar_count(self, convention: str = "index_pairs") -> int:
        return scalar_summand_count(self.n, self.d, convention)


def expand_terms(n: int, d: int, cap: int = 10**7) -> ExpansionPlan:
    """Expand ``u_n`` into operator-level terms.

    Refuses (ExpansionTooLarge) when the number of terms exceeds ``cap``.
    """
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    count = operator_term_count(n)
    if count > cap:
        raise ExpansionTooLarge(
            f"u_{n} has {count} operator terms (cap {cap}); "
            f"{d_sequence(n, d)} scalar summands under the index-pair count"
        )
    plan = ExpansionPlan(n, d, _u_terms(n))
    for k, c in plan.counts.items():
        assert c == coeff_A(k, n), (k, c)
    return plan


def scalar_summand_count(n: int, d: int, convention: str = "index_pairs") -> int:
    """Scalar summands of one component of ``u_n``.

    ``index_pairs`` fans each product ``u . du`` out over all ``d^2`` pairs
    (component of ``u``, derivative direction), giving ``D(n)``.
    ``convective`` contracts ``sum_j u_j d_j u_i`` (``d`` pairs).
    """
    fan = {"index_pairs": d * d, "convective": d}[convention]
    c = 1
    for _ in range(n):
        c = 1 + fan * c * c
    return c


# labelled scalar terms: ("u0", i) or ("w", i, j, k, left, right) where the
# product is u_j (left) times d_k u_i (right); convective terms use j == k.
ScalarTerm = tuple


def scalar_terms(n: int, d: int, component: int = 0, convention: str = "index_pairs", cap: int = 10**7) -> List[ScalarTerm]:
    """Explicitly enumerate the labelled scalar summands of ``u_{n, component}``."""
    projected = scalar_summand_count(n, d, convention)
    if projected > cap:
        raise ExpansionTooLarge(f"{projected} scalar summands exceed the cap {cap}")

    @lru_cache(maxsize=None)
    def build(level: int, i: int) -> Tuple[ScalarTerm, ...]:
        if level == 0:
            return (("u0", i),)
        out = [("u0", i)]
        for j in range(d):
            for k in range(d):
                if convention == "convective" and j != k:
                    continue
                for left in build(level - 1, j):
                    for right in build(level - 1, i):
                        out.append(("w", i, j, k, left, right))
        return tuple(out)

    return list(build(n, component))
