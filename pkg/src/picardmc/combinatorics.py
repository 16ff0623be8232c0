"""Exact integer bookkeeping for the Picard expansion.

``P_n`` is the degree generating polynomial of the terms of the n-th iterate:
``P_0(z) = z`` and ``P_{n+1}(z) = z + P_n(z)^2``, so ``deg P_n = 2^n`` and
``A(m, n)`` (the coefficient of ``z^m``) counts the degree-m terms of ``u_n``.
``D(n+1) = 1 + d^2 D(n)^2`` with ``D(0) = 1`` counts scalar summands when
every product ``u . du`` fans out over all ``d^2`` index pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Tuple

from .sampling import DomainError


@dataclass(frozen=True)
class IntPolynomial:
    """Polynomial with arbitrary-precision integer coefficients; zeros never stored."""

    coeffs: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        clean = {int(k): int(v) for k, v in self.coeffs.items() if v != 0}
        if any(k < 0 for k in clean):
            raise ValueError("negative degree")
        object.__setattr__(self, "coeffs", clean)

    @property
    def degree(self) -> int:
        return max(self.coeffs) if self.coeffs else -1

    def __getitem__(self, k: int) -> int:
        return self.coeffs.get(k, 0)

    def __call__(self, z):
        return sum(c * z**k for k, c in self.coeffs.items())

    def __mul__(self, other: "IntPolynomial") -> "IntPolynomial":
        if not self.coeffs or not other.coeffs:
            return IntPolynomial({})
        if min(self.coeffs.values()) > 0 and min(other.coeffs.values()) > 0:
            return IntPolynomial(_kronecker_mul(self.as_list(), other.as_list()))
        out: Dict[int, int] = {}
        for i, a in self.coeffs.items():
            for j, b in other.coeffs.items():
                out[i + j] = out.get(i + j, 0) + a * b
        return IntPolynomial(out)

    def __add__(self, other: "IntPolynomial") -> "IntPolynomial":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0) + v
        return IntPolynomial(out)

    def as_list(self) -> list:
        """Coefficients from degree 0 through the degree."""
        return [self[k] for k in range(self.degree + 1)]


def _kronecker_mul(a: list, b: list) -> Dict[int, int]:
    """Product of non-negative coefficient lists via one big-integer multiplication."""
    bound = max(a).bit_length() + max(b).bit_length() + min(len(a), len(b)).bit_length() + 1
    width = (bound + 7) // 8

    def pack(c):
        return int.from_bytes(b"".join(v.to_bytes(width, "little") for v in c), "little")

    raw = (pack(a) * pack(b)).to_bytes(width * (len(a) + len(b) - 1), "little")
    return {
        k: int.from_bytes(raw[k * width:(k + 1) * width], "little")
        for k in range(len(a) + len(b) - 1)
    }


Z = IntPolynomial({1: 1})


def poly_next(p: IntPolynomial) -> IntPolynomial:
    """``z + p(z)^2``."""
    if any(c < 0 for c in p.coeffs.values()):
        raise DomainError("poly_next expects non-negative coefficients")
    return Z + p * p


@lru_cache(maxsize=None)
def poly(n: int) -> IntPolynomial:
    """``P_n``; ``P_0 = z``."""
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    return Z if n == 0 else poly_next(poly(n - 1))


def coeff_A(m: int, n: int) -> int:
    if n < 0 or not 1 <= m <= 2**n:
        raise DomainError(f"A(m, n) needs 1 <= m <= 2^n, got m={m}, n={n}")
    return poly(n)[m]


def coeff_prefix(n: int, kmax: int) -> Tuple[int, ...]:
    """``(A(1, n), ..., A(kmax, n))`` from ``P_n`` truncated at degree ``kmax``.

    Entries beyond ``2^n`` are zero.  Cheap even when ``P_n`` itself is huge.
    """
    if n < 0 or kmax < 1:
        raise DomainError("need n >= 0 and kmax >= 1")
    c = [0] * (kmax + 1)
    c[1] = 1
    for _ in range(n):
        sq = [0] * (kmax + 1)
        for i in range(1, kmax + 1):
            if c[i]:
                for j in range(1, kmax + 1 - i):
                    sq[i + j] += c[i] * c[j]
        sq[1] += 1
        c = sq
    return tuple(c[1:])


def catalan(M: int) -> int:
    if M < 0:
        raise DomainError("M must be >= 0")
    return math.factorial(2 * M) // (math.factorial(M) * math.factorial(M + 1))


@lru_cache(maxsize=None)
def d_sequence(n: int, d: int) -> int:
    if n < 0 or d < 1:
        raise DomainError(f"need n >= 0 and d >= 1, got n={n}, d={d}")
    if n == 0:
        return 1
    prev = d_sequence(n - 1, d)
    return 1 + d * d * prev * prev


@dataclass(frozen=True)
class BoundsReport:
    holds: bool
    ratio: Fraction
    lower: Fraction
    upper: Fraction


def d_bounds_check(k: int, l: int, d: int = 3) -> BoundsReport:
    """Check ``1 <= 9 D(k+l) / (9 D(l))^(2^k) <= (1 + 1/(9 D(l)^2))^(2^k - 1)`` exactly."""
    if d != 3:
        raise NotImplementedError("the bilateral bounds are stated for d = 3 only")
    if k < 1 or l < 1:
        raise DomainError("k and l must be >= 1")
    dl = d_sequence(l, 3)
    ratio = Fraction(9 * d_sequence(k + l, 3), (9 * dl) ** (2**k))
    upper = (1 + Fraction(1, 9 * dl * dl)) ** (2**k - 1)
    lower = Fraction(1)
    return BoundsReport(lower <= ratio <= upper, ratio, lower, upper)


def term_count_table(n: int) -> Tuple[Tuple[int, int], ...]:
    """``(k, A(k, n))`` for k = 1..2^n."""
    p = poly(n)
    return tuple((k, p[k]) for k in range(1, 2**n + 1))
