"""Registry of named analytic fields used as initial data, forcing and integrands.

Parameter layout per kind (``c`` is a centre in R^d):

==================  ===========================  =====================================
kind                params                       value at (x, s)
==================  ===========================  =====================================
constant            (C,)                         C
linear              (C, b_1..b_d)                C + b . x
quadratic           (A, c_1..c_d)                A ||x - c||^2
gaussian_bump       (A, sigma, c_1..c_d)         A exp(-||x - c||^2 / (2 sigma^2))
polynomial_decay    (A, p, L, c_1..c_d)          A (1 + ||x - c||^2 / L^2)^(-p)
product_time        (A, q)                       A s^q
==================  ===========================  =====================================
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import integrate

from .sampling import DomainError

KINDS = ("constant", "linear", "quadratic", "gaussian_bump", "polynomial_decay", "product_time")
HEAT_CLOSED_FORM = ("constant", "linear", "quadratic", "gaussian_bump")


def _n_params(kind: str, d: int) -> int:
    return {
        "constant": 1,
        "linear": 1 + d,
        "quadratic": 1 + d,
        "gaussian_bump": 2 + d,
        "polynomial_decay": 3 + d,
        "product_time": 2,
    }[kind]


@dataclass(frozen=True)
class TestField:
    """Named analytic scalar field on ``R^d x [0, inf)``."""

    __test__ = False  # not a pytest class

    kind: str
    params: Tuple[float, ...]
    d: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}; expected one of {KINDS}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        want = _n_params(self.kind, self.d)
        if len(self.params) != want:
            raise ValueError(f"{self.kind} in d={self.d} takes {want} params, got {len(self.params)}")
        if self.kind == "gaussian_bump" and self.params[1] <= 0:
            raise ValueError("gaussian_bump sigma must be positive")
        if self.kind == "polynomial_decay" and (self.params[1] <= 0 or self.params[2] <= 0):
            raise ValueError("polynomial_decay needs p > 0 and L > 0")
        if self.kind == "product_time" and self.params[1] < 0:
            raise ValueError("product_time exponent must be >= 0")

    # constructors -----------------------------------------------------
    @classmethod
    def constant(cls, value: float, d: int) -> "TestField":
        return cls("constant", (value,), d)

    @classmethod
    def linear(cls, coef, offset: float = 0.0) -> "TestField":
        coef = tuple(coef)
        return cls("linear", (offset,) + coef, len(coef))

    @classmethod
    def gaussian_bump(cls, d: int, amplitude: float = 1.0, sigma: float = 1.0, center=None) -> "TestField":
        center = (0.0,) * d if center is None else tuple(center)
        return cls("gaussian_bump", (amplitude, sigma) + center, d)

    @classmethod
    def polynomial_decay(cls, d: int, amplitude: float = 1.0, power: float = 1.0, scale: float = 1.0, center=None):
        center = (0.0,) * d if center is None else tuple(center)
        return cls("polynomial_decay", (amplitude, power, scale) + center, d)

    @classmethod
    def quadratic(cls, d: int, amplitude: float = 1.0, center=None) -> "TestField":
        center = (0.0,) * d if center is None else tuple(center)
        return cls("quadratic", (amplitude,) + center, d)

    @classmethod
    def product_time(cls, d: int, amplitude: float = 1.0, power: float = 1.0) -> "TestField":
        return cls("product_time", (amplitude, power), d)

    # evaluation -------------------------------------------------------
    def _center(self, offset: int) -> np.ndarray:
        return np.asarray(self.params[offset:offset + self.d])

    def value(self, x, s=0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ValueError(f"point dimension {x.shape[-1]} != d={self.d}")
        p = self.params
        k = self.kind
        if k == "constant":
            return np.full(x.shape[:-1], p[0]) + 0.0 * np.asarray(s, dtype=float)
        if k == "linear":
            return p[0] + x @ np.asarray(p[1:])
        if k == "quadratic":
            return p[0] * np.sum((x - self._center(1)) ** 2, axis=-1)
        if k == "gaussian_bump":
            r2 = np.sum((x - self._center(2)) ** 2, axis=-1)
            return p[0] * np.exp(-r2 / (2 * p[1] ** 2))
        if k == "polynomial_decay":
            r2 = np.sum((x - self._center(3)) ** 2, axis=-1)
            return p[0] * (1.0 + r2 / p[2] ** 2) ** (-p[1])
        # product_time
        s = np.broadcast_to(np.asarray(s, dtype=float), x.shape[:-1])
        return p[0] * s ** p[1]

    __call__ = value

    def gradient(self, x, s=0.0) -> np.ndarray:
        """Spatial gradient, shape ``x.shape``."""
        x = np.asarray(x, dtype=float)
        p = self.params
        k = self.kind
        if k in ("constant", "product_time"):
            return np.zeros_like(x)
        if k == "linear":
            return np.broadcast_to(np.asarray(p[1:]), x.shape).copy()
        if k == "quadratic":
            return 2 * p[0] * (x - self._center(1))
        if k == "gaussian_bump":
            diff = x - self._center(2)
            return -diff / p[1] ** 2 * self.value(x)[..., None]
        diff = x - self._center(3)
        r2 = np.sum(diff**2, axis=-1)
        coef = -2 * p[0] * p[1] / p[2] ** 2 * (1.0 + r2 / p[2] ** 2) ** (-p[1] - 1)
        return coef[..., None] * diff

    def sup_bound(self, t_max: float) -> Optional[float]:
        """``sup |h|`` over ``R^d x [0, t_max]``, or None when unbounded."""
        p = self.params
        if self.kind in ("constant",):
            return abs(p[0])
        if self.kind in ("gaussian_bump", "polynomial_decay"):
            return abs(p[0])
        if self.kind == "product_time":
            return abs(p[0]) * t_max ** p[1]
        if self.kind == "linear" and not any(p[1:]):
            return abs(p[0])
        return None

    def support_radius(self) -> float:
        """Radius around the centre holding the bulk of the field (4 sigma / 4 L)."""
        if self.kind == "gaussian_bump":
            return 4.0 * self.params[1]
        if self.kind == "polynomial_decay":
            return 4.0 * self.params[2]
        return 1.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}


def heat_exact(a: TestField, x, t) -> np.ndarray:
    """Closed-form ``E a(x + xi sqrt(t))`` for kinds in HEAT_CLOSED_FORM."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be non-negative")
    x = np.asarray(x, dtype=float)
    p = a.params
    if a.kind == "constant":
        return np.full(np.broadcast_shapes(x.shape[:-1], t.shape), p[0])
    if a.kind == "linear":
        return a.value(x) + 0.0 * t
    if a.kind == "quadratic":
        return a.value(x) + p[0] * a.d * t
    if a.kind == "gaussian_bump":
        var = p[1] ** 2 + t
        r2 = np.sum((x - a._center(2)) ** 2, axis=-1)
        return p[0] * (p[1] ** 2 / var) ** (a.d / 2) * np.exp(-r2 / (2 * var))
    raise NotImplementedError(f"no closed-form heat evolution for kind {a.kind!r}")


def heat_exact_grad(a: TestField, x, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    p = a.params
    if a.kind == "constant":
        return np.zeros(np.broadcast_shapes(x.shape[:-1], t.shape) + (a.d,))
    if a.kind in ("linear", "quadratic"):
        return a.gradient(x) + 0.0 * t[..., None]
    if a.kind == "gaussian_bump":
        var = p[1] ** 2 + t
        return -(x - a._center(2)) / var[..., None] * heat_exact(a, x, t)[..., None]
    raise NotImplementedError(f"no closed-form heat evolution for kind {a.kind!r}")


def forced_exact(f: TestField, x, t: float) -> float:
    """``int_0^t [w_{t-s} * f(., s)](x) ds`` at a single point."""
    x = np.asarray(x, dtype=float)
    p = f.params
    if t < 0:
        raise DomainError("t must be non-negative")
    if f.kind == "constant":
        return p[0] * t
    if f.kind == "linear":
        return float(f.value(x)) * t
    if f.kind == "quadratic":
        return float(f.value(x)) * t + p[0] * f.d * t * t / 2
    if f.kind == "product_time":
        return p[0] * t ** (p[1] + 1) / (p[1] + 1)
    if f.kind == "gaussian_bump":
        val, _ = integrate.quad(lambda r: float(heat_exact(f, x, r)), 0.0, t, epsabs=1e-13, epsrel=1e-12)
        return val
    raise NotImplementedError(f"no closed-form forced evolution for kind {f.kind!r}")


def forced_exact_grad(f: TestField, x, t: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if f.kind in ("constant", "product_time"):
        return np.zeros(f.d)
    if f.kind in ("linear", "quadratic"):
        return f.gradient(x) * t
    if f.kind == "gaussian_bump":
        return np.array([
            integrate.quad(lambda r, k=k: float(heat_exact_grad(f, x, r)[k]), 0.0, t, epsabs=1e-13, epsrel=1e-12)[0]
            for k in range(f.d)
        ])
    raise NotImplementedError(f"no closed-form forced evolution for kind {f.kind!r}")


def field_from_dict(decl: dict, d: int) -> TestField:
    return TestField(decl["kind"], tuple(decl.get("params", ())), d)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(40)


def forced_exact_array(f: TestField, x, s) -> np.ndarray:
    """Vectorized forced part ``int_0^s [w_{s-r} * f(., r)](x) dr``.

    Accepts ``x`` of shape (..., d) and ``s`` broadcastable to ``x.shape[:-1]``.
    The Gaussian bump uses a fixed 40-node Gauss-Legendre rule in ``r``.
    """
    x = np.asarray(x, dtype=float)
    s = np.broadcast_to(np.asarray(s, dtype=float), x.shape[:-1])
    p = f.params
    if f.kind == "constant":
        return p[0] * s
    if f.kind == "linear":
        return f.value(x) * s
    if f.kind == "quadratic":
        return f.value(x) * s + p[0] * f.d * s * s / 2
    if f.kind == "product_time":
        return p[0] * s ** (p[1] + 1) / (p[1] + 1)
    if f.kind == "gaussian_bump":
        r = 0.5 * s[..., None] * (_GL_X + 1.0)
        vals = heat_exact(f, x[..., None, :], r)
        return 0.5 * s * (vals @ _GL_W)
    raise NotImplementedError(f"no closed-form forced evolution for kind {f.kind!r}")


def forced_exact_grad_array(f: TestField, x, s) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = np.broadcast_to(np.asarray(s, dtype=float), x.shape[:-1])
    if f.kind in ("constant", "product_time"):
        return np.zeros(x.shape)
    if f.kind in ("linear", "quadratic"):
        return f.gradient(x) * s[..., None]
    if f.kind == "gaussian_bump":
        r = 0.5 * s[..., None] * (_GL_X + 1.0)
        g = heat_exact_grad(f, x[..., None, :], r)
        return 0.5 * s[..., None] * np.einsum("...qk,q->...k", g, _GL_W)
    raise NotImplementedError(f"no closed-form forced evolution for kind {f.kind!r}")
