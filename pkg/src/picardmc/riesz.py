"""Helmholtz-Weyl projection symbol, truncated Riesz transforms and the bilinear form.

The Riesz transform is taken as the truncated principal value

    R_k f(x) ~ c(d) * int_{eps < |y| < R} |y|^(-d) (y_k / |y|) f(x - y) dy,
    c(d) = -pi^((d+1)/2) / Gamma((d+1)/2),

sampled in polar coordinates with a log-uniform radius (density 1/r on
[eps, R]) and a uniform direction.  Directions are used in antithetic pairs
(theta, -theta); the kernel is odd, so even-about-x integrands give exactly 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import legendre

from .estimate import DEFAULT_CHUNK, EstimateWithError, mc_mean
from .sampling import DomainError, unit_ball_volume
from .streams import RandomStream

H_FD = 1e-4


def riesz_constant(d: int) -> float:
    return -math.pi ** ((d + 1) / 2) / math.gamma((d + 1) / 2)


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d."""
    return d * unit_ball_volume(d)


@dataclass(frozen=True)
class ProjectionSymbol:
    xi: np.ndarray
    matrix: np.ndarray


def hw_symbol(xi) -> ProjectionSymbol:
    """``delta_ij - xi_i xi_j / |xi|^2``: projection onto the complement of ``xi``."""
    xi = np.asarray(xi, dtype=float)
    n2 = float(xi @ xi)
    if n2 == 0.0:
        raise DomainError("Helmholtz-Weyl symbol undefined at xi = 0")
    return ProjectionSymbol(xi, np.eye(xi.size) - np.outer(xi, xi) / n2)


@dataclass(frozen=True)
class RieszParams:
    eps: float
    R: float
    N: int
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.eps < self.R:
            raise DomainError(f"need 0 < eps < R, got eps={self.eps}, R={self.R}")
        if self.N < 1:
            raise ValueError("N must be >= 1")


def _polar_draw(d: int, count: int, eps: float, R: float, st: RandomStream):
    """Radii (count,) and unit directions (count, d)."""
    r = eps * (R / eps) ** st.child(0).uniforms(count)
    g = st.child(1).generator().standard_normal((count, d))
    theta = g / np.linalg.norm(g, axis=1, keepdims=True)
    return r, theta


def default_outer_radius(f) -> float:
    """Ten times the declared support radius of a registry field (10 otherwise)."""
    return 10.0 * f.support_radius() if hasattr(f, "support_radius") else 10.0


def riesz_truncated_mc(
    f: Callable, k: int, x, eps: float, R: Optional[float], N: int, stream: RandomStream,
    chunk_size: int = DEFAULT_CHUNK,
) -> EstimateWithError:
    """Single truncated Riesz transform ``R_k f(x)``; ``k`` is 0-based.

    ``R=None`` selects :func:`default_outer_radius`.
    """
    if R is None:
        R = default_outer_radius(f)
    if not 0 < eps < R:
        raise DomainError(f"need 0 < eps < R, got eps={eps}, R={R}")
    x = np.asarray(x, dtype=float)
    d = x.size
    scale = riesz_constant(d) * math.log(R / eps) * sphere_area(d)

    def draw(count, st):
        r, theta = _polar_draw(d, count, eps, R, st)
        step = r[:, None] * theta
        return 0.5 * scale * theta[:, k] * (f(x - step) - f(x + step))

    return mc_mean(draw, N, stream, chunk_size)


def _pair_points(x, d, count, eps, R, st):
    r1, th1 = _polar_draw(d, count, eps, R, st.child(0))
    r2, th2 = _polar_draw(d, count, eps, R, st.child(1))
    a = r1[:, None] * th1
    b = r2[:, None] * th2
    # antithetic in both levels: signs (+,+), (+,-), (-,+), (-,-)
    pts = np.stack([x - a - b, x - a + b, x + a - b, x + a + b], axis=1)
    signs = np.array([1.0, -1.0, -1.0, 1.0])
    return th1, th2, pts, signs


def riesz_pair_mc(
    f: Callable, j: int, k: int, x, eps: float, R: float, N: int, stream: RandomStream, chunk_size: int = DEFAULT_CHUNK
) -> EstimateWithError:
    """Nested truncated ``R_j R_k f(x)`` with independent radial/angular draws per level."""
    if not 0 < eps < R:
        raise DomainError(f"need 0 < eps < R, got eps={eps}, R={R}")
    x = np.asarray(x, dtype=float)
    d = x.size
    scale = (riesz_constant(d) * math.log(R / eps) * sphere_area(d)) ** 2

    def draw(count, st):
        th1, th2, pts, signs = _pair_points(x, d, count, eps, R, st)
        vals = f(pts.reshape(-1, d)).reshape(count, 4)
        return 0.25 * scale * th1[:, j] * th2[:, k] * (vals @ signs)

    return mc_mean(draw, N, stream, chunk_size)


def fd_gradient(u: Callable, pts: np.ndarray, h: float = H_FD) -> np.ndarray:
    """Central differences; returns ``grad[..., i, j] = d u_i / d x_j``."""
    pts = np.asarray(pts, dtype=float)
    d = pts.shape[-1]
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        cols.append((u(pts + e) - u(pts - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def convective(u_vals: np.ndarray, grad_vals: np.ndarray) -> np.ndarray:
    """``((u . grad) u)_i = sum_j u_j d_j u_i``."""
    return np.einsum("...j,...ij->...i", u_vals, grad_vals)


def pressure_gradient_mc(
    u: Callable, grad: Optional[Callable], x, params: RieszParams, chunk_size: int = DEFAULT_CHUNK
) -> EstimateWithError:
    """``d_i P`` with ``P = sum_jk R_j R_k (u_j u_k)``.

    The derivative is moved onto the product: ``d_i P = sum_jk R_j R_k d_i(u_j u_k)``.
    One nested sample set serves every ``(i, j, k)``.
    """
    x = np.asarray(x, dtype=float)
    d = x.size
    grad = grad or (lambda p: fd_gradient(u, p))
    scale = (riesz_constant(d) * math.log(params.R / params.eps) * sphere_area(d)) ** 2

    def draw(count, st):
        th1, th2, pts, signs = _pair_points(x, d, count, params.eps, params.R, st)
        flat = pts.reshape(-1, d)
        uv = u(flat).reshape(count, 4, d)
        gv = grad(flat).reshape(count, 4, d, d)
        # d_i(u_j u_k) = g[j, i] u_k + u_j g[k, i]
        dprod = np.einsum("npji,npk->npijk", gv, uv) + np.einsum("npj,npki->npijk", uv, gv)
        contracted = np.einsum("npijk,nj,nk,p->ni", dprod, th1, th2, signs)
        return 0.25 * scale * contracted

    return mc_mean(draw, params.N, RandomStream(params.seed, (7,)), chunk_size)


def bilinear_B(
    u: Callable,
    x,
    mode: str = "convective_only",
    grad: Optional[Callable] = None,
    riesz_params: Optional[RieszParams] = None,
):
    """Evaluate ``B(u, u)`` at the points ``x`` (shape (P, d)).

    ``convective_only`` returns ``(u . grad) u`` as an array (P, d).  ``full``
    adds ``grad P`` from nested truncated Riesz transforms and returns a list
    of :class:`EstimateWithError`, one per point.  Without ``grad`` the
    gradient comes from central differences with step 1e-4.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    gfun = grad or (lambda p: fd_gradient(u, p))
    conv = convective(u(pts), gfun(pts))
    if mode == "convective_only":
        return conv
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    if riesz_params is None:
        raise ValueError("full mode needs riesz_params")
    out = []
    for p, c in zip(pts, conv):
        est = pressure_gradient_mc(u, gfun, p, riesz_params)
        out.append(EstimateWithError(c + est.value, est.n_samples, est.stderr))
    return out


# ---------------------------------------------------------------------------
# quadrature oracles (d = 3)


def _polar_rule(eps: float, R: float, n_r: int, n_ang: int):
    """Nodes ``y`` and weights for ``int_{eps<|y|<R} |y|^-d g(y) dy`` in R^3.

    Radial Gauss-Legendre in log r; Gauss-Legendre in cos(theta) times a
    uniform phi grid.  The rule is symmetric under ``y -> -y``.
    """
    lr, wr = legendre.leggauss(n_r)
    a, b = math.log(eps), math.log(R)
    logr = 0.5 * (b - a) * lr + 0.5 * (a + b)
    wr = 0.5 * (b - a) * wr
    ct, wt = legendre.leggauss(n_ang)
    phi = (np.arange(2 * n_ang) + 0.5) * math.pi / n_ang
    wphi = math.pi / n_ang
    st = np.sqrt(1 - ct**2)
    dirs = np.array([[s * math.cos(p), s * math.sin(p), c] for c, s in zip(ct, st) for p in phi])
    wdir = np.array([w * wphi for w in wt for _ in phi])
    r = np.exp(logr)
    y = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    w = (wr[:, None] * wdir[None, :]).reshape(-1)
    theta = np.broadcast_to(dirs, (n_r,) + dirs.shape).reshape(-1, 3)
    return y, w, theta


def riesz_quadrature(f: Callable, k: int, x, eps: float, R: float, n_r: int = 64, n_ang: int = 32) -> float:
    """Deterministic truncated ``R_k f(x)`` in d = 3."""
    x = np.asarray(x, dtype=float)
    y, w, theta = _polar_rule(eps, R, n_r, n_ang)
    return riesz_constant(3) * float(np.sum(w * theta[:, k] * f(x - y)))


def pressure_gradient_quadrature(
    u: Callable, grad: Callable, x, eps: float, R: float, n_r: int = 24, n_ang: int = 10, block: int = 256
) -> np.ndarray:
    """Nested deterministic ``d_i P(x)`` in d = 3 (all i at once)."""
    x = np.asarray(x, dtype=float)
    y, w, theta = _polar_rule(eps, R, n_r, n_ang)
    c2 = riesz_constant(3) ** 2
    total = np.zeros(3)
    for start in range(0, y.shape[0], block):
        y1 = y[start:start + block]
        pts = (x - y1[:, None, :] - y[None, :, :]).reshape(-1, 3)
        uv = u(pts).reshape(y1.shape[0], y.shape[0], 3)
        gv = grad(pts).reshape(y1.shape[0], y.shape[0], 3, 3)
        dprod = np.einsum("abji,abk->abijk", gv, uv) + np.einsum("abj,abki->abijk", uv, gv)
        k1 = w[start:start + block, None] * theta[start:start + block]
        k2 = w[:, None] * theta
        total += np.einsum("abijk,aj,bk->i", dprod, k1, k2)
    return c2 * total
