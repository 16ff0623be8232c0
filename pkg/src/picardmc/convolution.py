"""Depending-trial estimators of iterated space-time heat convolutions.

A chain of ``m`` steps starts at ``(y_0, s_0) = (x, t)``.  Step ``j`` moves to

    s_j = t * tau_j,    y_j = y_{j-1} + z_j * sqrt(s_{j-1} - s_j)

with ``z_j`` standard normal.  A *plain* step carries the heat kernel
``w_{s-s'}(y - y')``; a *gradient* step carries the kernel
``(y - y')_k / (s - s') * w_{s-s'}(y - y')`` for a coordinate ``k``.  After the
substitution the gradient factor becomes ``-z_{j,k} / sqrt(gap_j)``, so the time
integral over the chain has weight ``prod_{grad j} gap_j^(-1/2)`` on ``S(m)``.
Sampling the times from the gap-Dirichlet law with concentration 1 on plain
gaps and 1/2 on gradient gaps makes that weight a constant:

    K = t^(m1 + m2/2) * pi^(m2/2) / Gamma(1 + m1 + m2/2) * E[prod(-z_{j,k_j}) h]

which reduces to ``t^m / m!`` (all plain, uniform simplex) and
``t^(m/2) W_m`` (all gradient, PB(1/2, m)).

Note the gradient kernel is ``-d/dx_k`` of the plain one: ``J_1[y_1 - x_1] = -t``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple, Union

import numpy as np
from numpy.polynomial import hermite_e, legendre

from .estimate import DEFAULT_CHUNK, EstimateWithError, mc_mean
from .fields import TestField
from .sampling import (
    DomainError,
    GaussianBlock,
    SimplexPoint,
    dirichlet_chain_sample,
    gaussian_block_sample,
    pb_half_sample,
    uniform_simplex_sample,
    unit_ball_volume,
)
from .streams import RandomStream

PLAIN = "plain"
GRAD = "grad"


@dataclass(frozen=True)
class TermKernelSpec:
    """Step layout of ``T_w^{m1} T_dw^{m2}``.

    ``order`` lists the step kinds from the evaluation point inwards; by
    default the plain steps come first.  ``deriv_indices`` gives the
    (0-based) coordinate of each gradient step in the order they occur.
    """

    m1: int
    m2: int
    deriv_indices: Tuple[int, ...] = ()
    order: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.m1 < 0 or self.m2 < 0 or self.m1 + self.m2 < 1:
            raise ValueError("need m1, m2 >= 0 and m1 + m2 >= 1")
        deriv = tuple(int(k) for k in self.deriv_indices)
        if not deriv and self.m2:
            deriv = (0,) * self.m2
        if len(deriv) != self.m2:
            raise ValueError(f"need {self.m2} derivative indices, got {len(deriv)}")
        if any(k < 0 for k in deriv):
            raise ValueError("derivative indices are 0-based and non-negative")
        order = tuple(self.order) or (PLAIN,) * self.m1 + (GRAD,) * self.m2
        if sorted(order) != sorted((PLAIN,) * self.m1 + (GRAD,) * self.m2):
            raise ValueError(f"order {order} does not have {self.m1} plain and {self.m2} grad steps")
        object.__setattr__(self, "deriv_indices", deriv)
        object.__setattr__(self, "order", order)

    @property
    def m(self) -> int:
        return self.m1 + self.m2

    @property
    def alphas(self) -> Tuple[float, ...]:
        return tuple(1.0 if kind == PLAIN else 0.5 for kind in self.order)

    def step_derivs(self) -> Tuple[Optional[int], ...]:
        """Coordinate per step (None for plain steps)."""
        it = iter(self.deriv_indices)
        return tuple(next(it) if kind == GRAD else None for kind in self.order)


def chain_weight(spec: TermKernelSpec, t) -> np.ndarray:
    """``t^(m1 + m2/2) pi^(m2/2) / Gamma(1 + m1 + m2/2)``."""
    a = spec.m1 + spec.m2 / 2
    return np.asarray(t, dtype=float) ** a * math.pi ** (spec.m2 / 2) / math.gamma(1 + a)


@dataclass(frozen=True)
class PathPoint:
    """Sampled chain: Gaussian block, simplex point and the mapped ``(y, s)``."""

    z: GaussianBlock
    tau: SimplexPoint
    y: np.ndarray  # (..., m, d)
    s: np.ndarray  # (..., m)


def change_of_variables(x, t, z: GaussianBlock, tau: SimplexPoint) -> PathPoint:
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if z.m != tau.m:
        raise ValueError("Gaussian block and simplex point disagree on m")
    if x.shape[-1] != z.d:
        raise ValueError("x dimension does not match the Gaussian block")
    s = t[..., None] * tau.coords
    upper = np.concatenate([np.broadcast_to(t[..., None], s.shape[:-1] + (1,)), s[..., :-1]], axis=-1)
    gaps = upper - s
    if np.any(gaps <= 0.0):
        raise DomainError("zero time gap in change of variables")
    steps = z.z * np.sqrt(gaps)[..., None]
    y = x[..., None, :] + np.cumsum(steps, axis=-2)
    return PathPoint(z, tau, y, s)


def inverse_change_of_variables(x, t, y, s) -> Tuple[np.ndarray, np.ndarray]:
    """Recover ``(z, tau)`` from a mapped path."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    upper_s = np.concatenate([np.broadcast_to(t[..., None], s.shape[:-1] + (1,)), s[..., :-1]], axis=-1)
    upper_y = np.concatenate([np.broadcast_to(x[..., None, :], y.shape[:-2] + (1, y.shape[-1])), y[..., :-1, :]], axis=-2)
    z = (y - upper_y) / np.sqrt(upper_s - s)[..., None]
    return z, s / t[..., None]


Integrand = Union[TestField, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _path_values(h: Integrand, y: np.ndarray, s: np.ndarray) -> np.ndarray:
    """TestFields are evaluated at the end of the chain; callables see the whole path."""
    if isinstance(h, TestField):
        return h(y[..., -1, :], s[..., -1])
    return h(y, s)


def sample_chain_times(spec: TermKernelSpec, stream: RandomStream, size: int) -> SimplexPoint:
    if spec.m2 == 0:
        return uniform_simplex_sample(spec.m, stream, size)
    if spec.m1 == 0:
        return pb_half_sample(spec.m, stream, size)
    return dirichlet_chain_sample(spec.alphas, stream, size)


def chain_samples(spec: TermKernelSpec, h: Integrand, x, t: float, count: int, stream: RandomStream) -> np.ndarray:
    """``count`` i.i.d. unbiased single-sample estimates of ``K[h](x, t)``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    for k in spec.deriv_indices:
        if k >= d:
            raise ValueError(f"derivative index {k} out of range for d={d}")
    z = gaussian_block_sample(spec.m, d, stream.child(0), size=count)
    tau = sample_chain_times(spec, stream.child(1), count)
    path = change_of_variables(x, t, z, tau)
    vals = _path_values(h, path.y, path.s)
    for j, k in enumerate(spec.step_derivs()):
        if k is not None:
            vals = vals * -z.z[:, j, k]
    return chain_weight(spec, t) * vals


def _check_tm(t):
    if not t > 0:
        raise DomainError(f"t must be positive, got {t}")


def estimate_K(
    h: Integrand,
    spec: TermKernelSpec,
    x,
    t: float,
    N: int,
    stream: RandomStream,
    h_sup: Optional[float] = None,
    chunk_size: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> EstimateWithError:
    """Estimate ``T_w^{m1} T_dw^{m2}[h](x, t)`` from ``N`` chains."""
    _check_tm(t)
    if h_sup is None and isinstance(h, TestField):
        h_sup = h.sup_bound(t)
    bound = None if h_sup is None else variance_bound(spec, t, h_sup, N)
    return mc_mean(lambda c, st: chain_samples(spec, h, x, t, c, st), N, stream, chunk_size, workers, bound)


def estimate_I(h: Integrand, m: int, x, t: float, N: int, stream: RandomStream, **kw) -> EstimateWithError:
    """``m`` plain steps: ``t^m / m! * E h`` with uniform simplex times."""
    return estimate_K(h, TermKernelSpec(m, 0), x, t, N, stream, **kw)


def estimate_J(h: Integrand, spec: TermKernelSpec, x, t: float, N: int, stream: RandomStream, **kw) -> EstimateWithError:
    """Gradient steps only: ``t^(m/2) W_m * E[prod(-z_{j,k_j}) h]`` with PB(1/2, m) times."""
    if spec.m1 != 0:
        raise ValueError("estimate_J takes a spec with m1 = 0")
    return estimate_K(h, spec, x, t, N, stream, **kw)


def variance_bound(spec: TermKernelSpec, t: float, h_sup: float, N: int, rough: bool = False) -> float:
    """Upper bound on the estimator variance for ``|h| <= h_sup``.

    The sharp form is ``t^(2 m1 + m2) W(m2)^2 / (m1!)^2 h_sup^2 / N`` (this is
    ``t^{2m}/m!^2`` for plain chains and ``t^m W_m^2`` for gradient chains);
    ``rough=True`` gives ``max(t^m, t^2m) W(m)^2 h_sup^2 / N``.
    """
    if h_sup < 0 or not math.isfinite(h_sup):
        raise DomainError("h_sup must be finite and non-negative")
    if rough:
        m = spec.m
        return max(t**m, t ** (2 * m)) * unit_ball_volume(m) ** 2 * h_sup**2 / N
    return (
        t ** (2 * spec.m1 + spec.m2)
        * unit_ball_volume(spec.m2) ** 2
        / math.factorial(spec.m1) ** 2
        * h_sup**2
        / N
    )


# ---------------------------------------------------------------------------
# deterministic oracle


def _time_rule(kind: str, n: int):
    """Nodes/weights on (0, 1) for one step after removing the gap singularity.

    Returns (fraction of remaining time taken by the gap, weight factor as a
    function of remaining time).
    """
    u, w = legendre.leggauss(n)
    u = 0.5 * (u + 1.0)
    w = 0.5 * w
    if kind == PLAIN:
        return u, w, lambda rem: rem
    # gap = rem * u^2: d(gap) gap^(-1/2) = 2 sqrt(rem) du
    return u**2, w, lambda rem: 2.0 * np.sqrt(rem)


def _oracle(h: Integrand, spec: TermKernelSpec, x, t: float, n_time: int, n_herm: int) -> float:
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    m = spec.m
    zn, zw = hermite_e.hermegauss(n_herm)
    zw = zw / math.sqrt(2 * math.pi)
    # all Gaussian coordinates of all steps, flattened (m*d axes)
    zgrid = np.array(list(itertools.product(zn, repeat=m * d))).reshape(-1, m, d)
    wz = np.prod(np.array(list(itertools.product(zw, repeat=m * d))), axis=1)
    factor = np.ones(zgrid.shape[0])
    for j, k in enumerate(spec.step_derivs()):
        if k is not None:
            factor = factor * -zgrid[:, j, k]
    rules = [_time_rule(kind, n_time) for kind in spec.order]
    total = 0.0
    for combo in itertools.product(range(n_time), repeat=m):
        s_prev = t
        weight = 1.0
        s_list = []
        gap_list = []
        for j, i in enumerate(combo):
            frac, w, jac = rules[j]
            gap = s_prev * frac[i]
            weight *= w[i] * jac(s_prev)
            # for gradient steps the kernel also carries 1/sqrt(gap) from (y - y')/gap;
            # it cancels against sqrt(gap) in the displacement: (y-y')/gap = -z/sqrt(gap)
            gap_list.append(gap)
            s_prev = s_prev - gap
            s_list.append(s_prev)
        gaps = np.array(gap_list)
        s = np.broadcast_to(np.array(s_list), (zgrid.shape[0], m))
        y = x + np.cumsum(zgrid * np.sqrt(gaps)[None, :, None], axis=1)
        vals = _path_values(h, y, s)
        total += weight * np.dot(wz, factor * vals)
    return float(total)


def quadrature_oracle(
    h: Integrand, spec: TermKernelSpec, x, t: float, n_time: int = 24, n_herm: Optional[int] = None, with_error: bool = False
):
    """Tensor Gauss quadrature of the chain integral, for ``m <= 2`` and ``d <= 2``.

    Time gaps use Gauss-Legendre after a square-root substitution on gradient
    steps; Gaussian displacements use Gauss-Hermite.  The integral is done in
    physical time, independent of the sampling normalizers.  With
    ``with_error`` the difference to a coarser rule is returned as well.
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    if spec.m > 2 or d > 2:
        raise NotImplementedError("quadrature oracle supports m <= 2 and d <= 2")
    _check_tm(t)
    if n_herm is None:
        n_herm = 28 if spec.m * d <= 2 else 14
    fine = _oracle(h, spec, x, t, n_time, n_herm)
    if not with_error:
        return fine
    coarse = _oracle(h, spec, x, t, max(4, n_time - 8), max(4, n_herm - 4))
    return fine, abs(fine - coarse)
