"""Monte Carlo evaluation of the Picard iteration.

Two estimators are provided.

* :func:`solve_terms` expands ``u_n`` symbolically (see :mod:`picardmc.terms`)
  and estimates every operator term with its own substream; terms of
  u_0-degree ``k`` receive ``N(k)`` samples.  One sample set serves every
  grid point (depending trials), and each term shares its variates with its
  gradient twin.
* :func:`solve_nested` is the nested baseline: every level is a fixed random
  function built from the level below.  It is biased in general because the
  nonlinearity acts on estimated fields; use it for comparison only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import special

from .allocation import Allocation, budget_total, variance_aggregate
from .estimate import EstimateWithError, mc_mean
from .fields import TestField, forced_exact_array, forced_exact_grad_array, heat_exact, heat_exact_grad
from .heat import SpaceTimeGrid
from .riesz import RieszParams, convective, pressure_gradient_mc
from .sampling import DomainError
from .streams import RandomStream
from .terms import DU0, U0, W, Prod, TermTree, expand_terms, twin

ITER_CHUNK = 4096
_ONE_MINUS = float(np.nextafter(1.0, 0.0))


class IterationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class InitialData:
    """Vector field ``u_0 = e^{t Delta/2} a + int_0^t e^{(t-s) Delta/2} f ds``.

    ``a`` and ``f`` hold one :class:`TestField` (or None) per component.
    ``mode="exact"`` evaluates closed forms; ``mode="mc"`` averages
    ``n_leaf`` fresh draws per evaluation, which biases products of leaves
    by ``O(1/n_leaf)``.
    """

    d: int
    a: Sequence[Optional[TestField]]
    f: Sequence[Optional[TestField]] = ()
    mode: str = "exact"
    n_leaf: int = 16
    scale: float = 1.0

    def __post_init__(self):
        f = tuple(self.f) if self.f else (None,) * self.d
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "f", f)
        if len(self.a) != self.d or len(f) != self.d:
            raise IterationError(f"need {self.d} components for a and f")
        for fld in self.a + f:
            if fld is not None and fld.d != self.d:
                raise IterationError("field dimension does not match d")
        if self.mode not in ("exact", "mc"):
            raise IterationError(f"unknown u0 mode {self.mode!r}")
        if self.n_leaf < 1:
            raise IterationError("n_leaf must be >= 1")

    @property
    def is_zero(self) -> bool:
        return self.scale == 0 or all(x is None for x in self.a + self.f)

    def scaled(self, lam: float) -> "InitialData":
        return InitialData(self.d, self.a, self.f, self.mode, self.n_leaf, self.scale * lam)

    # exact ------------------------------------------------------------
    def exact_value(self, y, s) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        s = np.broadcast_to(np.asarray(s, dtype=float), y.shape[:-1])
        out = np.zeros(y.shape)
        for i in range(self.d):
            if self.a[i] is not None:
                out[..., i] += heat_exact(self.a[i], y, s)
            if self.f[i] is not None:
                out[..., i] += forced_exact_array(self.f[i], y, s)
        return self.scale * out

    def exact_grad(self, y, s) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        s = np.broadcast_to(np.asarray(s, dtype=float), y.shape[:-1])
        out = np.zeros(y.shape + (self.d,))
        for i in range(self.d):
            if self.a[i] is not None:
                out[..., i, :] += heat_exact_grad(self.a[i], y, s)
            if self.f[i] is not None:
                out[..., i, :] += forced_exact_grad_array(self.f[i], y, s)
        return self.scale * out

    # Monte Carlo --------------------------------------------------------
    def _mc(self, y, s, st: RandomStream, grad: bool) -> np.ndarray:
        """Leaf average; ``y`` is (N, ..., d) and draws are shared along the middle axes."""
        n_out = y.shape[0]
        mid = y.shape[1:-1]
        yq = y.reshape(n_out, -1, 1, self.d)
        sq = np.broadcast_to(s, y.shape[:-1]).reshape(n_out, -1, 1)
        k = self.n_leaf
        xi = st.child(0).generator().standard_normal((n_out, 1, k, self.d))
        eta = st.child(1).generator().standard_normal((n_out, 1, k, self.d))
        tau = st.child(2).uniforms((n_out, 1, k))
        pa = yq + xi * np.sqrt(sq)[..., None]
        pf = yq + eta * np.sqrt(sq * (1.0 - tau))[..., None]
        sf = sq * tau
        shape = (n_out, yq.shape[1], self.d) + ((self.d,) if grad else ())
        out = np.zeros(shape)
        for i in range(self.d):
            if self.a[i] is not None:
                v = self.a[i].gradient(pa) if grad else self.a[i](pa)
                out[:, :, i] += v.mean(axis=2)
            if self.f[i] is not None:
                v = self.f[i].gradient(pf, sf) if grad else self.f[i](pf, sf)
                w = sq[..., None] if grad else sq
                out[:, :, i] += (w * v).mean(axis=2)
        return self.scale * out.reshape((n_out,) + mid + shape[2:])

    def value(self, y, s, st: RandomStream) -> np.ndarray:
        if self.mode == "exact":
            return self.exact_value(y, s)
        return self._mc(y, s, st, grad=False)

    def grad(self, y, s, st: RandomStream) -> np.ndarray:
        if self.mode == "exact":
            return self.exact_grad(y, s)
        return self._mc(y, s, st, grad=True)


def zero_data(d: int) -> InitialData:
    return InitialData(d, (None,) * d)


# ---------------------------------------------------------------------------
# term evaluation


def _alpha(node: TermTree) -> float:
    return 1.0 if isinstance(node, W) else 0.5


def _conv_mass(node: TermTree) -> float:
    """Sum of time exponents of the convolutions inside ``node``."""
    if isinstance(node, (U0, DU0)):
        return 0.0
    if isinstance(node, Prod):
        return _conv_mass(node.left) + _conv_mass(node.right)
    return _alpha(node) + _conv_mass(node.child)


def _eval(node: TermTree, y, s, st: RandomStream, pos: tuple, src: InitialData, coupling: float):
    """One Monte Carlo sample of ``node`` per leading row of ``y``.

    ``y`` is (N, P, d), ``s`` is (N, P).  Variates are keyed by the node's
    position, so a term and its gradient twin see identical randomness.
    Own keys are ``pos + (9, j)``; children live under ``pos + (0|1|2,)``.
    """
    if isinstance(node, U0):
        return src.value(y, s, st.child(*pos, 9, 2))
    if isinstance(node, DU0):
        return src.grad(y, s, st.child(*pos, 9, 2))
    if isinstance(node, Prod):
        left = _eval(node.left, y, s, st, pos + (1,), src, coupling)
        right = _eval(node.right, y, s, st, pos + (2,), src, coupling)
        return np.einsum("...j,...ij->...i", left, right)

    # convolution over (s', y'): gap g = s - s' ~ s * Beta(alpha, beta)
    alpha = _alpha(node)
    beta = 1.0 + _conv_mass(node.child)
    n_rows, d = y.shape[0], y.shape[-1]
    u = st.child(*pos, 9, 0).uniforms(n_rows)
    z = st.child(*pos, 9, 1).generator().standard_normal((n_rows, d))
    b = np.minimum(special.betaincinv(alpha, beta, u), _ONE_MINUS)
    gap = s * b[:, None]
    s2 = s - gap
    y2 = y + z[:, None, :] * np.sqrt(gap)[..., None]
    weight = coupling * s ** (alpha + beta - 1.0) * special.beta(alpha, beta) * s2 ** (1.0 - beta)
    inner = _eval(node.child, y2, s2, st, pos + (0,), src, coupling)
    if isinstance(node, W):
        return weight[..., None] * inner
    # true x-gradient of the heat kernel contributes +z_k after substitution
    return weight[..., None, None] * inner[..., :, None] * z[:, None, None, :]


@dataclass(frozen=True)
class TermEstimate:
    """Estimate of one u-term (shape (P, d)) and its gradient twin (P, d, d)."""

    value: EstimateWithError
    grad: EstimateWithError


def _as_points(x, t, d: Optional[int] = None):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:1]).copy()
    if np.any(t <= 0):
        raise DomainError("evaluation times must be positive")
    if d is not None and x.shape[1] != d:
        raise DomainError(f"points have dimension {x.shape[1]}, expected {d}")
    return x, t


def evaluate_term_mc(
    term: TermTree,
    u0_source: InitialData,
    x,
    t,
    N: int,
    stream: RandomStream,
    coupling: float = 1.0,
    chunk_size: int = ITER_CHUNK,
    workers: int = 1,
) -> TermEstimate:
    """Estimate ``term`` and its gradient twin at points ``x`` (P, d), times ``t``."""
    x, t = _as_points(x, t, u0_source.d)
    P, d = x.shape
    tw = twin(term)

    def draw(count, st):
        y = np.broadcast_to(x, (count, P, d))
        s = np.broadcast_to(t, (count, P))
        v = _eval(term, y, s, st, (), u0_source, coupling)
        g = _eval(tw, y, s, st, (), u0_source, coupling)
        return np.concatenate([v.reshape(count, -1), g.reshape(count, -1)], axis=1)

    est = mc_mean(draw, N, stream, chunk_size, workers)
    cut = P * d
    mean, err = np.asarray(est.value), np.asarray(est.stderr)
    value = EstimateWithError(mean[:cut].reshape(P, d), est.n_samples, err[:cut].reshape(P, d))
    grad = EstimateWithError(mean[cut:].reshape(P, d, d), est.n_samples, err[cut:].reshape(P, d, d))
    return TermEstimate(value, grad)


# ---------------------------------------------------------------------------
# assembled solutions


@dataclass
class SolutionEstimate:
    """``u_{n,N}`` and its gradient on a grid.

    ``values.value`` has shape (P, d) and ``grad_values.value`` shape
    (P, d, d) with ``[p, i, j] = d_j u_i``.  Standard errors are stored the
    same way.
    """

    grid: SpaceTimeGrid
    values: EstimateWithError
    grad_values: EstimateWithError
    budget_used: int
    variance_bound: Optional[float] = None
    term_counts: Dict[int, int] = field(default_factory=dict)
    method: str = "terms"

    def rows(self) -> List[tuple]:
        """CSV rows ``(x_1..x_d, t, component, value, stderr)``; components are 1-based."""
        out = []
        val, err = np.asarray(self.values.value), np.asarray(self.values.stderr)
        for p in range(len(self.grid)):
            for i in range(self.grid.d):
                out.append((*self.grid.x[p].tolist(), float(self.grid.t[p]), i + 1, float(val[p, i]), float(err[p, i])))
        return out

    def summary(self) -> dict:
        return {
            "method": self.method,
            "budget_used": int(self.budget_used),
            "variance_bound": self.variance_bound,
            "term_counts": {str(k): int(v) for k, v in self.term_counts.items()},
            "max_stderr": float(np.max(self.values.stderr)) if np.size(self.values.stderr) else 0.0,
            "max_grad_stderr": float(np.max(self.grad_values.stderr)) if np.size(self.grad_values.stderr) else 0.0,
        }


def triple_norm_estimate(grid: SpaceTimeGrid, values, grads) -> float:
    """Grid maximum of ``max(|x|, 1) * max(|u_i|, |d_j u_i|)``.

    A lower estimate of the true supremum, since only grid points are seen.
    """
    if len(grid) == 0:
        raise DomainError("empty grid")
    v = np.abs(np.asarray(values, dtype=float)).reshape(len(grid), -1)
    g = np.abs(np.asarray(grads, dtype=float)).reshape(len(grid), -1)
    weight = np.maximum(np.linalg.norm(grid.x, axis=1), 1.0)
    return float(np.max(weight * np.maximum(v.max(axis=1), g.max(axis=1))))


def solve_terms(
    source: InitialData,
    grid: SpaceTimeGrid,
    n: int,
    alloc: Allocation,
    stream: RandomStream,
    coupling: float = 1.0,
    chunk_size: int = ITER_CHUNK,
    workers: int = 1,
    per_point_streams: bool = False,
    B: Optional[float] = None,
) -> SolutionEstimate:
    """Term-by-term estimate of ``u_n`` and ``du_n`` on ``grid``.

    Term ``r`` draws from ``stream.child(r)``; with ``per_point_streams`` each
    grid point gets ``stream.child(r, p)`` instead of sharing the sample set.
    """
    if grid.d != source.d:
        raise IterationError(f"grid dimension {grid.d} != field dimension {source.d}")
    plan = expand_terms(n, source.d)
    used = budget_total(alloc, n, source.d)
    P, d = len(grid), grid.d
    val = np.zeros((P, d))
    var = np.zeros((P, d))
    gval = np.zeros((P, d, d))
    gvar = np.zeros((P, d, d))
    for r, term in enumerate(plan.terms):
        N_k = alloc[term.degree]
        if source.is_zero:
            continue
        if per_point_streams:
            for p in range(P):
                est = evaluate_term_mc(term, source, grid.x[p:p + 1], grid.t[p:p + 1], N_k,
                                       stream.child(r, p), coupling, chunk_size, workers)
                val[p] += est.value.value[0]
                var[p] += est.value.stderr[0] ** 2
                gval[p] += est.grad.value[0]
                gvar[p] += est.grad.stderr[0] ** 2
        else:
            est = evaluate_term_mc(term, source, grid.x, grid.t, N_k, stream.child(r), coupling, chunk_size, workers)
            val += est.value.value
            var += est.value.stderr**2
            gval += est.grad.value
            gvar += est.grad.stderr**2
    if B is None and source.mode == "exact":
        B = triple_norm_estimate(grid, source.exact_value(grid.x, grid.t), source.exact_grad(grid.x, grid.t))
    bound = variance_aggregate(alloc, float(np.max(grid.t)), B, n, d) if B is not None else None
    n_min = min(alloc.entries.values())
    return SolutionEstimate(
        grid,
        EstimateWithError(val, n_min, np.sqrt(var)),
        EstimateWithError(gval, n_min, np.sqrt(gvar)),
        used,
        bound,
        plan.counts,
        "terms",
    )


# ---------------------------------------------------------------------------
# nested baseline


def nested_budget(Ns: Sequence[int]) -> int:
    """``2 N(0) + sum_{j>=1} (j + 1) N(j)``."""
    if not Ns or any(int(v) != v or v < 1 for v in Ns):
        raise IterationError("nested sample counts must be positive integers")
    return 2 * Ns[0] + sum((j + 1) * Ns[j] for j in range(1, len(Ns)))


class _Level0:
    """``u_{0, N(0)}``: fixed draws shared by every query point."""

    BLOCK = 1 << 21

    def __init__(self, src: InitialData, N0: int, st: RandomStream):
        self.src, self.N0, self.d = src, N0, src.d
        self.xi = st.child(0).generator().standard_normal((N0, self.d))
        self.eta = st.child(1).generator().standard_normal((N0, self.d))
        self.tau = st.child(2).uniforms(N0)

    def __call__(self, Y, S):
        """Returns value (M, d), gradient (M, d, d) and per-point variance of the mean (M, d)."""
        if self.src.mode == "exact":
            return self.src.exact_value(Y, S), self.src.exact_grad(Y, S), np.zeros(Y.shape), np.zeros(Y.shape + (self.d,))
        M = Y.shape[0]
        step = max(1, self.BLOCK // (self.N0 * self.d))
        parts = [self._block(Y[i:i + step], S[i:i + step]) for i in range(0, M, step)]
        if not parts:
            d = self.d
            return np.zeros((0, d)), np.zeros((0, d, d)), np.zeros((0, d)), np.zeros((0, d, d))
        return tuple(np.concatenate(z) for z in zip(*parts))

    def _block(self, Y, S):
        src, d = self.src, self.d
        sq = S[:, None]
        pa = Y[:, None, :] + self.xi[None] * np.sqrt(sq)[..., None]
        pf = Y[:, None, :] + self.eta[None] * np.sqrt(sq * (1.0 - self.tau[None]))[..., None]
        sf = sq * self.tau[None]
        samp = np.zeros((Y.shape[0], self.N0, d))
        gsamp = np.zeros((Y.shape[0], self.N0, d, d))
        for i in range(d):
            if src.a[i] is not None:
                samp[:, :, i] += src.a[i](pa)
                gsamp[:, :, i] += src.a[i].gradient(pa)
            if src.f[i] is not None:
                samp[:, :, i] += sq * src.f[i](pf, sf)
                gsamp[:, :, i] += sq[..., None] * src.f[i].gradient(pf, sf)
        samp *= src.scale
        gsamp *= src.scale
        if self.N0 > 1:
            var, gvar = samp.var(axis=1, ddof=1) / self.N0, gsamp.var(axis=1, ddof=1) / self.N0
        else:
            var, gvar = np.full(Y.shape, np.inf), np.full(Y.shape + (d,), np.inf)
        return samp.mean(axis=1), gsamp.mean(axis=1), var, gvar


class _LevelL:
    """``u_{L, N(L)}`` built on the fixed random function of the level below."""

    BLOCK = 1 << 16

    def __init__(self, lower, base: _Level0, NL: int, st: RandomStream, coupling: float, force):
        self.lower, self.base, self.NL, self.coupling, self.force = lower, base, NL, coupling, force
        self.d = base.d
        self.eta = st.child(0).generator().standard_normal((NL, self.d))
        self.tau = st.child(1).uniforms(NL)

    def __call__(self, Y, S):
        M = Y.shape[0]
        step = max(1, self.BLOCK // self.NL)
        parts = [self._block(Y[i:i + step], S[i:i + step]) for i in range(0, M, step)]
        if not parts:
            d = self.d
            return np.zeros((0, d)), np.zeros((0, d, d)), np.zeros((0, d)), np.zeros((0, d, d))
        return tuple(np.concatenate(z) for z in zip(*parts))

    def _block(self, Y, S):
        M, d, NL = Y.shape[0], self.d, self.NL
        eta, tau = self.eta[None], self.tau[None]
        Sm = S[:, None]
        pv = Y[:, None, :] + eta * np.sqrt(Sm * (1.0 - tau))[..., None]
        sv = Sm * tau
        gap = Sm * (1.0 - tau) ** 2
        pg = Y[:, None, :] + eta * np.sqrt(gap)[..., None]
        sg = Sm - gap
        pts = np.concatenate([pv.reshape(-1, d), pg.reshape(-1, d)])
        ts = np.concatenate([sv.reshape(-1), sg.reshape(-1)])
        F = self.force(self.lower, pts, ts)
        Fv = F[: M * NL].reshape(M, NL, d)
        Fg = F[M * NL:].reshape(M, NL, d)
        c = self.coupling
        val_s = c * Sm[..., None] * Fv
        grad_s = c * 2.0 * np.sqrt(Sm)[..., None, None] * Fg[..., :, None] * eta[..., None, :]
        u0, g0, var0, gvar0 = self.base(Y, S)
        if NL > 1:
            var, gvar = val_s.var(axis=1, ddof=1) / NL, grad_s.var(axis=1, ddof=1) / NL
        else:
            var, gvar = np.full((M, d), np.inf), np.full((M, d, d), np.inf)
        return u0 + val_s.mean(axis=1), g0 + grad_s.mean(axis=1), var0 + var, gvar0 + gvar


def _convective_force(lower, pts, ts):
    u, g = lower(pts, ts)[:2]
    return convective(u, g)


def _full_force(riesz_params: RieszParams):
    def force(lower, pts, ts):
        u, g = lower(pts, ts)[:2]
        out = convective(u, g)
        for m in range(len(pts)):
            s = np.array([ts[m]])

            def uf(q, s=s):
                q2 = np.asarray(q).reshape(-1, q.shape[-1])
                return lower(q2, np.broadcast_to(s, q2.shape[:1]).copy())[0].reshape(q.shape)

            def gf(q, s=s):
                q2 = np.asarray(q).reshape(-1, q.shape[-1])
                return lower(q2, np.broadcast_to(s, q2.shape[:1]).copy())[1].reshape(q.shape + (q.shape[-1],))

            out[m] += pressure_gradient_mc(uf, gf, pts[m], riesz_params).value
        return out

    return force


def solve_nested(
    source: InitialData,
    grid: SpaceTimeGrid,
    Ns: Sequence[int],
    stream: RandomStream,
    coupling: float = 1.0,
    mode: str = "convective_only",
    riesz_params: Optional[RieszParams] = None,
) -> SolutionEstimate:
    """Nested estimator with levels ``0..L`` (``L = len(Ns) - 1``).

    Level ``j`` draws from ``stream.child(j)``.  Reported standard errors are
    those of the top level's own average conditional on the levels below,
    plus the level-0 error; they ignore the propagated lower-level noise.
    """
    used = nested_budget(Ns)
    if mode == "full":
        if riesz_params is None or source.d != 3:
            raise IterationError("full mode needs d = 3 and Riesz parameters")
        force = _full_force(riesz_params)
    elif mode == "convective_only":
        force = _convective_force
    else:
        raise IterationError(f"unknown mode {mode!r}")
    base = _Level0(source, Ns[0], stream.child(0))
    level = base
    for j in range(1, len(Ns)):
        level = _LevelL(level, base, Ns[j], stream.child(j), coupling, force)
    val, grad, var, gvar = level(grid.x, grid.t)
    return SolutionEstimate(
        grid,
        EstimateWithError(val, Ns[-1], np.sqrt(var)),
        EstimateWithError(grad, Ns[-1], np.sqrt(gvar)),
        used,
        None,
        {},
        "nested",
    )


# ---------------------------------------------------------------------------
# deterministic reference for the first correction term


def first_term_quadrature(source: InitialData, x, t: float, n_time: int = 32, n_herm: int = 20, coupling: float = 1.0):
    """``w (.) (u0 . du0)`` at one point by Gauss-Legendre x Gauss-Hermite.

    Exact-mode data only.  Returns the value (d,) and, by central
    differences of the same rule, the gradient (d, d).
    """
    if source.mode != "exact":
        raise IterationError("the quadrature reference needs exact u0 leaves")
    x = np.asarray(x, dtype=float)
    d = source.d
    gx, gw = np.polynomial.legendre.leggauss(n_time)
    hx, hw = np.polynomial.hermite_e.hermegauss(n_herm)
    hw = hw / math.sqrt(2 * math.pi)
    grids = np.meshgrid(*([hx] * d), indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=-1)
    wts = np.prod(np.meshgrid(*([hw] * d), indexing="ij"), axis=0).reshape(-1)
    s = 0.5 * t * (gx + 1.0)
    sw = 0.5 * t * gw

    def value(xx):
        y = xx[None, None, :] + nodes[None, :, :] * np.sqrt(t - s)[:, None, None]
        ss = np.broadcast_to(s[:, None], y.shape[:-1])
        F = convective(source.exact_value(y, ss), source.exact_grad(y, ss))
        return coupling * np.einsum("sqi,s,q->i", F, sw, wts)

    h = 1e-4
    grad = np.empty((d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        grad[:, k] = (value(x + e) - value(x - e)) / (2 * h)
    return value(x), grad


def picard_quadrature(source: InitialData, n: int, x, t, n_time: int = 16, n_herm: int = 12, coupling: float = 1.0):
    """Deterministic ``u_n`` and ``du_n`` by recursive tensor quadrature.

    Cost grows like ``(n_time * n_herm^d)^n``; intended for ``d = 1`` and
    ``n <= 2``.  The gradient uses the gap substitution ``t - s = t v^2``,
    which removes the ``(t - s)^{-1/2}`` singularity.
    """
    if source.mode != "exact":
        raise IterationError("the quadrature reference needs exact u0 leaves")
    d = source.d
    gx, gw = np.polynomial.legendre.leggauss(n_time)
    v = 0.5 * (gx + 1.0)
    vw = 0.5 * gw
    hx, hw = np.polynomial.hermite_e.hermegauss(n_herm)
    hw = hw / math.sqrt(2 * math.pi)
    grids = np.meshgrid(*([hx] * d), indexing="ij")
    nodes = np.stack([g.reshape(-1) for g in grids], axis=-1)
    wts = np.prod(np.meshgrid(*([hw] * d), indexing="ij"), axis=0).reshape(-1)

    def level(k, X, T):
        u0, g0 = source.exact_value(X, T), source.exact_grad(X, T)
        if k == 0:
            return u0, g0
        T3 = T[:, None, None]
        # value: s = t v, gap t (1 - v)
        yv = X[:, None, None, :] + nodes[None, None] * np.sqrt(T3 * (1.0 - v)[None, :, None])[..., None]
        sv = np.broadcast_to(T3 * v[None, :, None], yv.shape[:-1])
        # gradient: gap t v^2
        yg = X[:, None, None, :] + nodes[None, None] * (np.sqrt(T3) * v[None, :, None])[..., None]
        sg = np.broadcast_to(T3 * (1.0 - v[None, :, None] ** 2), yg.shape[:-1])
        pts = np.concatenate([yv.reshape(-1, d), yg.reshape(-1, d)])
        ts = np.concatenate([sv.reshape(-1), sg.reshape(-1)])
        u, g = level(k - 1, pts, ts)
        F = coupling * convective(u, g)
        m = yv.shape[0] * yv.shape[1] * yv.shape[2]
        Fv = F[:m].reshape(yv.shape)
        Fg = F[m:].reshape(yg.shape)
        val = u0 + T[:, None] * np.einsum("ptqi,t,q->pi", Fv, vw, wts)
        grad = g0 + 2.0 * np.sqrt(T)[:, None, None] * np.einsum("ptqi,qk,t,q->pik", Fg, nodes, vw, wts)
        return val, grad

    X, T = _as_points(x, t, d)
    return level(n, X, T)


# ---------------------------------------------------------------------------
# configuration entry points


def source_from_config(cfg) -> InitialData:
    return InitialData(cfg.d, cfg.fields_a(), cfg.fields_f(), cfg.u0, cfg.n_leaf)


def allocation_from_config(cfg, grid: Optional[SpaceTimeGrid] = None) -> Allocation:
    """Resolve the configured allocation method into concrete ``N(k)``."""
    from .allocation import ObjectiveParams, allocate_exact, allocate_paper, allocate_uniform

    method = cfg.alloc.method
    if method == "file":
        if cfg.alloc.entries is None:
            raise IterationError("alloc.method 'file' needs alloc.entries")
        return Allocation(cfg.n, dict(cfg.alloc.entries))
    if cfg.budget is None:
        raise IterationError(f"alloc.method {method!r} needs a budget")
    grid = grid or cfg.build_grid()
    B = cfg.alloc.B
    if B is None:
        exact = InitialData(cfg.d, cfg.fields_a(), cfg.fields_f(), "exact")
        try:
            B = triple_norm_estimate(grid, exact.exact_value(grid.x, grid.t), exact.exact_grad(grid.x, grid.t))
        except NotImplementedError:
            raise IterationError("no closed form for u0 on this grid; set alloc.B explicitly") from None
    p = ObjectiveParams(cfg.n, cfg.d, B, float(np.max(grid.t)), cfg.budget, cfg.alloc.with_t)
    fn = {"exact": allocate_exact, "paper": allocate_paper, "uniform": allocate_uniform}[method]
    return fn(p)


def iterate_solution(cfg, alloc: Optional[Allocation] = None) -> SolutionEstimate:
    """Term-expansion estimate of ``u_n`` for a :class:`RunConfig`."""
    if cfg.mode != "convective_only":
        raise IterationError(
            "the term expansion is defined for the convective form only; use iterate_nested for mode 'full'"
        )
    grid = cfg.build_grid()
    alloc = alloc or allocation_from_config(cfg, grid)
    return solve_terms(
        source_from_config(cfg), grid, cfg.n, alloc, RandomStream(cfg.seed), cfg.coupling,
        cfg.chunk_size, cfg.workers, cfg.per_point_streams, cfg.alloc.B,
    )


def iterate_nested(cfg) -> SolutionEstimate:
    """Nested baseline for a :class:`RunConfig`; needs ``nested: [N(0), ..., N(L)]``."""
    if cfg.nested is None:
        raise IterationError("iterate_nested needs the 'nested' sample counts")
    rp = None
    if cfg.mode == "full":
        if cfg.riesz is None:
            raise IterationError("mode 'full' needs a riesz block")
        rp = RieszParams(cfg.riesz.eps, cfg.riesz.R, cfg.riesz.N, cfg.seed)
    return solve_nested(source_from_config(cfg), cfg.build_grid(), cfg.nested, RandomStream(cfg.seed),
                        cfg.coupling, cfg.mode, rp)
