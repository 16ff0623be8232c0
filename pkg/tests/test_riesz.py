import numpy as np
import pytest

from picardmc.fields import TestField
from picardmc.riesz import (
    RieszParams,
    bilinear_B,
    default_outer_radius,
    fd_gradient,
    hw_symbol,
    pressure_gradient_mc,
    riesz_pair_mc,
    riesz_quadrature,
    riesz_truncated_mc,
)
from picardmc.sampling import DomainError
from picardmc.streams import RandomStream


def bump(center, sigma=0.7):
    c = np.asarray(center, dtype=float)
    return lambda p: np.exp(-np.sum((np.asarray(p) - c) ** 2, axis=-1) / (2 * sigma**2))


def test_hw_symbol_is_projection():
    P = hw_symbol([1.0, 2.0, -0.5]).matrix
    np.testing.assert_allclose(P @ P, P, atol=1e-14)
    np.testing.assert_allclose(P @ np.array([1.0, 2.0, -0.5]), 0.0, atol=1e-14)
    np.testing.assert_allclose(P, P.T)
    assert np.trace(P) == pytest.approx(2.0)
    with pytest.raises(DomainError):
        hw_symbol([0.0, 0.0, 0.0])


def test_even_integrand_gives_zero():
    est = riesz_truncated_mc(bump([0, 0, 0]), 0, np.zeros(3), 0.01, 10.0, 1000, RandomStream(0))
    assert est.value == 0.0


def test_single_riesz_matches_quadrature():
    f = bump([0.5, 0.0, 0.0])
    ref = riesz_quadrature(f, 0, np.zeros(3), 0.01, 10.0, n_r=48, n_ang=24)
    est = riesz_truncated_mc(f, 0, np.zeros(3), 0.01, 10.0, 200000, RandomStream(1))
    assert abs(est.value - ref) <= 4 * est.stderr
    assert abs(ref) > 0.05


def test_truncation_is_stable():
    f = bump([0.5, 0.0, 0.0])
    a = riesz_quadrature(f, 0, np.zeros(3), 1e-3, 10.0, n_r=48, n_ang=24)
    b = riesz_quadrature(f, 0, np.zeros(3), 1e-4, 20.0, n_r=64, n_ang=24)
    assert a == pytest.approx(b, rel=1e-3)


def test_default_outer_radius():
    f = TestField.gaussian_bump(3, 1.0, 0.5, [0, 0, 0])
    assert default_outer_radius(f) == pytest.approx(10 * f.support_radius())
    est = riesz_truncated_mc(f, 1, np.zeros(3), 0.01, None, 100, RandomStream(2))
    assert np.isfinite(est.value)


def test_pair_riesz_of_even_shift():
    f = bump([0.4, 0.4, 0.0])
    est = riesz_pair_mc(f, 0, 1, np.zeros(3), 0.05, 8.0, 20000, RandomStream(3))
    assert np.isfinite(est.value) and est.stderr > 0


def test_convective_rotation():
    u = lambda p: np.stack([p[..., 1], -p[..., 0], np.zeros(p.shape[:-1])], axis=-1)
    pts = np.array([[0.3, -0.7, 1.0], [2.0, 1.0, 0.0]])
    out = bilinear_B(u, pts)
    np.testing.assert_allclose(out, np.stack([-pts[:, 0], -pts[:, 1], np.zeros(2)], axis=-1), atol=1e-8)


def test_fd_gradient_layout():
    u = lambda p: np.stack([p[..., 0] * p[..., 1], p[..., 2] ** 2, p[..., 0]], axis=-1)
    g = fd_gradient(u, np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(g, [[2, 1, 0], [0, 0, 6], [1, 0, 0]], atol=1e-6)


def test_full_mode_adds_pressure():
    u = lambda p: np.stack([np.exp(-np.sum(p**2, axis=-1))] * 3, axis=-1)
    params = RieszParams(0.05, 6.0, 2000, seed=4)
    out = bilinear_B(u, np.array([[0.2, 0.0, 0.0]]), mode="full", riesz_params=params)
    assert len(out) == 1 and np.all(np.isfinite(out[0].value))
    p = pressure_gradient_mc(u, None, np.array([0.2, 0.0, 0.0]), params)
    np.testing.assert_allclose(out[0].stderr, p.stderr)
    with pytest.raises(ValueError):
        bilinear_B(u, np.zeros((1, 3)), mode="full")
    with pytest.raises(ValueError):
        bilinear_B(u, np.zeros((1, 3)), mode="other")


def test_params_validation():
    with pytest.raises(DomainError):
        RieszParams(1.0, 0.5, 10)
    with pytest.raises(ValueError):
        RieszParams(0.1, 1.0, 0)
