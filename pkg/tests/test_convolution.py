import math

import numpy as np
import pytest
from scipy import integrate

from picardmc.convolution import (
    TermKernelSpec,
    change_of_variables,
    estimate_I,
    estimate_J,
    estimate_K,
    inverse_change_of_variables,
    quadrature_oracle,
    variance_bound,
)
from picardmc.fields import TestField
from picardmc.sampling import DomainError, gaussian_block_sample, uniform_simplex_sample
from picardmc.streams import RandomStream


def shifted_linear(x0, k=0):
    """Callable h(y, s) = y_k - x0_k at the end of the chain."""
    return lambda y, s: y[..., -1, k] - x0[k]


def test_I_of_constant_is_exact():
    for m, t in [(1, 0.7), (2, 1.3), (3, 2.0)]:
        est = estimate_I(TestField.constant(1.0, 2), m, np.zeros(2), t, 100, RandomStream(m))
        assert est.value == pytest.approx(t**m / math.factorial(m), rel=1e-12)
        assert est.stderr == pytest.approx(0.0, abs=1e-12)


def test_J1_linear_is_minus_t(within):
    x = np.array([0.3, -0.4])
    est = estimate_J(shifted_linear(x), TermKernelSpec(0, 1, (0,)), x, 1.5, 200000, RandomStream(0))
    within(est, -1.5)


def test_J1_by_direct_integration():
    # J_1[h](x, t) = int_0^t int (x - y)/(t - s) w_{t-s}(x - y) h(y) dy ds with h(y) = y - x
    x, t = 0.2, 0.9

    def inner(y, s):
        g = t - s
        return (x - y) / g * math.exp(-((x - y) ** 2) / (2 * g)) / math.sqrt(2 * math.pi * g) * (y - x)

    val, _ = integrate.dblquad(inner, 0.0, t, lambda s: x - 12, lambda s: x + 12, epsabs=1e-10)
    assert val == pytest.approx(-t, abs=1e-6)


def test_mixed_chain_matches_oracle():
    f = TestField.gaussian_bump(1, 1.0, 0.8, [0.3])
    for spec in [TermKernelSpec(1, 1, (0,)), TermKernelSpec(1, 1, (0,), order=("grad", "plain")),
                 TermKernelSpec(0, 2, (0, 0)), TermKernelSpec(2, 0)]:
        ref = quadrature_oracle(f, spec, np.array([0.1]), 0.8)
        est = estimate_K(f, spec, np.array([0.1]), 0.8, 200000, RandomStream(11))
        assert abs(est.value - ref) <= 4 * est.stderr + 1e-4, (spec, est, ref)


def test_oracle_on_known_values():
    assert quadrature_oracle(TestField.constant(1.0, 1), TermKernelSpec(2, 0), np.zeros(1), 1.2) == pytest.approx(0.72)
    x = np.array([0.5])
    ref = quadrature_oracle(shifted_linear(x), TermKernelSpec(0, 1, (0,)), x, 0.6)
    assert ref == pytest.approx(-0.6, rel=1e-8)


def test_time_dependent_plain_chain(within):
    # I_2[s] = int_S s2 t^2 ds  ->  t^3 / 6
    h = lambda y, s: s[..., -1]
    est = estimate_I(h, 2, np.zeros(1), 1.0, 100000, RandomStream(5))
    within(est, 1 / 6)


def test_change_of_variables_roundtrip():
    st = RandomStream(9)
    z = gaussian_block_sample(3, 2, st.child(0), size=50)
    tau = uniform_simplex_sample(3, st.child(1), 50)
    x, t = np.array([0.1, 0.2]), 1.7
    path = change_of_variables(x, t, z, tau)
    z2, tau2 = inverse_change_of_variables(x, t, path.y, path.s)
    np.testing.assert_allclose(z2, z.z, atol=1e-10)
    np.testing.assert_allclose(tau2, tau.coords, atol=1e-12)


def test_variance_bound_holds_empirically():
    f = TestField.gaussian_bump(2, 1.0, 1.0, [0.0, 0.0])
    for spec in [TermKernelSpec(2, 0), TermKernelSpec(0, 2, (0, 1)), TermKernelSpec(1, 1, (1,))]:
        est = estimate_K(f, spec, np.zeros(2), 0.9, 20000, RandomStream(3))
        sample_var = est.stderr**2
        assert sample_var <= est.variance_bound
        assert est.variance_bound == variance_bound(spec, 0.9, 1.0, 20000)
        assert sample_var <= variance_bound(spec, 0.9, 1.0, 20000, rough=True)


def test_workers_do_not_change_result():
    f = TestField.gaussian_bump(2, 1.0, 1.0, [0.0, 0.0])
    spec = TermKernelSpec(1, 1, (1,))
    a = estimate_K(f, spec, np.zeros(2), 1.0, 20000, RandomStream(4), chunk_size=1000, workers=1)
    b = estimate_K(f, spec, np.zeros(2), 1.0, 20000, RandomStream(4), chunk_size=1000, workers=4)
    assert a.value == b.value and a.stderr == b.stderr


def test_spec_validation():
    with pytest.raises(ValueError):
        TermKernelSpec(0, 0)
    with pytest.raises(ValueError):
        TermKernelSpec(0, 2, (0,))
    with pytest.raises(ValueError):
        estimate_K(TestField.constant(1.0, 1), TermKernelSpec(0, 1, (3,)), np.zeros(1), 1.0, 10, RandomStream(0))
    with pytest.raises(DomainError):
        estimate_I(TestField.constant(1.0, 1), 1, np.zeros(1), 0.0, 10, RandomStream(0))
    with pytest.raises(NotImplementedError):
        quadrature_oracle(TestField.constant(1.0, 3), TermKernelSpec(1, 0), np.zeros(3), 1.0)
