"""Gauss-Legendre and sphere rules against closed-form moments and numpy's leggauss."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtpinn.errors import ContractViolation, UnsupportedOrderError
from rtpinn.quadrature import (gauss_legendre, heat_flux, incident_radiation, scattering_sum,
                               sphere_rule)


def _monomial_integral(k):
    return 0.0 if k % 2 else 2.0 / (k + 1)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8, 16, 32, 64])
def test_matches_numpy_leggauss(n):
    # numpy's weights lose accuracy beyond n ~ 64, so the top order is checked by moments below
    rule = gauss_legendre(n)
    x, w = np.polynomial.legendre.leggauss(n)
    np.testing.assert_allclose(rule.nodes, x, atol=1e-14)
    np.testing.assert_allclose(rule.weights, w, rtol=1e-11, atol=1e-15)


def test_order_128_even_moments():
    rule = gauss_legendre(128)
    for k in range(0, 256, 2):
        assert abs(np.sum(rule.weights * rule.nodes**k) - 2.0 / (k + 1)) < 1e-14


def test_two_point_rule_closed_form():
    rule = gauss_legendre(2)
    np.testing.assert_allclose(rule.nodes, [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
    np.testing.assert_allclose(rule.weights, [1.0, 1.0], atol=1e-15)


@given(n=st.integers(1, 32), data=st.data())
@settings(max_examples=60, deadline=None)
def test_exact_for_monomials_up_to_degree_2n_minus_1(n, data):
    k = data.draw(st.integers(0, 2 * n - 1))
    rule = gauss_legendre(n)
    exact = _monomial_integral(k)
    got = np.sum(rule.weights * rule.nodes**k)
    assert abs(got - exact) <= 1e-12 * max(1.0, abs(exact))


@given(n=st.integers(1, 128))
@settings(max_examples=40, deadline=None)
def test_nodes_sorted_symmetric_weights_positive(n):
    rule = gauss_legendre(n)
    assert np.all(np.diff(rule.nodes) > 0)
    np.testing.assert_allclose(rule.nodes, -rule.nodes[::-1], atol=1e-15)
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - 2.0) < 1e-13


@pytest.mark.parametrize("n", [0, 129, 2.5, -1])
def test_rejects_bad_order(n):
    with pytest.raises(UnsupportedOrderError):
        gauss_legendre(n)


def test_mapped_interval():
    nodes, weights = gauss_legendre(6).mapped(2.0, 5.0)
    assert abs(np.sum(weights * nodes**3) - (5.0**4 - 2.0**4) / 4) < 1e-11


def test_sphere_weight_sums():
    assert abs(sphere_rule(1, 10).weights.sum() - 2.0) < 1e-10
    assert abs(sphere_rule(3, 10, 10).weights.sum() - 4 * np.pi) < 1e-10
    assert sphere_rule(3, 10, 10).size == 100


def test_sphere_directions_unit_and_second_moment():
    rule = sphere_rule(3, 10, 10)
    np.testing.assert_allclose(np.linalg.norm(rule.directions, axis=1), 1.0, atol=1e-14)
    second = np.einsum("i,ij,ik->jk", rule.weights, rule.directions, rule.directions)
    np.testing.assert_allclose(second, 4 * np.pi / 3 * np.eye(3), atol=1e-10)
    np.testing.assert_allclose(rule.weights @ rule.directions, 0.0, atol=1e-12)


@given(v=st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 0.1))
@settings(max_examples=30, deadline=None)
def test_sphere_integral_of_squared_projection_rotation_invariant(v):
    w = np.asarray(v) / np.linalg.norm(v)
    rule = sphere_rule(3, 10, 10)
    assert abs(np.sum(rule.weights * (rule.directions @ w) ** 2) - 4 * np.pi / 3) < 1e-10


def test_sphere_rule_rejects_dimension_two():
    with pytest.raises(ContractViolation):
        sphere_rule(2)


def test_moments_of_linear_intensity():
    rule = sphere_rule(3, 10, 10)
    a = np.array([0.2, -0.4, 0.7])

    def u(omega):
        return 1.0 + omega @ a

    assert abs(incident_radiation(u, rule) - 4 * np.pi) < 1e-10
    np.testing.assert_allclose(heat_flux(u, rule), 4 * np.pi / 3 * a, atol=1e-10)


def test_scattering_sum_isotropic_is_mean_intensity():
    rule = sphere_rule(3, 6, 6)
    vals = np.cos(rule.directions[:, 2]) + 2.0

    def kernel(omega, nodes, nu=None, nu_nodes=None):
        return np.ones((len(omega), len(nodes)))

    got = scattering_sum(kernel, vals, rule, np.array([0.0, 0.0, 1.0]))
    assert abs(got - np.sum(rule.weights * vals)) < 1e-13
    with pytest.raises(ContractViolation):
        scattering_sum(kernel, vals[:-1], rule, np.array([0.0, 0.0, 1.0]))
