"""Residual routes agree, loss gradients are exact, closed-form solutions give zero residual."""

import numpy as np
import pytest

from rtpinn.errors import ConfigurationError, ContractViolation
from rtpinn.network import init_network
from rtpinn.problems import cube_poly_problem, get_problem, inverse_problem_fixture, shell_time_problem
from rtpinn.quadrature import sphere_rule
from rtpinn.residuals import (AbsorptionNetwork, LossAssembler, LossConfig, NetworkField, boundary_residual,
                              data_residual, incident_radiation_of, interior_residual, softplus, total_loss)
from rtpinn.sampling import build_training_sets, data_points


def _setup(name, n_int=12, n_sb=8, n_tb=0, widths=(8,), **params):
    p = get_problem(name, **params) if name != "inverse-cube" else inverse_problem_fixture()[0]
    sets = build_training_sets(p.domain, n_int, n_sb, n_tb)
    rule = sphere_rule(p.domain.spatial_dim, 4, 4)
    net = init_network([p.domain.input_dim, *widths, 1], seed=3)
    return p, sets, rule, net


def _fd_check(asm, theta, idx, h=1e-6, rtol=1e-5):
    _, grad = asm(theta)
    for i in idx:
        e = np.zeros_like(theta)
        e[i] = h
        fd = (asm(theta + e, need_grad=False)[0].total - asm(theta - e, need_grad=False)[0].total) / (2 * h)
        assert abs(grad[i] - fd) <= rtol * max(abs(fd), 1e-3 * np.max(np.abs(grad))), (i, grad[i], fd)


@pytest.mark.parametrize("name,params,n_tb", [
    ("slab1d", {}, 0),
    ("cube3d-mono", {}, 0),
    ("cube3d-poly", {"sigma": 0.5}, 0),
    ("shell-time", {}, 6),
])
def test_forward_gradient_matches_finite_differences(name, params, n_tb):
    p, sets, rule, net = _setup(name, n_tb=n_tb, **params)
    asm = LossAssembler(p, sets, rule, LossConfig(lam=0.7, lam_reg=1e-3), net.widths)
    idx = np.random.default_rng(0).choice(net.n_params, 12, replace=False)
    _fd_check(asm, net.theta, idx)


def test_inverse_gradient_matches_finite_differences():
    p, measured, _ = inverse_problem_fixture()
    sets = build_training_sets(p.domain, 10, 8)
    sets.data = data_points(p.domain, 6, seed=1)
    rule = sphere_rule(3, 4, 4)
    u = init_network([5, 6, 1], seed=0)
    k = init_network([3, 5, 1], seed=1)
    asm = LossAssembler(p, sets, rule, LossConfig(lam_k=0.1, k_boundary=2.0), u.widths, k.widths,
                        mode="inverse", measured=measured)
    theta = np.concatenate([u.theta, k.theta])
    rep, _ = asm(theta)
    assert rep.data > 0 and rep.tikhonov > 0 and rep.k_boundary > 0
    _fd_check(asm, theta, range(len(theta)))


def test_l1_penalty_value_and_gradient():
    p, sets, rule, net = _setup("slab1d")
    asm0 = LossAssembler(p, sets, rule, LossConfig(), net.widths)
    asm1 = LossAssembler(p, sets, rule, LossConfig(lam_reg=0.01, q=1), net.widths)
    r0, g0 = asm0(net.theta)
    r1, g1 = asm1(net.theta)
    mask = net.weight_mask()
    assert r1.regularization == pytest.approx(0.01 * np.abs(net.theta[mask]).sum(), rel=1e-14)
    np.testing.assert_allclose((g1 - g0)[mask], 0.01 * np.sign(net.theta[mask]), rtol=1e-10)
    assert np.all((g1 - g0)[~mask] == 0)


@pytest.mark.parametrize("name,params,n_tb", [
    ("slab1d", {}, 0),
    ("cube3d-poly", {"sigma": 0.5}, 0),
    ("shell-time", {}, 6),
])
def test_assembler_matches_pointwise_route(name, params, n_tb):
    p, sets, rule, net = _setup(name, n_tb=n_tb, **params)
    asm = LossAssembler(p, sets, rule, LossConfig(), net.widths)
    res = asm.residuals(net.theta)
    s = sets.interior
    direct = interior_residual(net, p, rule, s.t, s.x, s.omega, s.nu) / p.scale(s.nu)
    np.testing.assert_allclose(res["int"], direct, rtol=1e-10, atol=1e-12)
    b = sets.spatial_boundary
    direct_b = boundary_residual(net, p, b.t, b.x, b.omega, b.nu) / p.scale(b.nu)
    np.testing.assert_allclose(res["sb"], direct_b, rtol=1e-10, atol=1e-12)
    if n_tb:
        tb = sets.temporal_boundary
        direct_t = boundary_residual(net, p, tb.t, tb.x, tb.omega, tb.nu, kind="temporal") / p.scale(tb.nu)
        np.testing.assert_allclose(res["tb"], direct_t, rtol=1e-10, atol=1e-12)
    rep, _ = asm(net.theta)
    assert rep.interior == pytest.approx(np.mean(direct**2), rel=1e-10)


def test_transport_matches_finite_differences_in_physical_units():
    p = shell_time_problem()
    net = init_network([7, 6, 1], seed=2)
    fld = NetworkField(net, p)
    rng = np.random.default_rng(0)
    n = 5
    x = rng.uniform(-3, 3, (n, 3))
    om = rng.normal(size=(n, 3))
    om /= np.linalg.norm(om, axis=1, keepdims=True)
    t = rng.uniform(0.2, 0.8, n)
    nu = np.full(n, 3e16)
    h = 1e-6
    fd = (fld.value(t + h, x + h * om, om, nu) - fld.value(t - h, x - h * om, om, nu)) / (2 * h)
    np.testing.assert_allclose(fld.transport(t, x, om, nu), fd, rtol=1e-6)


def test_exact_inverse_solution_has_zero_residual():
    p, measured, oracles = inverse_problem_fixture()
    rule = sphere_rule(3, 10, 10)
    rng = np.random.default_rng(5)
    x = rng.random((100, 3))
    om = rng.normal(size=(100, 3))
    om /= np.linalg.norm(om, axis=1, keepdims=True)
    assert np.max(np.abs(interior_residual(oracles.intensity, p, rule, 0.0, x, om))) < 1e-8
    assert np.max(np.abs(data_residual(oracles.intensity, p, rule, measured, 0.0, x))) < 1e-8
    wrong = lambda xx, nu: oracles.absorption(xx, nu) + 0.1
    assert np.max(np.abs(interior_residual(oracles.intensity, p, rule, 0.0, x, om, absorption=wrong))) > 1e-4


def test_boundary_residual_contracts():
    p = get_problem("cube3d-mono")
    net = init_network([5, 4, 1])
    with pytest.raises(ContractViolation):
        boundary_residual(net, p, 0.0, np.array([[0.5, 0.5, 0.5]]), np.array([[1.0, 0, 0]]))
    with pytest.raises(ContractViolation):
        boundary_residual(net, p, 0.0, np.array([[0.0, 0.5, 0.5]]), np.array([[-1.0, 0, 0]]))
    r = boundary_residual(net, p, 0.0, np.array([[0.0, 0.5, 0.5]]), np.array([[1.0, 0, 0]]))
    assert r.shape == (1,)
    with pytest.raises(ContractViolation):
        boundary_residual(net, p, 0.0, np.array([[0.0, 0.5, 0.5]]), np.array([[1.0, 0, 0]]), kind="temporal")


def test_incident_radiation_of_constant_field():
    p = cube_poly_problem()

    class Const:
        def value(self, t, x, omega, nu):
            return np.full(len(x), 2.0)

        def transport(self, *a, **k):
            return np.zeros(len(a[1]))

    g = incident_radiation_of(Const(), sphere_rule(3, 10, 10), np.zeros(3), np.full((3, 3), 0.5), np.zeros(3))
    np.testing.assert_allclose(g, 8 * np.pi, rtol=1e-12)
    assert p.domain.polychromatic


def test_absorption_network_is_positive():
    p, _, _ = inverse_problem_fixture()
    k = AbsorptionNetwork(init_network([3, 4, 1], seed=0), p.domain)
    vals = k(np.random.default_rng(0).random((20, 3)))
    assert np.all(vals > 0)
    assert softplus(np.array([-800.0, 0.0, 800.0]))[1] == pytest.approx(np.log(2))
    assert np.isfinite(softplus(np.array([800.0]))).all()


def test_configuration_errors():
    p, sets, rule, net = _setup("slab1d")
    with pytest.raises(ConfigurationError):
        LossConfig(lam=-1)
    with pytest.raises(ConfigurationError):
        LossConfig(q=3)
    with pytest.raises(ConfigurationError):
        LossAssembler(p, sets, rule, LossConfig(), (3, 4, 1))
    with pytest.raises(ConfigurationError):
        LossAssembler(p, sets, rule, LossConfig(), net.widths, mode="inverse")
    sh = shell_time_problem()
    with pytest.raises(ConfigurationError):
        LossAssembler(sh, build_training_sets(sh.domain, 4, 4, 0), rule, LossConfig(), (7, 3, 1))


def test_total_loss_one_shot():
    p, sets, rule, net = _setup("cube3d-mono")
    rep, grad = total_loss(net, sets, p, rule, LossConfig(lam=0.3))
    rep2, grad2 = LossAssembler(p, sets, rule, LossConfig(lam=0.3), net.widths)(net.theta)
    assert rep.total == rep2.total and np.array_equal(grad, grad2)
    assert rep.total == pytest.approx(rep.spatial_boundary + 0.3 * rep.interior)
