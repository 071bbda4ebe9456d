"""Regression harness over the closed-form reference values and invariants."""

import numpy as np

from .bounds import BoundInputs, c_hat, check_assumption, psi_sup
from .network import init_network, param_count
from .problems import (diffusion_oracle, inverse_incident_radiation, inverse_problem_fixture, isotropic_kernel,
                       planck, planck_ev, radial_flux_oracle, slab_kernel)
from .quadrature import gauss_legendre, sphere_rule
from .residuals import data_residual, interior_residual
from .sobol import sobol_sequence


def _check(name, kind, value, expected, tol):
    value = float(value)
    return {"name": name, "kind": kind, "value": value, "expected": float(expected), "tol": tol,
            "passed": bool(abs(value - expected) <= tol)}


def run_oracle_suite():
    """Evaluate every reference check; returns a list of result records."""
    out = []
    out.append(_check("sobol (1, 3, 1) third point", "closed-form value", sobol_sequence(1, 3, 1)[2, 0], 0.25, 0))
    out.append(_check("sobol mean of x1*x2*x3, N=4096", "exact integral",
                      np.mean(np.prod(sobol_sequence(3, 4096), axis=1)), 0.125, 2e-3))
    g2 = gauss_legendre(2)
    out.append(_check("gauss-legendre n=2 node", "closed-form value", g2.nodes[1], 1 / np.sqrt(3), 1e-15))
    r = sphere_rule(3, 10, 10)
    out.append(_check("sphere rule weight sum", "closed-form value", r.weights.sum(), 4 * np.pi, 1e-10))
    out.append(_check("integral of (w.w')^2 over the sphere", "closed-form value",
                      np.sum(r.weights * (r.directions @ np.array([0.6, 0.0, 0.8])) ** 2), 4 * np.pi / 3, 1e-10))
    out.append(_check("parameter count of 8x24 slab network", "closed-form value",
                      param_count([2] + [24] * 8 + [1]), 4297, 0))
    out.append(_check("radial flux at r=0.5, nu=0", "closed-form value", radial_flux_oracle(0.5, 0.0), np.pi / 6,
                      1e-12))
    h = 1e-5
    rp, rm = 0.25 + h, 0.25 - h
    div = (rp**2 * radial_flux_oracle(rp, 0.0) - rm**2 * radial_flux_oracle(rm, 0.0)) / (2 * h) / 0.25**2
    out.append(_check("radial flux divergence equals 4 pi f at r=0.25", "invariant", div,
                      2 * np.pi, 1e-8))
    nu = 1e17
    out.append(_check("diffusion solution at r = R_i recovers b(T_s)", "invariant",
                      diffusion_oracle(0.7, 2.0, nu, 10.0, 150.0, 120.0, 2.0) / (4 * np.pi * planck_ev(150.0, nu)),
                      1.0, 1e-10))
    out.append(_check("diffusion solution at t -> 0 recovers b(T_m)", "invariant",
                      diffusion_oracle(1e-14, 3.0, nu, 10.0, 150.0, 120.0, 2.0) / (4 * np.pi * planck_ev(120.0, nu)),
                      1.0, 1e-10))
    out.append(_check("diffusion solution as r -> infinity recovers b(T_m)", "invariant",
                      diffusion_oracle(1.0, 1e3, nu, 10.0, 150.0, 120.0, 2.0) / (4 * np.pi * planck_ev(120.0, nu)),
                      1.0, 1e-10))
    t_k = 1e6
    nu_w = 50 * 1.380649e-23 * t_k / 6.62607015e-34
    wien = planck(t_k, nu_w) * np.exp(50.0) / (2 * 6.62607015e-34 * nu_w**3 / 299792458.0**2)
    out.append(_check("Planck Wien limit at h nu / k T = 50", "invariant", wien, 1.0, 1e-10))
    out.append(_check("psi for the slab kernel", "closed-form value", psi_sup(slab_kernel, sphere_rule(1, 10)), 2.0,
                      1e-10))
    out.append(_check("C_hat for sigma=1, psi=4 pi, s_d=4 pi", "closed-form value",
                      c_hat(1.0, 4 * np.pi, 4 * np.pi), 4.1592, 1e-4))
    kappa = check_assumption(BoundInputs(e_sb=0, e_int=0, n_sb=1, n_int=1, n_s=1, s=1, d=3, s_d=4 * np.pi,
                                         psi_sup=psi_sup(isotropic_kernel, r), k_min=0.0, sigma_min=0.5,
                                         sigma_max=0.5))
    out.append(_check("inverse fixture kappa", "closed-form value", kappa, 0.5 - (0.5 + 4 * np.pi) / (4 * np.pi),
                      1e-12))
    problem, measured, oracles = inverse_problem_fixture()
    rng = np.random.default_rng(7)
    x = rng.random((100, 3))
    v = rng.normal(size=(100, 3))
    om = v / np.linalg.norm(v, axis=1, keepdims=True)
    res = interior_residual(oracles.intensity, problem, r, 0.0, x, om)
    out.append(_check("inverse fixture: interior residual of the exact solution", "invariant",
                      np.max(np.abs(res)), 0.0, 1e-8))
    dres = data_residual(oracles.intensity, problem, r, measured, 0.0, x)
    out.append(_check("inverse fixture: G of the exact intensity", "invariant", np.max(np.abs(dres)), 0.0, 1e-8))
    out.append(_check("inverse fixture: G at the center", "closed-form value",
                      inverse_incident_radiation(np.full((1, 3), 0.5))[0], -1 / 64, 1e-15))
    net = init_network([3, 5, 1], seed=0)
    out.append(_check("network [3,5,1] parameter count", "closed-form value", net.n_params, 26, 0))
    return out
