"""Gauss-Legendre rules, angular (sphere) rules and angular moments."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, UnsupportedOrderError

MAX_ORDER = 128


@dataclass(frozen=True)
class GaussRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self):
        return len(self.nodes)

    def mapped(self, lo, hi):
        """Nodes and weights transported affinely onto ``[lo, hi]``."""
        half = 0.5 * (hi - lo)
        return lo + half * (self.nodes + 1.0), half * self.weights


def _legendre_and_derivative(n, x):
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(1, n):
        p_prev, p = p, ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on ``[-1, 1]``.

    Roots of ``P_n`` are found by Newton iteration from the Chebyshev-like
    initial guess; iteration stops once every Newton correction is below
    1e-14 (plus a couple of polishing sweeps).
    """
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_ORDER:
        raise UnsupportedOrderError(f"Gauss-Legendre order must be in [1, {MAX_ORDER}], got {n}")
    n = int(n)
    if n == 1:
        return GaussRule(np.array([0.0]), np.array([2.0]))
    m = (n + 1) // 2
    i = np.arange(1, m + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    polish = 0
    for _ in range(100):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-14:
            polish += 1
            if polish >= 2:
                break
    p, dp = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    # x holds the positive half in decreasing order; mirror for the full rule.
    nodes = np.concatenate([-x, x[::-1][n % 2:]])
    weights = np.concatenate([w, w[::-1][n % 2:]])
    if n % 2:
        nodes[m - 1] = 0.0
    return GaussRule(nodes, weights)


@dataclass(frozen=True)
class SphereRule:
    """Angular quadrature on ``S^{d-1}`` (``d=1``: slab cosines ``mu``).

    ``directions`` has shape ``(N_S, 1)`` for the slab and ``(N_S, 3)`` in
    three dimensions; ``mu``/``phi`` hold the polar parametrization.
    """

    dim: int
    directions: np.ndarray
    weights: np.ndarray
    mu: np.ndarray
    phi: np.ndarray

    @property
    def size(self):
        return len(self.weights)

    @property
    def surface(self):
        return 2.0 if self.dim == 1 else 4.0 * np.pi


def directions_from_polar(mu, phi):
    s = np.sqrt(np.clip(1.0 - mu * mu, 0.0, None))
    return np.stack([s * np.cos(phi), s * np.sin(phi), mu], axis=-1)


def sphere_rule(d, n_mu=10, n_phi=10):
    """Tensor rule: Gauss-Legendre in ``mu = cos(theta)`` times equal-weight azimuths."""
    if d not in (1, 3):
        raise ContractViolation(f"spatial dimension must be 1 or 3, got {d}")
    g = gauss_legendre(n_mu)
    if d == 1:
        return SphereRule(1, g.nodes[:, None].copy(), g.weights.copy(), g.nodes.copy(), np.zeros(n_mu))
    if n_phi < 1:
        raise UnsupportedOrderError("n_phi must be >= 1")
    phi1 = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    mu = np.repeat(g.nodes, n_phi)
    phi = np.tile(phi1, n_mu)
    w = np.repeat(g.weights, n_phi) * (2.0 * np.pi / n_phi)
    return SphereRule(3, directions_from_polar(mu, phi), w, mu, phi)


def scattering_sum(kernel, u_vals, rule, omega, nu=None, nu_nodes=None):
    """Quadrature value of ``int Phi(omega, omega', nu, nu') u(omega', nu') d omega' d nu'``.

    ``u_vals`` is aligned with the rule's directions (and with ``nu_nodes``
    when a frequency rule is folded in; ``rule.weights`` then must already
    carry the frequency weights). ``omega`` may be a single direction or a
    batch ``(N, dim)``, in which case ``u_vals`` is ``(N, N_S)``.
    """
    u_vals = np.asarray(u_vals, dtype=float)
    if u_vals.shape[-1] != rule.size:
        raise ContractViolation(
            f"u_vals has {u_vals.shape[-1]} entries, rule has {rule.size} nodes"
        )
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    nu_arr = None if nu is None else np.broadcast_to(np.asarray(nu, dtype=float), (len(omega),))
    phi = kernel(omega, rule.directions, nu_arr, nu_nodes)  # (N, N_S)
    out = np.sum(phi * rule.weights * u_vals, axis=-1)
    return out if out.shape != (1,) or u_vals.ndim > 1 else out[0]


def incident_radiation(u, rule, *args):
    """``G = sum_i w_i u(..., omega_i, ...)``.

    ``u`` is either an array of intensities aligned with the rule (last
    axis) or a callable ``u(*args, omega)`` taking a ``(N_S, dim)`` block of
    directions.
    """
    vals = _angular_values(u, rule, args)
    return np.sum(vals * rule.weights, axis=-1)


def heat_flux(u, rule, *args):
    """``F = sum_i w_i u(..., omega_i, ...) omega_i`` (a ``d``-vector)."""
    vals = _angular_values(u, rule, args)
    return np.tensordot(vals * rule.weights, rule.directions, axes=([-1], [0]))


def _angular_values(u, rule, args):
    if callable(u):
        return np.asarray(u(*args, rule.directions), dtype=float)
    vals = np.asarray(u, dtype=float)
    if vals.shape[-1] != rule.size:
        raise ContractViolation("intensity values not aligned with rule nodes")
    return vals
