"""A-posteriori bounds on the generalization error from training errors and point counts.

The Hardy-Krause variations entering the bounds are not computable here;
they are inputs (default 1), so the bound values are only as rigorous as
those constants.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigurationError
from .quadrature import gauss_legendre, sphere_rule


@dataclass
class BoundInputs:
    """Training errors, point counts and problem constants for the bounds.

    ``v_hk_*`` are Hardy-Krause variations of the squared residuals and
    ``c_bar`` the quadrature constant; for the time-dependent bound
    ``C* = max(v_hk_tb, v_hk_sb, v_hk_int, c_bar)``.
    """

    e_sb: float
    e_int: float
    n_sb: int
    n_int: int
    n_s: int
    s: int
    d: int
    s_d: float
    psi_sup: float
    e_tb: float = 0.0
    n_tb: int = 1
    time_horizon: float = 0.0
    speed: float = 1.0
    sigma_sup: float = 0.0
    v_hk_tb: float = 1.0
    v_hk_sb: float = 1.0
    v_hk_int: float = 1.0
    c_bar: float = 1.0
    k_min: float = None
    sigma_min: float = None
    sigma_max: float = None
    c_eps: float = None

    def __post_init__(self):
        for name, v in asdict(self).items():
            if v is not None and (not np.isfinite(v) or v < 0):
                raise ConfigurationError(f"bound input {name} must be finite and >= 0, got {v}")
        if min(self.n_sb, self.n_int, self.n_s, self.n_tb) < 1:
            raise ConfigurationError("point counts must be >= 1")
        if self.s_d <= 0:
            raise ConfigurationError("s_d must be positive")


@dataclass
class BoundValue:
    total: float
    training_part: float
    quadrature_part: float
    constant: float
    applicable: bool = True
    kappa: float = None
    message: str = ""

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=float)


def c_hat(sigma_sup, psi_sup, s_d):
    return 2.0 + 2.0 * (sigma_sup + psi_sup) / s_d


def lemma1_constants(inp):
    """``(C_hat, C, C_star)`` of the time-dependent bound."""
    ch = c_hat(inp.sigma_sup, inp.psi_sup, inp.s_d)
    t, c = inp.time_horizon, inp.speed
    big_c = t + c * ch * t * t * np.exp(c * ch * t)
    c_star = max(inp.v_hk_tb, inp.v_hk_sb, inp.v_hk_int, inp.c_bar)
    return ch, big_c, c_star


def lemma1_bound(inp):
    """Bound on the squared generalization error of a time-dependent problem."""
    if inp.time_horizon <= 0:
        raise ConfigurationError("the time-dependent bound needs time_horizon > 0")
    _, big_c, c_star = lemma1_constants(inp)
    c, d = inp.speed, inp.d
    train = big_c * (inp.e_tb**2 + c * inp.e_sb**2 + c * inp.e_int**2)
    quad = big_c * c_star * (
        np.log(inp.n_tb) ** (2 * d) / inp.n_tb
        + c * np.log(inp.n_sb) ** (2 * d) / inp.n_sb
        + c * np.log(inp.n_int) ** (2 * d + 1) / inp.n_int
        + c * float(inp.n_s) ** (-2 * inp.s)
    )
    return BoundValue(train + quad, train, quad, big_c)


def check_assumption(inp):
    """``kappa = k_min + sigma_min - (sigma_max + ||Psi||) / s_d``; the steady bound needs kappa > 0."""
    if None in (inp.k_min, inp.sigma_min, inp.sigma_max):
        raise ConfigurationError("the steady bound needs k_min, sigma_min and sigma_max")
    return inp.k_min + inp.sigma_min - (inp.sigma_max + inp.psi_sup) / inp.s_d


def lemma2_constant(inp, kappa):
    c_eps = inp.c_eps
    if c_eps is None:
        eps = kappa / 8.0
        c_eps = 1.0 / (4.0 * eps)
    return max(
        2.0 / kappa,
        2.0 / kappa * inp.v_hk_sb,
        2.0 * c_eps / kappa * inp.v_hk_int,
        2.0 * c_eps / kappa * inp.c_bar * float(inp.n_s) ** (-2 * inp.s),
    )


def lemma2_bound(inp):
    """Bound on the squared generalization error of a steady problem.

    Returns a non-applicable :class:`BoundValue` (``total = inf``) when the
    coefficient assumption fails (``kappa <= 0``).
    """
    kappa = check_assumption(inp)
    if kappa <= 0:
        return BoundValue(np.inf, np.inf, np.inf, np.nan, applicable=False, kappa=kappa,
                          message=f"assumption violated: kappa = {kappa:.6g} <= 0")
    big_c = lemma2_constant(inp, kappa)
    d = inp.d
    train = big_c * (inp.e_sb**2 + inp.e_int**2)
    quad = big_c * (
        np.log(inp.n_sb) ** (2 * d - 1) / inp.n_sb
        + np.log(inp.n_int) ** (2 * d) / inp.n_int
        + float(inp.n_s) ** (-2 * inp.s)
    )
    return BoundValue(train + quad, train, quad, big_c, kappa=kappa)


def psi_sup(kernel, rule, frequency=None, n_samples=200, frequency_order=16, seed=0):
    """``max over (omega, nu)`` of ``int int Phi(omega, omega', nu, nu') d omega' d nu'``.

    Without a frequency interval only the angular integral is taken
    (frequency-coherent scattering).
    """
    rng = np.random.default_rng(seed)
    if rule.dim == 1:
        omega = np.linspace(-1.0, 1.0, n_samples)[:, None]
    else:
        v = rng.normal(size=(n_samples, 3))
        omega = np.vstack([v / np.linalg.norm(v, axis=1, keepdims=True), rule.directions])
    n = len(omega)
    if frequency is None:
        nu = np.zeros(n)
        vals = kernel(omega, rule.directions, nu, np.zeros((n, rule.size))) @ rule.weights
        return float(np.max(vals))
    lo, hi = frequency
    nu = lo + (hi - lo) * rng.random(n)
    g_nodes, g_w = gauss_legendre(frequency_order).mapped(lo, hi)
    vals = np.zeros(n)
    for nn, wn in zip(g_nodes, g_w):
        vals += wn * (kernel(omega, rule.directions, nu, np.full((n, rule.size), nn)) @ rule.weights)
    return float(np.max(vals))


def kernel_symmetry_error(kernel, dim, n_pairs=1000, frequency=None, seed=0):
    """Max ``|Phi(w, w', nu, nu') - Phi(w', w, nu', nu)|`` over random pairs."""
    rng = np.random.default_rng(seed)
    if dim == 1:
        a = rng.uniform(-1, 1, (n_pairs, 1))
        b = rng.uniform(-1, 1, (n_pairs, 1))
    else:
        a = rng.normal(size=(n_pairs, 3))
        b = rng.normal(size=(n_pairs, 3))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
    lo, hi = frequency if frequency is not None else (0.0, 0.0)
    na = lo + (hi - lo) * rng.random(n_pairs)
    nb = lo + (hi - lo) * rng.random(n_pairs)
    err = 0.0
    for i in range(n_pairs):
        f1 = kernel(a[i:i + 1], b[i:i + 1], na[i:i + 1], nb[i:i + 1, None])[0, 0]
        f2 = kernel(b[i:i + 1], a[i:i + 1], nb[i:i + 1], na[i:i + 1, None])[0, 0]
        err = max(err, abs(f1 - f2))
    return err


def tensor_grid(domain, n_space=8, n_mu=10, n_phi=10):
    """Gauss-Legendre points in space times a sphere rule (steady, monochromatic box domains)."""
    if not domain.steady or domain.polychromatic or domain.shell is not None:
        raise ConfigurationError("the tensor grid supports steady monochromatic box domains")
    d = domain.spatial_dim
    axes, wts = [], []
    for lo, hi in zip(domain.box_lower, domain.box_upper):
        nodes, w = gauss_legendre(n_space).mapped(lo, hi)
        axes.append(nodes)
        wts.append(w)
    mesh = np.meshgrid(*axes, indexing="ij")
    xs = np.stack([m.ravel() for m in mesh], axis=1)
    wx = np.ones(len(xs))
    for w, idx in zip(wts, np.meshgrid(*[np.arange(n_space)] * d, indexing="ij")):
        wx *= w[idx.ravel()]
    rule = sphere_rule(d, n_mu, n_phi)
    x = np.repeat(xs, rule.size, axis=0)
    omega = np.tile(rule.directions, (len(xs), 1))
    w = np.outer(wx, rule.weights).ravel()
    return x, omega, w


def empirical_generalization_error(u, oracle, domain, n_space=8, n_mu=10, n_phi=10, relative=False):
    """L2 distance between two fields over ``D x S`` on a tensor quadrature grid.

    ``u`` and ``oracle`` expose ``value(t, x, omega, nu)``.
    """
    x, omega, w = tensor_grid(domain, n_space, n_mu, n_phi)
    zeros = np.zeros(len(x))
    a = u.value(zeros, x, omega, zeros)
    b = oracle.value(zeros, x, omega, zeros)
    err = np.sqrt(np.sum(w * (a - b) ** 2))
    if relative:
        return float(err / np.sqrt(np.sum(w * b * b)))
    return float(err)
