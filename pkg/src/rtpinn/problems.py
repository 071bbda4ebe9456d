"""Benchmark radiative-transfer problems and their closed-form reference solutions.

Coefficient callables are vectorized over points: ``x`` is ``(N, d)``,
``omega`` is ``(N, 1)`` (slab cosine) or ``(N, 3)``, ``t`` and ``nu`` are
``(N,)``. Kernels take ``(omega (N, dim), omega' (M, dim), nu, nu')`` and
return an ``(N, M)`` block.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from .constants import BOLTZMANN_K, PLANCK_H, SPEED_OF_LIGHT, ev_to_kelvin
from .errors import ConfigurationError, DomainError
from .quadrature import gauss_legendre, sphere_rule
from .sampling import DomainDescriptor

PROBLEM_NAMES = ("slab1d", "cube3d-mono", "cube3d-poly", "shell-time", "inverse-cube")

SLAB_MOMENTS = (1.0, 1.98398, 1.50823, 0.70075, 0.23489, 0.05133, 0.00760, 0.00048)
CUBE_CENTER = np.array([0.5, 0.5, 0.5])
INVERSE_DIRECTION = np.ones(3) / np.sqrt(3.0)


def _zeros(x, *_):
    return np.zeros(len(x))


def isotropic_kernel(omega, nodes, nu=None, nu_nodes=None):
    return np.ones((len(omega), len(nodes)))


@dataclass
class AnalyticField:
    """Closed-form intensity with its transport derivative ``(1/c) u_t + omega . grad u``."""

    value: Callable
    transport: Callable


@dataclass
class OracleSet:
    radial_flux: Optional[Callable] = None
    incident_radiation: Optional[Callable] = None
    intensity: Optional[AnalyticField] = None
    absorption: Optional[Callable] = None
    planck: Optional[Callable] = None


@dataclass
class RteProblem:
    """Coefficients, data and geometry of one transport problem.

    ``output_offset``/``output_scale`` (functions of ``nu``) define the
    change of variables ``u = offset + scale * u_hat`` between the network
    output and the intensity; residuals used for training are divided by
    ``scale`` so that every frequency contributes on a comparable scale.
    """

    name: str
    domain: DomainDescriptor
    absorption: Callable
    scattering: Callable
    kernel: Callable
    source: Callable
    boundary: Callable
    initial: Optional[Callable] = None
    speed: float = np.inf
    coherent: bool = True
    has_scattering: bool = True
    output_offset: Optional[Callable] = None
    output_scale: Optional[Callable] = None
    oracles: OracleSet = field(default_factory=OracleSet)
    description: str = ""

    def __post_init__(self):
        if not self.domain.steady and self.initial is None:
            raise ConfigurationError(f"{self.name}: time-dependent problem needs an initial condition")
        err = kernel_normalization_error(self)
        if err > 1e-8:
            raise ConfigurationError(f"{self.name}: scattering kernel not normalized (error {err:.2e})")

    @property
    def surface(self):
        return 2.0 if self.domain.spatial_dim == 1 else 4.0 * np.pi

    @property
    def steady(self):
        return self.domain.steady

    def offset(self, nu):
        return np.zeros(len(nu)) if self.output_offset is None else self.output_offset(nu)

    def scale(self, nu):
        return np.ones(len(nu)) if self.output_scale is None else self.output_scale(nu)


def kernel_normalization_error(problem, n_mu=16, n_phi=16, n_nu=16):
    """Max deviation of ``(1/s_d) int int Phi d omega' d nu'`` from 1 over sample directions."""
    dom = problem.domain
    rule = sphere_rule(dom.spatial_dim, n_mu, n_phi)
    rng = np.random.default_rng(1234)
    if dom.spatial_dim == 1:
        omega = np.linspace(-0.95, 0.95, 7)[:, None]
    else:
        v = rng.normal(size=(7, 3))
        omega = v / np.linalg.norm(v, axis=1, keepdims=True)
    if dom.polychromatic:
        lo, hi = dom.frequency
        nu = lo + (hi - lo) * rng.random(len(omega))
    else:
        nu = np.zeros(len(omega))
    if problem.coherent or not dom.polychromatic:
        total = problem.kernel(omega, rule.directions, nu, np.broadcast_to(nu[:, None], (len(nu), rule.size))) @ rule.weights
    else:
        g_nodes, g_w = gauss_legendre(n_nu).mapped(*dom.frequency)
        total = np.zeros(len(omega))
        for nn, wn in zip(g_nodes, g_w):
            total += wn * (problem.kernel(omega, rule.directions, nu, np.full((len(nu), rule.size), nn)) @ rule.weights)
    return float(np.max(np.abs(total / problem.surface - 1.0)))


# ---------------------------------------------------------------------------
# slab


def legendre_table(mu, n_terms):
    """``P_0..P_{n_terms-1}`` at ``mu``, shape ``(len(mu), n_terms)``."""
    mu = np.asarray(mu, dtype=float)
    p = np.empty(mu.shape + (n_terms,))
    p[..., 0] = 1.0
    if n_terms > 1:
        p[..., 1] = mu
    for l in range(1, n_terms - 1):
        p[..., l + 1] = ((2 * l + 1) * mu * p[..., l] - l * p[..., l - 1]) / (l + 1)
    return p


def slab_kernel(mu, mu_nodes, nu=None, nu_nodes=None):
    d = np.asarray(SLAB_MOMENTS)
    a = legendre_table(np.asarray(mu)[:, 0], len(d)) * d
    b = legendre_table(np.asarray(mu_nodes)[:, 0], len(d))
    return a @ b.T


def slab_problem():
    """Steady monochromatic slab on [0, 1] with forward-peaked scattering ``sigma = x``."""
    dom = DomainDescriptor(1, (0.0,), (1.0,))

    def boundary(t, x, omega, nu):
        return np.where(x[:, 0] < 0.5, 1.0, 0.0)

    return RteProblem(
        name="slab1d",
        domain=dom,
        absorption=_zeros,
        scattering=lambda x, nu: x[:, 0].copy(),
        kernel=slab_kernel,
        source=lambda t, x, omega, nu: np.zeros(len(x)),
        boundary=boundary,
        description="1D slab, sigma(x)=x, k=0, Legendre kernel",
    )


# ---------------------------------------------------------------------------
# unit cube, monochromatic


def blackbody_profile(x):
    r = np.linalg.norm(np.atleast_2d(x) - CUBE_CENTER, axis=1)
    return np.maximum(0.5 - r, 0.0)


def cube_mono_problem():
    dom = DomainDescriptor(3, (0.0,) * 3, (1.0,) * 3)
    return RteProblem(
        name="cube3d-mono",
        domain=dom,
        absorption=lambda x, nu: blackbody_profile(x),
        scattering=lambda x, nu: np.ones(len(x)),
        kernel=isotropic_kernel,
        source=lambda t, x, omega, nu: blackbody_profile(x) ** 2,
        boundary=lambda t, x, omega, nu: np.zeros(len(x)),
        description="unit cube, central source f = k I_b with k = I_b, sigma = 1",
    )


# ---------------------------------------------------------------------------
# unit cube, polychromatic


def spectral_profile(nu):
    return np.exp(-np.asarray(nu, dtype=float) ** 2) / np.sqrt(np.pi)


def poly_source(x, nu):
    r = np.linalg.norm(np.atleast_2d(x) - CUBE_CENTER, axis=1)
    return np.where(r <= 0.5, np.sqrt(np.pi) * spectral_profile(nu) * (1.0 - 2.0 * r), 0.0)


def radial_flux_oracle(r, nu):
    """Radial heat flux of the spherically symmetric polychromatic source."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be non-negative")
    amp = 4.0 * np.pi**1.5 * spectral_profile(nu)
    inner = r / 3.0 - r * r / 2.0
    with np.errstate(divide="ignore"):
        outer = 1.0 / (96.0 * r * r)
    return amp * np.where(r <= 0.5, inner, outer)


def cube_poly_problem(sigma=0.0):
    """Zero-absorption polychromatic cube with frequency-coherent isotropic scattering.

    With ``sigma = 0`` (the default) and vacuum inflow the intensity inside
    the cube coincides with the free-space solution, so the radial flux
    oracle is exact.
    """
    dom = DomainDescriptor(3, (0.0,) * 3, (1.0,) * 3, frequency=(-6.0, 6.0))
    return RteProblem(
        name="cube3d-poly",
        domain=dom,
        absorption=_zeros,
        scattering=lambda x, nu: np.full(len(x), float(sigma)),
        kernel=isotropic_kernel,
        source=lambda t, x, omega, nu: poly_source(x, nu),
        boundary=lambda t, x, omega, nu: np.zeros(len(x)),
        has_scattering=sigma != 0,
        oracles=OracleSet(radial_flux=radial_flux_oracle),
        # scattering is frequency-coherent, so u carries the spectral shape of the source
        output_scale=lambda nu: np.sqrt(np.pi) * spectral_profile(nu),
        description=f"unit cube, frequency in [-6, 6], k=0, sigma={sigma}",
    )


# ---------------------------------------------------------------------------
# spherical shell, time dependent


def planck(temperature, nu):
    """Spectral radiance ``2 h nu^3 / c^2 / (exp(h nu / k_b T) - 1)`` (SI, ``T`` in kelvin)."""
    temperature = np.asarray(temperature, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(temperature <= 0) or np.any(nu <= 0):
        raise DomainError("Planck function needs T > 0 and nu > 0")
    x = PLANCK_H * nu / (BOLTZMANN_K * temperature)
    with np.errstate(over="ignore"):
        return 2.0 * PLANCK_H * nu**3 / SPEED_OF_LIGHT**2 / np.expm1(x)


def planck_ev(t_ev, nu):
    return planck(ev_to_kelvin(t_ev), nu)


def diffusion_oracle(t, r, nu, k_nu, t_s, t_m, r_i, speed=1.0, printed=False):
    """Incident radiation of the radially symmetric diffusion approximation.

    ``t_s``/``t_m`` are in eV. The default evaluates the exact solution of
    ``G_t / c - Delta G / (3k) = k (b_m - G)``; ``printed=True`` uses the
    variant with exponent ``-3k(r - R)`` on both complementary error
    functions, kept for comparison.
    """
    t, r, nu = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, r, nu)))
    if np.any(r < r_i):
        raise DomainError("radius must satisfy r >= R_i")
    if np.any(t < 0):
        raise DomainError("time must be non-negative")
    b_s = 4.0 * np.pi * planck_ev(t_s, nu)
    b_m = 4.0 * np.pi * planck_ev(t_m, nu)
    frac = diffusion_profile(speed * t, r - r_i, k_nu, printed)
    return b_m + (r_i / r) * (b_s - b_m) * frac


def diffusion_profile(tau, dist, k_nu, printed=False):
    """The ``F`` factor (in ``[0, 1]``) of the diffusion solution at ``tau = c t``, ``dist = r - R_i``."""
    tau, dist = np.broadcast_arrays(np.asarray(tau, dtype=float), np.asarray(dist, dtype=float))
    out = np.where(dist == 0, 1.0, 0.0)
    pos = tau > 0
    if not np.any(pos):
        return out
    tp, dp = tau[pos], dist[pos]
    a = np.sqrt(3.0 * k_nu / (4.0 * tp)) * dp
    b = np.sqrt(k_nu * tp)
    if printed:
        val = 0.5 * np.exp(-3.0 * k_nu * dp) * (special.erfc(a - b) + special.erfc(a + b))
    else:
        g = np.sqrt(3.0) * k_nu * dp
        # exp(g) erfc(a + b) overflows naively; erfcx keeps it in range.
        second = np.exp(g - (a + b) ** 2) * special.erfcx(a + b)
        val = 0.5 * (np.exp(-g) * special.erfc(a - b) + second)
    out[pos] = val
    return out


def shell_time_problem(k_nu=10.0, t_s=150.0, t_m=120.0, r_i=2.0, r_e=4.0, nu_range=(1e15, 1e18)):
    """Hot sphere in a cold absorbing medium; time rescaled to ``tau = c t`` in [0, 1].

    The network output is the normalized excess intensity
    ``(u - B(T_m)) / (B(T_s) - B(T_m))``.
    """
    dom = DomainDescriptor(3, (-r_e,) * 3, (r_e,) * 3, time_horizon=1.0, frequency=tuple(nu_range),
                           frequency_scale="log", shell=((0.0, 0.0, 0.0), r_i, r_e))
    b_m = lambda nu: planck_ev(t_m, nu)
    b_s = lambda nu: planck_ev(t_s, nu)
    mid = 0.5 * (r_i + r_e)

    def boundary(t, x, omega, nu):
        inner = np.linalg.norm(x, axis=1) < mid
        return np.where(inner, b_s(nu), b_m(nu))

    return RteProblem(
        name="shell-time",
        domain=dom,
        absorption=lambda x, nu: np.full(len(x), float(k_nu)),
        scattering=_zeros,
        kernel=isotropic_kernel,
        source=lambda t, x, omega, nu: k_nu * b_m(nu),
        boundary=boundary,
        initial=lambda x, omega, nu: b_m(nu),
        speed=1.0,
        has_scattering=False,
        output_offset=b_m,
        output_scale=lambda nu: b_s(nu) - b_m(nu),
        oracles=OracleSet(
            incident_radiation=lambda t, r, nu: diffusion_oracle(t, r, nu, k_nu, t_s, t_m, r_i),
            planck=planck,
        ),
        description=f"spherical shell R_i={r_i}, R_e={r_e}, k_nu={k_nu}, T_s={t_s} eV, T_m={t_m} eV",
    )


# ---------------------------------------------------------------------------
# inverse problem on the unit cube


def inverse_absorption(x):
    return np.prod(np.atleast_2d(x) ** 2, axis=1)


def inverse_incident_radiation(x):
    x = np.atleast_2d(x)
    return np.prod(x * (x - 1.0), axis=1)


def _inverse_angular(omega):
    c = omega @ INVERSE_DIRECTION
    return 3.0 / (16.0 * np.pi) * (1.0 + c * c)


def inverse_intensity(x, omega):
    return _inverse_angular(np.atleast_2d(omega)) * inverse_incident_radiation(x)


def _inverse_transport(x, omega):
    x = np.atleast_2d(x)
    q = x * (x - 1.0)
    grad = np.empty_like(x)
    for i in range(3):
        grad[:, i] = (2.0 * x[:, i] - 1.0) * np.prod(np.delete(q, i, axis=1), axis=1)
    return _inverse_angular(omega) * np.sum(omega * grad, axis=1)


INVERSE_SIGMA = 0.5
# isotropic intensity carrying the peak |G| = 1/64; sets the network output scale
INVERSE_SCALE = 1.0 / (64.0 * 4.0 * np.pi)


def inverse_source(x, omega):
    u = inverse_intensity(x, omega)
    g = inverse_incident_radiation(x)
    return _inverse_transport(x, omega) + inverse_absorption(x) * u + INVERSE_SIGMA * (u - g / (4.0 * np.pi))


def inverse_problem_fixture():
    """Synthetic inverse problem with known absorption, intensity and incident radiation.

    Returns ``(problem, measured_G, oracles)``; ``problem.absorption`` is
    the true coefficient (used for boundary matching and for checks).
    """
    dom = DomainDescriptor(3, (0.0,) * 3, (1.0,) * 3)
    exact = AnalyticField(
        value=lambda t, x, omega, nu: inverse_intensity(x, omega),
        transport=lambda t, x, omega, nu, speed=np.inf: _inverse_transport(x, omega),
    )
    oracles = OracleSet(
        incident_radiation=lambda t, x, nu: inverse_incident_radiation(x),
        intensity=exact,
        absorption=lambda x, nu: inverse_absorption(x),
    )
    problem = RteProblem(
        name="inverse-cube",
        domain=dom,
        absorption=lambda x, nu: inverse_absorption(x),
        scattering=lambda x, nu: np.full(len(x), INVERSE_SIGMA),
        kernel=isotropic_kernel,
        source=lambda t, x, omega, nu: inverse_source(x, omega),
        boundary=lambda t, x, omega, nu: inverse_intensity(x, omega),
        oracles=oracles,
        output_scale=lambda nu: np.full(len(nu), INVERSE_SCALE),
        description="unit cube, k = prod x_i^2, sigma = 0.5, isotropic kernel",
    )
    measured = lambda t, x, nu: inverse_incident_radiation(x)
    return problem, measured, oracles


def get_problem(name, **params):
    """Problem by CLI name; ``inverse-cube`` returns only the problem object."""
    if name == "slab1d":
        return slab_problem()
    if name == "cube3d-mono":
        return cube_mono_problem()
    if name == "cube3d-poly":
        return cube_poly_problem(**params)
    if name == "shell-time":
        return shell_time_problem(**params)
    if name == "inverse-cube":
        return inverse_problem_fixture()[0]
    raise ConfigurationError(f"unknown problem {name!r}; choose from {', '.join(PROBLEM_NAMES)}")
