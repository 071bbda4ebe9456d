"""Training points for the interior, spatial boundary, initial time and data sets.

Every point is stored in physical coordinates (time ``t``, position ``x``,
direction ``omega``, frequency ``nu``); :meth:`DomainDescriptor.rescale`
maps them to the unit hypercube the network sees. Directions are unit
3-vectors in three dimensions and the cosine ``mu`` (shape ``(N, 1)``) for
the slab.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .quadrature import directions_from_polar
from .sobol import sobol_sequence

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class DomainDescriptor:
    spatial_dim: int
    lower: tuple
    upper: tuple
    time_horizon: float = 0.0
    frequency: tuple = None
    frequency_scale: str = "affine"
    shell: tuple = None  # (center, R_i, R_e) for spherical-shell geometry

    def __post_init__(self):
        if self.spatial_dim not in (1, 3):
            raise ConfigurationError("spatial_dim must be 1 or 3")
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != (self.spatial_dim,) or hi.shape != (self.spatial_dim,):
            raise ConfigurationError("box bounds must have one entry per spatial axis")
        if np.any(lo >= hi):
            raise ConfigurationError("box bounds need lower < upper on every axis")
        if self.time_horizon < 0:
            raise ConfigurationError("time horizon must be >= 0")
        if self.frequency is not None:
            f_lo, f_hi = self.frequency
            if f_lo > f_hi:
                raise ConfigurationError("frequency interval needs lo <= hi")
            if self.frequency_scale == "log" and f_lo <= 0:
                raise ConfigurationError("log frequency scaling needs a positive interval")
        if self.frequency_scale not in ("affine", "log"):
            raise ConfigurationError(f"unknown frequency scale {self.frequency_scale!r}")
        if self.shell is not None:
            _, r_i, r_e = self.shell
            if not 0 < r_i < r_e:
                raise ConfigurationError("shell radii need 0 < R_i < R_e")

    @property
    def steady(self):
        return self.time_horizon == 0

    @property
    def polychromatic(self):
        return self.frequency is not None and self.frequency[0] < self.frequency[1]

    @property
    def angular_dim(self):
        return 1 if self.spatial_dim == 1 else 2

    @property
    def input_dim(self):
        return (0 if self.steady else 1) + self.spatial_dim + self.angular_dim + (1 if self.polychromatic else 0)

    @property
    def box_lower(self):
        return np.asarray(self.lower, dtype=float)

    @property
    def box_upper(self):
        return np.asarray(self.upper, dtype=float)

    def _nu_hat(self, nu):
        lo, hi = self.frequency
        if self.frequency_scale == "log":
            return np.log(nu / lo) / np.log(hi / lo)
        return (nu - lo) / (hi - lo)

    def _nu_from_hat(self, s):
        lo, hi = self.frequency
        if self.frequency_scale == "log":
            return lo * (hi / lo) ** s
        return lo + (hi - lo) * s

    def rescale(self, t, x, omega, nu):
        """Physical coordinates -> network input in ``[0, 1]^D``."""
        x = np.atleast_2d(x)
        cols = []
        if not self.steady:
            cols.append(np.asarray(t, dtype=float) / self.time_horizon)
        cols.extend(((x - self.box_lower) / (self.box_upper - self.box_lower)).T)
        if self.spatial_dim == 1:
            cols.append(0.5 * (omega[:, 0] + 1.0))
        else:
            cols.append(0.5 * (omega[:, 2] + 1.0))
            cols.append(np.mod(np.arctan2(omega[:, 1], omega[:, 0]), TWO_PI) / TWO_PI)
        if self.polychromatic:
            cols.append(self._nu_hat(np.asarray(nu, dtype=float)))
        return np.stack(cols, axis=1)

    def unrescale(self, z):
        """Network input -> ``(t, x, omega, nu)``; inverse of :meth:`rescale`."""
        z = np.atleast_2d(z)
        n, col = len(z), 0
        if self.steady:
            t = np.zeros(n)
        else:
            t = z[:, 0] * self.time_horizon
            col = 1
        d = self.spatial_dim
        x = self.box_lower + z[:, col:col + d] * (self.box_upper - self.box_lower)
        col += d
        if d == 1:
            omega = (2.0 * z[:, col] - 1.0)[:, None]
            col += 1
        else:
            omega = directions_from_polar(2.0 * z[:, col] - 1.0, TWO_PI * z[:, col + 1])
            col += 2
        if self.polychromatic:
            nu = self._nu_from_hat(z[:, col])
        else:
            nu = np.full(n, self.frequency[0] if self.frequency else 0.0)
        return t, x, omega, nu

    def transport_direction(self, omega, speed=np.inf):
        """Input-space direction ``v`` with ``D_v u_hat = (1/c) u_t + omega . grad_x u``."""
        omega = np.atleast_2d(omega)
        n = len(omega)
        v = np.zeros((n, self.input_dim))
        col = 0
        if not self.steady:
            v[:, 0] = (0.0 if np.isinf(speed) else 1.0 / speed) / self.time_horizon
            col = 1
        span = self.box_upper - self.box_lower
        v[:, col:col + self.spatial_dim] = omega[:, :self.spatial_dim] / span
        return v

    def measure(self):
        """Lebesgue measure of D_T x S x Lambda (physical units; T and Lambda dropped when degenerate)."""
        if self.shell is not None:
            _, r_i, r_e = self.shell
            vol = 4.0 / 3.0 * np.pi * (r_e**3 - r_i**3)
        else:
            vol = float(np.prod(self.box_upper - self.box_lower))
        ang = 2.0 if self.spatial_dim == 1 else 4.0 * np.pi
        t = self.time_horizon if not self.steady else 1.0
        lam = (self.frequency[1] - self.frequency[0]) if self.polychromatic else 1.0
        return vol * ang * t * lam


@dataclass
class PointSet:
    """A batch of training points with QMC/MC weights (``omega`` absent for data points)."""

    t: np.ndarray
    x: np.ndarray
    omega: np.ndarray
    nu: np.ndarray
    weights: np.ndarray
    normals: np.ndarray = None

    def __len__(self):
        return len(self.weights)

    def subset(self, idx):
        pick = lambda a: None if a is None else a[idx]
        return PointSet(self.t[idx], self.x[idx], pick(self.omega), self.nu[idx], self.weights[idx], pick(self.normals))

    def network_input(self, domain):
        return domain.rescale(self.t, self.x, self.omega, self.nu)


def empty_set(domain, with_normals=False):
    d = domain.spatial_dim
    od = 1 if d == 1 else 3
    return PointSet(np.zeros(0), np.zeros((0, d)), np.zeros((0, od)), np.zeros(0), np.zeros(0),
                    np.zeros((0, d)) if with_normals else None)


@dataclass
class TrainingSets:
    interior: PointSet
    spatial_boundary: PointSet
    temporal_boundary: PointSet
    data: PointSet = None

    @property
    def counts(self):
        return {
            "N_int": len(self.interior),
            "N_sb": len(self.spatial_boundary),
            "N_tb": len(self.temporal_boundary),
            "N_d": 0 if self.data is None else len(self.data),
        }


def _unit_cube(sampler, dim, n, seed, stream, skip=1):
    if n == 0:
        return np.zeros((0, dim))
    if sampler == "sobol":
        return sobol_sequence(dim, n, skip)
    if sampler == "uniform_random":
        # Philox is counter based: (seed, stream) fully determines the draw.
        rng = np.random.Generator(np.random.Philox(key=(int(seed) << 8) + stream))
        return rng.random((n, dim))
    raise ConfigurationError(f"unknown sampler {sampler!r}")


def _frequency(domain, u):
    if domain.polychromatic:
        return domain._nu_from_hat(u)
    return np.full(len(u), domain.frequency[0] if domain.frequency else 0.0)


def _sphere_directions(domain, u):
    """Uniform directions on S from two (or one, for the slab) unit coordinates."""
    if domain.spatial_dim == 1:
        return (2.0 * u[:, 0] - 1.0)[:, None]
    return directions_from_polar(2.0 * u[:, 0] - 1.0, TWO_PI * u[:, 1])


def _orthonormal_frame(n):
    """Two unit vectors spanning the plane orthogonal to each row of ``n``."""
    helper = np.where(np.abs(n[:, :1]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(n, e1)
    return e1, e2


def inflow_directions(normals, u):
    """Directions with ``omega . n < 0`` built directly on the inward hemisphere.

    ``u[:, 0]`` in (0, 1) is the inward normal component (uniform in the
    cosine, i.e. uniform over the hemisphere); ``u[:, 1]`` the azimuth
    around the normal. Slab normals are scalars and only ``u[:, 0]`` is used.
    """
    if normals.shape[1] == 1:
        return -np.sign(normals) * u[:, :1]
    e1, e2 = _orthonormal_frame(normals)
    c = u[:, :1]
    s = np.sqrt(1.0 - c * c)
    psi = TWO_PI * u[:, 1:2]
    return -c * normals + s * (np.cos(psi) * e1 + np.sin(psi) * e2)


def _split(n, parts):
    base, rem = divmod(n, parts)
    return [base + (1 if i < rem else 0) for i in range(parts)]


def build_training_sets(domain, n_int, n_sb, n_tb=0, sampler="sobol", seed=0):
    """Interior, spatial-boundary and initial-time points for a box domain.

    Spatial-boundary points are shared equally between the ``2d`` faces.
    Shell domains are dispatched to :func:`annulus_sampler`.
    """
    if min(n_int, n_sb, n_tb) < 0:
        raise ConfigurationError("point counts must be non-negative")
    if n_tb > 0 and domain.steady:
        raise ConfigurationError("temporal-boundary points requested for a steady problem")
    if domain.shell is not None:
        return annulus_sampler(domain, n_int, n_sb, n_tb, sampler=sampler, seed=seed)
    d = domain.spatial_dim
    lo, hi = domain.box_lower, domain.box_upper
    ad = domain.angular_dim
    has_t = not domain.steady
    has_nu = domain.polychromatic

    # interior: [t] x [ang] nu
    dim = int(has_t) + d + ad + int(has_nu)
    u = _unit_cube(sampler, dim, n_int, seed, 0)
    col = 0
    t = np.zeros(n_int)
    if has_t:
        t = domain.time_horizon * u[:, 0]
        col = 1
    x = lo + (hi - lo) * u[:, col:col + d]
    col += d
    omega = _sphere_directions(domain, u[:, col:col + ad])
    col += ad
    nu = _frequency(domain, u[:, col] if has_nu else np.zeros(n_int))
    interior = PointSet(t, x, omega, nu, np.full(n_int, 1.0 / n_int) if n_int else np.zeros(0))

    # spatial boundary: one block of the sequence per face
    faces = [(j, side) for j in range(d) for side in (0, 1)]
    per_face = _split(n_sb, len(faces))
    dim = int(has_t) + (d - 1) + ad + int(has_nu)
    blocks, offset = [], 0
    for (j, side), m in zip(faces, per_face):
        if m == 0:
            continue
        u = _unit_cube(sampler, max(dim, 1), m, seed, 1 + len(blocks), skip=1 + offset)
        offset += m
        col = 0
        tb = domain.time_horizon * u[:, 0] if has_t else np.zeros(m)
        col += int(has_t)
        xb = np.empty((m, d))
        others = [i for i in range(d) if i != j]
        for i in others:
            xb[:, i] = lo[i] + (hi[i] - lo[i]) * u[:, col]
            col += 1
        xb[:, j] = hi[j] if side else lo[j]
        nrm = np.zeros((m, d))
        nrm[:, j] = 1.0 if side else -1.0
        if d == 1:
            om = inflow_directions(nrm, u[:, col:col + 1])
        else:
            om = inflow_directions(nrm, u[:, col:col + 2])
        col += ad
        nub = _frequency(domain, u[:, col] if has_nu else np.zeros(m))
        blocks.append(PointSet(tb, xb, om, nub, np.zeros(m), nrm))
    spatial = _concat(blocks, domain, n_sb)

    temporal = _initial_points(domain, n_tb, sampler, seed, lambda u: lo + (hi - lo) * u)
    return TrainingSets(interior, spatial, temporal)


def _initial_points(domain, n_tb, sampler, seed, place):
    d, ad = domain.spatial_dim, domain.angular_dim
    has_nu = domain.polychromatic
    if n_tb == 0:
        return empty_set(domain)
    dim = (3 if domain.shell is not None else d) + ad + int(has_nu)
    u = _unit_cube(sampler, dim, n_tb, seed, 100)
    pd = 3 if domain.shell is not None else d
    x = place(u[:, :pd])
    omega = _sphere_directions(domain, u[:, pd:pd + ad])
    nu = _frequency(domain, u[:, pd + ad] if has_nu else np.zeros(n_tb))
    return PointSet(np.zeros(n_tb), x, omega, nu, np.full(n_tb, 1.0 / n_tb))


def _concat(blocks, domain, n):
    if not blocks:
        return empty_set(domain, with_normals=True)
    cat = lambda name: np.concatenate([getattr(b, name) for b in blocks])
    return PointSet(cat("t"), cat("x"), cat("omega"), cat("nu"), np.full(n, 1.0 / n), cat("normals"))


def shell_positions(center, r_i, r_e, u):
    """Volume-uniform points of the shell from three unit coordinates (inverse-CDF radius)."""
    r = np.cbrt(r_i**3 + u[:, 0] * (r_e**3 - r_i**3))
    s = directions_from_polar(2.0 * u[:, 1] - 1.0, TWO_PI * u[:, 2])
    return np.asarray(center, dtype=float) + r[:, None] * s


def annulus_sampler(domain, n_int, n_sb, n_tb=0, sampler="sobol", seed=0, r_i=None, r_e=None, center=None):
    """Training sets for the region between two concentric spheres.

    Boundary points are split equally between the inner and outer sphere;
    the outward normal of the flow domain points to the center on the inner
    sphere and away from it on the outer one.
    """
    if domain.spatial_dim != 3:
        raise ConfigurationError("the shell sampler needs a three-dimensional domain")
    if domain.shell is not None:
        c0, ri0, re0 = domain.shell
        center = c0 if center is None else center
        r_i = ri0 if r_i is None else r_i
        r_e = re0 if r_e is None else r_e
    center = np.zeros(3) if center is None else np.asarray(center, dtype=float)
    if r_i is None or r_e is None or not 0 < r_i < r_e:
        raise ConfigurationError(f"shell radii need 0 < R_i < R_e, got {r_i}, {r_e}")
    if n_tb > 0 and domain.steady:
        raise ConfigurationError("temporal-boundary points requested for a steady problem")
    has_t = not domain.steady
    has_nu = domain.polychromatic

    dim = int(has_t) + 3 + 2 + int(has_nu)
    u = _unit_cube(sampler, dim, n_int, seed, 0)
    col = int(has_t)
    t = domain.time_horizon * u[:, 0] if has_t else np.zeros(n_int)
    x = shell_positions(center, r_i, r_e, u[:, col:col + 3])
    omega = _sphere_directions(domain, u[:, col + 3:col + 5])
    nu = _frequency(domain, u[:, col + 5] if has_nu else np.zeros(n_int))
    interior = PointSet(t, x, omega, nu, np.full(n_int, 1.0 / n_int) if n_int else np.zeros(0))

    blocks, offset = [], 0
    dim = int(has_t) + 2 + 2 + int(has_nu)
    for k, (radius, m) in enumerate(zip((r_i, r_e), _split(n_sb, 2))):
        if m == 0:
            continue
        u = _unit_cube(sampler, dim, m, seed, 1 + k, skip=1 + offset)
        offset += m
        col = int(has_t)
        tb = domain.time_horizon * u[:, 0] if has_t else np.zeros(m)
        s = directions_from_polar(2.0 * u[:, col] - 1.0, TWO_PI * u[:, col + 1])
        xb = center + radius * s
        nrm = -s if radius == r_i else s
        om = inflow_directions(nrm, u[:, col + 2:col + 4])
        nub = _frequency(domain, u[:, col + 4] if has_nu else np.zeros(m))
        blocks.append(PointSet(tb, xb, om, nub, np.zeros(m), nrm))
    spatial = _concat(blocks, domain, n_sb)

    temporal = _initial_points(domain, n_tb, sampler, seed,
                               lambda uu: shell_positions(center, r_i, r_e, uu))
    return TrainingSets(interior, spatial, temporal)


def data_points(domain, n_d, seed=0, sampler="uniform_random"):
    """Measurement locations ``(t, x, nu)`` for the inverse problem (no direction)."""
    has_t = not domain.steady
    d = domain.spatial_dim
    pd = 3 if domain.shell is not None else d
    dim = int(has_t) + pd + int(domain.polychromatic)
    u = _unit_cube(sampler, dim, n_d, seed, 200)
    t = domain.time_horizon * u[:, 0] if has_t else np.zeros(n_d)
    col = int(has_t)
    if domain.shell is not None:
        c, r_i, r_e = domain.shell
        x = shell_positions(c, r_i, r_e, u[:, col:col + 3])
    else:
        x = domain.box_lower + (domain.box_upper - domain.box_lower) * u[:, col:col + d]
    col += pd
    nu = _frequency(domain, u[:, col] if domain.polychromatic else np.zeros(n_d))
    return PointSet(t, x, None, nu, np.full(n_d, 1.0 / n_d) if n_d else np.zeros(0))


def on_spatial_boundary(domain, x, tol=1e-10):
    """True where ``x`` lies on the boundary of the spatial domain."""
    x = np.atleast_2d(x)
    if domain.shell is not None:
        c, r_i, r_e = domain.shell
        r = np.linalg.norm(x - np.asarray(c, dtype=float), axis=1)
        return (np.abs(r - r_i) <= tol * r_e) | (np.abs(r - r_e) <= tol * r_e)
    lo, hi = domain.box_lower, domain.box_upper
    inside = np.all((x >= lo - tol) & (x <= hi + tol), axis=1)
    face = np.any((np.abs(x - lo) <= tol) | (np.abs(x - hi) <= tol), axis=1)
    return inside & face


def outward_normals(domain, x):
    """Unit outward normal of the spatial domain at boundary points ``x``."""
    x = np.atleast_2d(x)
    if domain.shell is not None:
        c, r_i, r_e = domain.shell
        rel = x - np.asarray(c, dtype=float)
        r = np.linalg.norm(rel, axis=1, keepdims=True)
        s = rel / r
        return np.where(np.abs(r - r_i) < np.abs(r - r_e), -s, s)
    lo, hi = domain.box_lower, domain.box_upper
    d_lo, d_hi = np.abs(x - lo), np.abs(x - hi)
    n = np.zeros_like(x)
    best = np.minimum(d_lo, d_hi)
    j = np.argmin(best, axis=1)
    rows = np.arange(len(x))
    n[rows, j] = np.where(d_hi[rows, j] < d_lo[rows, j], 1.0, -1.0)
    return n
