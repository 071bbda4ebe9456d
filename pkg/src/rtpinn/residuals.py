"""PDE, boundary and data residuals and the composite training loss.

Two routes compute the same residuals. The pointwise functions
(:func:`interior_residual`, :func:`boundary_residual`, ...) work on any
*field*, i.e. an object with ``value(t, x, omega, nu)`` and
``transport(t, x, omega, nu, speed)``, including closed-form solutions.
:class:`LossAssembler` is the training path: it precomputes everything that
does not depend on the parameters and returns the loss together with its
exact parameter gradient.
"""

from dataclasses import dataclass, field, fields

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, ContractViolation, NumericalOverflowError
from .network import CHUNK, MlpNetwork, backward, backward_batched, forward_batched, forward_tangent
from .quadrature import gauss_legendre
from .sampling import TWO_PI, on_spatial_boundary, outward_normals


def softplus(z):
    return np.logaddexp(0.0, z)


@dataclass
class LossConfig:
    """Weights of the loss terms.

    ``lam`` multiplies the interior residual term; ``lam_reg`` and ``q``
    define the weight penalty ``lam_reg * ||theta_W||_q^q``. The inverse
    mode adds ``lam_k * ||grad k||^2`` and ``k_boundary`` times the squared
    mismatch of the absorption network against the known boundary values.
    """

    lam: float = 1.0
    lam_reg: float = 0.0
    q: int = 2
    lam_k: float = 1e-3
    k_boundary: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ConfigurationError(f"loss weight {f.name} must be finite and >= 0, got {v}")
        if self.q not in (1, 2):
            raise ConfigurationError(f"q must be 1 or 2, got {self.q}")


@dataclass
class LossReport:
    total: float
    interior: float = 0.0
    spatial_boundary: float = 0.0
    temporal_boundary: float = 0.0
    data: float = 0.0
    regularization: float = 0.0
    tikhonov: float = 0.0
    k_boundary: float = 0.0
    lam: float = 1.0

    @property
    def e_int(self):
        return np.sqrt(self.interior)

    @property
    def e_sb(self):
        return np.sqrt(self.spatial_boundary)

    @property
    def e_tb(self):
        return np.sqrt(self.temporal_boundary)

    @property
    def e_d(self):
        return np.sqrt(self.data)

    @property
    def e_t(self):
        return np.sqrt(self.interior + self.spatial_boundary + self.temporal_boundary)

    def as_row(self):
        return {
            "J": self.total,
            "E_T": self.e_t,
            "E_int": self.e_int,
            "E_sb": self.e_sb,
            "E_tb": self.e_tb,
            "E_d": self.e_d,
            "reg": self.regularization,
            "tikhonov": self.tikhonov,
            "k_boundary": self.k_boundary,
        }


# ---------------------------------------------------------------------------
# fields


class NetworkField:
    """Physical intensity ``u = offset(nu) + scale(nu) * net(rescaled input)``."""

    def __init__(self, net, problem, chunk=CHUNK):
        self.net = net
        self.problem = problem
        self.chunk = chunk

    def value(self, t, x, omega, nu):
        y = self.problem.domain.rescale(t, x, omega, nu)
        v, _ = forward_batched(self.net, y, chunk=self.chunk)
        return self.problem.offset(nu) + self.problem.scale(nu) * v

    def transport(self, t, x, omega, nu, speed=None):
        dom = self.problem.domain
        speed = self.problem.speed if speed is None else speed
        y = dom.rescale(t, x, omega, nu)
        _, tan = forward_batched(self.net, y, dom.transport_direction(omega, speed), chunk=self.chunk)
        return self.problem.scale(nu) * tan[:, 0]


class AbsorptionNetwork:
    """Non-negative absorption ``k(x, nu) = softplus(net(rescaled x, nu))``."""

    def __init__(self, net, domain):
        self.net = net
        self.domain = domain

    def __call__(self, x, nu=None):
        y = absorption_input(self.domain, x, nu)
        v, _ = forward_batched(self.net, y)
        return softplus(v)


def absorption_input_dim(domain):
    return domain.spatial_dim + (1 if domain.polychromatic else 0)


def absorption_input(domain, x, nu=None):
    x = np.atleast_2d(x)
    cols = [(x - domain.box_lower) / (domain.box_upper - domain.box_lower)]
    if domain.polychromatic:
        cols.append(domain._nu_hat(np.asarray(nu, dtype=float))[:, None])
    return np.concatenate(cols, axis=1)


def as_field(u, problem):
    if isinstance(u, MlpNetwork):
        return NetworkField(u, problem)
    if hasattr(u, "value") and hasattr(u, "transport"):
        return u
    raise ContractViolation("expected an MlpNetwork or a field with value/transport")


# ---------------------------------------------------------------------------
# scattering nodes


def scattering_nodes(problem, rule, nu, frequency_order=10):
    """Directions, frequencies and weights of the scattering quadrature at each point.

    Returns ``(directions (M, dim), nu_nodes (N, M), weights (M,))``. For
    frequency-coherent kernels ``nu_nodes`` repeats each point's own
    frequency; otherwise a Gauss-Legendre rule on the frequency interval is
    tensored with the angular rule.
    """
    dom = problem.domain
    n = len(nu)
    if problem.coherent or not dom.polychromatic:
        return rule.directions, np.repeat(np.asarray(nu, dtype=float)[:, None], rule.size, axis=1), rule.weights
    g_nodes, g_w = gauss_legendre(frequency_order).mapped(*dom.frequency)
    dirs = np.tile(rule.directions, (len(g_nodes), 1))
    weights = np.outer(g_w, rule.weights).ravel()
    nu_nodes = np.broadcast_to(np.repeat(g_nodes, rule.size)[None, :], (n, len(weights))).copy()
    return dirs, nu_nodes, weights


def _expand(t, x, nu_nodes, dirs):
    """Points ``(t_n, x_n, dirs_m, nu_nodes[n, m])`` flattened in row-major (n, m) order."""
    n, m = nu_nodes.shape
    return (
        np.repeat(t, m),
        np.repeat(x, m, axis=0),
        np.tile(dirs, (n, 1)),
        nu_nodes.ravel(),
    )


def scattering_integral(field_, problem, rule, t, x, omega, nu, frequency_order=10):
    """Quadrature value of ``int int Phi(omega, omega', nu, nu') u(t, x, omega', nu')``."""
    dirs, nu_nodes, w = scattering_nodes(problem, rule, nu, frequency_order)
    vals = field_.value(*_expand(t, x, nu_nodes, dirs)).reshape(nu_nodes.shape)
    phi = problem.kernel(omega, dirs, nu, nu_nodes)
    return np.sum(phi * w * vals, axis=1)


def incident_radiation_of(field_, rule, t, x, nu):
    """``G(t, x, nu) = sum_i w_i u(t, x, omega_i, nu)`` for a field."""
    t, nu = np.asarray(t, dtype=float), np.asarray(nu, dtype=float)
    nu_nodes = np.repeat(nu[:, None], rule.size, axis=1)
    vals = field_.value(*_expand(t, np.atleast_2d(x), nu_nodes, rule.directions)).reshape(nu_nodes.shape)
    return vals @ rule.weights


def heat_flux_of(field_, rule, t, x, nu):
    t, nu = np.asarray(t, dtype=float), np.asarray(nu, dtype=float)
    nu_nodes = np.repeat(nu[:, None], rule.size, axis=1)
    vals = field_.value(*_expand(t, np.atleast_2d(x), nu_nodes, rule.directions)).reshape(nu_nodes.shape)
    return (vals * rule.weights) @ rule.directions


# ---------------------------------------------------------------------------
# pointwise residuals


def _points(t, x, omega, nu, d):
    x = np.asarray(x, dtype=float).reshape(-1, d)
    n = len(x)
    omega = np.asarray(omega, dtype=float).reshape(n, -1)
    t = np.broadcast_to(np.asarray(t, dtype=float), (n,)).copy()
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (n,)).copy()
    return t, x, omega, nu


def interior_residual(u, problem, rule, t, x, omega, nu=0.0, absorption=None, frequency_order=10):
    """``(1/c) u_t + omega . grad u + k u + sigma (u - Phi-average of u) - f`` at the given points.

    ``absorption`` overrides the problem's ``k(x, nu)`` (inverse mode).
    """
    fld = as_field(u, problem)
    t, x, omega, nu = _points(t, x, omega, nu, problem.domain.spatial_dim)
    k = problem.absorption(x, nu) if absorption is None else absorption(x, nu)
    sigma = problem.scattering(x, nu)
    val = fld.value(t, x, omega, nu)
    res = fld.transport(t, x, omega, nu, problem.speed) + k * val - problem.source(t, x, omega, nu)
    if problem.has_scattering:
        scat = scattering_integral(fld, problem, rule, t, x, omega, nu, frequency_order)
        res = res + sigma * (val - scat / problem.surface)
    return res


def inverse_interior_residual(u, k, problem, rule, t, x, omega, nu=0.0):
    """Interior residual with the trainable absorption ``k`` (a callable or :class:`AbsorptionNetwork`)."""
    return interior_residual(u, problem, rule, t, x, omega, nu, absorption=k)


def boundary_residual(u, problem, t, x, omega, nu=0.0, kind="spatial", tol=1e-9):
    """``u - u_b`` on the inflow boundary (``kind="spatial"``) or ``u - u_0`` at ``t = 0``."""
    fld = as_field(u, problem)
    t, x, omega, nu = _points(t, x, omega, nu, problem.domain.spatial_dim)
    if kind == "spatial":
        if not np.all(on_spatial_boundary(problem.domain, x, tol)):
            raise ContractViolation("point not on the spatial boundary")
        n = outward_normals(problem.domain, x)
        if np.any(np.sum(omega[:, :n.shape[1]] * n, axis=1) >= 0):
            raise ContractViolation("direction is not incoming (omega . n >= 0)")
        target = problem.boundary(t, x, omega, nu)
    elif kind == "temporal":
        if problem.steady or np.any(np.abs(t) > tol):
            raise ContractViolation("temporal-boundary residual needs t = 0 on a time-dependent problem")
        target = problem.initial(x, omega, nu)
    else:
        raise ContractViolation(f"unknown boundary kind {kind!r}")
    return fld.value(t, x, omega, nu) - target


def data_residual(u, problem, rule, measured, t, x, nu=0.0):
    """``G(u) - G_measured`` with ``G`` from the angular rule."""
    fld = as_field(u, problem)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = len(x)
    t = np.broadcast_to(np.asarray(t, dtype=float), (n,)).copy()
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (n,)).copy()
    return incident_radiation_of(fld, rule, t, x, nu) - measured(t, x, nu)


# ---------------------------------------------------------------------------
# training loss


def _check_finite(name, res, pts):
    bad = ~np.isfinite(res)
    if np.any(bad):
        idx = np.nonzero(bad)[0]
        where = ", ".join(f"#{i} x={np.round(pts.x[i], 6).tolist()}" for i in idx[:5])
        raise NumericalOverflowError(f"non-finite {name} residual at {len(idx)} point(s): {where}", points=idx)


class _Block:
    """Precomputed network inputs and coefficients for one point set."""


class LossAssembler:
    """Loss ``J(theta)`` and its gradient for fixed training sets.

    In forward mode ``theta`` is the intensity network's parameter vector.
    In inverse mode it is the concatenation ``[theta_u, theta_k]`` and the
    absorption network replaces ``k``; ``measured`` supplies the observed
    incident radiation at the data points.
    """

    def __init__(self, problem, sets, rule, config, u_widths, k_widths=None, mode="forward",
                 measured=None, frequency_order=10, chunk=CHUNK):
        if mode not in ("forward", "inverse"):
            raise ConfigurationError(f"unknown mode {mode!r}")
        self.problem, self.sets, self.rule, self.config = problem, sets, rule, config
        self.mode, self.chunk = mode, chunk
        dom = problem.domain
        self.u_shape = MlpNetwork(u_widths, np.zeros(_count(u_widths)))
        if u_widths[0] != dom.input_dim or u_widths[-1] != 1:
            raise ConfigurationError(f"intensity network must map {dom.input_dim} inputs to 1 output")
        self.n_u = self.u_shape.n_params
        self.k_shape = None
        if mode == "inverse":
            if k_widths is None:
                raise ConfigurationError("inverse mode needs absorption-network widths")
            if k_widths[0] != absorption_input_dim(dom) or k_widths[-1] != 1:
                raise ConfigurationError(f"absorption network must map {absorption_input_dim(dom)} inputs to 1 output")
            if sets.data is None or len(sets.data) == 0:
                raise ConfigurationError("inverse mode requires a non-empty data set")
            if measured is None:
                raise ConfigurationError("inverse mode requires measured incident radiation")
            self.k_shape = MlpNetwork(k_widths, np.zeros(_count(k_widths)))
        self.n_params = self.n_u + (0 if self.k_shape is None else self.k_shape.n_params)
        if not dom.steady and len(sets.temporal_boundary) == 0:
            raise ConfigurationError("time-dependent problem needs temporal-boundary points")
        self._prepare(measured, frequency_order)

    # -- setup ---------------------------------------------------------------

    def _prepare(self, measured, frequency_order):
        p, dom = self.problem, self.problem.domain
        s = self.sets.interior
        b = _Block()
        b.pts = s
        b.y = s.network_input(dom)
        b.v = dom.transport_direction(s.omega, p.speed)
        b.w = s.weights
        b.k = p.absorption(s.x, s.nu)
        b.sigma = p.scattering(s.x, s.nu)
        b.f = p.source(s.t, s.x, s.omega, s.nu)
        b.a, b.b = p.offset(s.nu), p.scale(s.nu)
        b.scat = None
        if p.has_scattering and len(s):
            dirs, nu_nodes, wq = scattering_nodes(p, self.rule, s.nu, frequency_order)
            te, xe, oe, ne = _expand(s.t, s.x, nu_nodes, dirs)
            b.scat_y = dom.rescale(te, xe, oe, ne)
            b.scat_a = p.offset(ne).reshape(nu_nodes.shape)
            b.scat_b = p.scale(ne).reshape(nu_nodes.shape)
            phi = p.kernel(s.omega, dirs, s.nu, nu_nodes)
            b.scat = (b.sigma / p.surface)[:, None] * phi * wq
        if self.mode == "inverse":
            b.ky = absorption_input(dom, s.x, s.nu)
            span = dom.box_upper - dom.box_lower
            d, kd = dom.spatial_dim, b.ky.shape[1]
            dirs = np.zeros((d, kd))
            dirs[np.arange(d), np.arange(d)] = 1.0 / span
            b.kdirs = np.broadcast_to(dirs, (len(s), d, kd))
        self.int_block = b

        self.bnd_blocks = []
        for name, pts in (("spatial", self.sets.spatial_boundary), ("temporal", self.sets.temporal_boundary)):
            c = _Block()
            c.name, c.pts = name, pts
            c.y = pts.network_input(dom)
            c.w = pts.weights
            if name == "spatial":
                target = p.boundary(pts.t, pts.x, pts.omega, pts.nu)
            else:
                target = p.initial(pts.x, pts.omega, pts.nu) if len(pts) else np.zeros(0)
            c.a, c.b = p.offset(pts.nu), p.scale(pts.nu)
            c.target_hat = (target - c.a) / c.b
            self.bnd_blocks.append(c)

        self.data_block = None
        self.kb_block = None
        if self.mode == "inverse":
            dpts = self.sets.data
            c = _Block()
            c.pts, c.w = dpts, dpts.weights
            nu_nodes = np.repeat(dpts.nu[:, None], self.rule.size, axis=1)
            te, xe, oe, ne = _expand(dpts.t, dpts.x, nu_nodes, self.rule.directions)
            c.y = dom.rescale(te, xe, oe, ne)
            c.a = p.offset(ne).reshape(nu_nodes.shape)
            c.b = p.scale(ne).reshape(nu_nodes.shape)
            c.g_meas = measured(dpts.t, dpts.x, dpts.nu)
            c.g_scale = c.b @ self.rule.weights
            self.data_block = c
            sb = self.sets.spatial_boundary
            kb = _Block()
            kb.pts, kb.w = sb, sb.weights
            kb.y = absorption_input(dom, sb.x, sb.nu)
            kb.k_true = p.absorption(sb.x, sb.nu)
            self.kb_block = kb

    # -- evaluation ------------------------------------------------------------

    def split(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ContractViolation(f"theta has shape {theta.shape}, expected ({self.n_params},)")
        return theta[:self.n_u], (theta[self.n_u:] if self.k_shape is not None else None)

    def weight_mask(self):
        m = self.u_shape.weight_mask()
        if self.k_shape is not None:
            m = np.concatenate([m, self.k_shape.weight_mask()])
        return m

    def residuals(self, theta):
        """Normalized residual arrays per set (no gradient); keys ``int``, ``sb``, ``tb``, ``d``."""
        return self._evaluate(theta, need_grad=False)[2]

    def __call__(self, theta, need_grad=True):
        report, grad, _ = self._evaluate(theta, need_grad)
        return report, grad

    def _evaluate(self, theta, need_grad):
        th_u, th_k = self.split(theta)
        net_u = self.u_shape.with_theta(th_u)
        net_k = None if th_k is None else self.k_shape.with_theta(th_k)
        cfg = self.config
        g_u = np.zeros(self.n_u)
        g_k = None if net_k is None else np.zeros(self.k_shape.n_params)
        res_out = {}
        rep = LossReport(total=0.0, lam=cfg.lam)

        # interior
        b = self.int_block
        if len(b.pts):
            u_hat, tan = forward_batched(net_u, b.y, b.v, chunk=self.chunk)
            u = b.a + b.b * u_hat
            transport = b.b * tan[:, 0]
            if net_k is not None:
                k_hat, k_tan, k_cache = forward_tangent(net_k, b.ky, b.kdirs)
                k = softplus(k_hat)
            else:
                k = b.k
            r = transport + (k + b.sigma) * u - b.f
            if b.scat is not None:
                us_hat, _ = forward_batched(net_u, b.scat_y, chunk=self.chunk)
                us = b.scat_a + b.scat_b * us_hat.reshape(b.scat.shape)
                r = r - np.sum(b.scat * us, axis=1)
            r_n = r / b.b
            _check_finite("interior", r_n, b.pts)
            res_out["int"] = r_n
            rep.interior = float(np.sum(b.w * r_n * r_n))
            tik = 0.0
            if net_k is not None:
                sk = expit(k_hat)
                grad_sq = np.sum(k_tan * k_tan, axis=1)
                tik = float(cfg.lam_k * np.sum(b.w * sk * sk * grad_sq))
                rep.tikhonov = tik
            if need_grad:
                g = 2.0 * cfg.lam * b.w * r_n / b.b  # dJ/dr
                g_u += backward_batched(net_u, b.y, g * (k + b.sigma) * b.b, b.v, (g * b.b)[:, None],
                                        chunk=self.chunk)
                if b.scat is not None:
                    gs = -(g[:, None] * b.scat * b.scat_b).ravel()
                    g_u += backward_batched(net_u, b.scat_y, gs, chunk=self.chunk)
                if net_k is not None:
                    dk_hat = g * u * sk + cfg.lam_k * b.w * 2.0 * sk * sk * (1.0 - sk) * grad_sq
                    dk_tan = 2.0 * cfg.lam_k * (b.w * sk * sk)[:, None] * k_tan
                    g_k += backward(net_k, k_cache, dk_hat, dk_tan)

        # spatial and temporal boundary
        for c in self.bnd_blocks:
            if not len(c.pts):
                continue
            u_hat, _ = forward_batched(net_u, c.y, chunk=self.chunk)
            r_n = u_hat - c.target_hat
            _check_finite(c.name + "-boundary", r_n, c.pts)
            val = float(np.sum(c.w * r_n * r_n))
            if c.name == "spatial":
                rep.spatial_boundary, res_out["sb"] = val, r_n
            else:
                rep.temporal_boundary, res_out["tb"] = val, r_n
            if need_grad:
                g_u += backward_batched(net_u, c.y, 2.0 * c.w * r_n, chunk=self.chunk)

        # inverse extras
        if self.data_block is not None:
            c = self.data_block
            us_hat, _ = forward_batched(net_u, c.y, chunk=self.chunk)
            us = c.a + c.b * us_hat.reshape(c.a.shape)
            r_d = (us @ self.rule.weights - c.g_meas) / c.g_scale
            _check_finite("data", r_d, c.pts)
            res_out["d"] = r_d
            rep.data = float(np.sum(c.w * r_d * r_d))
            if need_grad:
                gd = (2.0 * c.w * r_d / c.g_scale)[:, None] * self.rule.weights[None, :] * c.b
                g_u += backward_batched(net_u, c.y, gd.ravel(), chunk=self.chunk)
            kb = self.kb_block
            if len(kb.pts) and cfg.k_boundary > 0:
                kh, _, kc = forward_tangent(net_k, kb.y)
                diff = softplus(kh) - kb.k_true
                rep.k_boundary = float(cfg.k_boundary * np.sum(kb.w * diff * diff))
                if need_grad:
                    g_k += backward(net_k, kc, 2.0 * cfg.k_boundary * kb.w * diff * expit(kh))

        # weight penalty
        if cfg.lam_reg > 0:
            theta = np.asarray(theta, dtype=np.float64)
            mask = self.weight_mask()
            wts = theta[mask]
            if cfg.q == 2:
                rep.regularization = float(cfg.lam_reg * np.sum(wts * wts))
                g_reg = 2.0 * cfg.lam_reg * wts
            else:
                rep.regularization = float(cfg.lam_reg * np.sum(np.abs(wts)))
                g_reg = cfg.lam_reg * np.sign(wts)
        rep.total = (rep.spatial_boundary + rep.temporal_boundary + cfg.lam * rep.interior + rep.data
                     + rep.k_boundary + rep.tikhonov + rep.regularization)
        if not np.isfinite(rep.total):
            raise NumericalOverflowError("non-finite loss")
        grad = None
        if need_grad:
            grad = g_u if g_k is None else np.concatenate([g_u, g_k])
            if cfg.lam_reg > 0:
                grad[mask] += g_reg
        return rep, grad, res_out


def _count(widths):
    return sum((widths[k] + 1) * widths[k + 1] for k in range(len(widths) - 1))


def total_loss(nets, sets, problem, rule, config, mode="forward", measured=None):
    """One-shot loss and gradient; ``nets`` is ``u_net`` or ``(u_net, k_net)``."""
    if isinstance(nets, MlpNetwork):
        nets = (nets,)
    u_net = nets[0]
    k_net = nets[1] if len(nets) > 1 else None
    asm = LossAssembler(problem, sets, rule, config, u_net.widths, None if k_net is None else k_net.widths,
                        mode=mode, measured=measured)
    theta = u_net.theta if k_net is None else np.concatenate([u_net.theta, k_net.theta])
    return asm(theta)
