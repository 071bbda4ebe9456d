"""Optimizers (ADAM, L-BFGS with a strong-Wolfe line search) and the training harness."""

import csv
import itertools
import logging
import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalOverflowError, RtPinnError
from .network import MlpNetwork, init_network
from .residuals import LossAssembler, LossConfig, LossReport, absorption_input_dim

log = logging.getLogger(__name__)


@dataclass
class OptimizerConfig:
    algorithm: str = "lbfgs"
    max_iterations: int = 5000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    history_size: int = 50
    c1: float = 1e-4
    c2: float = 0.9
    gtol: float = 1e-10
    ftol: float = 1e-14
    max_line_search: int = 25

    def __post_init__(self):
        if self.algorithm not in ("adam", "lbfgs"):
            raise ConfigurationError(f"unknown optimizer {self.algorithm!r}")
        if self.max_iterations < 0:
            raise ConfigurationError("max_iterations must be >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigurationError("ADAM betas must lie in (0, 1)")
        if not 0 < self.c1 < self.c2 < 1:
            raise ConfigurationError("Wolfe constants need 0 < c1 < c2 < 1")
        if min(self.lr, self.eps, self.gtol, self.ftol) <= 0 or self.history_size < 1:
            raise ConfigurationError("optimizer tolerances and sizes must be positive")


# ---------------------------------------------------------------------------
# ADAM


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, n, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(np.zeros(n), np.zeros(n), 0, lr, beta1, beta2, eps)


def adam_step(state, theta, grad):
    """One bias-corrected ADAM update; returns ``(state, theta')``."""
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise NumericalOverflowError("non-finite gradient")
    t = state.step + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grad
    v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = m / (1 - state.beta1**t)
    v_hat = v / (1 - state.beta2**t)
    theta_new = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps), theta_new


# ---------------------------------------------------------------------------
# L-BFGS


@dataclass
class LbfgsState:
    """Curvature pairs plus the objective ``fun(theta) -> (f, grad)`` used by the line search."""

    fun: object
    history_size: int = 50
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 25
    s_hist: deque = None
    y_hist: deque = None
    f: float = None
    n_iter: int = 0
    skipped_pairs: int = 0
    fallbacks: int = 0
    n_evals: int = 0
    last_message: str = ""

    def __post_init__(self):
        if self.s_hist is None:
            self.s_hist = deque(maxlen=self.history_size)
            self.y_hist = deque(maxlen=self.history_size)


def two_loop(grad, s_hist, y_hist):
    """``-H grad`` from the stored pairs (initial scaling ``s'y / y'y``)."""
    q = grad.copy()
    alphas = []
    rhos = [1.0 / float(y @ s) for s, y in zip(s_hist, y_hist)]
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = rho * float(s @ q)
        alphas.append(a)
        q -= a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def _cubic_min(a, fa, da, b, fb, db):
    """Minimizer of the cubic interpolating (f, f') at a and b, or None."""
    d1 = da + db - 3.0 * (fa - fb) / (a - b)
    rad = d1 * d1 - da * db
    if rad < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(rad)
    x = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2)
    return x if np.isfinite(x) else None


def strong_wolfe(phi, f0, d0, alpha, c1=1e-4, c2=0.9, max_iter=25):
    """Step length satisfying the strong Wolfe conditions.

    ``phi(alpha)`` returns ``(f, dphi, payload)``. Returns
    ``(alpha, f, payload)`` or ``None`` when no step with sufficient
    decrease was found. Falls back to the best Armijo point seen if the
    curvature condition cannot be met within the budget.
    """
    best = None

    def consider(a, f, pay):
        nonlocal best
        if f <= f0 + c1 * a * d0 and (best is None or f < best[1]):
            best = (a, f, pay)

    def zoom(lo, hi, f_lo, f_hi, d_lo, d_hi, budget):
        for _ in range(budget):
            width = hi - lo
            a = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
            lo_b, hi_b = min(lo, hi), max(lo, hi)
            margin = 0.1 * abs(width)
            if a is None or not lo_b + margin <= a <= hi_b - margin:
                a = 0.5 * (lo + hi)
            f, d, pay = phi(a)
            consider(a, f, pay)
            if f > f0 + c1 * a * d0 or f >= f_lo:
                hi, f_hi, d_hi = a, f, d
            else:
                if abs(d) <= -c2 * d0:
                    return a, f, pay
                if d * (hi - lo) >= 0:
                    hi, f_hi, d_hi = lo, f_lo, d_lo
                lo, f_lo, d_lo = a, f, d
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return best

    a_prev, f_prev, d_prev = 0.0, f0, d0
    for i in range(max_iter):
        f, d, pay = phi(alpha)
        consider(alpha, f, pay)
        if f > f0 + c1 * alpha * d0 or (i > 0 and f >= f_prev):
            return zoom(a_prev, alpha, f_prev, f, d_prev, d, max_iter - i)
        if abs(d) <= -c2 * d0:
            return alpha, f, pay
        if d >= 0:
            return zoom(alpha, a_prev, f, f_prev, d, d_prev, max_iter - i)
        a_prev, f_prev, d_prev = alpha, f, d
        alpha *= 2.0
    return best


def lbfgs_step(state, theta, grad, f=None):
    """One L-BFGS iteration with a strong-Wolfe line search.

    Returns ``(state, theta')``; ``state.f`` and ``state.grad`` hold the
    objective at the new iterate. A failed line search falls back to a
    backtracking steepest-descent step; if that fails too ``theta`` is
    returned unchanged.
    """
    grad = np.asarray(grad, dtype=float)
    if not np.all(np.isfinite(grad)):
        raise NumericalOverflowError("non-finite gradient")
    if f is None:
        f = state.f if state.f is not None else state.fun(theta)[0]
    if not np.any(grad):
        state.f, state.grad = f, grad
        state.last_message = "zero gradient"
        return state, theta

    def phi_factory(direction):
        def phi(a):
            state.n_evals += 1
            try:
                fa, ga = state.fun(theta + a * direction)
            except NumericalOverflowError:
                return np.inf, np.inf, None
            if not np.isfinite(fa):
                return np.inf, np.inf, None
            return fa, float(ga @ direction), ga
        return phi

    direction = two_loop(grad, state.s_hist, state.y_hist)
    d0 = float(grad @ direction)
    if d0 >= 0:
        state.s_hist.clear()
        state.y_hist.clear()
        direction = -grad
        d0 = float(grad @ direction)
    alpha0 = 1.0 if state.s_hist else min(1.0, 1.0 / float(np.sum(np.abs(grad))))
    found = strong_wolfe(phi_factory(direction), f, d0, alpha0, state.c1, state.c2, state.max_line_search)
    if found is None:
        state.fallbacks += 1
        state.s_hist.clear()
        state.y_hist.clear()
        direction = -grad
        d0 = float(grad @ direction)
        phi = phi_factory(direction)
        a = 1.0 / max(1.0, float(np.linalg.norm(grad)))
        found = None
        for _ in range(40):
            fa, _, ga = phi(a)
            if fa <= f + state.c1 * a * d0:
                found = (a, fa, ga)
                break
            a *= 0.5
        state.last_message = "line search failed; gradient step" if found else "line search failed"
        log.debug(state.last_message)
        if found is None:
            state.f, state.grad = f, grad
            return state, theta
    alpha, f_new, g_new = found
    theta_new = theta + alpha * direction
    s = theta_new - theta
    y = g_new - grad
    if float(s @ y) > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
        state.s_hist.append(s)
        state.y_hist.append(y)
    else:
        state.skipped_pairs += 1
    state.f, state.grad = f_new, g_new
    state.n_iter += 1
    return state, theta_new


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainedModel:
    theta: np.ndarray
    u_widths: tuple
    k_widths: tuple = None
    report: LossReport = None
    history: list = field(default_factory=list)
    wall_time: float = 0.0
    iterations: int = 0
    message: str = ""
    provenance: dict = field(default_factory=dict)

    @property
    def u_net(self):
        n = sum((self.u_widths[k] + 1) * self.u_widths[k + 1] for k in range(len(self.u_widths) - 1))
        return MlpNetwork(self.u_widths, self.theta[:n].copy())

    @property
    def k_net(self):
        if self.k_widths is None:
            return None
        n = len(self.u_net.theta)
        return MlpNetwork(self.k_widths, self.theta[n:].copy())


def minimize(fun, theta0, opt, callback=None):
    """Minimize ``fun(theta) -> (LossReport, grad)``; returns ``(best_theta, best_report, history, message)``.

    ``history`` has one row per accepted iterate (iteration 0 is the start).
    """
    theta = np.array(theta0, dtype=float)
    report, grad = fun(theta)
    best = (report.total, theta.copy(), report)
    history = [_row(0, report, best[0])]
    if callback:
        callback(history[-1])
    message = "max iterations reached"
    if opt.max_iterations == 0:
        return theta, report, history, "zero iteration budget"

    reports = {}

    def scalar_fun(th):
        rep, g = fun(th)
        reports["last"] = rep
        return rep.total, g

    if opt.algorithm == "lbfgs":
        state = LbfgsState(scalar_fun, opt.history_size, opt.c1, opt.c2, opt.max_line_search)
        state.f = report.total
    else:
        state = AdamState.create(len(theta), opt.lr, opt.beta1, opt.beta2, opt.eps)

    for it in range(1, opt.max_iterations + 1):
        if np.max(np.abs(grad)) < opt.gtol:
            message = "gradient tolerance reached"
            break
        f_old = report.total
        try:
            if opt.algorithm == "lbfgs":
                state, theta_new = lbfgs_step(state, theta, grad, f_old)
                if theta_new is theta:
                    message = state.last_message or "no progress"
                    break
                theta = theta_new
                report, grad = _report_for(fun, theta, reports, state)
            else:
                state, theta = adam_step(state, theta, grad)
                report, grad = fun(theta)
        except NumericalOverflowError as exc:
            message = f"aborted: {exc}"
            break
        if report.total < best[0]:
            best = (report.total, theta.copy(), report)
        history.append(_row(it, report, best[0]))
        if callback:
            callback(history[-1])
        if opt.algorithm == "lbfgs" and abs(f_old - report.total) <= opt.ftol * max(1.0, abs(f_old)):
            message = "loss change below tolerance"
            break
    return best[1], best[2], history, message


def _report_for(fun, theta, reports, state):
    # the line search evaluated theta last in almost all cases; re-evaluate only if needed
    rep = reports.get("last")
    if rep is not None and rep.total == state.f:
        return rep, state.grad
    return fun(theta)


def _row(it, rep, best):
    row = {"iteration": it}
    row.update(rep.as_row())
    row["J_best"] = best
    return row


def train(problem, sets, rule, loss_config, opt_config, u_net, k_net=None, mode="forward",
          measured=None, callback=None, provenance=None):
    """Train the intensity network (and the absorption network in inverse mode)."""
    asm = LossAssembler(problem, sets, rule, loss_config, u_net.widths,
                        None if k_net is None else k_net.widths, mode=mode, measured=measured)
    theta0 = u_net.theta if k_net is None else np.concatenate([u_net.theta, k_net.theta])
    start = time.perf_counter()
    theta, report, history, message = minimize(asm, theta0, opt_config, callback)
    return TrainedModel(
        theta=theta,
        u_widths=u_net.widths,
        k_widths=None if k_net is None else k_net.widths,
        report=report,
        history=history,
        wall_time=time.perf_counter() - start,
        iterations=history[-1]["iteration"],
        message=message,
        provenance=dict(provenance or {}),
    )


# ---------------------------------------------------------------------------
# ensemble


@dataclass
class EnsembleGrid:
    depths: tuple = (4, 8)
    widths: tuple = (16, 20, 24)
    lams: tuple = (0.1, 1.0, 10.0)
    lam_regs: tuple = (0.0,)
    retrains: int = 5
    seed_base: int = 0

    def __post_init__(self):
        if not (self.depths and self.widths and self.lams and self.lam_regs):
            raise ConfigurationError("every ensemble hyperparameter list must be non-empty")
        if self.retrains < 1:
            raise ConfigurationError("retrains must be >= 1")

    def configurations(self):
        """All ``(depth, width, lam, lam_reg, seed)`` combinations, in a fixed order."""
        return [
            (d, w, lam, reg, self.seed_base + r)
            for d, w, lam, reg in itertools.product(self.depths, self.widths, self.lams, self.lam_regs)
            for r in range(self.retrains)
        ]


@dataclass
class EnsembleMember:
    depth: int
    width: int
    lam: float
    lam_reg: float
    seed: int
    status: str
    J: float = np.inf
    E_T: float = np.nan
    E_int: float = np.nan
    E_sb: float = np.nan
    E_tb: float = np.nan
    E_d: float = np.nan
    iterations: int = 0
    wall_time: float = 0.0


LEADERBOARD_FIELDS = ["rank", "depth", "width", "lam", "lam_reg", "seed", "status", "J", "E_T", "E_int",
                      "E_sb", "E_tb", "E_d", "iterations", "wall_time"]


def hidden_widths(input_dim, depth, width):
    return (input_dim,) + (width,) * depth + (1,)


def _run_member(args):
    (problem, sets, rule, base_loss, opt, mode, measured, k_hidden, cfg) = args
    depth, width, lam, reg, seed = cfg
    dom = problem.domain
    try:
        u_net = init_network(hidden_widths(dom.input_dim, depth, width), seed=seed)
        k_net = None
        if mode == "inverse":
            k_net = init_network((absorption_input_dim(dom),) + tuple(k_hidden) + (1,), seed=seed + 7919)
        loss = LossConfig(lam=lam, lam_reg=reg, q=base_loss.q, lam_k=base_loss.lam_k, k_boundary=base_loss.k_boundary)
        model = train(problem, sets, rule, loss, opt, u_net, k_net, mode=mode, measured=measured,
                      provenance={"depth": depth, "width": width, "lam": lam, "lam_reg": reg, "seed": seed})
        rep = model.report
        member = EnsembleMember(depth, width, lam, reg, seed, "ok", rep.total, rep.e_t, rep.e_int, rep.e_sb,
                                rep.e_tb, rep.e_d, model.iterations, model.wall_time)
        return member, model
    except RtPinnError as exc:
        return EnsembleMember(depth, width, lam, reg, seed, f"failed: {exc}"), None


def ensemble_train(problem, sets, rule, grid, opt_config, loss_config=None, mode="forward", measured=None,
                   k_hidden=(20, 20, 20, 20), jobs=1):
    """Train every grid member and select the one with the smallest training loss.

    Returns ``(best_model, leaderboard)`` with the leaderboard sorted by
    ascending loss (failed runs last). Ties are broken by grid order so the
    selection does not depend on execution order.
    """
    loss_config = loss_config or LossConfig()
    configs = grid.configurations()
    tasks = [(problem, sets, rule, loss_config, opt_config, mode, measured, k_hidden, cfg) for cfg in configs]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_member, tasks))
    else:
        results = [_run_member(t) for t in tasks]
    ok = [(m, model) for m, model in results if model is not None]
    if not ok:
        raise RtPinnError("every ensemble member failed")
    order = sorted(range(len(results)), key=lambda i: (results[i][1] is None, results[i][0].J, i))
    board = [results[i][0] for i in order]
    best = results[order[0]][1]
    return best, board


def write_leaderboard(path, board, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=LEADERBOARD_FIELDS)
        w.writeheader()
        for rank, m in enumerate(board, start=1):
            row = asdict(m)
            row["rank"] = rank
            w.writerow({k: _fmt(row[k]) for k in LEADERBOARD_FIELDS})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
