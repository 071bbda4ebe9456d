"""Run orchestration: configuration, training runs and artifact files.

A run configuration is a nested mapping (read from YAML by the CLI)::

    problem: slab1d
    problem_params: {}          # e.g. {k_nu: 1.0} for shell-time
    sampling:   {n_int, n_sb, n_tb, n_d, sampler, seed}
    quadrature: {n_mu, n_phi}
    network:    {depth, width, seed}
    k_network:  {depth, width, seed}      # inverse runs
    loss:       {lam, lam_reg, q, lam_k, k_boundary}
    optimizer:  {algorithm, max_iterations, lr, history_size, ...}
    ensemble:   {depths, widths, lams, lam_regs, retrains, seed_base}
    bound:      {v_hk_tb, v_hk_sb, v_hk_int, c_bar}
    output:     {dir, resolution}

Values missing from the file fall back to :data:`DEFAULTS` and the
per-problem entries of :data:`PROBLEM_DEFAULTS`.
"""

import copy
import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, fields

import numpy as np

from . import __version__
from .bounds import BoundInputs, empirical_generalization_error, lemma1_bound, lemma2_bound, psi_sup
from .errors import ConfigurationError
from .network import init_network, save_checkpoint
from .problems import PROBLEM_NAMES, get_problem, inverse_problem_fixture, radial_flux_oracle
from .quadrature import gauss_legendre, sphere_rule
from .residuals import (AbsorptionNetwork, LossConfig, NetworkField, absorption_input_dim, heat_flux_of,
                        incident_radiation_of)
from .sampling import build_training_sets, data_points
from .svg import heatmap_svg
from .training import EnsembleGrid, OptimizerConfig, ensemble_train, hidden_widths, train, write_leaderboard

OUTPUT_ROOT_ENV = "RTPINN_OUTPUT_ROOT"

DEFAULTS = {
    "problem": None,
    "problem_params": {},
    "sampling": {"n_int": 4096, "n_sb": 3072, "n_tb": 0, "n_d": 0, "sampler": "sobol", "seed": 0},
    "quadrature": {"n_mu": 10, "n_phi": 10},
    "network": {"depth": 4, "width": 20, "seed": 0},
    "k_network": {"depth": 4, "width": 16, "seed": 1},
    "loss": {"lam": 1.0, "lam_reg": 0.0, "q": 2, "lam_k": 1e-3, "k_boundary": 1.0},
    "optimizer": {"algorithm": "lbfgs", "max_iterations": 2000},
    "ensemble": {"depths": [4, 8], "widths": [16, 20, 24], "lams": [0.1, 1.0, 10.0], "lam_regs": [0.0],
                 "retrains": 5, "seed_base": 0},
    "bound": {"v_hk_tb": 1.0, "v_hk_sb": 1.0, "v_hk_int": 1.0, "c_bar": 1.0},
    "output": {"dir": "run", "resolution": 33},
}

PROBLEM_DEFAULTS = {
    "slab1d": {"sampling": {"n_int": 2048, "n_sb": 512}, "network": {"depth": 4, "width": 16},
               "loss": {"lam": 0.1}, "output": {"resolution": 41}},
    "cube3d-mono": {"loss": {"lam": 0.1}, "optimizer": {"max_iterations": 500}},
    "cube3d-poly": {"loss": {"lam": 0.1}, "optimizer": {"max_iterations": 3000},
                    "ensemble": {"depths": [4, 8], "widths": [16, 20], "lams": [0.1, 1.0], "lam_regs": [0.0, 1e-6, 1e-5],
                                 "retrains": 10}},
    "shell-time": {"problem_params": {"k_nu": 10.0}, "sampling": {"n_int": 4096, "n_sb": 2048, "n_tb": 2048},
                   "loss": {"lam": 0.1}},
    "inverse-cube": {"sampling": {"n_d": 1024}, "network": {"depth": 4, "width": 16}, "loss": {"lam": 1.0},
                     "optimizer": {"max_iterations": 4000},
                     "ensemble": {"lams": [1.0, 10.0]}},
}

HISTORY_FIELDS = ["iteration", "J", "E_T", "E_int", "E_sb", "E_tb", "E_d", "reg", "tikhonov", "k_boundary", "J_best"]


# ---------------------------------------------------------------------------
# configuration


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(cfg):
    """Fill defaults and validate; raises :class:`ConfigurationError`."""
    if not isinstance(cfg, dict):
        raise ConfigurationError("configuration must be a mapping")
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
    name = cfg.get("problem")
    if name not in PROBLEM_NAMES:
        raise ConfigurationError(f"problem must be one of {', '.join(PROBLEM_NAMES)}, got {name!r}")
    out = _merge(_merge(DEFAULTS, PROBLEM_DEFAULTS.get(name, {})), cfg)
    for section in ("sampling", "quadrature", "network", "k_network", "loss", "optimizer", "ensemble", "bound",
                    "output"):
        extra = set(out[section]) - set(_merge(DEFAULTS, PROBLEM_DEFAULTS.get(name, {}))[section])
        if section == "optimizer":
            extra -= {f.name for f in fields(OptimizerConfig)}
        if extra:
            raise ConfigurationError(f"unknown keys in {section}: {sorted(extra)}")
    s = out["sampling"]
    for key in ("n_int", "n_sb", "n_tb", "n_d"):
        if not isinstance(s[key], int) or s[key] < 0:
            raise ConfigurationError(f"sampling.{key} must be a non-negative integer")
    # construct once to validate numbers early
    LossConfig(**out["loss"])
    OptimizerConfig(**out["optimizer"])
    problem = build_problem(out)
    if problem.steady and s["n_tb"] > 0:
        raise ConfigurationError("temporal-boundary points requested for a steady problem")
    if not problem.steady and s["n_tb"] == 0:
        raise ConfigurationError("time-dependent problem needs sampling.n_tb > 0")
    for key in ("depth", "width"):
        if out["network"][key] < 1:
            raise ConfigurationError(f"network.{key} must be >= 1")
    return out


def config_hash(cfg):
    body = {k: v for k, v in cfg.items() if k != "output"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, default=str).encode()).hexdigest()[:16]


def header_lines(cfg, seed):
    return [f"config_hash: {config_hash(cfg)}", f"seed: {seed}", f"code_version: rtpinn {__version__}",
            f"problem: {cfg['problem']}"]


def output_dir(cfg):
    d = cfg["output"]["dir"]
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(d):
        d = os.path.join(root, d)
    os.makedirs(d, exist_ok=True)
    return d


def build_problem(cfg):
    return get_problem(cfg["problem"], **cfg.get("problem_params", {}))


def build_sets(cfg, problem):
    s = cfg["sampling"]
    sets = build_training_sets(problem.domain, s["n_int"], s["n_sb"], s["n_tb"], s["sampler"], s["seed"])
    if s["n_d"] > 0:
        sets.data = data_points(problem.domain, s["n_d"], seed=s["seed"])
    return sets


def build_rule(cfg, problem):
    q = cfg["quadrature"]
    return sphere_rule(problem.domain.spatial_dim, q["n_mu"], q["n_phi"])


# ---------------------------------------------------------------------------
# file writers


def write_history(path, history, headers):
    with open(path, "w", newline="") as fh:
        for line in headers:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(HISTORY_FIELDS)
        for row in history:
            w.writerow([row["iteration"]] + [repr(float(row[k])) for k in HISTORY_FIELDS[1:]])


def write_csv(path, columns, rows, headers):
    with open(path, "w", newline="") as fh:
        for line in headers:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([f"{v:.10g}" if isinstance(v, (float, np.floating)) else v for v in r])


def write_json(path, obj, headers=None):
    body = dict(obj)
    if headers is not None:
        body = {"header": headers, **body}
    with open(path, "w") as fh:
        json.dump(_jsonable(body), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if np.isfinite(v) else str(v)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


def write_svg(path, text, headers):
    comment = "<!-- " + "; ".join(headers) + " -->\n"
    with open(path, "w") as fh:
        fh.write(text.replace("\n", "\n" + comment, 1))


# ---------------------------------------------------------------------------
# evaluation grids and oracle comparisons


def evaluation_points(problem, res):
    """``(t, x, nu)`` grid for field dumps and the heatmap axes per problem."""
    dom = problem.domain
    if problem.name == "slab1d":
        x = np.linspace(0.0, 1.0, res)[:, None]
        return np.zeros(res), x, np.zeros(res)
    if problem.name == "shell-time":
        r = np.linspace(dom.shell[1], dom.shell[2], res)
        nu = np.geomspace(*dom.frequency, res)
        rr, nn = np.meshgrid(r, nu, indexing="ij")
        x = np.zeros((rr.size, 3))
        x[:, 0] = rr.ravel()
        return np.ones(rr.size) * dom.time_horizon, x, nn.ravel()
    g = np.linspace(0.0, 1.0, res)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    x = np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, 0.5)], axis=1)
    nu = np.zeros(len(x))
    return np.zeros(len(x)), x, nu


def reference_directions(problem, res):
    if problem.domain.spatial_dim == 1:
        return np.linspace(-1.0, 1.0, res)[:, None]
    return np.vstack([np.eye(3), -np.eye(3)])


def field_dump(problem, net, rule, res):
    """Rows ``(t, x..., nu, omega..., u, G, F...)`` and matching heatmap specs."""
    fld = NetworkField(net, problem)
    t, x, nu = evaluation_points(problem, res)
    g = incident_radiation_of(fld, rule, t, x, nu)
    f = heat_flux_of(fld, rule, t, x, nu)
    dirs = reference_directions(problem, res)
    m = len(dirs)
    te, xe, ne = np.repeat(t, m), np.repeat(x, m, axis=0), np.repeat(nu, m)
    oe = np.tile(dirs, (len(x), 1))
    u = fld.value(te, xe, oe, ne)
    d = problem.domain.spatial_dim
    cols = ["t"] + [f"x{i + 1}" for i in range(d)] + ["nu"] + [f"omega{i + 1}" for i in range(dirs.shape[1])] \
        + ["u", "G"] + [f"F{i + 1}" for i in range(d)]
    ge, fe = np.repeat(g, m), np.repeat(f, m, axis=0)
    rows = np.column_stack([te, xe, ne, oe, u, ge, fe])

    maps = []
    if problem.name == "slab1d":
        maps.append(("heatmap_u.svg", u.reshape(res, m), (0, 1), (-1, 1), "intensity u(x, mu)", "x", "mu"))
    elif problem.name == "shell-time":
        b_m = 4 * np.pi * problem.offset(nu)
        rel = (g / b_m).reshape(res, res)
        maps.append(("heatmap_G.svg", rel, problem.domain.shell[1:], (15, 18),
                     "G / b(T_m) at tau = 1", "r", "log10 nu"))
    else:
        maps.append(("heatmap_G.svg", g.reshape(res, res), (0, 1), (0, 1), "incident radiation G on z = 0.5",
                     "x", "y"))
    return cols, rows, maps


def radial_flux_error(net, problem, rule, n_side=8, n_nu=12):
    """Relative L2 error of the radial heat flux against the closed form over the cube and frequency range.

    Evaluated on cell centers of an ``n_side**3`` grid, which for even
    ``n_side`` avoids the singular direction at the cube center.
    """
    c = (np.arange(n_side) + 0.5) / n_side
    x = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)
    nus, _ = gauss_legendre(n_nu).mapped(*problem.domain.frequency)
    xs = np.repeat(x, len(nus), axis=0)
    nu = np.tile(nus, len(x))
    flux = heat_flux_of(NetworkField(net, problem), rule, np.zeros(len(xs)), xs, nu)
    rel = xs - 0.5
    r = np.linalg.norm(rel, axis=1)
    fr = np.sum(flux * rel, axis=1) / r
    exact = radial_flux_oracle(r, nu)
    return float(np.linalg.norm(fr - exact) / np.linalg.norm(exact))


SHELL_PROBES = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)


def shell_incident_radiation(net, problem, rule, tau, r, nu):
    """``G`` at radius ``r`` averaged over the six axis directions of the shell."""
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    fld = NetworkField(net, problem)
    total = np.zeros(len(nu))
    for p in SHELL_PROBES:
        x = np.repeat((r * p)[None, :], len(nu), axis=0)
        total += incident_radiation_of(fld, rule, np.full(len(nu), tau), x, nu)
    return total / len(SHELL_PROBES)


def shell_comparison(net, problem, rule, radii=(2.5, 3.0), tau=1.0, n_nu=25, excess=False):
    """Relative L2 (over a log-spaced frequency grid) difference to the diffusion solution per radius.

    With ``excess=True`` both fields have the background ``4 pi B(T_m)``
    removed first, which measures the transported part alone.
    """
    nu = np.geomspace(*problem.domain.frequency, n_nu)
    base = problem.surface * problem.offset(nu) if excess else 0.0
    out = {}
    for r in radii:
        g = shell_incident_radiation(net, problem, rule, tau, r, nu) - base
        ref = problem.oracles.incident_radiation(np.full(n_nu, tau), np.full(n_nu, r), nu) - base
        out[str(r)] = float(np.linalg.norm(g - ref) / np.linalg.norm(ref))
    return out


def slab_boundary_check(net, problem, n_mu=200, n_x=101):
    """Inflow-boundary fit and value range of a slab solution.

    Returns the relative L2 mismatch ``||u - u_b|| / ||u_b||`` over both
    inflow faces (``x = 0, mu > 0`` and ``x = 1, mu < 0``) on a uniform
    cosine grid, and the extreme values of ``u`` on an ``x``-``mu`` grid.
    """
    fld = NetworkField(net, problem)
    mu = (np.arange(n_mu) + 0.5) / n_mu
    x = np.concatenate([np.zeros(n_mu), np.ones(n_mu)])[:, None]
    omega = np.concatenate([mu, -mu])[:, None]
    zeros = np.zeros(2 * n_mu)
    u = fld.value(zeros, x, omega, zeros)
    ub = problem.boundary(zeros, x, omega, zeros)
    xs, ms = np.meshgrid(np.linspace(0, 1, n_x), np.linspace(-1, 1, n_x), indexing="ij")
    grid = fld.value(np.zeros(xs.size), xs.reshape(-1, 1), ms.reshape(-1, 1), np.zeros(xs.size))
    return {"inflow_rel_l2": float(np.linalg.norm(u - ub) / np.linalg.norm(ub)),
            "u_min": float(grid.min()), "u_max": float(grid.max())}


def inverse_errors(u_net, k_net, problem, rule, n_space=8):
    """Relative L2 errors of ``u``, ``k`` and ``G`` for the inverse fixture."""
    oracles = problem.oracles
    fld = NetworkField(u_net, problem)
    e_u = empirical_generalization_error(fld, oracles.intensity, problem.domain, n_space, relative=True)
    nodes, w = gauss_legendre(n_space).mapped(0.0, 1.0)
    mesh = np.meshgrid(nodes, nodes, nodes, indexing="ij")
    x = np.stack([m.ravel() for m in mesh], axis=1)
    wx = np.einsum("i,j,k->ijk", w, w, w).ravel()
    k_hat = AbsorptionNetwork(k_net, problem.domain)(x, np.zeros(len(x)))
    k_true = oracles.absorption(x, None)
    e_k = np.sqrt(np.sum(wx * (k_hat - k_true) ** 2) / np.sum(wx * k_true**2))
    g_hat = incident_radiation_of(fld, rule, np.zeros(len(x)), x, np.zeros(len(x)))
    g_true = oracles.incident_radiation(None, x, None)
    e_g = np.sqrt(np.sum(wx * (g_hat - g_true) ** 2) / np.sum(wx * g_true**2))
    return {"u": float(e_u), "k": float(e_k), "G": float(e_g)}


def bound_report(cfg, problem, sets, rule, report):
    """Evaluate the applicable generalization bound for a finished run."""
    dom = problem.domain
    s = sets.interior
    k = problem.absorption(s.x, s.nu) if len(s) else np.zeros(1)
    sig = problem.scattering(s.x, s.nu) if len(s) else np.zeros(1)
    psi = psi_sup(problem.kernel, sphere_rule(dom.spatial_dim, 16, 16)) if problem.has_scattering else 0.0
    b = cfg["bound"]
    inp = BoundInputs(
        e_sb=report.e_sb, e_int=report.e_int, e_tb=report.e_tb,
        n_sb=max(len(sets.spatial_boundary), 1), n_int=max(len(s), 1), n_tb=max(len(sets.temporal_boundary), 1),
        n_s=rule.size, s=cfg["quadrature"]["n_mu"], d=dom.spatial_dim, s_d=problem.surface, psi_sup=psi,
        time_horizon=dom.time_horizon, speed=problem.speed if np.isfinite(problem.speed) else 1.0,
        sigma_sup=float(np.max(sig)), k_min=float(np.min(k)), sigma_min=float(np.min(sig)),
        sigma_max=float(np.max(sig)), **b,
    )
    if dom.steady:
        value, which = lemma2_bound(inp), "steady"
    else:
        value, which = lemma1_bound(inp), "time-dependent"
    return {"bound": which, "inputs": asdict(inp), "result": asdict(value),
            "note": "Hardy-Krause variations and c_bar are user-supplied constants; the value is not rigorous "
                    "without them."}


# ---------------------------------------------------------------------------
# runs


def _optimizer(cfg):
    return OptimizerConfig(**cfg["optimizer"])


def run_forward(cfg, log=None):
    """Train one forward model and write all artifacts; returns the summary dict."""
    cfg = resolve_config(cfg)
    if cfg["problem"] == "inverse-cube":
        raise ConfigurationError("inverse-cube is an inverse problem; use the invert verb")
    problem = build_problem(cfg)
    sets = build_sets(cfg, problem)
    rule = build_rule(cfg, problem)
    net_cfg = cfg["network"]
    net = init_network(hidden_widths(problem.domain.input_dim, net_cfg["depth"], net_cfg["width"]),
                       seed=net_cfg["seed"])
    model = train(problem, sets, rule, LossConfig(**cfg["loss"]), _optimizer(cfg), net, callback=log,
                  provenance={"config_hash": config_hash(cfg)})
    return _emit_forward(cfg, problem, sets, rule, model)


def _emit_forward(cfg, problem, sets, rule, model, extra=None):
    out = output_dir(cfg)
    seed = cfg["network"]["seed"]
    headers = header_lines(cfg, seed)
    write_history(os.path.join(out, "history.csv"), model.history, headers)
    save_checkpoint(os.path.join(out, "model.ckpt"), model.u_net,
                    {"config_hash": config_hash(cfg), "seed": seed, "code_version": __version__})
    cols, rows, maps = field_dump(problem, model.u_net, rule, cfg["output"]["resolution"])
    write_csv(os.path.join(out, "fields.csv"), cols, rows, headers)
    for name, vals, xr, yr, title, xl, yl in maps:
        write_svg(os.path.join(out, name), heatmap_svg(vals, xr, yr, title, xl, yl), headers)
    bound = bound_report(cfg, problem, sets, rule, model.report)
    write_json(os.path.join(out, "bound.json"), bound, headers)
    summary = {
        "problem": problem.name,
        "iterations": model.iterations,
        "message": model.message,
        "wall_time_s": model.wall_time,
        "loss": model.report.as_row(),
        "counts": sets.counts,
    }
    if problem.name == "slab1d":
        summary["boundary_check"] = slab_boundary_check(model.u_net, problem)
    if problem.name == "cube3d-poly":
        summary["radial_flux_rel_l2"] = radial_flux_error(model.u_net, problem, rule)
    if problem.name == "shell-time":
        summary["diffusion_rel_l2_at_tau1"] = shell_comparison(model.u_net, problem, rule)
        summary["diffusion_excess_rel_l2_at_tau1"] = shell_comparison(model.u_net, problem, rule, excess=True)
    summary.update(extra or {})
    write_json(os.path.join(out, "summary.json"), summary, headers)
    summary["output_dir"] = out
    return summary


def run_inverse(cfg, log=None):
    cfg = resolve_config(cfg)
    if cfg["problem"] != "inverse-cube":
        raise ConfigurationError("the invert verb needs problem: inverse-cube")
    if cfg["sampling"]["n_d"] <= 0:
        raise ConfigurationError("inverse runs require sampling.n_d > 0")
    problem, measured, _ = inverse_problem_fixture()
    sets = build_sets(cfg, problem)
    rule = build_rule(cfg, problem)
    nc, kc = cfg["network"], cfg["k_network"]
    u_net = init_network(hidden_widths(problem.domain.input_dim, nc["depth"], nc["width"]), seed=nc["seed"])
    k_net = init_network(hidden_widths(absorption_input_dim(problem.domain), kc["depth"], kc["width"]),
                         seed=kc["seed"])
    model = train(problem, sets, rule, LossConfig(**cfg["loss"]), _optimizer(cfg), u_net, k_net, mode="inverse",
                  measured=measured, callback=log, provenance={"config_hash": config_hash(cfg)})
    return _emit_inverse(cfg, problem, sets, rule, model)


def _emit_inverse(cfg, problem, sets, rule, model):
    out = output_dir(cfg)
    seed = cfg["network"]["seed"]
    headers = header_lines(cfg, seed)
    write_history(os.path.join(out, "history.csv"), model.history, headers)
    meta = {"config_hash": config_hash(cfg), "seed": seed, "code_version": __version__}
    save_checkpoint(os.path.join(out, "model.ckpt"), model.u_net, meta)
    save_checkpoint(os.path.join(out, "k_model.ckpt"), model.k_net, meta)
    cols, rows, maps = field_dump(problem, model.u_net, rule, cfg["output"]["resolution"])
    write_csv(os.path.join(out, "fields.csv"), cols, rows, headers)
    for name, vals, xr, yr, title, xl, yl in maps:
        write_svg(os.path.join(out, name), heatmap_svg(vals, xr, yr, title, xl, yl), headers)

    kfun = AbsorptionNetwork(model.k_net, problem.domain)
    res = cfg["output"]["resolution"]
    s = np.linspace(0.0, 1.0, res)
    diag = np.stack([s, s, s], axis=1)
    k_rows = [("diagonal", *p, a, b) for p, a, b in zip(diag, kfun(diag), problem.oracles.absorption(diag, None))]
    g = np.linspace(0.0, 1.0, res)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    plane = np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, 0.5)], axis=1)
    k_plane = kfun(plane)
    k_rows += [("plane_z0.5", *p, a, b) for p, a, b in zip(plane, k_plane, problem.oracles.absorption(plane, None))]
    write_csv(os.path.join(out, "k_field.csv"), ["section", "x1", "x2", "x3", "k", "k_exact"], k_rows, headers)
    write_svg(os.path.join(out, "heatmap_k.svg"),
              heatmap_svg(k_plane.reshape(res, res), (0, 1), (0, 1), "reconstructed k on z = 0.5", "x", "y"), headers)

    # the steady bound is evaluated with the reconstructed k
    bound = bound_report(cfg, problem, sets, rule, model.report)
    write_json(os.path.join(out, "bound.json"), bound, headers)
    errors = inverse_errors(model.u_net, model.k_net, problem, rule)
    summary = {
        "problem": problem.name,
        "iterations": model.iterations,
        "message": model.message,
        "wall_time_s": model.wall_time,
        "loss": model.report.as_row(),
        "counts": sets.counts,
        "relative_l2": errors,
    }
    write_json(os.path.join(out, "summary.json"), summary, headers)
    summary["output_dir"] = out
    return summary


def run_ensemble(cfg, jobs=1):
    cfg = resolve_config(cfg)
    problem = build_problem(cfg) if cfg["problem"] != "inverse-cube" else inverse_problem_fixture()[0]
    measured = inverse_problem_fixture()[1] if cfg["problem"] == "inverse-cube" else None
    mode = "inverse" if measured is not None else "forward"
    sets = build_sets(cfg, problem)
    rule = build_rule(cfg, problem)
    grid = EnsembleGrid(**{k: tuple(v) if isinstance(v, list) else v for k, v in cfg["ensemble"].items()})
    kc = cfg["k_network"]
    best, board = ensemble_train(problem, sets, rule, grid, _optimizer(cfg), LossConfig(**cfg["loss"]), mode=mode,
                                 measured=measured, k_hidden=(kc["width"],) * kc["depth"], jobs=jobs)
    out = output_dir(cfg)
    write_leaderboard(os.path.join(out, "leaderboard.csv"), board, header_lines(cfg, grid.seed_base))
    best_cfg = copy.deepcopy(cfg)
    best_cfg["network"].update({"depth": best.provenance["depth"], "width": best.provenance["width"],
                                "seed": best.provenance["seed"]})
    best_cfg["loss"].update({"lam": best.provenance["lam"], "lam_reg": best.provenance["lam_reg"]})
    if mode == "inverse":
        summary = _emit_inverse(best_cfg, problem, sets, rule, best)
    else:
        summary = _emit_forward(best_cfg, problem, sets, rule, best)
    summary["ensemble_size"] = len(board)
    summary["best"] = best.provenance
    return summary


def run_bound(cfg_bound):
    """Evaluate a bound from explicitly supplied inputs (the ``bound`` verb)."""
    which = cfg_bound.pop("lemma", "auto")
    try:
        inp = BoundInputs(**cfg_bound)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None
    if which == "auto":
        which = "time-dependent" if inp.time_horizon > 0 else "steady"
    value = lemma1_bound(inp) if which == "time-dependent" else lemma2_bound(inp)
    return {"bound": which, "inputs": asdict(inp), "result": asdict(value)}
