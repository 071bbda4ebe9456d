"""Fully connected tanh network with exact input and parameter derivatives.

Parameters live in one flat float64 vector ``theta``. The layout is, layer by
layer, the row-major weight matrix ``W_k`` of shape ``(d_{k+1}, d_k)``
followed by the bias ``b_k``. Derivatives are propagated analytically:
tangents (directional input derivatives) are pushed forward alongside the
activations, and :func:`backward` runs reverse accumulation through both
streams so that losses depending on ``u`` *and* on ``D_v u`` get exact
``theta``-gradients.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NumericalOverflowError


def param_count(widths):
    return sum((widths[k] + 1) * widths[k + 1] for k in range(len(widths) - 1))


@dataclass
class MlpNetwork:
    widths: tuple
    theta: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ContractViolation(f"invalid layer widths {self.widths}")
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (param_count(self.widths),):
            raise ContractViolation(
                f"theta has shape {self.theta.shape}, expected ({param_count(self.widths)},)"
            )

    @property
    def n_params(self):
        return len(self.theta)

    @property
    def input_dim(self):
        return self.widths[0]

    def layers(self, theta=None):
        """List of ``(W, b)`` views into ``theta``."""
        theta = self.theta if theta is None else theta
        out, pos = [], 0
        for d_in, d_out in zip(self.widths[:-1], self.widths[1:]):
            W = theta[pos:pos + d_in * d_out].reshape(d_out, d_in)
            pos += d_in * d_out
            b = theta[pos:pos + d_out]
            pos += d_out
            out.append((W, b))
        return out

    def weight_mask(self):
        """Boolean mask of the entries of ``theta`` that are weights (not biases)."""
        mask = np.zeros(self.n_params, dtype=bool)
        pos = 0
        for d_in, d_out in zip(self.widths[:-1], self.widths[1:]):
            mask[pos:pos + d_in * d_out] = True
            pos += (d_in + 1) * d_out
        return mask

    def with_theta(self, theta):
        return MlpNetwork(self.widths, theta)

    def copy(self):
        return MlpNetwork(self.widths, self.theta.copy())


def flatten(layers):
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in layers])


def unflatten(widths, theta):
    return [(W.copy(), b.copy()) for W, b in MlpNetwork(widths, theta).layers()]


def init_network(widths, seed=0, scheme="xavier_uniform"):
    """Xavier-uniform weights, zero biases; deterministic per ``seed``."""
    if scheme != "xavier_uniform":
        raise ContractViolation(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        lim = np.sqrt(6.0 / (d_in + d_out))
        layers.append((rng.uniform(-lim, lim, size=(d_out, d_in)), np.zeros(d_out)))
    return MlpNetwork(tuple(widths), flatten(layers))


def _check_input(net, y):
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    y2 = y[None, :] if single else y
    if y2.ndim != 2 or y2.shape[1] != net.input_dim:
        raise ContractViolation(f"input has shape {y.shape}, network expects {net.input_dim} features")
    return y2, single


def _finite_or_raise(a, layer):
    if not np.all(np.isfinite(a)):
        bad = np.nonzero(~np.all(np.isfinite(a.reshape(len(a), -1)), axis=1))[0]
        raise NumericalOverflowError(f"non-finite activation in layer {layer}", layer=layer, points=bad[:10])


def forward(net, y, theta=None):
    """Network value at ``y`` (one point ``(d_1,)`` or a batch ``(N, d_1)``)."""
    y2, single = _check_input(net, y)
    layers = net.layers(theta)
    a = y2
    for k, (W, b) in enumerate(layers):
        z = a @ W.T + b
        a = np.tanh(z) if k < len(layers) - 1 else z
        _finite_or_raise(a, k + 1)
    out = a[:, 0]
    return out[0] if single else out


class _Cache:
    __slots__ = ("acts", "tans", "pre_tans", "theta")

    def __init__(self, acts, tans, pre_tans, theta):
        self.acts = acts
        self.tans = tans
        self.pre_tans = pre_tans
        self.theta = theta


def forward_tangent(net, y, dirs=None, theta=None):
    """Value and directional input derivatives, keeping what :func:`backward` needs.

    Parameters
    ----------
    y : array (N, d_1)
    dirs : array (N, T, d_1) or (N, d_1) or None
        Input-space directions; the result holds ``grad u(y_n) . dirs[n, t]``.

    Returns
    -------
    value : (N,)
    tangents : (N, T)
    cache : opaque object for :func:`backward`
    """
    y2, _ = _check_input(net, y)
    n = len(y2)
    if dirs is None:
        dirs = np.zeros((n, 0, net.input_dim))
    dirs = np.asarray(dirs, dtype=np.float64)
    if dirs.ndim == 2:
        dirs = dirs[:, None, :]
    if dirs.shape[0] != n or dirs.shape[2] != net.input_dim:
        raise ContractViolation(f"direction block has shape {dirs.shape}")
    theta = net.theta if theta is None else theta
    layers = net.layers(theta)
    acts, tans, pre_tans = [y2], [dirs], []
    a, t = y2, dirs
    last = len(layers) - 1
    for k, (W, b) in enumerate(layers):
        z = a @ W.T + b
        dz = t @ W.T
        pre_tans.append(dz)
        if k < last:
            a = np.tanh(z)
            t = (1.0 - a * a)[:, None, :] * dz
        else:
            a, t = z, dz
        _finite_or_raise(a, k + 1)
        acts.append(a)
        tans.append(t)
    return a[:, 0], t[:, :, 0], _Cache(acts, tans, pre_tans, theta)


def backward(net, cache, g_val, g_tan=None):
    """Gradient w.r.t. ``theta`` of ``sum_n g_val[n] u_n + sum_{n,t} g_tan[n,t] (D_t u)_n``."""
    acts, tans = cache.acts, cache.tans
    layers = net.layers(cache.theta)
    n = len(acts[0])
    n_dir = tans[0].shape[1]
    a_bar = np.asarray(g_val, dtype=np.float64).reshape(n, 1)
    t_bar = None
    if n_dir:
        t_bar = np.zeros((n, n_dir, 1)) if g_tan is None else np.asarray(g_tan, dtype=np.float64).reshape(n, n_dir, 1)
    grads = [None] * len(layers)
    last = len(layers) - 1
    for k in range(last, -1, -1):
        W, _ = layers[k]
        a_out, a_in = acts[k + 1], acts[k]
        if k < last:
            s = 1.0 - a_out * a_out
            if n_dir:
                # tangent = s * dz with s = 1 - a^2, so s feeds back into a_bar via -2a
                a_bar = a_bar - 2.0 * a_out * (t_bar * cache.pre_tans[k]).sum(axis=1)
                t_bar = t_bar * s[:, None, :]
            z_bar = a_bar * s
        else:
            z_bar = a_bar
        gW = z_bar.T @ a_in
        if n_dir:
            t_in = tans[k]
            gW += t_bar.reshape(n * n_dir, -1).T @ t_in.reshape(n * n_dir, -1)
        grads[k] = (gW, z_bar.sum(axis=0))
        if k > 0:
            a_bar = z_bar @ W
            if n_dir:
                t_bar = t_bar @ W
    return flatten(grads)


CHUNK = 4096


def forward_batched(net, y, dirs=None, theta=None, chunk=CHUNK):
    """Like :func:`forward_tangent` without the cache, evaluated in cache-sized chunks."""
    n = len(y)
    n_dir = 0 if dirs is None else (1 if np.ndim(dirs) == 2 else dirs.shape[1])
    vals = np.empty(n)
    tans = np.empty((n, n_dir))
    for i in range(0, n, chunk):
        sl = slice(i, i + chunk)
        if n_dir:
            v, t, _ = forward_tangent(net, y[sl], dirs[sl], theta)
            tans[sl] = t
        else:
            v = forward(net, y[sl], theta)
        vals[sl] = v
    return vals, tans


def backward_batched(net, y, g_val, dirs=None, g_tan=None, theta=None, chunk=CHUNK):
    """Chunked :func:`backward`; activations are recomputed per chunk."""
    grad = np.zeros(net.n_params)
    for i in range(0, len(y), chunk):
        sl = slice(i, i + chunk)
        _, _, cache = forward_tangent(net, y[sl], None if dirs is None else dirs[sl], theta)
        grad += backward(net, cache, g_val[sl], None if g_tan is None else g_tan[sl])
    return grad


@dataclass
class EvalRecord:
    value: float
    input_grad: np.ndarray
    param_grad: np.ndarray = None
    mixed_param_grads: np.ndarray = None  # (d_1, M): d/dtheta of du/dy_j


def eval_with_gradients(net, y, need_param_grads=False):
    """Value, full input gradient and (optionally) parameter gradients at one point."""
    y2, single = _check_input(net, y)
    if not single and len(y2) != 1:
        raise ContractViolation("eval_with_gradients takes a single point")
    d = net.input_dim
    val, tan, cache = forward_tangent(net, y2, np.eye(d)[None, :, :])
    rec = EvalRecord(float(val[0]), tan[0].copy())
    if need_param_grads:
        rec.param_grad = backward(net, cache, np.ones(1), np.zeros((1, d)))
        rec.mixed_param_grads = np.stack(
            [backward(net, cache, np.zeros(1), np.eye(d)[j][None, :]) for j in range(d)]
        )
    return rec


CKPT_MAGIC = b"RTPN"
CKPT_VERSION = 1


def save_checkpoint(path, net, header=None):
    """Write ``net`` to ``path``.

    Layout (all integers and floats little-endian)::

        4s   magic "RTPN"
        u32  format version (1)
        u32  length L of the UTF-8 JSON header
        L    JSON header (config hash, seed, code version, ...)
        u32  number of widths K
        K*u32 widths
        u64  parameter count M
        M*f64 theta
    """
    meta = json.dumps(header or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(net.widths)))
        fh.write(struct.pack(f"<{len(net.widths)}I", *net.widths))
        fh.write(struct.pack("<Q", net.n_params))
        fh.write(np.ascontiguousarray(net.theta, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(net, header)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CKPT_MAGIC:
        raise ContractViolation(f"{path}: not an rtpinn checkpoint")
    version, meta_len = struct.unpack_from("<II", data, 4)
    if version != CKPT_VERSION:
        raise ContractViolation(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    header = json.loads(data[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (k,) = struct.unpack_from("<I", data, pos)
    pos += 4
    widths = struct.unpack_from(f"<{k}I", data, pos)
    pos += 4 * k
    (m,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    theta = np.frombuffer(data, dtype="<f8", count=m, offset=pos).astype(np.float64)
    return MlpNetwork(tuple(widths), theta), header
