"""Desk-scale neural network: a tiny strided-conv backbone feeding two
independent binary heads (FC-ReLU, FC-ReLU, FC-sigmoid), with hand-written
backprop, Adam with decoupled weight decay, and finite-difference gradient
checking.

Everything is float64 and deterministic: same seed, same batches, same
bits. Tensors are plain numpy arrays.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ShapeMismatch, StaleCache

CHECKPOINT_MAGIC = b"WLCP"
CHECKPOINT_VERSION = 1

PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class NetConfig:
    """Architecture knobs. Defaults are the desk-scale backbone."""

    input_size: int = 64
    in_channels: int = 3
    conv_channels: tuple = (8, 16, 32)
    head_hidden: tuple = (16, 8)
    kernel: int = 3
    stride: int = 2


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.9999
    weight_decay: float = 0.1
    eps: float = 1e-8
    batch_size: int = 128

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class ModelParams:
    """All weights/biases, keyed by layer name."""

    arch: NetConfig
    values: dict  # name -> float64 ndarray

    def param_count(self) -> int:
        return sum(v.size for v in self.values.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, {k: v.copy() for k, v in self.values.items()})


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.values.items()},
            v={k: np.zeros_like(v) for k, v in params.values.items()},
            t=0,
        )


def _param_names(cfg: NetConfig):
    names = []
    for i in range(len(cfg.conv_channels)):
        names += [f"conv{i}_w", f"conv{i}_b"]
    for head in ("left", "right"):
        for j in range(len(cfg.head_hidden) + 1):
            names += [f"{head}_fc{j}_w", f"{head}_fc{j}_b"]
    return names


def _shapes(cfg: NetConfig):
    shapes = {}
    c_in = cfg.in_channels
    for i, c_out in enumerate(cfg.conv_channels):
        shapes[f"conv{i}_w"] = (c_out, c_in, cfg.kernel, cfg.kernel)
        shapes[f"conv{i}_b"] = (c_out,)
        c_in = c_out
    feat = cfg.conv_channels[-1]
    dims = (feat,) + tuple(cfg.head_hidden) + (1,)
    for head in ("left", "right"):
        for j in range(len(dims) - 1):
            shapes[f"{head}_fc{j}_w"] = (dims[j + 1], dims[j])
            shapes[f"{head}_fc{j}_b"] = (dims[j + 1],)
    return shapes


def init_params(cfg: NetConfig = NetConfig(), seed: int = 0) -> ModelParams:
    """He-initialized weights, zero biases."""
    rng = np.random.default_rng(seed)
    values = {}
    for name, shape in _shapes(cfg).items():
        if name.endswith("_b"):
            values[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[1:]))
            values[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return ModelParams(cfg, values)


# --- conv plumbing -----------------------------------------------------------

def _im2col_indices(c, h, w, k, s, pad):
    ho = (h + 2 * pad - k) // s + 1
    wo = (w + 2 * pad - k) // s + 1
    c_idx = np.repeat(np.arange(c), k * k).reshape(-1, 1)
    ki = np.tile(np.repeat(np.arange(k), k), c).reshape(-1, 1)
    kj = np.tile(np.arange(k), c * k).reshape(-1, 1)
    oi = s * np.repeat(np.arange(ho), wo).reshape(1, -1)
    oj = s * np.tile(np.arange(wo), ho).reshape(1, -1)
    return c_idx, ki + oi, kj + oj, ho, wo


_IDX_CACHE: dict = {}


def _indices_for(shape, k, s, pad):
    key = (shape, k, s, pad)
    if key not in _IDX_CACHE:
        _IDX_CACHE[key] = _im2col_indices(*shape, k, s, pad)
    return _IDX_CACHE[key]


def _conv_forward(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    k = w.shape[-1]
    ci, ii, jj, ho, wo = _indices_for((c, h, wd), k, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = xp[:, ci, ii, jj]  # (n, c*k*k, ho*wo)
    out = np.einsum("fk,nkl->nfl", w.reshape(w.shape[0], -1), cols) + b[None, :, None]
    return out.reshape(n, w.shape[0], ho, wo), cols


def _conv_backward(dout, cols, x_shape, w, stride, pad):
    n, c, h, wd = x_shape
    k = w.shape[-1]
    ci, ii, jj, ho, wo = _indices_for((c, h, wd), k, stride, pad)
    dflat = dout.reshape(n, w.shape[0], -1)  # (n, f, l)
    dw = np.einsum("nfl,nkl->fk", dflat, cols).reshape(w.shape)
    db = dflat.sum(axis=(0, 2))
    dcols = np.einsum("fk,nfl->nkl", w.reshape(w.shape[0], -1), dflat)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    np.add.at(dxp, (np.arange(n)[:, None, None], ci, ii, jj), dcols)
    dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
    return dx, dw, db


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# --- forward / loss / backward ----------------------------------------------

@dataclass
class ForwardCache:
    params: ModelParams
    x: np.ndarray
    conv_cols: list
    conv_pre: list
    features: np.ndarray
    pool_hw: tuple
    head_pre: dict
    head_act: dict
    logits: dict


def forward(params: ModelParams, batch: np.ndarray):
    """Run the backbone and both heads.

    batch: (N, C, S, S) float64 in [0, 1]. Returns (p_left, p_right, cache)
    with probabilities strictly inside (0, 1).
    """
    cfg = params.arch
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or batch.shape[1] != cfg.in_channels or batch.shape[2] != cfg.input_size or batch.shape[3] != cfg.input_size:
        raise ShapeMismatch(
            f"expected (N, {cfg.in_channels}, {cfg.input_size}, {cfg.input_size}), got {batch.shape}"
        )
    x = batch
    cols_list, pre_list = [], []
    for i in range(len(cfg.conv_channels)):
        pre, cols = _conv_forward(x, params.values[f"conv{i}_w"], params.values[f"conv{i}_b"], cfg.stride, 1)
        cols_list.append(cols)
        pre_list.append(pre)
        x = np.maximum(pre, 0.0)
    pool_hw = x.shape[2:]
    features = x.mean(axis=(2, 3))  # global average pool, (N, F)

    head_pre, head_act, logits, probs = {}, {}, {}, {}
    n_fc = len(cfg.head_hidden) + 1
    for head in ("left", "right"):
        a = features
        pres, acts = [], []
        for j in range(n_fc):
            z = a @ params.values[f"{head}_fc{j}_w"].T + params.values[f"{head}_fc{j}_b"]
            pres.append(z)
            if j < n_fc - 1:
                a = np.maximum(z, 0.0)
                acts.append(a)
        head_pre[head] = pres
        head_act[head] = acts
        logits[head] = pres[-1][:, 0]
        probs[head] = _sigmoid(logits[head])

    cache = ForwardCache(params, batch, cols_list, pre_list, features, pool_hw, head_pre, head_act, logits)
    return probs["left"], probs["right"], cache


def bce_loss(p: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy with probability clamping."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeMismatch(f"scores {p.shape} vs labels {y.shape}")
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(np.mean(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))))


def total_loss(params: ModelParams, batch, y_left, y_right) -> float:
    pl, pr, _ = forward(params, batch)
    return bce_loss(pl, y_left) + bce_loss(pr, y_right)


def backward(params: ModelParams, cache: ForwardCache, y_left, y_right) -> dict:
    """Exact gradients of bce(left) + bce(right) w.r.t. every parameter."""
    if cache.params is not params:
        raise StaleCache("cache was produced by a different ModelParams")
    cfg = params.arch
    n = cache.x.shape[0]
    grads = {}
    n_fc = len(cfg.head_hidden) + 1
    dfeat = np.zeros_like(cache.features)
    for head, y in (("left", y_left), ("right", y_right)):
        y = np.asarray(y, dtype=np.float64)
        p = _sigmoid(cache.logits[head])
        # d(mean BCE)/d logit, exact while the clamp is inactive
        dz = ((p - y) / n)[:, None]
        for j in range(n_fc - 1, -1, -1):
            a_in = cache.features if j == 0 else cache.head_act[head][j - 1]
            grads[f"{head}_fc{j}_w"] = dz.T @ a_in
            grads[f"{head}_fc{j}_b"] = dz.sum(axis=0)
            da = dz @ params.values[f"{head}_fc{j}_w"]
            if j > 0:
                dz = da * (cache.head_pre[head][j - 1] > 0)
        dfeat += da

    ph, pw = cache.pool_hw
    dx = np.repeat(np.repeat(dfeat[:, :, None, None], ph, axis=2), pw, axis=3) / (ph * pw)
    for i in range(len(cfg.conv_channels) - 1, -1, -1):
        dpre = dx * (cache.conv_pre[i] > 0)
        x_in = cache.x if i == 0 else np.maximum(cache.conv_pre[i - 1], 0.0)
        dx, dw, db = _conv_backward(dpre, cache.conv_cols[i], x_in.shape, params.values[f"conv{i}_w"], cfg.stride, 1)
        grads[f"conv{i}_w"] = dw
        grads[f"conv{i}_b"] = db
    return grads


def adam_step(params: ModelParams, grads: dict, state: AdamState, cfg: OptimizerConfig):
    """One Adam update with decoupled weight decay. Returns (params', state')."""
    t = state.t + 1
    new_vals, new_m, new_v = {}, {}, {}
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, p in params.values.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        m = cfg.beta1 * state.m[name] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[name] + (1.0 - cfg.beta2) * g * g
        step = cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        p_new = p - step - cfg.lr * cfg.weight_decay * p
        if not np.all(np.isfinite(p_new)):
            raise FloatingPointError(f"non-finite values in {name} after update")
        new_vals[name] = p_new
        new_m[name] = m
        new_v[name] = v
    return ModelParams(params.arch, new_vals), AdamState(new_m, new_v, t)


def grad_check(params: ModelParams, batch, y_left, y_right, h: float = 1e-5, sample_frac: float = 0.01, seed: int = 0) -> float:
    """Max relative error between backprop and central differences over a
    random parameter sample."""
    _, _, cache = forward(params, batch)
    grads = backward(params, cache, y_left, y_right)
    rng = np.random.default_rng(seed)
    l0 = total_loss(params, batch, y_left, y_right)

    def rel_err(fd, an):
        denom = max(abs(fd), abs(an))
        if denom < 1e-7:
            return 0.0
        return abs(fd - an) / denom

    def fd_error(flat, idx, an, step):
        orig = flat[idx]
        flat[idx] = orig + step
        lp = total_loss(params, batch, y_left, y_right)
        flat[idx] = orig - step
        lm = total_loss(params, batch, y_left, y_right)
        flat[idx] = orig
        err = rel_err((lp - lm) / (2 * step), an)
        if err > 1e-5:
            # A parameter sitting on (or within `step` of) a ReLU kink has two
            # distinct one-sided slopes; backprop returns a valid subgradient,
            # so accept a match against either side.
            err = min(err, rel_err((lp - l0) / step, an), rel_err((l0 - lm) / step, an))
        return err

    worst = 0.0
    for name, p in params.values.items():
        n_pick = max(2, int(np.ceil(sample_frac * p.size)))
        flat = p.reshape(-1)
        for idx in rng.choice(p.size, size=min(n_pick, p.size), replace=False):
            an = grads[name].reshape(-1)[idx]
            err = fd_error(flat, idx, an, h)
            # A ReLU kink inside the stencil produces an O(1) error that
            # shrinks with the step; a wrong gradient does not.
            for smaller in (h / 8, h / 64):
                if err <= 1e-5:
                    break
                err = min(err, fd_error(flat, idx, an, smaller))
            worst = max(worst, err)
    return worst


# --- checkpoints -------------------------------------------------------------

def save_checkpoint(params: ModelParams, path):
    """Binary layout: magic, version, JSON arch blob, shape table, raw data."""
    arch_json = json.dumps(
        {
            "input_size": params.arch.input_size,
            "in_channels": params.arch.in_channels,
            "conv_channels": list(params.arch.conv_channels),
            "head_hidden": list(params.arch.head_hidden),
            "kernel": params.arch.kernel,
            "stride": params.arch.stride,
        }
    ).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(arch_json)))
        f.write(arch_json)
        names = _param_names(params.arch)
        f.write(struct.pack("<I", len(names)))
        for name in names:
            arr = params.values[name]
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for name in names:
            f.write(np.ascontiguousarray(params.values[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as f:
        if f.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, arch_len = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        arch = json.loads(f.read(arch_len))
        cfg = NetConfig(
            input_size=arch["input_size"],
            in_channels=arch["in_channels"],
            conv_channels=tuple(arch["conv_channels"]),
            head_hidden=tuple(arch["head_hidden"]),
            kernel=arch["kernel"],
            stride=arch["stride"],
        )
        (n_arrays,) = struct.unpack("<I", f.read(4))
        shapes = []
        for _ in range(n_arrays):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode()
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            shapes.append((name, shape))
        values = {}
        for name, shape in shapes:
            count = int(np.prod(shape))
            values[name] = np.frombuffer(f.read(8 * count), dtype="<f8").reshape(shape).copy()
    return ModelParams(cfg, values)
