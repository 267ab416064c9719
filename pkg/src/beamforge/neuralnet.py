"""Three Conv+Pool hidden layers and an FC output, trained with sigmoid cross-entropy.

Every forward/backward routine operates on a batch: activations have shape
``(batch, channels, length)``. A single sample is a batch of one.

Conventions fixed here (and relied on by the checkpoint format):

* convolution is cross-correlation with stride 1 and "same" zero padding,
  ``pad_left = (k - 1) // 2`` and ``pad_right = k // 2``;
* pooling is max pooling with window 2 and stride 2, ties go to the earlier
  position;
* flattening is channel-major, then position;
* the FC layer emits raw logits, the sigmoid lives in the loss.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .core import FormatError

PRESETS = {
    "nps1": (5, (16, 32, 64)),
    "nps2": (10, (32, 64, 128)),
}

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ArchitectureSpec:
    input_len: int
    output_dim: int
    kernel: int = 5
    filters: tuple = (16, 32, 64)
    preset: str = "custom"

    def __post_init__(self):
        if self.input_len < 8 or self.input_len % 8:
            raise ValueError(f"input_len must be a positive multiple of 8, got {self.input_len}")
        if len(self.filters) != 3:
            raise ValueError("exactly three conv layers are required")
        if self.kernel < 1 or self.output_dim < 1 or min(self.filters) < 1:
            raise ValueError("kernel, filters and output_dim must be >= 1")
        if self.preset in PRESETS and PRESETS[self.preset] != (self.kernel, tuple(self.filters)):
            raise ValueError(f"preset {self.preset} requires kernel/filters {PRESETS[self.preset]}")

    @classmethod
    def from_preset(cls, preset, input_len, output_dim):
        try:
            k, f = PRESETS[preset]
        except KeyError:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}") from None
        return cls(input_len, output_dim, k, f, preset)

    @property
    def flat_len(self) -> int:
        return self.filters[-1] * (self.input_len // 8)

    def shapes(self):
        """Parameter shapes in canonical order: conv1 w, b, conv2 w, b, conv3 w, b, fc w, b."""
        out = []
        in_ch = 1
        for f in self.filters:
            out += [(f, in_ch, self.kernel), (f,)]
            in_ch = f
        out += [(self.output_dim, self.flat_len), (self.output_dim,)]
        return out

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes())


@dataclass
class NetworkParameters:
    arch: ArchitectureSpec
    tensors: list

    def __post_init__(self):
        got = [t.shape for t in self.tensors]
        if got != self.arch.shapes():
            raise ValueError(f"parameter shapes {got} do not match architecture {self.arch.shapes()}")

    @property
    def conv(self):
        return [(self.tensors[2 * i], self.tensors[2 * i + 1]) for i in range(3)]

    @property
    def fc(self):
        return self.tensors[6], self.tensors[7]

    def copy(self):
        return NetworkParameters(self.arch, [t.copy() for t in self.tensors])

    @classmethod
    def zeros(cls, arch):
        return cls(arch, [np.zeros(s) for s in arch.shapes()])


@dataclass
class ForwardCache:
    x: np.ndarray
    conv_in: list = field(default_factory=list)    # padded inputs of each conv
    conv_out: list = field(default_factory=list)   # post-ReLU outputs of each conv
    pool_arg: list = field(default_factory=list)   # 0/1 argmax offset per pool window
    flat: np.ndarray | None = None
    logits: np.ndarray | None = None


def _pads(k):
    return (k - 1) // 2, k // 2


def _im2col(xp, k, length):
    # (B, C, length + k - 1) -> (B * length, C * k), rows ordered (batch, position)
    B, C, _ = xp.shape
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)[:, :, :length, :]
    return win.transpose(0, 2, 1, 3).reshape(B * length, C * k)


def _correlate(xp, w, length):
    B = xp.shape[0]
    O, C, k = w.shape
    y = _im2col(xp, k, length) @ w.reshape(O, C * k).T
    return y.reshape(B, length, O).transpose(0, 2, 1)


def conv1d_forward(x, w, b, apply_relu=True):
    """Same-padded stride-1 cross-correlation, shape (B, C, L) -> (B, O, L)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        return conv1d_forward(x[None], w, b, apply_relu)[0]
    B, C, L = x.shape
    O, Cw, k = w.shape
    if C != Cw or b.shape != (O,):
        raise ValueError(f"conv shape mismatch: input {x.shape}, weights {w.shape}, bias {b.shape}")
    pl, pr = _pads(k)
    y = _correlate(np.pad(x, ((0, 0), (0, 0), (pl, pr))), w, L) + b[None, :, None]
    return np.maximum(y, 0.0) if apply_relu else y


def conv1d_backward(dy, xp, w):
    """Adjoint of conv1d_forward (pre-activation gradient ``dy``, padded input ``xp``).

    Returns (dx, dw, db) with dx un-padded. The input gradient is the
    correlation of ``dy`` with the channel-transposed, tap-reversed kernel
    under mirrored padding.
    """
    B, O, L = dy.shape
    _, C, k = w.shape
    pl, pr = _pads(k)
    dw = (dy.transpose(1, 0, 2).reshape(O, B * L) @ _im2col(xp, k, L)).reshape(O, C, k)
    db = dy.sum(axis=(0, 2))
    w_adj = np.ascontiguousarray(w.transpose(1, 0, 2)[:, :, ::-1])
    dx = _correlate(np.pad(dy, ((0, 0), (0, 0), (pr, pl))), w_adj, L)
    return dx, dw, db


def maxpool_forward(x):
    """Window-2 stride-2 max pool; returns (y, argmax offset in {0, 1})."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] % 2:
        raise ValueError(f"pooling needs an even length, got {x.shape[-1]}")
    pairs = x.reshape(x.shape[:-1] + (x.shape[-1] // 2, 2))
    arg = (pairs[..., 1] > pairs[..., 0]).astype(np.int8)
    y = np.where(arg == 1, pairs[..., 1], pairs[..., 0])
    return y, arg


def maxpool_backward(dy, arg):
    dx = np.empty(dy.shape + (2,))
    dx[..., 0] = np.where(arg == 0, dy, 0.0)
    dx[..., 1] = np.where(arg == 1, dy, 0.0)
    return dx.reshape(dy.shape[:-1] + (2 * dy.shape[-1],))


def fc_forward(x, w, b):
    """Affine layer ``w x + b`` on a vector or a (B, in) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ValueError(f"fc shape mismatch: input {x.shape}, weights {w.shape}, bias {b.shape}")
    return x @ w.T + b


def network_forward(x, params: NetworkParameters):
    """Logits for input ``x`` of shape (2M,) or (B, 2M), plus the backprop cache."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None] if single else x
    if xb.shape[-1] != params.arch.input_len:
        raise ValueError(f"input length {xb.shape[-1]} != {params.arch.input_len}")
    cache = ForwardCache(xb)
    a = xb[:, None, :]
    for w, b in params.conv:
        pl, pr = _pads(w.shape[2])
        cache.conv_in.append(np.pad(a, ((0, 0), (0, 0), (pl, pr))))
        z = conv1d_forward(a, w, b, apply_relu=True)
        cache.conv_out.append(z)
        a, arg = maxpool_forward(z)
        cache.pool_arg.append(arg)
    cache.flat = a.reshape(a.shape[0], -1)
    fw, fb = params.fc
    cache.logits = fc_forward(cache.flat, fw, fb)
    return (cache.logits[0] if single else cache.logits), cache


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid_ce_loss(logits, labels):
    """Mean over beams of ``max(z, 0) - z q + ln(1 + e^{-|z|})``.

    For a batch (B, N_A) the result is the mean over the batch of the
    per-sample losses.
    """
    z = np.asarray(logits, dtype=np.float64)
    q = np.asarray(labels, dtype=np.float64)
    if z.shape != q.shape:
        raise ValueError(f"logits {z.shape} and labels {q.shape} differ in shape")
    per = np.maximum(z, 0.0) - z * q + np.log1p(np.exp(-np.abs(z)))
    return float(per.mean())


def sample_losses(logits, labels):
    """Per-sample sigmoid cross-entropy for a (B, N_A) batch."""
    z = np.asarray(logits, dtype=np.float64)
    q = np.asarray(labels, dtype=np.float64)
    return (np.maximum(z, 0.0) - z * q + np.log1p(np.exp(-np.abs(z)))).mean(axis=-1)


def network_backward(cache: ForwardCache, params: NetworkParameters, labels):
    """Gradients of the batch-mean loss w.r.t. every parameter, canonical order."""
    q = np.asarray(labels, dtype=np.float64)
    if q.ndim == 1:
        q = q[None]
    if cache.logits is None or cache.logits.shape != q.shape:
        raise ValueError("stale cache: logits shape does not match labels")
    if cache.flat.shape[1] != params.arch.flat_len:
        raise ValueError("stale cache: flattened width does not match parameters")
    B, n_out = q.shape
    dz = (sigmoid(cache.logits) - q) / (n_out * B)
    fw, _ = params.fc
    grads = [None] * 8
    grads[6] = dz.T @ cache.flat
    grads[7] = dz.sum(axis=0)
    da = (dz @ fw).reshape(B, params.arch.filters[-1], -1)
    for i in (2, 1, 0):
        w, _ = params.conv[i]
        dconv = maxpool_backward(da, cache.pool_arg[i])
        dconv = dconv * (cache.conv_out[i] > 0)
        da, grads[2 * i], grads[2 * i + 1] = conv1d_backward(dconv, cache.conv_in[i], w)
    return grads


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParameters):
        return cls([np.zeros_like(p) for p in params.tensors],
                    [np.zeros_like(p) for p in params.tensors], 0)


def adam_step(params: NetworkParameters, grads, state: AdamState, lr):
    """One in-place Adam update (beta1=0.9, beta2=0.999, eps=1e-8, bias corrected)."""
    if len(grads) != len(params.tensors):
        raise ValueError("gradient list does not match parameters")
    state.t += 1
    c1 = 1.0 - ADAM_BETA1 ** state.t
    c2 = 1.0 - ADAM_BETA2 ** state.t
    for p, g, m, v in zip(params.tensors, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return params, state


def init_params(arch: ArchitectureSpec, rng) -> NetworkParameters:
    """He-uniform conv weights, Glorot-uniform FC weights, zero biases."""
    tensors = []
    for shape in arch.shapes():
        if len(shape) == 3:
            bound = np.sqrt(6.0 / (shape[1] * shape[2]))
            tensors.append(rng.uniform(-bound, bound, size=shape))
        elif len(shape) == 2:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            tensors.append(rng.uniform(-bound, bound, size=shape))
        else:
            tensors.append(np.zeros(shape))
    return NetworkParameters(arch, tensors)


# --- checkpoint file -------------------------------------------------------

CKPT_MAGIC = b"AMPN"
CKPT_VERSION = 1


def save_checkpoint(params: NetworkParameters, path):
    arch = params.arch
    head = bytearray(CKPT_MAGIC)
    head += struct.pack("<HB", CKPT_VERSION, 4)
    in_ch = 1
    for f in arch.filters:
        head += struct.pack("<BHHH", 0, arch.kernel, in_ch, f)
        in_ch = f
    head += struct.pack("<BHHH", 1, 0, arch.flat_len, arch.output_dim)
    body = b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for t in params.tensors)
    with open(path, "wb") as fh:
        fh.write(bytes(head) + body)


def load_checkpoint(path) -> NetworkParameters:
    with open(path, "rb") as fh:
        data = fh.read()
    return checkpoint_from_bytes(data)


def checkpoint_from_bytes(data) -> NetworkParameters:
    if len(data) < 7:
        raise FormatError(f"truncated checkpoint header at offset {len(data)}")
    if data[:4] != CKPT_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r} at offset 0 (expected {CKPT_MAGIC!r})")
    version, n_layers = struct.unpack_from("<HB", data, 4)
    if version != CKPT_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if n_layers != 4:
        raise FormatError(f"expected 4 layers, found {n_layers} at offset 6")
    off = 7
    layers = []
    for i in range(n_layers):
        if off + 7 > len(data):
            raise FormatError(f"truncated layer descriptor {i} at offset {off}")
        layers.append(struct.unpack_from("<BHHH", data, off))
        off += 7
    if [l[0] for l in layers] != [0, 0, 0, 1]:
        raise FormatError(f"unexpected layer types {[l[0] for l in layers]} at offset 7")
    kernel = layers[0][1]
    filters = tuple(l[3] for l in layers[:3])
    if any(l[1] != kernel for l in layers[:3]) or layers[0][2] != 1 or \
            layers[1][2] != filters[0] or layers[2][2] != filters[1]:
        raise FormatError("inconsistent conv layer descriptors at offset 7")
    flat, out_dim = layers[3][2], layers[3][3]
    if flat % filters[2]:
        raise FormatError(f"fc input {flat} not a multiple of {filters[2]} at offset {7 + 21}")
    input_len = 8 * flat // filters[2]
    preset = next((p for p, v in PRESETS.items() if v == (kernel, filters)), "custom")
    try:
        arch = ArchitectureSpec(input_len, out_dim, kernel, filters, preset)
    except ValueError as exc:
        raise FormatError(f"invalid architecture in header: {exc}") from None
    tensors = []
    for shape in arch.shapes():
        n = int(np.prod(shape))
        if off + 8 * n > len(data):
            raise FormatError(f"truncated parameter block at offset {off} "
                              f"(need {8 * n} bytes, have {len(data) - off})")
        tensors.append(np.frombuffer(data, dtype="<f8", count=n, offset=off)
                       .astype(np.float64).reshape(shape))
        off += 8 * n
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes at offset {off}")
    return NetworkParameters(arch, tensors)
