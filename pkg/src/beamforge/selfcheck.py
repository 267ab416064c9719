"""Numerical self-checks exposed on the command line.

``gradient_check`` compares backprop against central finite differences on a
toy network; ``beam_oracle_check`` compares the closed-form LOS beam index
against an exhaustive argmax over the codebook response.
"""

from __future__ import annotations

import numpy as np

from . import airmodel
from .core import derive_stream
from .neuralnet import ArchitectureSpec, init_params, network_backward, network_forward

TOY_ARCH = ArchitectureSpec(input_len=16, output_dim=8, kernel=5, filters=(2, 2, 2))


def relative_error(a, b):
    """Elementwise |a - b| / max(|a|, |b|), defined as 0 where both are exactly 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = np.maximum(np.abs(a), np.abs(b))
    out = np.zeros(np.broadcast(a, b).shape)
    nz = den > 0
    out[nz] = np.abs(a - b)[nz] / den[nz]
    return out


def reference_loss(tensors, x, q, kernel):
    """Loss of the network by direct summation in extended precision.

    Written independently of the vectorised forward pass: explicit loops for
    convolution, pooling and the FC layer, evaluated in ``np.longdouble`` so
    finite differences are not limited by float64 rounding.
    """
    ld = np.longdouble
    pl = (kernel - 1) // 2
    total = ld(0)
    for b in range(x.shape[0]):
        a = [[ld(v) for v in x[b]]]
        for layer in range(3):
            w, bias = tensors[2 * layer], tensors[2 * layer + 1]
            n_out, n_in, k = w.shape
            length = len(a[0])
            conv = []
            for o in range(n_out):
                row = []
                for pos in range(length):
                    acc = bias[o]
                    for c in range(n_in):
                        for j in range(k):
                            src = pos + j - pl
                            if 0 <= src < length:
                                acc += w[o, c, j] * a[c][src]
                    row.append(max(acc, ld(0)))
                conv.append(row)
            a = [[max(r[2 * i], r[2 * i + 1]) for i in range(length // 2)] for r in conv]
        flat = [v for r in a for v in r]
        fw, fb = tensors[6], tensors[7]
        for n in range(fw.shape[0]):
            z = fb[n] + sum(fw[n, i] * flat[i] for i in range(len(flat)))
            total += max(z, ld(0)) - z * ld(q[b, n]) + np.log1p(np.exp(-abs(z)))
    return total / (x.shape[0] * q.shape[1])


def numeric_gradients(params, x, q, h=1e-6):
    """Central finite differences of ``reference_loss`` for every parameter."""
    tensors = [t.astype(np.longdouble) for t in params.tensors]
    k = params.arch.kernel
    grads = []
    for t in tensors:
        g = np.zeros(t.shape)
        flat, gflat = t.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + np.longdouble(h)
            fp = reference_loss(tensors, x, q, k)
            flat[i] = old - np.longdouble(h)
            fm = reference_loss(tensors, x, q, k)
            flat[i] = old
            gflat[i] = float((fp - fm) / (2 * np.longdouble(h)))
        grads.append(g)
    return grads


def gradient_check(draws=20, seed=0, arch=TOY_ARCH, batch=4, h=1e-6):
    """Max relative error between backprop and finite differences over random draws."""
    worst = 0.0
    for d in range(draws):
        rng = derive_stream(seed, d)
        params = init_params(arch, rng)
        # non-zero biases so every bias path is exercised
        for t in params.tensors[1::2]:
            t[:] = rng.uniform(-0.1, 0.1, size=t.shape)
        x = rng.standard_normal((batch, arch.input_len))
        q = (rng.random((batch, arch.output_dim)) < 0.3).astype(np.float64)
        _, cache = network_forward(x, params)
        analytic = network_backward(cache, params, q)
        numeric = numeric_gradients(params, x, q, h)
        for a, n in zip(analytic, numeric):
            worst = max(worst, float(relative_error(a, n).max()))
    return worst


def beam_oracle_check(samples=100_000, n_antennas=256, seed=0, band=1e-9):
    """Return (agree, checked) for argmax |C^H alpha(theta)| vs the closed form.

    Directions within ``band`` of a grid-cell midpoint, where two codewords
    tie, are skipped.
    """
    theta = derive_stream(seed, 0).uniform(-1.0, 1.0, size=samples)
    # midpoints between codeword directions sit at -1 + 2m/N_A
    dist = np.abs((theta + 1.0) * n_antennas / 2.0 - np.round((theta + 1.0) * n_antennas / 2.0))
    keep = dist * 2.0 / n_antennas > band
    theta = theta[keep]
    C = airmodel.codebook(n_antennas)
    agree = 0
    for start in range(0, len(theta), 4096):
        th = theta[start:start + 4096]
        A = np.exp(1j * np.pi * np.outer(np.arange(n_antennas), th)) / np.sqrt(n_antennas)
        best = np.argmax(np.abs(C.conj().T @ A), axis=0) + 1
        agree += int(np.sum(best == airmodel.los_beam_index(th, n_antennas)))
    return agree, len(theta)
