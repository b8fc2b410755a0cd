"""
Naive loop implementations of the tensor kernels.

Used by the tests as oracles for the vectorised kernels in
``ds_pass.tensor_core``. Everything accumulates in float64 with explicit
loops in the order out-channel -> row -> column -> in-channel -> kernel.
"""

import math

import numpy as np


def padded_value(x, c, row, col, mode):
    """Sample of x at a possibly out-of-range position under zero or ring padding."""
    _, h, w = x.shape
    if row < 0 or row >= h:
        return 0.0
    if 0 <= col < w:
        return float(x[c, row, col])
    if mode == "ring":
        return float(x[c, row, col % w])
    return 0.0


def conv2d(x, weights, bias, stride, pads, mode):
    """pads = (top, bottom, left, right)."""
    top, bottom, left, right = pads
    cin, h, w = x.shape
    cout, _, kh, kw = weights.shape
    out_h = (h + top + bottom - kh) // stride + 1
    out_w = (w + left + right - kw) // stride + 1
    out = np.zeros((cout, out_h, out_w))
    for o in range(cout):
        for i in range(out_h):
            for j in range(out_w):
                acc = 0.0
                for c in range(cin):
                    for u in range(kh):
                        for v in range(kw):
                            value = padded_value(x, c, i * stride + u - top, j * stride + v - left, mode)
                            acc += float(weights[o, c, u, v]) * value
                if bias is not None:
                    acc += float(bias[o])
                out[o, i, j] = acc
    return out


def batchnorm(x, scale, shift, mean, var, epsilon=1e-5):
    out = np.zeros(x.shape)
    channels, h, w = x.shape
    for c in range(channels):
        for i in range(h):
            for j in range(w):
                normalised = (float(x[c, i, j]) - float(mean[c])) / math.sqrt(float(var[c]) + epsilon)
                out[c, i, j] = normalised * float(scale[c]) + float(shift[c])
    return out


def _source(dst, size_in, size_out):
    return (dst + 0.5) * size_in / size_out - 0.5


def bilinear(x, out_h, out_w, wrap=False):
    channels, h, w = x.shape
    out = np.zeros((channels, out_h, out_w))
    for i in range(out_h):
        sy = min(max(_source(i, h, out_h), 0.0), h - 1)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for j in range(out_w):
            sx = _source(j, w, out_w)
            if wrap:
                x0 = int(math.floor(sx))
                fx = sx - x0
                x0, x1 = x0 % w, (x0 + 1) % w
            else:
                sx = min(max(sx, 0.0), w - 1)
                x0 = int(math.floor(sx))
                x1 = min(x0 + 1, w - 1)
                fx = sx - x0
            for c in range(channels):
                top = (1 - fx) * float(x[c, y0, x0]) + fx * float(x[c, y0, x1])
                bottom = (1 - fx) * float(x[c, y1, x0]) + fx * float(x[c, y1, x1])
                out[c, i, j] = (1 - fy) * top + fy * bottom
    return out


def maxpool(x, kernel, stride, pad, mode):
    channels, h, w = x.shape
    out_h = (h + 2 * pad - kernel) // stride + 1
    out_w = (w + 2 * pad - kernel) // stride + 1
    out = np.zeros((channels, out_h, out_w))
    for c in range(channels):
        for i in range(out_h):
            for j in range(out_w):
                best = -math.inf
                for u in range(kernel):
                    for v in range(kernel):
                        best = max(best, padded_value(x, c, i * stride + u - pad, j * stride + v - pad, mode))
                out[c, i, j] = best
    return out


def adaptive_avg_pool(x, out_h, out_w):
    channels, h, w = x.shape
    out = np.zeros((channels, out_h, out_w))
    for c in range(channels):
        for i in range(out_h):
            r0, r1 = (i * h) // out_h, math.ceil((i + 1) * h / out_h)
            for j in range(out_w):
                c0, c1 = (j * w) // out_w, math.ceil((j + 1) * w / out_w)
                total = 0.0
                for r in range(r0, r1):
                    for col in range(c0, c1):
                        total += float(x[c, r, col])
                out[c, i, j] = total / ((r1 - r0) * (c1 - c0))
    return out


def squeeze_excite(x, w1, b1, w2, b2):
    channels, h, w = x.shape
    squeezed = [float(np.sum(x[c], dtype=np.float64)) / (h * w) for c in range(channels)]
    hidden = []
    for k in range(w1.shape[0]):
        acc = float(b1[k]) + sum(float(w1[k, c]) * squeezed[c] for c in range(channels))
        hidden.append(max(acc, 0.0))
    out = np.zeros(x.shape)
    for c in range(channels):
        acc = float(b2[c]) + sum(float(w2[c, k]) * hidden[k] for k in range(len(hidden)))
        gate = 1.0 / (1.0 + math.exp(-acc))
        out[c] = np.asarray(x[c], dtype=np.float64) * gate
    return out
