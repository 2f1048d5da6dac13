"""Trainable tensor primitives: convolution, pooling, up-convolution, activations.

All operations use channel-last activations (batch, height, width, channels)
and explicit forward caches consumed by the matching backward function.  The
channel-last layout keeps every heavy step a plain BLAS matmul on contiguous
memory: a 3x3 convolution runs as nine gemms against flat offset views of the
zero-padded input instead of materializing an im2col buffer, which on
bandwidth-starved machines is several times faster.

Convolution weights are (kh, kw, c_in, c_out); up-convolution weights are
(c_in, 2, 2, c_out).  dtype follows the inputs: float32 for training,
float64 for gradient checking.
"""

from __future__ import annotations

import numpy as np


def _check_match(name, a, b):
    if a != b:
        raise ValueError(f"{name} mismatch: {a} vs {b}")


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, pad: int = 1, stride: int = 1):
    """Cross-correlation with zero padding.

    out[n, y, x, o] = b[o] + sum_{dy,dx,i} in[n, y+dy-pad, x+dx-pad, i] * w[dy, dx, i, o]

    Supports stride 1 only (pooling handles downsampling).  Returns the
    output and a cache for conv2d_backward.
    """
    if stride != 1:
        raise ValueError("only stride 1 is supported")
    if x.ndim != 4 or w.ndim != 4:
        raise ValueError("x must be (B,H,W,C) and w (kh,kw,ci,co)")
    kh, kw, ci, co = w.shape
    _check_match("input channels", x.shape[3], ci)
    if kh != kw or kh % 2 != 1 or pad != (kh - 1) // 2:
        raise ValueError("kernel must be odd square with pad (k-1)//2")
    _check_match("bias size", b.shape, (co,))

    batch, h, wd, _ = x.shape
    if pad == 0:
        out = x.reshape(-1, ci) @ w.reshape(ci, co)
        out = out.reshape(batch, h, wd, co)
        out += b
        return out, (x, None, w.shape, pad)

    hp, wp = h + 2 * pad, wd + 2 * pad
    xp = np.zeros((batch, hp, wp, ci), dtype=x.dtype)
    xp[:, pad:-pad, pad:-pad] = x
    xm = xp.reshape(-1, ci)
    out = np.zeros((batch, h, wd, co), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            p = (xm @ w[ky, kx]).reshape(batch, hp, wp, co)
            out += p[:, ky : ky + h, kx : kx + wd]
    out += b
    return out, (None, xp, w.shape, pad)


def conv2d_backward(cache, grad_out: np.ndarray, w: np.ndarray, need_grad_in: bool = True):
    """Exact gradients of conv2d_forward: (grad_in, grad_w, grad_b)."""
    x, xp, w_shape, pad = cache
    _check_match("weight shape", w.shape, w_shape)
    kh, kw, ci, co = w.shape
    _check_match("grad channels", grad_out.shape[3], co)

    if pad == 0:
        batch, h, wd, _ = x.shape
        gm = grad_out.reshape(-1, co)
        grad_w = (x.reshape(-1, ci).T @ gm).reshape(kh, kw, ci, co)
        grad_b = gm.sum(axis=0)
        grad_in = None
        if need_grad_in:
            grad_in = (gm @ w.reshape(ci, co).T).reshape(batch, h, wd, ci)
        return grad_in, grad_w, grad_b

    batch, hp, wp, _ = xp.shape
    h, wd = hp - 2 * pad, wp - 2 * pad
    _check_match("grad spatial", grad_out.shape[:3], (batch, h, wd))

    # embed grad_out in a padded buffer: turns every kernel tap into a flat
    # offset between the two buffers, so each contribution is one clean gemm
    gyp = np.zeros((batch, hp, wp, co), dtype=grad_out.dtype)
    gyp[:, pad:-pad, pad:-pad] = grad_out
    size = batch * hp * wp
    xf = xp.reshape(size, ci)
    gf = gyp.reshape(size, co)

    grad_w = np.empty_like(w)
    for ky in range(kh):
        for kx in range(kw):
            off = (ky - pad) * wp + (kx - pad)
            if off >= 0:
                grad_w[ky, kx] = xf[off:].T @ gf[: size - off]
            else:
                grad_w[ky, kx] = xf[: size + off].T @ gf[-off:]
    grad_b = grad_out.sum(axis=(0, 1, 2))

    grad_in = None
    if need_grad_in:
        gm = grad_out.reshape(-1, co)
        gxp = np.zeros((batch, hp, wp, ci), dtype=grad_out.dtype)
        for ky in range(kh):
            for kx in range(kw):
                p = (gm @ w[ky, kx].T).reshape(batch, h, wd, ci)
                gxp[:, ky : ky + h, kx : kx + wd] += p
        grad_in = gxp[:, pad:-pad, pad:-pad].copy()
    return grad_in, grad_w, grad_b


# ---------------------------------------------------------------------------
# pooling / up-convolution
# ---------------------------------------------------------------------------

def maxpool2x2_forward(x: np.ndarray):
    """2x2 max pooling, stride 2; ties route to the first cell in row-major order."""
    batch, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError("spatial dims must be even for 2x2 pooling")
    # windows as a trailing length-4 axis in row-major (dy, dx) order
    win = x.reshape(batch, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
    win = np.ascontiguousarray(win).reshape(batch, h // 2, w // 2, c, 4)
    arg = win.argmax(axis=4)
    out = np.take_along_axis(win, arg[..., None], axis=4)[..., 0]
    return out, (arg, x.shape)


def maxpool2x2_backward(cache, grad_out: np.ndarray) -> np.ndarray:
    """Route each gradient to its window's argmax cell."""
    arg, x_shape = cache
    batch, h, w, c = x_shape
    _check_match("grad shape", grad_out.shape, (batch, h // 2, w // 2, c))
    gwin = np.zeros((batch, h // 2, w // 2, c, 4), dtype=grad_out.dtype)
    np.put_along_axis(gwin, arg[..., None], grad_out[..., None], axis=4)
    gwin = gwin.reshape(batch, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(gwin).reshape(batch, h, w, c)


def upconv2x2_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Transposed 2x2 convolution with stride 2 (learned 2x upsampling).

    out[n, 2y+dy, 2x+dx, o] = b[o] + sum_i in[n, y, x, i] * w[i, dy, dx, o]
    """
    batch, h, wd, ci = x.shape
    _check_match("input channels", ci, w.shape[0])
    co = w.shape[3]
    t = x.reshape(-1, ci) @ w.reshape(ci, 4 * co)
    t = t.reshape(batch, h, wd, 2, 2, co).transpose(0, 1, 3, 2, 4, 5)
    out = np.ascontiguousarray(t).reshape(batch, 2 * h, 2 * wd, co)
    out += b
    return out, (x, w.shape)


def upconv2x2_backward(cache, grad_out: np.ndarray, w: np.ndarray):
    """Exact gradients of upconv2x2_forward: (grad_in, grad_w, grad_b)."""
    x, w_shape = cache
    _check_match("weight shape", w.shape, w_shape)
    batch, h, wd, ci = x.shape
    co = w.shape[3]
    _check_match("grad shape", grad_out.shape, (batch, 2 * h, 2 * wd, co))
    g = grad_out.reshape(batch, h, 2, wd, 2, co).transpose(0, 1, 3, 2, 4, 5)
    gm = np.ascontiguousarray(g).reshape(-1, 4 * co)
    grad_in = (gm @ w.reshape(ci, 4 * co).T).reshape(batch, h, wd, ci)
    grad_w = (x.reshape(-1, ci).T @ gm).reshape(ci, 2, 2, co)
    grad_b = grad_out.sum(axis=(0, 1, 2))
    return grad_in, grad_w, grad_b


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu_forward(x: np.ndarray):
    out = np.maximum(x, 0.0)
    return out, out


def relu_backward(cache, grad_out: np.ndarray) -> np.ndarray:
    return np.where(cache > 0.0, grad_out, 0.0)


def sigmoid_forward(x: np.ndarray):
    # two-branch form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out, out


def sigmoid_backward(cache, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * cache * (1.0 - cache)
