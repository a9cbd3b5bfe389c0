"""NHWC layer primitives with explicit backward passes.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache and returns input and parameter
gradients.  Arrays are float64, shaped ``(N, H, W, C)``.
"""
from __future__ import annotations

import numpy as np


def conv3x3_forward(x, k, b):
    """Same-padded 3x3 cross-correlation. ``k`` is ``(3, 3, Cin, Cout)``."""
    n, h, w, cin = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.concatenate([xp[:, i:i + h, j:j + w, :] for i in range(3) for j in range(3)], axis=-1)
    out = cols.reshape(-1, 9 * cin) @ k.reshape(9 * cin, -1)
    out = out.reshape(n, h, w, -1) + b
    return out, (cols, k, x.shape)


def conv3x3_backward(dout, cache):
    cols, k, xshape = cache
    n, h, w, cin = xshape
    cout = dout.shape[-1]
    d2 = dout.reshape(-1, cout)
    dk = (cols.reshape(-1, 9 * cin).T @ d2).reshape(k.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ k.reshape(9 * cin, cout).T).reshape(n, h, w, 9, cin)
    dxp = np.zeros((n, h + 2, w + 2, cin))
    for t in range(9):
        i, j = divmod(t, 3)
        dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, t, :]
    return dxp[:, 1:-1, 1:-1, :], dk, db


def conv1x1_forward(x, k, b):
    n, h, w, cin = x.shape
    out = x.reshape(-1, cin) @ k + b
    return out.reshape(n, h, w, -1), (x, k)


def conv1x1_backward(dout, cache):
    x, k = cache
    cin, cout = k.shape
    x2 = x.reshape(-1, cin)
    d2 = dout.reshape(-1, cout)
    return (d2 @ k.T).reshape(x.shape), x2.T @ d2, d2.sum(axis=0)


def tconv2x2_forward(x, k, b):
    """Stride-2 transposed convolution with a 2x2 kernel ``(2, 2, Cin, Cout)``.

    Windows do not overlap: ``out[2i+a, 2j+c] = x[i, j] @ k[a, c] + b``.
    """
    n, h, w, cin = x.shape
    cout = k.shape[-1]
    kk = k.transpose(2, 0, 1, 3).reshape(cin, 4 * cout)
    out = (x.reshape(-1, cin) @ kk).reshape(n, h, w, 2, 2, cout)
    out = out.transpose(0, 1, 3, 2, 4, 5).reshape(n, 2 * h, 2 * w, cout) + b
    return out, (x, k)


def tconv2x2_backward(dout, cache):
    x, k = cache
    n, h, w, cin = x.shape
    cout = k.shape[-1]
    d6 = dout.reshape(n, h, 2, w, 2, cout).transpose(0, 1, 3, 2, 4, 5).reshape(-1, 4 * cout)
    kk = k.transpose(2, 0, 1, 3).reshape(cin, 4 * cout)
    dx = (d6 @ kk.T).reshape(x.shape)
    dk = (x.reshape(-1, cin).T @ d6).reshape(cin, 2, 2, cout).transpose(1, 2, 0, 3)
    db = dout.reshape(-1, cout).sum(axis=0)
    return dx, dk, db


def relu_forward(x):
    return np.maximum(x, 0.0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def maxpool2x2_forward(x):
    """2x2 max pool, stride 2. Ties route the gradient to the first window entry (row-major)."""
    n, h, w, c = x.shape
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, (arg, x.shape)


def maxpool2x2_backward(dout, cache):
    arg, (n, h, w, c) = cache
    dwin = np.zeros(arg.shape + (4,))
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return dwin.reshape(n, h, w, c)
