"""NumPy layers with explicit backward passes (NHWC layout)."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, b, stride=1, pad=1):
    """Cross-correlation of ``x`` (N, H, W, Cin) with ``w`` (kh, kw, Cin, Cout)."""
    kh, kw, cin, cout = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    n, ho, wo = win.shape[:3]
    # (N, Ho, Wo, Cin, kh, kw) -> rows of (kh, kw, Cin)
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * cin)
    out = cols @ w.reshape(-1, cout) + b
    cache = (cols, x.shape, w, stride, pad)
    return out.reshape(n, ho, wo, cout), cache


def conv2d_backward(dout, cache):
    cols, xshape, w, stride, pad = cache
    kh, kw, cin, cout = w.shape
    n, ho, wo, _ = dout.shape
    d2 = dout.reshape(-1, cout)
    dw = (cols.T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(-1, cout).T).reshape(n, ho, wo, kh, kw, cin)
    h, wd = xshape[1] + 2 * pad, xshape[2] + 2 * pad
    dxp = np.zeros((n, h, wd, cin), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, :, :, i, j]
    if pad:
        dxp = dxp[:, pad:-pad, pad:-pad]
    return dxp, dw, db


def upsample2x(x):
    return x.repeat(2, axis=1).repeat(2, axis=2)


def upsample2x_backward(dout):
    n, h, w, c = dout.shape
    return dout.reshape(n, h // 2, 2, w // 2, 2, c).sum(axis=(2, 4))


def film_forward(h, emb, wg, bg, wb, bb):
    """Feature-wise affine modulation ``h * (1 + gamma) + beta``.

    ``gamma`` and ``beta`` are linear projections of the per-sample
    conditioning vector ``emb`` (N, D).
    """
    gamma = emb @ wg + bg
    beta = emb @ wb + bb
    out = h * (1.0 + gamma[:, None, None, :]) + beta[:, None, None, :]
    return out, (h, emb, gamma, wg, wb)


def film_backward(dout, cache):
    h, emb, gamma, wg, wb = cache
    dh = dout * (1.0 + gamma[:, None, None, :])
    dgamma = np.einsum("nhwc,nhwc->nc", dout, h)
    dbeta = dout.sum(axis=(1, 2))
    demb = dgamma @ wg.T + dbeta @ wb.T
    return dh, demb, emb.T @ dgamma, dgamma.sum(0), emb.T @ dbeta, dbeta.sum(0)


def silu(z):
    return z * sigmoid(z)


def silu_backward(dout, z):
    s = sigmoid(z)
    return dout * s * (1.0 + z * (1.0 - s))


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))
