"""Compiled CPU kernels for the deformable warp and its gradients.

Layouts match :mod:`jnmr.warp`: frame ``(B, C, H, W)``; weights and offsets
``(B, T, H, W)`` with ``T = K*K``; ``dy``/``dx`` are the per-tap base offsets.
Loops run tap-major so the innermost index walks a contiguous row.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _coords(i, j, dyk, dxk, a, b, h, w):
    y = i + dyk + a
    x = j + dxk + b
    y_in = 1.0
    x_in = 1.0
    if y < 0.0:
        y = 0.0
        y_in = 0.0
    elif y > h - 1:
        y = h - 1.0
        y_in = 0.0
    if x < 0.0:
        x = 0.0
        x_in = 0.0
    elif x > w - 1:
        x = w - 1.0
        x_in = 0.0
    y0 = int(math.floor(y))
    x0 = int(math.floor(x))
    wy = y - y0
    wx = x - x0
    y1 = min(y0 + 1, h - 1)
    x1 = min(x0 + 1, w - 1)
    return y0, x0, y1, x1, wy, wx, y_in, x_in


@njit(cache=True)
def warp_forward(frame, weights, alpha, beta, dy, dx):
    nb, nc, h, w = frame.shape
    taps = weights.shape[1]
    out = np.zeros_like(frame)
    for bi in range(nb):
        for k in range(taps):
            for i in range(h):
                for j in range(w):
                    wk = weights[bi, k, i, j]
                    y0, x0, y1, x1, wy, wx, _, _ = _coords(i, j, dy[k], dx[k], alpha[bi, k, i, j],
                                                          beta[bi, k, i, j], h, w)
                    c00 = wk * (1 - wy) * (1 - wx)
                    c01 = wk * (1 - wy) * wx
                    c10 = wk * wy * (1 - wx)
                    c11 = wk * wy * wx
                    for c in range(nc):
                        out[bi, c, i, j] += (c00 * frame[bi, c, y0, x0] + c01 * frame[bi, c, y0, x1]
                                             + c10 * frame[bi, c, y1, x0] + c11 * frame[bi, c, y1, x1])
    return out


@njit(cache=True)
def warp_backward(grad_out, frame, weights, alpha, beta, dy, dx, need_frame):
    nb, nc, h, w = frame.shape
    taps = weights.shape[1]
    g_frame = np.zeros_like(frame)
    g_w = np.zeros_like(weights)
    g_a = np.zeros_like(alpha)
    g_b = np.zeros_like(beta)
    for bi in range(nb):
        for k in range(taps):
            for i in range(h):
                for j in range(w):
                    wk = weights[bi, k, i, j]
                    y0, x0, y1, x1, wy, wx, y_in, x_in = _coords(i, j, dy[k], dx[k], alpha[bi, k, i, j],
                                                                beta[bi, k, i, j], h, w)
                    c00 = (1 - wy) * (1 - wx)
                    c01 = (1 - wy) * wx
                    c10 = wy * (1 - wx)
                    c11 = wy * wx
                    acc_w = 0.0
                    acc_y = 0.0
                    acc_x = 0.0
                    for c in range(nc):
                        g = grad_out[bi, c, i, j]
                        f00 = frame[bi, c, y0, x0]
                        f01 = frame[bi, c, y0, x1]
                        f10 = frame[bi, c, y1, x0]
                        f11 = frame[bi, c, y1, x1]
                        acc_w += g * (c00 * f00 + c01 * f01 + c10 * f10 + c11 * f11)
                        acc_y += g * ((1 - wx) * (f10 - f00) + wx * (f11 - f01))
                        acc_x += g * ((1 - wy) * (f01 - f00) + wy * (f11 - f10))
                        if need_frame:
                            gw = g * wk
                            g_frame[bi, c, y0, x0] += gw * c00
                            g_frame[bi, c, y0, x1] += gw * c01
                            g_frame[bi, c, y1, x0] += gw * c10
                            g_frame[bi, c, y1, x1] += gw * c11
                    g_w[bi, k, i, j] = acc_w
                    g_a[bi, k, i, j] = acc_y * wk * y_in
                    g_b[bi, k, i, j] = acc_x * wk * x_in
    return g_frame, g_w, g_a, g_b
