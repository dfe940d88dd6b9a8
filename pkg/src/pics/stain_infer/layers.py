"""Inference-time layer primitives on (channels, height, width) tensors.

Convolution uses the cross-correlation convention. Tensors move as
float32; every reduction accumulates in float64 before casting back.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d(
    x: np.ndarray, w: np.ndarray, b: np.ndarray, pad_mode: str = "reflect"
) -> np.ndarray:
    """2-D cross-correlation, stride 1.

    x: (C_in, H, W); w: (C_out, C_in, kh, kw), odd kernel; b: (C_out,).
    pad_mode "reflect" keeps the geometry (same padding without border
    repetition); "valid" shrinks it by the kernel footprint.
    """
    if x.ndim != 3 or w.ndim != 4 or b.ndim != 1:
        raise ValueError("conv2d expects x (C,H,W), w (O,C,kh,kw), b (O,)")
    cout, cin, kh, kw = w.shape
    if cin != x.shape[0] or cout != b.shape[0]:
        raise ValueError(
            f"channel mismatch: x has {x.shape[0]}, w wants {cin}->{cout}"
        )
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d kernels must be odd-sized")
    xp = x.astype(np.float64)
    if pad_mode == "reflect":
        ph, pw = kh // 2, kw // 2
        if ph or pw:
            xp = np.pad(xp, ((0, 0), (ph, ph), (pw, pw)), mode="reflect")
    elif pad_mode != "valid":
        raise ValueError(f"unknown pad_mode {pad_mode!r}")
    windows = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # (C,H,W,kh,kw)
    out = np.tensordot(w.astype(np.float64), windows, axes=([1, 2, 3], [0, 3, 4]))
    out += b.astype(np.float64)[:, None, None]
    return out.astype(np.float32)


def batchnorm_infer(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    eps: float,
) -> np.ndarray:
    """Channel-wise normalization with frozen running statistics."""
    if np.any(np.asarray(var) < 0):
        raise ValueError("running variance must be >= 0")
    if not (eps > 0):
        raise ValueError("eps must be > 0")
    xd = x.astype(np.float64)
    g = np.asarray(gamma, np.float64)[:, None, None]
    b = np.asarray(beta, np.float64)[:, None, None]
    m = np.asarray(mean, np.float64)[:, None, None]
    v = np.asarray(var, np.float64)[:, None, None]
    return ((xd - m) / np.sqrt(v + eps) * g + b).astype(np.float32)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def maxpool2(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling, stride 2; spatial dims must be even."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even dims, got {h}x{w}")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def upconv2(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """2x2 transposed convolution, stride 2: doubles both spatial dims.

    w: (C_out, C_in, 2, 2); each input pixel paints a disjoint 2x2 block
    out[o, 2i+u, 2j+v] = sum_c x[c, i, j] * w[o, c, u, v] + b[o].
    """
    cout, cin, kh, kw = w.shape
    if (kh, kw) != (2, 2):
        raise ValueError("upconv2 kernel must be 2x2")
    if cin != x.shape[0]:
        raise ValueError(f"channel mismatch: x has {x.shape[0]}, w wants {cin}")
    tmp = np.tensordot(w.astype(np.float64), x.astype(np.float64), axes=([1], [0]))
    # tmp: (O, 2, 2, H, W) -> (O, H, 2, W, 2) -> (O, 2H, 2W)
    _, h, wdt = x.shape
    out = tmp.transpose(0, 3, 1, 4, 2).reshape(cout, 2 * h, 2 * wdt)
    out = out + b.astype(np.float64)[:, None, None]
    return out.astype(np.float32)
