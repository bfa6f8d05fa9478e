"""Low-level numerical kernels: strided 3x3 convolution, 1x1 convolution,
bilinear upsampling and image rotation, all with hand-written backward
passes in float64.

Array layout is (N, C, H, W) for batched feature maps.
"""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# 3x3 convolution, stride 2, padding 1


def conv3x3_s2_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x: (N, C, H, W); w: (F, C, 3, 3); b: (F,). Output (N, F, H/2, W/2)."""
    n, c, h, wd = x.shape
    f = w.shape[0]
    if h % 2 or wd % 2:
        raise ValueError(f"input dims ({h}, {wd}) must be even for stride 2")
    oh, ow = h // 2, wd // 2
    xp = np.zeros((n, c, h + 2, wd + 2))
    xp[:, :, 1:-1, 1:-1] = x
    out = np.broadcast_to(b[None, :, None, None], (n, f, oh, ow)).copy()
    for di in range(3):
        for dj in range(3):
            patch = xp[:, :, di:di + 2 * oh:2, dj:dj + 2 * ow:2]
            out += np.einsum("nchw,fc->nfhw", patch, w[:, :, di, dj])
    return out, (xp, w.shape, (n, c, h, wd))


def conv3x3_s2_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Gradients w.r.t. input, weights, bias."""
    n, c, h, wd = x.shape
    oh, ow = h // 2, wd // 2
    xp = np.zeros((n, c, h + 2, wd + 2))
    xp[:, :, 1:-1, 1:-1] = x
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w)
    for di in range(3):
        for dj in range(3):
            patch = xp[:, :, di:di + 2 * oh:2, dj:dj + 2 * ow:2]
            dw[:, :, di, dj] = np.einsum("nfhw,nchw->fc", dout, patch)
            dxp[:, :, di:di + 2 * oh:2, dj:dj + 2 * ow:2] += np.einsum(
                "nfhw,fc->nchw", dout, w[:, :, di, dj])
    db = dout.sum(axis=(0, 2, 3))
    return dxp[:, :, 1:-1, 1:-1], dw, db


# ---------------------------------------------------------------------------
# 1x1 convolution


def conv1x1_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """w: (F, C); pointwise channel mix."""
    return np.einsum("nchw,fc->nfhw", x, w) + b[None, :, None, None]


def conv1x1_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray):
    dx = np.einsum("nfhw,fc->nchw", dout, w)
    dw = np.einsum("nfhw,nchw->fc", dout, x)
    db = dout.sum(axis=(0, 2, 3))
    return dx, dw, db


# ---------------------------------------------------------------------------
# ReLU


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


# ---------------------------------------------------------------------------
# bilinear upsampling by an integer factor


def _upsample_axis_weights(n_in: int, factor: int):
    """Half-pixel-center sampling grid with edge clamping."""
    pos = (np.arange(n_in * factor) + 0.5) / factor - 0.5
    pos = np.clip(pos, 0.0, n_in - 1.0)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = pos - i0
    return i0, i1, frac


def upsample_bilinear_forward(x: np.ndarray, factor: int) -> np.ndarray:
    n, c, h, w = x.shape
    r0, r1, rf = _upsample_axis_weights(h, factor)
    c0, c1, cf = _upsample_axis_weights(w, factor)
    rows = x[:, :, r0, :] * (1 - rf)[None, None, :, None] + x[:, :, r1, :] * rf[None, None, :, None]
    return rows[:, :, :, c0] * (1 - cf)[None, None, None, :] + rows[:, :, :, c1] * cf[None, None, None, :]


def upsample_bilinear_backward(dout: np.ndarray, in_shape: tuple, factor: int) -> np.ndarray:
    n, c, h, w = in_shape
    r0, r1, rf = _upsample_axis_weights(h, factor)
    c0, c1, cf = _upsample_axis_weights(w, factor)
    tmp = np.zeros((n, c, h * factor, w))
    np.add.at(tmp.transpose(3, 0, 1, 2), c0, (dout * (1 - cf)[None, None, None, :]).transpose(3, 0, 1, 2))
    np.add.at(tmp.transpose(3, 0, 1, 2), c1, (dout * cf[None, None, None, :]).transpose(3, 0, 1, 2))
    dx = np.zeros((n, c, h, w))
    np.add.at(dx.transpose(2, 0, 1, 3), r0, (tmp * (1 - rf)[None, None, :, None]).transpose(2, 0, 1, 3))
    np.add.at(dx.transpose(2, 0, 1, 3), r1, (tmp * rf[None, None, :, None]).transpose(2, 0, 1, 3))
    return dx


# ---------------------------------------------------------------------------
# output nonlinearities


def spatial_softmax(logits: np.ndarray) -> np.ndarray:
    """Softmax over all pixels of each (N, 1, H, W) map."""
    n = logits.shape[0]
    flat = logits.reshape(n, -1)
    flat = flat - flat.max(axis=1, keepdims=True)
    e = np.exp(flat)
    return (e / e.sum(axis=1, keepdims=True)).reshape(logits.shape)


def logistic(logits: np.ndarray) -> np.ndarray:
    out = np.empty_like(logits)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    ez = np.exp(logits[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax_logit_grad(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    """Chain dL/dprobs through the spatial softmax Jacobian."""
    n = probs.shape[0]
    p = probs.reshape(n, -1)
    g = dprobs.reshape(n, -1)
    inner = (p * g).sum(axis=1, keepdims=True)
    return (p * (g - inner)).reshape(probs.shape)


def logistic_logit_grad(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    return dprobs * probs * (1.0 - probs)


# ---------------------------------------------------------------------------
# image rotation about the center, bilinear, zero padding


def _rotation_sampling(n_px: int, angle: float):
    """For each output pixel, the 4 source pixel indices and bilinear weights.

    Output pixel p samples the input at ctr + R(-angle) (p - ctr), so the
    image content rotates by +angle.  Out-of-bounds samples get weight 0.
    """
    ctr = (n_px - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(n_px, dtype=float), np.arange(n_px, dtype=float), indexing="ij")
    ca, sa = math.cos(angle), math.sin(angle)
    sr = ctr + ca * (rr - ctr) + sa * (cc - ctr)
    sc = ctr - sa * (rr - ctr) + ca * (cc - ctr)
    r0 = np.floor(sr).astype(int)
    c0 = np.floor(sc).astype(int)
    fr, fc = sr - r0, sc - c0
    idx, wgt = [], []
    for dr_, wr in ((0, 1 - fr), (1, fr)):
        for dc_, wc in ((0, 1 - fc), (1, fc)):
            ri, ci = r0 + dr_, c0 + dc_
            valid = (ri >= 0) & (ri < n_px) & (ci >= 0) & (ci < n_px)
            idx.append((np.clip(ri, 0, n_px - 1), np.clip(ci, 0, n_px - 1)))
            wgt.append(np.where(valid, wr * wc, 0.0))
    return idx, wgt


def rotate_map(m: np.ndarray, angle: float, direction: str = "forward") -> np.ndarray:
    """Rotate an H x W or H x W x C map about its center. inverse(forward(x)) ~= x."""
    if m.shape[0] != m.shape[1]:
        raise ValueError("rotate_map requires a square map")
    if direction == "inverse":
        angle = -angle
    elif direction != "forward":
        raise ValueError(f"bad direction {direction!r}")
    if angle == 0.0:
        return m.copy()
    idx, wgt = _rotation_sampling(m.shape[0], angle)
    out = np.zeros_like(m)
    for (ri, ci), wv in zip(idx, wgt):
        vals = m[ri, ci]
        out += vals * (wv[..., None] if m.ndim == 3 else wv)
    return out


def rotate_map_grad(dout: np.ndarray, angle: float, direction: str = "forward") -> np.ndarray:
    """Adjoint of rotate_map: scatter output-side gradients back to the input."""
    if dout.shape[0] != dout.shape[1]:
        raise ValueError("rotate_map_grad requires a square map")
    if direction == "inverse":
        angle = -angle
    if angle == 0.0:
        return dout.copy()
    idx, wgt = _rotation_sampling(dout.shape[0], angle)
    din = np.zeros_like(dout)
    for (ri, ci), wv in zip(idx, wgt):
        contrib = dout * (wv[..., None] if dout.ndim == 3 else wv)
        np.add.at(din, (ri, ci), contrib)
    return din
