"""Small fully-convolutional affordance network with hand-written backprop.

Topology: two per-modality trunks (3x3 stride-2 convs, color 3->8->16 and
depth 1->8->16) -> channel concat -> two 1x1 convs (32->16->1) -> bilinear
upsample x4 back to input resolution.  The single logits map feeds either a
spatial softmax (distribution mode, pretraining) or an elementwise logistic
(value mode, Q-learning); the two heads share all weights.

Everything is float64 and pure: parameter updates return new objects.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .scene import HeightmapPair

# (name, fan_in, shape) for every learnable tensor
_LAYOUT = [
    ("color1.w", 3 * 9, (8, 3, 3, 3)),
    ("color1.b", 3 * 9, (8,)),
    ("color2.w", 8 * 9, (16, 8, 3, 3)),
    ("color2.b", 8 * 9, (16,)),
    ("depth1.w", 1 * 9, (8, 1, 3, 3)),
    ("depth1.b", 1 * 9, (8,)),
    ("depth2.w", 8 * 9, (16, 8, 3, 3)),
    ("depth2.b", 8 * 9, (16,)),
    ("head1.w", 32, (16, 32)),
    ("head1.b", 32, (16,)),
    ("head2.w", 16, (1, 16)),
    ("head2.b", 16, (1,)),
]

UPSAMPLE = 4  # two stride-2 convs, restored by bilinear x4


@dataclass(frozen=True)
class NetworkParams:
    tensors: dict[str, np.ndarray]
    momentum: dict[str, np.ndarray]

    def zero_momentum(self) -> "NetworkParams":
        return NetworkParams(dict(self.tensors),
                             {k: np.zeros_like(v) for k, v in self.tensors.items()})


def init_params(seed: int) -> NetworkParams:
    """Kaiming-style scaled uniform weights, zero biases, zero momentum."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, fan_in, shape in _LAYOUT:
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape)
        else:
            bound = math.sqrt(6.0 / fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return NetworkParams(tensors, {k: np.zeros_like(v) for k, v in tensors.items()})


@dataclass
class ForwardTrace:
    """Inputs and pre-activations cached for the backward pass."""

    color: np.ndarray  # (N, 3, H, W)
    depth: np.ndarray  # (N, 1, H, W)
    pre: dict[str, np.ndarray] = field(default_factory=dict)
    logits: np.ndarray | None = None  # (N, 1, H, W)
    output: np.ndarray | None = None
    mode: str = "distribution"


def _trunk_forward(p, prefix: str, x: np.ndarray, trace: ForwardTrace) -> np.ndarray:
    z1, _ = ops.conv3x3_s2_forward(x, p[f"{prefix}1.w"], p[f"{prefix}1.b"])
    trace.pre[f"{prefix}1"] = z1
    a1 = ops.relu_forward(z1)
    trace.pre[f"{prefix}1.act"] = a1
    z2, _ = ops.conv3x3_s2_forward(a1, p[f"{prefix}2.w"], p[f"{prefix}2.b"])
    trace.pre[f"{prefix}2"] = z2
    return ops.relu_forward(z2)


def forward_batch(params: NetworkParams, color: np.ndarray, depth: np.ndarray,
                  mode: str = "distribution") -> tuple[np.ndarray, ForwardTrace]:
    """color: (N, 3, H, W); depth: (N, 1, H, W). Returns ((N, 1, H, W) map, trace)."""
    if mode not in ("distribution", "value"):
        raise ValueError(f"bad mode {mode!r}")
    h, w = color.shape[2], color.shape[3]
    if h % UPSAMPLE or w % UPSAMPLE:
        raise ValueError(f"input dims ({h}, {w}) must be divisible by {UPSAMPLE}")
    p = params.tensors
    trace = ForwardTrace(color=color, depth=depth, mode=mode)
    fc = _trunk_forward(p, "color", color, trace)
    fd = _trunk_forward(p, "depth", depth, trace)
    trace.pre["color2.act"] = fc
    trace.pre["depth2.act"] = fd
    feat = np.concatenate([fc, fd], axis=1)
    z3 = ops.conv1x1_forward(feat, p["head1.w"], p["head1.b"])
    trace.pre["head1"] = z3
    a3 = ops.relu_forward(z3)
    trace.pre["head1.act"] = a3
    z4 = ops.conv1x1_forward(a3, p["head2.w"], p["head2.b"])
    trace.pre["head2"] = z4
    logits = ops.upsample_bilinear_forward(z4, UPSAMPLE)
    trace.logits = logits
    out = ops.spatial_softmax(logits) if mode == "distribution" else ops.logistic(logits)
    trace.output = out
    return out, trace


def _as_batch(hm: HeightmapPair) -> tuple[np.ndarray, np.ndarray]:
    color = np.moveaxis(np.asarray(hm.color, dtype=float), -1, 0)[None]
    depth = np.asarray(hm.depth, dtype=float)[None, None]
    return color, depth


def forward_affordance(params: NetworkParams, hm: HeightmapPair,
                       mode: str = "distribution") -> tuple[np.ndarray, ForwardTrace]:
    """Single-sample convenience wrapper; returns the H x W map."""
    color, depth = _as_batch(hm)
    out, trace = forward_batch(params, color, depth, mode)
    return out[0, 0], trace


# ---------------------------------------------------------------------------
# losses


def kl_div_loss(y_gt: np.ndarray, y_pred: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(Y_GT || Y_Pred) and its gradient w.r.t. the softmax logits.

    Both maps must sum to 1; the gradient uses the softmax identity
    d/dz KL = Y_Pred - Y_GT, valid because Y_Pred = softmax(logits).
    """
    for name, m in (("y_gt", y_gt), ("y_pred", y_pred)):
        if abs(float(m.sum()) - 1.0) > 1e-5:
            raise ValueError(f"{name} is not normalized (sum={m.sum():.6g})")
    pos = y_gt > 0
    loss = float(np.sum(y_gt[pos] * np.log(y_gt[pos] / y_pred[pos])))
    return loss, y_pred - y_gt


def regression_loss(kind: str, target: np.ndarray | float,
                    pred: np.ndarray | float) -> tuple[float, np.ndarray]:
    """Mean MSE / smooth-L1 over all elements, with gradient w.r.t. pred."""
    t = np.asarray(target, dtype=float)
    p = np.asarray(pred, dtype=float)
    if t.shape != p.shape:
        raise ValueError(f"shape mismatch {t.shape} vs {p.shape}")
    e = p - t
    n = max(e.size, 1)
    if kind == "mse":
        return float(np.mean(e * e)), 2.0 * e / n
    if kind == "smooth_l1":
        small = np.abs(e) < 1.0
        loss = float(np.mean(np.where(small, 0.5 * e * e, np.abs(e) - 0.5)))
        return loss, np.where(small, e, np.sign(e)) / n
    raise ValueError(f"unknown loss kind {kind!r}")


def loss_and_logit_grad(loss_kind: str, y_gt: np.ndarray, trace: ForwardTrace) -> tuple[float, np.ndarray]:
    """Evaluate a loss on the trace's output and chain to logit gradients."""
    pred = trace.output[0, 0]
    if loss_kind in ("kl", "kl_div"):
        if trace.mode != "distribution":
            raise ValueError("kl loss requires distribution mode")
        loss, dlogit = kl_div_loss(y_gt, pred)
        return loss, dlogit[None, None]
    loss, dpred = regression_loss(loss_kind, y_gt, pred)
    dpred = dpred[None, None]
    if trace.mode == "distribution":
        return loss, ops.softmax_logit_grad(trace.output, dpred)
    return loss, ops.logistic_logit_grad(trace.output, dpred)


# ---------------------------------------------------------------------------
# backward pass and SGD


def backward(params: NetworkParams, trace: ForwardTrace,
             dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of every parameter given dL/dlogits of shape (N, 1, H, W)."""
    p = params.tensors
    grads: dict[str, np.ndarray] = {}
    dz4 = ops.upsample_bilinear_backward(dlogits, trace.pre["head2"].shape, UPSAMPLE)
    da3, grads["head2.w"], grads["head2.b"] = ops.conv1x1_backward(dz4, trace.pre["head1.act"], p["head2.w"])
    dz3 = ops.relu_backward(da3, trace.pre["head1"])
    feat = np.concatenate([trace.pre["color2.act"], trace.pre["depth2.act"]], axis=1)
    dfeat, grads["head1.w"], grads["head1.b"] = ops.conv1x1_backward(dz3, feat, p["head1.w"])
    for prefix, x, split in (("color", trace.color, slice(0, 16)),
                             ("depth", trace.depth, slice(16, 32))):
        dz2 = ops.relu_backward(dfeat[:, split], trace.pre[f"{prefix}2"])
        da1, grads[f"{prefix}2.w"], grads[f"{prefix}2.b"] = ops.conv3x3_s2_backward(
            dz2, trace.pre[f"{prefix}1.act"], p[f"{prefix}2.w"])
        dz1 = ops.relu_backward(da1, trace.pre[f"{prefix}1"])
        _, grads[f"{prefix}1.w"], grads[f"{prefix}1.b"] = ops.conv3x3_s2_backward(
            dz1, x, p[f"{prefix}1.w"])
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in layer {name}")
    return grads


def sgd_step(params: NetworkParams, grads: dict[str, np.ndarray], lr: float,
             momentum: float = 0.9, weight_decay: float = 0.0) -> NetworkParams:
    """v <- mu v + (g + lambda w); w <- w - lr v.  Decay applies to weights only."""
    new_t, new_m = {}, {}
    for name, w in params.tensors.items():
        g = grads.get(name, np.zeros_like(w))
        if weight_decay and name.endswith(".w"):
            g = g + weight_decay * w
        v = momentum * params.momentum[name] + g
        new_t[name] = w - lr * v
        new_m[name] = v
    return NetworkParams(new_t, new_m)


def backward_and_step(params: NetworkParams, trace: ForwardTrace, dlogits: np.ndarray,
                      lr: float, momentum: float = 0.9,
                      weight_decay: float = 0.0) -> NetworkParams:
    return sgd_step(params, backward(params, trace, dlogits), lr, momentum, weight_decay)


# ---------------------------------------------------------------------------
# checkpoint format: magic "GBN1", then sorted (name, dims, float64 payload)

_MAGIC = b"GBN1"


def save_params(params: NetworkParams, path: str) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        for name in sorted(params.tensors):
            arr = np.ascontiguousarray(params.tensors[name], dtype="<f8")
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_params(path: str) -> NetworkParams:
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path} is not a GBN1 checkpoint")
        tensors = {}
        while True:
            head = f.read(4)
            if not head:
                break
            (nlen,) = struct.unpack("<I", head)
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", f.read(4))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
            n = int(np.prod(dims)) if dims else 1
            tensors[name] = np.frombuffer(f.read(8 * n), dtype="<f8").reshape(dims).copy()
    expected = {name: shape for name, _, shape in _LAYOUT}
    if set(tensors) != set(expected):
        raise ValueError(f"checkpoint tensor names mismatch: {sorted(set(tensors) ^ set(expected))}")
    bad = [n for n, a in tensors.items() if a.shape != expected[n]]
    if bad:
        raise ValueError(f"checkpoint shape mismatch in tensors: {bad}")
    return NetworkParams(tensors, {k: np.zeros_like(v) for k, v in tensors.items()})


# ---------------------------------------------------------------------------
# finite-difference verification


def grad_check(params: NetworkParams, hm: HeightmapPair, y_gt: np.ndarray,
               loss_kind: str = "kl", mode: str = "distribution",
               h: float = 1e-5) -> dict:
    """Compare analytic parameter gradients against central differences."""

    def loss_at(p: NetworkParams) -> float:
        _, trace = forward_affordance(p, hm, mode)
        loss, _ = loss_and_logit_grad(loss_kind, y_gt, trace)
        return loss

    _, trace = forward_affordance(params, hm, mode)
    _, dlogits = loss_and_logit_grad(loss_kind, y_gt, trace)
    analytic = backward(params, trace, dlogits)

    max_abs = 0.0
    max_rel = 0.0
    passed = True
    for name, w in params.tensors.items():
        flat = w.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_at(params)
            flat[i] = orig - h
            lm = loss_at(params)
            flat[i] = orig
            num = (lp - lm) / (2 * h)
            ana = analytic[name].reshape(-1)[i]
            abs_err = abs(num - ana)
            rel_err = abs_err / max(abs(num), abs(ana), 1e-12)
            max_abs = max(max_abs, abs_err)
            max_rel = max(max_rel, rel_err)
            if abs_err > 1e-4 and rel_err > 1e-3:
                passed = False
    return {"max_abs_err": max_abs, "max_rel_err": max_rel, "pass": passed}
