"""Supervised pretraining of the affordance network on key-point labels.

Per-sample SGD over the coarse ground-truth distributions, with a choice
of KL, MSE, or smooth-L1 loss so the three can be compared on identical
data.  The trained parameters become the warm-start checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import net
from .affordance import PretrainSample
from .scene import Scene, render_heightmaps, scene_mask


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 40
    lr: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 2e-5
    loss_kind: str = "kl"  # kl | mse | smooth_l1
    seed: int = 0
    shuffle: bool = True


@dataclass
class LossRecord:
    step: int
    epoch: int
    loss: float


def pretrain_model(dataset: list[PretrainSample],
                   cfg: PretrainConfig) -> tuple[net.NetworkParams, list[LossRecord]]:
    """Batch-size-1 SGD for cfg.epochs passes; deterministic per cfg.seed."""
    if not dataset:
        raise ValueError("dataset must not be empty")
    if cfg.epochs < 1 or cfg.lr <= 0:
        raise ValueError("epochs must be >= 1 and lr > 0")
    rng = np.random.default_rng(cfg.seed)
    params = net.init_params(cfg.seed)
    history: list[LossRecord] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(dataset)) if cfg.shuffle else np.arange(len(dataset))
        for idx in order:
            sample = dataset[idx]
            _, trace = net.forward_affordance(params, sample.heightmaps, "distribution")
            loss, dlogits = net.loss_and_logit_grad(cfg.loss_kind, sample.label, trace)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at step {step}")
            params = net.backward_and_step(params, trace, dlogits, cfg.lr,
                                           cfg.momentum, cfg.weight_decay)
            history.append(LossRecord(step, epoch, loss))
            step += 1
    return params, history


def evaluate_background_mass(params: net.NetworkParams, scenes: list[Scene]) -> float:
    """Mean predicted probability mass falling outside object footprints."""
    masses = []
    for scene in scenes:
        hm = render_heightmaps(scene)
        pred, _ = net.forward_affordance(params, hm, "distribution")
        masses.append(float(pred[~scene_mask(scene)].sum()))
    return float(np.mean(masses)) if masses else 0.0


def history_to_csv(history: list[LossRecord], path: str) -> None:
    import csv

    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "epoch", "loss"])
        for rec in history:
            writer.writerow([rec.step, rec.epoch, f"{rec.loss:.10g}"])
