"""Experiment orchestration: scratch vs warm-start vs ROI-prior runs across
seeds and object counts, each in its own directory with derived seeds."""

from __future__ import annotations

import dataclasses
import json
import os
import traceback
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import dqn, metrics, net
from .affordance import build_pretrain_dataset
from .pretrain import PretrainConfig, pretrain_model
from .scene import GraspAction


@dataclass(frozen=True)
class Variant:
    name: str
    warm_start: bool = False
    roi_prior: bool = False


@dataclass(frozen=True)
class ExperimentPlan:
    variants: tuple[Variant, ...] = (Variant("scratch"), Variant("warm", warm_start=True))
    object_counts: tuple[int, ...] = (4,)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    steps: int = 500
    workspace: tuple[int, int] = (32, 32)
    pretrain_samples: int = 50
    pretrain_epochs: int = 40
    noise_frac: float = 0.25
    pretrain_lr: float = 1e-3
    dqn_lr: float = 1e-2
    window: int = metrics.DEFAULT_WINDOW
    delta: float = metrics.DEFAULT_DELTA
    k: int = metrics.DEFAULT_K

    @staticmethod
    def from_json(path: str) -> "ExperimentPlan":
        with open(path) as f:
            d = json.load(f)
        if "variants" in d:
            d["variants"] = tuple(Variant(**v) for v in d["variants"])
        for key in ("object_counts", "seeds", "workspace"):
            if key in d:
                d[key] = tuple(d[key])
        return ExperimentPlan(**d)


def derive_seed(base_seed: int, variant: str, n_objects: int) -> int:
    """Stable run seed from (seed, variant, object count); no Python hash()."""
    tag = f"{base_seed}|{variant}|{n_objects}".encode()
    return zlib.crc32(tag) & 0x7FFFFFFF


def roi_prior_action(c_map: np.ndarray, eps: float, rng: np.random.Generator,
                     depth: np.ndarray) -> GraspAction:
    """Exploration restricted to nonzero-depth pixels; greedy picks unchanged."""
    if rng.random() >= eps:
        return dqn.select_action(c_map, 0.0, rng)
    rows, cols = np.nonzero(depth > 0)
    if rows.size == 0:
        return dqn.select_action(c_map, 1.0, rng)
    j = int(rng.integers(rows.size))
    alpha = int(rng.integers(dqn.N_ORIENTATIONS))
    return GraspAction(int(rows[j]), int(cols[j]), alpha)


def run_name(variant: Variant, n_objects: int, seed: int) -> str:
    return f"{variant.name}_obj{n_objects}_seed{seed}"


def run_single(plan: ExperimentPlan, variant: Variant, n_objects: int, seed: int,
               out_dir: str) -> dict:
    """Full pipeline for one cell: (dataset -> pretrain when warm) -> train -> metrics."""
    run_seed = derive_seed(seed, variant.name, n_objects)
    os.makedirs(out_dir, exist_ok=True)

    warm_path = None
    if variant.warm_start:
        dataset = build_pretrain_dataset(plan.pretrain_samples, n_objects,
                                         plan.workspace, plan.noise_frac, run_seed)
        params, _ = pretrain_model(dataset, PretrainConfig(
            epochs=plan.pretrain_epochs, lr=plan.pretrain_lr, seed=run_seed))
        warm_path = os.path.join(out_dir, "pretrained.gbn")
        net.save_params(params, warm_path)

    env_cfg = dqn.EnvConfig(n_objects=n_objects, workspace=plan.workspace)
    train_cfg = dqn.TrainConfig(total_steps=plan.steps, lr=plan.dqn_lr,
                                warm_start=warm_path, seed=run_seed)
    selector = roi_prior_action if variant.roi_prior else None
    result = dqn.run_training(env_cfg, train_cfg, action_selector=selector)
    dqn.save_run(result, out_dir)

    outcomes = [row.reward for row in result.curve]
    m = metrics.analyze_curve(outcomes, plan.window,
                              metrics.StabilityParams(plan.delta, plan.k))
    m.update(variant=variant.name, objects=n_objects, seed=seed)
    metrics.write_metrics(m, os.path.join(out_dir, "metrics.json"))
    return m


def run_experiment(plan: ExperimentPlan, out_root: str) -> dict:
    """Runs every (variant, object count, seed) cell; failures are recorded
    per run and do not stop siblings."""
    os.makedirs(out_root, exist_ok=True)
    with open(os.path.join(out_root, "plan.json"), "w") as f:
        json.dump(dataclasses.asdict(plan), f, indent=2)
    statuses = {}
    for variant in plan.variants:
        for n_objects in plan.object_counts:
            for seed in plan.seeds:
                name = run_name(variant, n_objects, seed)
                run_dir = os.path.join(out_root, name)
                try:
                    run_single(plan, variant, n_objects, seed, run_dir)
                    statuses[name] = "ok"
                except Exception as exc:  # noqa: BLE001 - isolate failing runs
                    statuses[name] = f"failed: {exc}"
                    os.makedirs(run_dir, exist_ok=True)
                    with open(os.path.join(run_dir, "error.log"), "w") as f:
                        f.write(traceback.format_exc())
    with open(os.path.join(out_root, "runs.json"), "w") as f:
        json.dump(statuses, f, indent=2)
    return statuses


def collect_metrics(out_root: str) -> list[dict]:
    rows = []
    for name in sorted(os.listdir(out_root)):
        path = os.path.join(out_root, name, "metrics.json")
        if os.path.isfile(path):
            rows.append(metrics.read_metrics(path))
    return rows
