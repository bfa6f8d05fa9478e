"""DQN grasp learning over 16-orientation Q-maps.

The Q-network is the affordance network in value mode; orientation is
handled by rotating the state, running the shared network, and rotating
the output map back.  Updates supervise only the single executed
(orientation, pixel) entry with a smooth-L1 TD loss.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import net, ops
from .replay import ReplayBuffer, Transition
from .scene import (
    GraspAction,
    Gripper,
    HeightmapPair,
    Scene,
    SceneConfig,
    execute_grasp,
    generate_scene,
    is_terminal,
    render_heightmaps,
)

N_ORIENTATIONS = 16


@dataclass(frozen=True)
class EnvConfig:
    n_objects: int = 4
    workspace: tuple[int, int] = (32, 32)
    scene_config: SceneConfig = field(default_factory=SceneConfig)
    gripper: Gripper = field(default_factory=Gripper)
    episode_len: int | None = None  # default 2 * n_objects

    @property
    def max_episode_steps(self) -> int:
        return self.episode_len if self.episode_len is not None else 2 * self.n_objects


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 500
    eps_start: float = 0.5
    eps_final: float = 0.001
    eps_decay_frac: float = 0.8  # fraction of total_steps to reach eps_final
    gamma: float = 0.9
    buffer_capacity: int = 200
    batch_size: int = 4
    target_sync: int = 100  # updates between target syncs; 0 = no target net
    # single-pixel TD gradients through the logistic head are tiny; at this
    # workspace size anything much below 1e-2 freezes into the uniform
    # bootstrap equilibrium before the rare successes can shape the values
    lr: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 2e-5
    warm_start: str | None = None  # checkpoint path; None = random init
    seed: int = 0


def epsilon_at(step: int, cfg: TrainConfig) -> float:
    """Exponential decay from eps_start to eps_final, flat afterwards."""
    horizon = max(cfg.eps_decay_frac * cfg.total_steps, 1.0)
    frac = min(step / horizon, 1.0)
    return cfg.eps_start * (cfg.eps_final / cfg.eps_start) ** frac


def warm_start_init(checkpoint: str | net.NetworkParams | None, seed: int = 0) -> net.NetworkParams:
    """Copy pretrained weights with zeroed momentum; fresh random init otherwise."""
    if checkpoint is None:
        return net.init_params(seed)
    if isinstance(checkpoint, net.NetworkParams):
        return checkpoint.zero_momentum()
    return net.load_params(checkpoint)


def _rotated_state_batch(s: HeightmapPair) -> tuple[np.ndarray, np.ndarray, list[float]]:
    angles = [math.pi / 8.0 * i for i in range(N_ORIENTATIONS)]
    colors = np.stack([np.moveaxis(ops.rotate_map(s.color, a), -1, 0) for a in angles])
    depths = np.stack([ops.rotate_map(s.depth, a)[None] for a in angles])
    return colors, depths, angles


def q_forward_16(params: net.NetworkParams, s: HeightmapPair) -> np.ndarray:
    """Q-map C of shape (16, H, W): slice i is the value map for orientation i."""
    if s.depth.shape[0] != s.depth.shape[1]:
        raise ValueError("q_forward_16 requires square heightmaps")
    colors, depths, angles = _rotated_state_batch(s)
    out, _ = net.forward_batch(params, colors, depths, "value")
    return np.stack([ops.rotate_map(out[i, 0], angles[i], "inverse")
                     for i in range(N_ORIENTATIONS)])


def select_action(c_map: np.ndarray, eps: float, rng: np.random.Generator) -> GraspAction:
    """Greedy argmax over (orientation, row, col), or eps-uniform exploration.

    Ties break to the lowest linear index in (i, x, y) order.
    """
    _, h, w = c_map.shape
    if rng.random() < eps:
        flat = int(rng.integers(c_map.size))
    else:
        flat = int(np.argmax(c_map))
    i, rem = divmod(flat, h * w)
    x, y = divmod(rem, w)
    return GraspAction(x, y, i)


def _next_max(t: Transition, target_params: net.NetworkParams, target_version: int) -> float:
    if t.cached_target_version != target_version or t.cached_next_max is None:
        t.cached_next_max = float(q_forward_16(target_params, t.s_next).max())
        t.cached_target_version = target_version
    return t.cached_next_max


def td_update(params: net.NetworkParams, target_params: net.NetworkParams,
              batch: list[Transition], gamma: float, lr: float,
              momentum: float = 0.9, weight_decay: float = 0.0,
              target_version: int = 0) -> tuple[net.NetworkParams, list[float], float]:
    """One SGD step on the mean one-pixel smooth-L1 TD loss of a batch.

    Returns (new params, |TD error| per transition, mean loss).
    """
    if not batch:
        raise ValueError("td_update needs a nonempty batch")
    n = len(batch)
    angles = [math.pi / 8.0 * t.a.alpha_index for t in batch]
    colors = np.stack([np.moveaxis(ops.rotate_map(t.s.color, a), -1, 0)
                       for t, a in zip(batch, angles)])
    depths = np.stack([ops.rotate_map(t.s.depth, a)[None] for t, a in zip(batch, angles)])
    out, trace = net.forward_batch(params, colors, depths, "value")

    dvalue = np.zeros_like(out)
    td_errors, losses = [], []
    for b, (t, a) in enumerate(zip(batch, angles)):
        if t.done:
            y = float(t.r)
        else:
            y = t.r + gamma * _next_max(t, target_params, target_version)
        if not np.isfinite(y):
            raise FloatingPointError(f"non-finite TD target for transition {b}")
        c_slice = ops.rotate_map(out[b, 0], a, "inverse")
        v = float(c_slice[t.a.x, t.a.y])
        e = v - y
        losses.append(0.5 * e * e if abs(e) < 1.0 else abs(e) - 0.5)
        td_errors.append(abs(e))
        # smooth-L1 gradient at the executed pixel only, averaged over the batch
        dc = np.zeros_like(c_slice)
        dc[t.a.x, t.a.y] = (e if abs(e) < 1.0 else math.copysign(1.0, e)) / n
        dvalue[b, 0] = ops.rotate_map_grad(dc, a, "inverse")
    dlogits = ops.logistic_logit_grad(out, dvalue)
    new_params = net.backward_and_step(params, trace, dlogits, lr, momentum, weight_decay)
    return new_params, td_errors, float(np.mean(losses))


@dataclass
class CurveRow:
    step: int
    reward: int
    epsilon: float
    loss: float
    td_error: float


@dataclass
class TrainResult:
    params: net.NetworkParams
    curve: list[CurveRow]
    events: list[str]
    env_cfg: EnvConfig
    train_cfg: TrainConfig


def run_training(env_cfg: EnvConfig, train_cfg: TrainConfig,
                 action_selector=None) -> TrainResult:
    """Full grasp-learning loop; deterministic for a fixed (config, seed).

    action_selector(C, eps, rng, depth) may override exploration (used by
    the region-of-interest baseline); greedy selection is unchanged.
    """
    rng = np.random.default_rng(train_cfg.seed)
    params = warm_start_init(train_cfg.warm_start, train_cfg.seed)
    target_params = params
    target_version = 0
    buffer = ReplayBuffer(train_cfg.buffer_capacity)
    selector = action_selector or (lambda c, eps, r, depth: select_action(c, eps, r))

    curve: list[CurveRow] = []
    events: list[str] = []
    scene: Scene | None = None
    ep_step = 0
    updates = 0
    for step in range(train_cfg.total_steps):
        if scene is None or is_terminal(scene, ep_step, env_cfg.max_episode_steps):
            scene = generate_scene(env_cfg.n_objects, env_cfg.workspace, rng,
                                   env_cfg.scene_config, seed=train_cfg.seed)
            ep_step = 0
            events.append(f"step {step}: new episode ({len(scene.objects)} objects)")
        s = render_heightmaps(scene)
        c_map = q_forward_16(params, s)
        eps = epsilon_at(step, train_cfg)
        action = selector(c_map, eps, rng, s.depth)
        scene_next, outcome = execute_grasp(scene, action, env_cfg.gripper)
        s_next = render_heightmaps(scene_next)
        done = is_terminal(scene_next, ep_step + 1, env_cfg.max_episode_steps)
        buffer.push(Transition(s, action, outcome.reward, s_next, done))

        loss = 0.0
        td_mean = 0.0
        if len(buffer) >= train_cfg.batch_size:
            idx, batch = buffer.sample(train_cfg.batch_size, rng)
            params, td_errors, loss = td_update(
                params, target_params, batch, train_cfg.gamma, train_cfg.lr,
                train_cfg.momentum, train_cfg.weight_decay, target_version)
            buffer.update_priorities(idx, td_errors)
            td_mean = float(np.mean(td_errors))
            updates += 1
            if train_cfg.target_sync == 0:
                target_params = params
                target_version = updates
            elif updates % train_cfg.target_sync == 0:
                target_params = params
                target_version += 1
                events.append(f"step {step}: target sync #{target_version}")
        curve.append(CurveRow(step, outcome.reward, eps, loss, td_mean))
        scene = scene_next
        ep_step += 1
    return TrainResult(params, curve, events, env_cfg, train_cfg)


def save_run(result: TrainResult, out_dir: str) -> None:
    """Run directory: config snapshot, curve.csv, checkpoint, event log."""
    import csv

    os.makedirs(out_dir, exist_ok=True)
    cfg = {"env": dataclasses.asdict(result.env_cfg),
           "train": dataclasses.asdict(result.train_cfg)}
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(cfg, f, indent=2, default=str)
    with open(os.path.join(out_dir, "curve.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "reward", "epsilon", "loss", "td_error"])
        for row in result.curve:
            writer.writerow([row.step, row.reward, f"{row.epsilon:.6g}",
                             f"{row.loss:.10g}", f"{row.td_error:.10g}"])
    net.save_params(result.params, os.path.join(out_dir, "final.gbn"))
    with open(os.path.join(out_dir, "events.log"), "w") as f:
        f.write("\n".join(result.events) + ("\n" if result.events else ""))


def load_curve_outcomes(run_dir: str) -> list[int]:
    import csv

    with open(os.path.join(run_dir, "curve.csv")) as f:
        return [int(row["reward"]) for row in csv.DictReader(f)]
