"""Key-point annotation and coarse affordance ground truth.

Each object gets one key point near its center; an isotropic 2D Gaussian
with sigma equal to the point's distance to the object boundary is placed
there, and the per-object Gaussians are summed and normalized into a
spatial probability distribution used as the pretraining label.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .scene import (
    HeightmapPair,
    Scene,
    SceneConfig,
    contains,
    footprint_mask,
    generate_scene,
    load_heightmaps_png,
    render_heightmaps,
    save_heightmaps_png,
)


@dataclass(frozen=True)
class KeyPointLabel:
    points: tuple[tuple[float, float], ...]  # (v row, u col) per object
    sigmas: tuple[float, ...]


@dataclass(frozen=True)
class PretrainSample:
    heightmaps: HeightmapPair
    label: np.ndarray  # H x W ground truth distribution
    keypoints: KeyPointLabel


def _boundary_distance_field(mask: np.ndarray) -> np.ndarray:
    """Per-pixel Euclidean distance to the nearest off-footprint pixel."""
    return ndimage.distance_transform_edt(mask)


def _sample_field(field: np.ndarray, v: float, u: float) -> float:
    """Bilinear sample with edge clamping."""
    h, w = field.shape
    v = min(max(v, 0.0), h - 1.0)
    u = min(max(u, 0.0), w - 1.0)
    v0, u0 = int(v), int(u)
    v1, u1 = min(v0 + 1, h - 1), min(u0 + 1, w - 1)
    fv, fu = v - v0, u - u0
    return float((1 - fv) * (1 - fu) * field[v0, u0] + (1 - fv) * fu * field[v0, u1]
                 + fv * (1 - fu) * field[v1, u0] + fv * fu * field[v1, u1])


def sigma_for(scene: Scene, object_id: int, point: tuple[float, float]) -> float:
    """Min distance from the annotated point to the object's footprint boundary."""
    obj = next((o for o in scene.objects if o.id == object_id), None)
    if obj is None:
        raise ValueError(f"no object with id {object_id}")
    if not bool(contains(obj, point[0], point[1])):
        raise ValueError(f"point {point} is not on object {object_id}'s footprint")
    mask = footprint_mask(obj, scene.workspace)
    sigma = _sample_field(_boundary_distance_field(mask), point[0], point[1])
    return max(sigma, 0.5)  # never degenerate for 1-px-thin footprints


def _anchor_point(obj, mask: np.ndarray) -> tuple[float, float]:
    """Footprint centroid, snapped to the deepest footprint pixel when the
    centroid falls off-footprint (possible for L shapes)."""
    rows, cols = np.nonzero(mask)
    cv, cu = rows.mean(), cols.mean()
    if bool(contains(obj, cv, cu)):
        return float(cv), float(cu)
    dist = _boundary_distance_field(mask)
    idx = int(np.argmax(dist))
    return float(idx // mask.shape[1]), float(idx % mask.shape[1])


def annotate_keypoints(scene: Scene, noise_frac: float, rng: np.random.Generator) -> KeyPointLabel:
    """One key point per object: center plus bounded uniform offset.

    The offset magnitude never exceeds noise_frac times the center's distance
    to the object boundary, so noisy points always stay on the footprint.
    """
    if not 0.0 <= noise_frac <= 0.5:
        raise ValueError("noise_frac must be in [0, 0.5]")
    points, sigmas = [], []
    for obj in scene.objects:
        mask = footprint_mask(obj, scene.workspace)
        av, au = _anchor_point(obj, mask)
        v, u = av, au
        if noise_frac > 0:
            # rasterized distance can slightly overestimate the analytic
            # boundary distance near edges, so reject offsets that escape
            d0 = _sample_field(_boundary_distance_field(mask), av, au)
            for _ in range(16):
                theta = rng.uniform(0.0, 2.0 * np.pi)
                mag = rng.uniform(0.0, noise_frac * d0)
                cand = (av + mag * np.cos(theta), au + mag * np.sin(theta))
                if bool(contains(obj, *cand)):
                    v, u = cand
                    break
        points.append((v, u))
        sigmas.append(sigma_for(scene, obj.id, (v, u)))
    return KeyPointLabel(tuple(points), tuple(sigmas))


def gaussian_heatmap(point: tuple[float, float], sigma: float, dims: tuple[int, int]) -> np.ndarray:
    """Isotropic 2D Gaussian density centered at the key point, peak 1/(2 pi sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    v, u = point
    h, w = dims
    rr = np.arange(h)[:, None] - v
    cc = np.arange(w)[None, :] - u
    return np.exp(-(rr * rr + cc * cc) / (2.0 * sigma * sigma)) / (2.0 * np.pi * sigma * sigma)


def compose_ground_truth(heatmaps: list[np.ndarray], dims: tuple[int, int] | None = None) -> np.ndarray:
    """Sum the per-object Gaussians and normalize to a unit-mass distribution."""
    if not heatmaps:
        if dims is None:
            raise ValueError("dims required for an empty heatmap list")
        return np.zeros(dims)
    total = np.zeros_like(heatmaps[0])
    for hmap in heatmaps:
        if hmap.shape != total.shape:
            raise ValueError("heatmap dims disagree")
        total += hmap
    mass = total.sum()
    return total / mass if mass > 0 else total


def unit_max_map(gt: np.ndarray) -> np.ndarray:
    """Display-only rescale so the peak is 1."""
    peak = gt.max()
    return gt / peak if peak > 0 else gt


def ground_truth_for_label(label: KeyPointLabel, dims: tuple[int, int]) -> np.ndarray:
    maps = [gaussian_heatmap(p, s, dims) for p, s in zip(label.points, label.sigmas)]
    return compose_ground_truth(maps, dims)


def make_sample(scene: Scene, noise_frac: float, rng: np.random.Generator) -> PretrainSample:
    hm = render_heightmaps(scene)
    label = annotate_keypoints(scene, noise_frac, rng)
    gt = ground_truth_for_label(label, scene.workspace)
    return PretrainSample(hm, gt, label)


def build_pretrain_dataset(n_samples: int, n_objects: int, workspace: tuple[int, int],
                           noise_frac: float, seed: int,
                           scene_config: SceneConfig | None = None) -> list[PretrainSample]:
    """Fresh random scene per sample; per-sample seeds derive from the base seed."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    samples = []
    for i in range(n_samples):
        rng = np.random.default_rng([seed, i])
        scene = generate_scene(n_objects, workspace, rng, scene_config, seed=seed)
        samples.append(make_sample(scene, noise_frac, rng))
    return samples


# ---------------------------------------------------------------------------
# on-disk dataset: PNG heightmaps plus sparse key-point labels


def save_dataset(samples: list[PretrainSample], out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for i, s in enumerate(samples):
        stem = os.path.join(out_dir, f"sample_{i:04d}")
        save_heightmaps_png(s.heightmaps, stem + ".color.png", stem + ".depth.png")
        h, w = s.label.shape
        with open(stem + ".label.json", "w") as f:
            json.dump({"points": [list(p) for p in s.keypoints.points],
                       "sigmas": list(s.keypoints.sigmas), "H": h, "W": w}, f)


def load_dataset(in_dir: str) -> list[PretrainSample]:
    """Dense label maps are regenerated from the sparse key points."""
    samples = []
    i = 0
    while True:
        stem = os.path.join(in_dir, f"sample_{i:04d}")
        if not os.path.exists(stem + ".label.json"):
            break
        hm = load_heightmaps_png(stem + ".color.png", stem + ".depth.png")
        with open(stem + ".label.json") as f:
            d = json.load(f)
        label = KeyPointLabel(tuple(tuple(p) for p in d["points"]), tuple(d["sigmas"]))
        gt = ground_truth_for_label(label, (d["H"], d["W"]))
        samples.append(PretrainSample(hm, gt, label))
        i += 1
    if not samples:
        raise FileNotFoundError(f"no samples found in {in_dir}")
    return samples
