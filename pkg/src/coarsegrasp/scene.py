"""Procedural 2D top-down grasp world.

Scenes are collections of rigid planar objects in a bounded workspace.
Everything downstream (rendering, grasp physics, annotation) is derived
from the analytic footprint of each object, so the whole world is a pure
function of (config, seed).

Coordinates are (row, col) image indices throughout; yaw rotates the
object frame in the image plane.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

SHAPE_FAMILIES = ("disc", "rectangle", "capsule", "ell")


class PlacementError(RuntimeError):
    """Raised when rejection sampling cannot fit the requested objects."""


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    shape: str  # one of SHAPE_FAMILIES
    pose: tuple[float, float, float]  # (cx row, cy col, yaw radians)
    size: dict
    height: float
    color: tuple[float, float, float]


@dataclass(frozen=True)
class Scene:
    objects: tuple[ObjectSpec, ...]
    workspace: tuple[int, int]  # (H, W)
    seed: int


@dataclass(frozen=True)
class HeightmapPair:
    color: np.ndarray  # H x W x 3, floats in [0, 1]
    depth: np.ndarray  # H x W, floats >= 0, exactly 0 on background


@dataclass(frozen=True)
class GraspAction:
    x: int  # pixel row
    y: int  # pixel col
    alpha_index: int  # orientation index in [0, 15]; alpha = pi/8 * index

    @property
    def alpha(self) -> float:
        return math.pi / 8.0 * self.alpha_index


@dataclass(frozen=True)
class GraspOutcome:
    success: bool
    removed_id: int | None
    reward: int


@dataclass(frozen=True)
class Gripper:
    aperture: float = 10.0  # max jaw opening, pixels
    finger_size: float = 2.0  # side of the square finger footprint, pixels


@dataclass(frozen=True)
class SceneConfig:
    """Sampling ranges for random scene generation (pixels)."""

    shapes: tuple[str, ...] = SHAPE_FAMILIES
    disc_radius: tuple[float, float] = (2.0, 3.2)
    rect_half_long: tuple[float, float] = (3.5, 6.5)
    rect_half_short: tuple[float, float] = (1.2, 2.2)
    capsule_half_length: tuple[float, float] = (3.0, 5.0)
    capsule_radius: tuple[float, float] = (1.2, 2.0)
    ell_arm: tuple[float, float] = (4.5, 7.0)
    ell_thickness: tuple[float, float] = (2.0, 3.0)
    height: tuple[float, float] = (0.5, 1.5)
    clearance: float = 2.0  # min pixel gap between footprints
    max_retries: int = 300


# ---------------------------------------------------------------------------
# analytic footprints


def _to_frame(obj: ObjectSpec, r, c):
    cx, cy, yaw = obj.pose
    dr = np.asarray(r, dtype=float) - cx
    dc = np.asarray(c, dtype=float) - cy
    ca, sa = math.cos(yaw), math.sin(yaw)
    return ca * dr + sa * dc, -sa * dr + ca * dc


def contains(obj: ObjectSpec, r, c):
    """Analytic membership of point(s) (r, c) in the object footprint."""
    a, b = _to_frame(obj, r, c)
    s = obj.size
    if obj.shape == "disc":
        return a * a + b * b <= s["radius"] ** 2
    if obj.shape == "rectangle":
        return (np.abs(a) <= s["half_long"]) & (np.abs(b) <= s["half_short"])
    if obj.shape == "capsule":
        t = np.clip(a, -s["half_length"], s["half_length"])
        return (a - t) ** 2 + b * b <= s["radius"] ** 2
    if obj.shape == "ell":
        t = s["thickness"] / 2.0
        arm_a = (a >= -t) & (a <= s["arm_a"] - t) & (np.abs(b) <= t)
        arm_b = (np.abs(a) <= t) & (b >= -t) & (b <= s["arm_b"] - t)
        return arm_a | arm_b
    raise ValueError(f"unknown shape {obj.shape!r}")


def bounding_radius(obj: ObjectSpec) -> float:
    s = obj.size
    if obj.shape == "disc":
        return s["radius"]
    if obj.shape == "rectangle":
        return math.hypot(s["half_long"], s["half_short"])
    if obj.shape == "capsule":
        return s["half_length"] + s["radius"]
    if obj.shape == "ell":
        return max(s["arm_a"], s["arm_b"]) + s["thickness"]
    raise ValueError(f"unknown shape {obj.shape!r}")


def footprint_mask(obj: ObjectSpec, workspace: tuple[int, int]) -> np.ndarray:
    """Boolean H x W mask: pixel centers covered by the object."""
    h, w = workspace
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return contains(obj, rr, cc)


def scene_mask(scene: Scene) -> np.ndarray:
    h, w = scene.workspace
    mask = np.zeros((h, w), dtype=bool)
    for obj in scene.objects:
        mask |= footprint_mask(obj, scene.workspace)
    return mask


# ---------------------------------------------------------------------------
# generation


def _sample_object(oid: int, workspace, cfg: SceneConfig, rng: np.random.Generator) -> ObjectSpec:
    h, w = workspace
    shape = cfg.shapes[rng.integers(len(cfg.shapes))]
    u = rng.uniform
    if shape == "disc":
        size = {"radius": u(*cfg.disc_radius)}
    elif shape == "rectangle":
        size = {"half_long": u(*cfg.rect_half_long), "half_short": u(*cfg.rect_half_short)}
    elif shape == "capsule":
        size = {"half_length": u(*cfg.capsule_half_length), "radius": u(*cfg.capsule_radius)}
    else:
        size = {"arm_a": u(*cfg.ell_arm), "arm_b": u(*cfg.ell_arm), "thickness": u(*cfg.ell_thickness)}
    yaw = u(0.0, math.pi)
    obj = ObjectSpec(oid, shape, (0.0, 0.0, yaw), size, u(*cfg.height),
                     tuple(u(0.15, 1.0) for _ in range(3)))
    margin = bounding_radius(obj) + 1.0
    cx = u(margin, h - 1 - margin)
    cy = u(margin, w - 1 - margin)
    return dataclasses.replace(obj, pose=(cx, cy, yaw))


def generate_scene(n_objects: int, workspace: tuple[int, int], rng: np.random.Generator,
                   config: SceneConfig | None = None, seed: int = 0) -> Scene:
    """Rejection-sample non-overlapping objects; raises PlacementError when crowded."""
    if workspace[0] < 32 or workspace[1] < 32:
        raise ValueError("workspace must be at least 32x32")
    cfg = config or SceneConfig()
    h, w = workspace
    occupied = np.zeros((h, w), dtype=bool)  # dilated by clearance
    placed: list[ObjectSpec] = []
    for oid in range(n_objects):
        for attempt in range(cfg.max_retries):
            obj = _sample_object(oid, workspace, cfg, rng)
            mask = footprint_mask(obj, workspace)
            if not mask.any():
                continue
            grown = _dilate(mask, cfg.clearance)
            if (grown & occupied).any():
                continue
            placed.append(obj)
            occupied |= grown
            break
        else:
            raise PlacementError(
                f"could not place object {oid} after {cfg.max_retries} tries "
                f"(workspace {h}x{w} too crowded for {n_objects} objects)")
    return Scene(tuple(placed), workspace, seed)


def _dilate(mask: np.ndarray, radius: float) -> np.ndarray:
    if radius <= 0:
        return mask
    from scipy import ndimage

    r = int(math.ceil(radius))
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return ndimage.binary_dilation(mask, structure=(yy * yy + xx * xx) <= radius * radius)


def scene_from_seed(n_objects: int, workspace: tuple[int, int], seed: int,
                    config: SceneConfig | None = None) -> Scene:
    rng = np.random.default_rng(seed)
    return generate_scene(n_objects, workspace, rng, config, seed=seed)


# ---------------------------------------------------------------------------
# rendering


def render_heightmaps(scene: Scene) -> HeightmapPair:
    h, w = scene.workspace
    color = np.zeros((h, w, 3))
    depth = np.zeros((h, w))
    # footprints never overlap, so later objects cannot shadow earlier ones
    for obj in scene.objects:
        mask = footprint_mask(obj, scene.workspace)
        depth[mask] = obj.height
        color[mask] = obj.color
    return HeightmapPair(color, depth)


# ---------------------------------------------------------------------------
# grasp physics


_MARCH_STEP = 0.25


def closing_extent(scene: Scene, x: int, y: int, alpha_index: int,
                   max_range: float = 64.0) -> float | None:
    """Chord length of the target footprint along the gripper closing axis.

    Returns None ("miss") when (x, y) is not on any object footprint.  The
    closing axis direction is (-sin a, cos a); the extent is the span between
    the outermost covered points found by marching outward from (x, y).
    """
    target = None
    for obj in scene.objects:
        if bool(contains(obj, x, y)):
            target = obj
            break
    if target is None:
        return None
    alpha = math.pi / 8.0 * alpha_index
    dr, dc = -math.sin(alpha), math.cos(alpha)
    ts = np.arange(_MARCH_STEP, max_range, _MARCH_STEP)
    extent = 0.0
    for sign in (1.0, -1.0):
        inside = contains(target, x + sign * ts * dr, y + sign * ts * dc)
        hit = np.nonzero(inside)[0]
        if hit.size:
            extent += ts[hit[-1]]
    return extent


def _finger_pixels(pr: float, pc: float, finger_size: float, workspace):
    """Integer pixel block covered by an axis-aligned square finger."""
    h, w = workspace
    half = finger_size / 2.0
    r0 = max(int(math.ceil(pr - half)), 0)
    r1 = min(int(math.floor(pr + half)), h - 1)
    c0 = max(int(math.ceil(pc - half)), 0)
    c1 = min(int(math.floor(pc + half)), w - 1)
    if r0 > r1 or c0 > c1:
        return None
    return slice(r0, r1 + 1), slice(c0, c1 + 1)


def execute_grasp(scene: Scene, action: GraspAction, gripper: Gripper) -> tuple[Scene, GraspOutcome]:
    """Analytic parallel-jaw grasp: chord-vs-aperture plus finger collision."""
    h, w = scene.workspace
    if not (0 <= action.x < h and 0 <= action.y < w):
        raise ValueError(f"action ({action.x}, {action.y}) outside workspace {h}x{w}")
    fail = (scene, GraspOutcome(False, None, 0))

    extent = closing_extent(scene, action.x, action.y, action.alpha_index,
                            max_range=gripper.aperture + 1.0)
    if extent is None or extent > gripper.aperture:
        return fail

    alpha = action.alpha
    dr, dc = -math.sin(alpha), math.cos(alpha)
    mask = scene_mask(scene)
    off = gripper.aperture / 2.0
    for sign in (1.0, -1.0):
        block = _finger_pixels(action.x + sign * off * dr, action.y + sign * off * dc,
                               gripper.finger_size, scene.workspace)
        if block is not None and mask[block].any():
            return fail

    target = next(obj for obj in scene.objects if bool(contains(obj, action.x, action.y)))
    remaining = tuple(obj for obj in scene.objects if obj.id != target.id)
    new_scene = Scene(remaining, scene.workspace, scene.seed)
    return new_scene, GraspOutcome(True, target.id, 1)


def is_terminal(scene: Scene, step: int, max_steps: int) -> bool:
    return len(scene.objects) == 0 or step >= max_steps


# ---------------------------------------------------------------------------
# serialization

DEPTH_PNG_SCALE = 10000.0  # counts per depth unit in 16-bit PNG exports


def scene_to_json(scene: Scene) -> str:
    return json.dumps({
        "workspace": list(scene.workspace),
        "seed": scene.seed,
        "objects": [{
            "id": o.id, "shape": o.shape, "pose": list(o.pose),
            "size": o.size, "height": o.height, "color": list(o.color),
        } for o in scene.objects],
    }, indent=2)


def scene_from_json(text: str) -> Scene:
    d = json.loads(text)
    objs = tuple(
        ObjectSpec(o["id"], o["shape"], tuple(o["pose"]), dict(o["size"]),
                   o["height"], tuple(o["color"]))
        for o in d["objects"])
    return Scene(objs, tuple(d["workspace"]), d["seed"])


def save_heightmaps_png(hm: HeightmapPair, color_path, depth_path, sidecar_path=None) -> None:
    from PIL import Image

    rgb = np.clip(np.round(hm.color * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(color_path)
    d16 = np.clip(np.round(hm.depth * DEPTH_PNG_SCALE), 0, 65535).astype(np.uint16)
    Image.fromarray(d16).save(depth_path)
    if sidecar_path is not None:
        with open(sidecar_path, "w") as f:
            json.dump({"depth_scale": DEPTH_PNG_SCALE,
                       "H": hm.depth.shape[0], "W": hm.depth.shape[1]}, f)


def load_heightmaps_png(color_path, depth_path) -> HeightmapPair:
    from PIL import Image

    color = np.asarray(Image.open(color_path), dtype=float) / 255.0
    depth = np.asarray(Image.open(depth_path), dtype=float) / DEPTH_PNG_SCALE
    return HeightmapPair(color, depth)
