"""Ray-cast synthetic scenes with exact depth, used as ground truth.

A scene is a ground plane ``y = ground_height`` (camera frame at the
reference time doubles as the world frame, y down) plus axis-aligned boxes
that translate by ``motion`` per frame. Surfaces carry a procedural 3D
value-noise texture evaluated in object-local coordinates, so a surface
point has the same colour from every viewpoint and at every time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CameraIntrinsics, DepthMap, ImagePlane, RigidPose
from .errors import DomainError, FormatError
from .geometry import Z_EPSILON, overfit_depths, pixel_rays, source_frame_motion

SKY_ID = -1
WELL_POSED_RESIDUAL = 0.5

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_CHANNEL_OFFSET = np.array([0.381966, 0.618034, 0.236068])


@dataclass(frozen=True, eq=False)
class Box:
    center: np.ndarray
    size: np.ndarray
    motion: np.ndarray = field(default_factory=lambda: np.zeros(3))
    texture_seed: int = 1

    def __post_init__(self):
        for name in ("center", "size", "motion"):
            arr = np.array(getattr(self, name), dtype=np.float64).reshape(3)
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"box {name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.size <= 0):
            raise DomainError("box sizes must be positive")

    @property
    def moving(self) -> bool:
        return bool(np.any(self.motion != 0))


@dataclass(frozen=True, eq=False)
class SceneSpec:
    ground_height: float = 1.5
    boxes: tuple = ()
    texture_frequency: float = 1.0
    ground_seed: int = 0
    channels: int = 3
    texture_octaves: int = 1

    def __post_init__(self):
        if not self.ground_height > 0:
            raise DomainError("ground_height must be positive")
        if not self.texture_frequency > 0:
            raise DomainError("texture_frequency must be positive")
        object.__setattr__(self, "boxes", tuple(self.boxes))

    def to_dict(self) -> dict:
        return {
            "ground_height": self.ground_height,
            "texture_frequency": self.texture_frequency,
            "ground_seed": self.ground_seed,
            "channels": self.channels,
            "texture_octaves": self.texture_octaves,
            "boxes": [
                {
                    "center": b.center.tolist(),
                    "size": b.size.tolist(),
                    "motion": b.motion.tolist(),
                    "texture_seed": b.texture_seed,
                }
                for b in self.boxes
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SceneSpec":
        try:
            boxes = [
                Box(b["center"], b["size"], b.get("motion", (0.0, 0.0, 0.0)), int(b.get("texture_seed", 1)))
                for b in obj.get("boxes", [])
            ]
            return cls(
                ground_height=float(obj.get("ground_height", 1.5)),
                boxes=boxes,
                texture_frequency=float(obj.get("texture_frequency", 1.0)),
                ground_seed=int(obj.get("ground_seed", 0)),
                channels=int(obj.get("channels", 3)),
                texture_octaves=int(obj.get("texture_octaves", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed scene description ({exc})") from exc


@dataclass(frozen=True, eq=False)
class RenderedFrame:
    image: ImagePlane
    depth: DepthMap
    object_id: np.ndarray

    def dynamic_mask(self, scene: SceneSpec) -> np.ndarray:
        """Pixels belonging to boxes with nonzero motion."""
        ids = [k + 1 for k, b in enumerate(scene.boxes) if b.moving]
        return np.isin(self.object_id, ids)


def _hash(ix, iy, iz, seed: int) -> np.ndarray:
    # splitmix64 finaliser over a linear mix of the lattice coordinates
    with np.errstate(over="ignore"):
        h = (
            ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
            ^ iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
            ^ iz.astype(np.uint64) * np.uint64(0x165667B19E3779F9)
            ^ np.uint64(seed) * np.uint64(0x27D4EB2F165667C5)
        ) & _M64
        h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        h = h ^ (h >> np.uint64(31))
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def value_noise(points: np.ndarray, seed: int) -> np.ndarray:
    """C2-smooth 3D value noise in [0, 1] at the given (..., 3) points."""
    base = np.floor(points)
    frac = _fade(points - base)
    base = base.astype(np.int64)
    out = np.zeros(points.shape[:-1])
    for dx in (0, 1):
        wx = frac[..., 0] if dx else 1.0 - frac[..., 0]
        for dy in (0, 1):
            wy = frac[..., 1] if dy else 1.0 - frac[..., 1]
            for dz in (0, 1):
                wz = frac[..., 2] if dz else 1.0 - frac[..., 2]
                corner = _hash(base[..., 0] + dx, base[..., 1] + dy, base[..., 2] + dz, seed)
                out += wx * wy * wz * corner
    return out


def texture(points: np.ndarray, seed: int, frequency: float, channels: int = 3, octaves: int = 1) -> np.ndarray:
    """Value-noise colour, shape (..., channels), values in [0, 1].

    Each extra octave doubles the frequency at half the amplitude.
    """
    chans = []
    norm = sum(0.5**o for o in range(octaves))
    for c in range(channels):
        s = seed * 7919 + c * 104729
        # per-channel lattice offset so channels do not share flat spots at lattice nodes
        shifted = points * frequency + _CHANNEL_OFFSET * (c + 1)
        v = sum(0.5**o * value_noise(shifted * 2.0**o, s + o) for o in range(octaves))
        chans.append(v / norm)
    return np.stack(chans, axis=-1)


def _ray_box(origin, dirs, lo, hi):
    """Entry distance of rays into an AABB, ``inf`` where missed."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t0 = (lo - origin) * inv
        t1 = (hi - origin) * inv
    t0 = np.where(np.isnan(t0), -np.inf, t0)
    t1 = np.where(np.isnan(t1), np.inf, t1)
    tnear = np.minimum(t0, t1).max(axis=-1)
    tfar = np.maximum(t0, t1).min(axis=-1)
    hit = (tfar >= tnear) & (tnear > Z_EPSILON)
    return np.where(hit, tnear, np.inf)


def render(
    scene: SceneSpec,
    pose: RigidPose,
    intrinsics: CameraIntrinsics,
    time_delta: float = 0.0,
    height: int = 128,
    width: int = 256,
) -> RenderedFrame:
    """Ray-cast ``scene`` from a camera whose world-to-camera transform is ``pose``.

    Boxes are displaced by ``motion * time_delta`` first. Depth is the
    camera-frame z of the nearest hit; sky pixels are invalid with id -1.
    """
    rays_cam = pixel_rays(height, width, intrinsics)
    R, t = pose.rotation, pose.translation
    origin = -R.T @ t
    dirs = rays_cam @ R  # world-frame direction whose camera z component is 1

    best = np.full((height, width), np.inf)
    ids = np.full((height, width), SKY_ID, dtype=np.int64)
    dy = dirs[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        s_ground = (scene.ground_height - origin[1]) / dy
    s_ground = np.where((dy != 0) & (s_ground > Z_EPSILON), s_ground, np.inf)
    best = np.minimum(best, s_ground)
    ids[np.isfinite(s_ground)] = 0

    offsets = []
    for k, box in enumerate(scene.boxes):
        shift = box.motion * time_delta
        offsets.append(shift)
        c = box.center + shift
        s_box = _ray_box(origin, dirs, c - box.size / 2, c + box.size / 2)
        closer = s_box < best
        best = np.where(closer, s_box, best)
        ids[closer] = k + 1

    valid = np.isfinite(best)
    depth_vals = np.where(valid, best, 0.0)
    hits = origin + dirs * depth_vals[..., None]
    image = np.zeros((height, width, scene.channels))
    ground_px = ids == 0
    if ground_px.any():
        image[ground_px] = texture(
            hits[ground_px], scene.ground_seed, scene.texture_frequency, scene.channels, scene.texture_octaves
        )
    for k, box in enumerate(scene.boxes):
        sel = ids == k + 1
        if sel.any():
            local = hits[sel] - offsets[k]
            image[sel] = texture(
                local, box.texture_seed, scene.texture_frequency, scene.channels, scene.texture_octaves
            )
    return RenderedFrame(ImagePlane(image), DepthMap(depth_vals, valid), ids)


def overfit_depth_map(
    scene: SceneSpec,
    pose_t_to_prev: RigidPose,
    intrinsics: CameraIntrinsics,
    height: int = 128,
    width: int = 256,
    frame: RenderedFrame | None = None,
):
    """Depth a converged static-world network would predict for the reference frame.

    Static pixels keep their true depth; pixels on moving boxes get the
    over-fit depth whose static re-projection into the previous frame hits
    the moved point. Returns ``(DepthMap, ill_posed)`` where ``ill_posed``
    marks mover pixels without a well-posed solution (they keep the true
    depth).
    """
    if frame is None:
        frame = render(scene, RigidPose.identity(), intrinsics, 0.0, height, width)
    depth = frame.depth.data.copy()
    ill_posed = np.zeros(depth.shape, dtype=bool)
    for k, box in enumerate(scene.boxes):
        if not box.moving:
            continue
        sel = (frame.object_id == k + 1) & frame.depth.valid
        if not sel.any():
            continue
        vs, us = np.nonzero(sel)
        motion = source_frame_motion(box.motion, pose_t_to_prev).translation
        d, res, boundary, ok = overfit_depths(
            np.stack([us, vs], axis=1).astype(np.float64), depth[sel], pose_t_to_prev, intrinsics, motion
        )
        good = ok & ~boundary & (np.nan_to_num(res, nan=np.inf) < WELL_POSED_RESIDUAL)
        depth[vs[good], us[good]] = d[good]
        ill_posed[vs[~good], us[~good]] = True
    return DepthMap(depth, frame.depth.valid), ill_posed


def demo_intrinsics(height: int = 128, width: int = 256) -> CameraIntrinsics:
    f = width / 2.0
    return CameraIntrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0)


def demo_scene(variant: str = "default") -> SceneSpec:
    """Road-like scene: ground, a back wall and up to two cars.

    The camera drives forward one unit per frame. ``co`` adds a car moving
    with the camera at 0.6 of its speed, ``contra`` one moving against it
    at 0.4, ``default`` has both and ``static`` neither.
    """
    if variant not in ("default", "co", "contra", "static"):
        raise DomainError(f"unknown demo variant {variant!r}")
    wall = Box((0.0, -13.5, 30.5), (90.0, 30.0, 1.0), (0.0, 0.0, 0.0), texture_seed=11)
    boxes = [wall, Box((6.0, 0.5, 16.0), (2.0, 2.0, 2.0), (0.0, 0.0, 0.0), texture_seed=12)]
    if variant in ("default", "co"):
        boxes.append(Box((-2.5, 0.75, 9.0), (1.8, 1.5, 4.0), (0.0, 0.0, 0.6), texture_seed=21))
    if variant in ("default", "contra"):
        boxes.append(Box((2.5, 0.75, 11.0), (1.8, 1.5, 4.0), (0.0, 0.0, -0.4), texture_seed=22))
    return SceneSpec(ground_height=1.5, boxes=boxes, texture_frequency=1.0, ground_seed=3)


def demo_pose() -> RigidPose:
    """Reference-to-previous camera transform for a one-unit forward step."""
    return RigidPose.from_axis_angle((0.0, 0.004, 0.0), (0.0, 0.0, 1.0))


def rigid_scene() -> SceneSpec:
    """Static scene closed by a near back wall, used for warp and plane-sweep checks.

    The wall keeps grazing-angle ground (which aliases under point
    sampling) out of view.
    """
    boxes = [
        Box((0.0, -13.5, 12.0), (90.0, 30.0, 1.0), texture_seed=11),
        Box((1.0, 0.5, 7.2), (2.0, 2.0, 2.0), texture_seed=12),
        Box((-3.0, 0.75, 4.8), (1.8, 1.5, 4.0), texture_seed=13),
    ]
    return SceneSpec(ground_height=1.5, boxes=boxes, texture_frequency=0.5, ground_seed=3)


def rigid_pose() -> RigidPose:
    """Reference-to-source transform with a lateral baseline and a small rotation."""
    return RigidPose.from_axis_angle((0.01, -0.02, 0.005), (1.0, 0.05, 0.3))


def covisible(
    target: RenderedFrame,
    source: RenderedFrame,
    pose: RigidPose,
    intrinsics: CameraIntrinsics,
    rtol: float = 1e-4,
) -> np.ndarray:
    """Target pixels whose warp lands on the same surface in the source frame.

    Inverse depth is affine across a plane, so bilinearly sampled source
    inverse depth matches the projected one exactly unless the four taps
    straddle an occlusion or depth edge.
    """
    from .geometry import backproject_depth, bilinear_sample, warp_grid

    grid = warp_grid(target.depth, pose, intrinsics)
    z = pose.apply(backproject_depth(target.depth, intrinsics))[..., 2]
    inv_src = np.where(source.depth.valid, 1.0 / np.where(source.depth.valid, source.depth.data, 1.0), 0.0)
    sampled, ok = bilinear_sample(ImagePlane(inv_src), grid)
    z = np.where(ok.data, z, 1.0)
    return ok.data & (np.abs(sampled.data[..., 0] * z - 1.0) < rtol)
