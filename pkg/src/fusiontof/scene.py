"""Procedural scenes, ray-cast depth maps and mirror transforms.

Every target is expanded into a small set of axis-aligned boxes (a letter
"C" is three strokes, a humanoid silhouette is head, torso, arms and legs),
so a single vectorised slab test renders all primitive kinds.  Geometry is
kept sign-symmetric in floating point: mirroring a scene about the plane
``x = spd_pos.x`` through the origin reproduces every ray/box distance
bitwise, which is what makes the single-detector ambiguity exactly testable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

Vec3 = tuple[float, float, float]

KINDS = ("box", "letter", "humanoid")

# Stroke layouts in normalised target coordinates: (u0, u1, v0, v1) with
# u across the width and v up the height, both in [-0.5, 0.5].
_GLYPHS = {
    "C": (
        (-0.5, -0.25, -0.5, 0.5),
        (-0.25, 0.5, 0.25, 0.5),
        (-0.25, 0.5, -0.5, -0.25),
    ),
    "T": (
        (-0.5, 0.5, 0.2, 0.5),
        (-0.15, 0.15, -0.5, 0.2),
    ),
}

# Standing figure with the right arm raised so that left and right differ.
_HUMANOID = (
    (-0.07, 0.07, 0.38, 0.5),  # head
    (-0.18, 0.18, -0.02, 0.36),  # torso
    (-0.32, -0.2, -0.05, 0.34),  # hanging arm
    (0.2, 0.32, 0.3, 0.5),  # raised arm
    (-0.16, -0.03, -0.5, -0.02),  # legs
    (0.03, 0.16, -0.5, -0.02),
)

_FULL = ((-0.5, 0.5, -0.5, 0.5),)

# Nominal sizes (width, height, depth) in metres.
LETTER_SIZES = {"C": (0.40, 0.30, 0.02), "T": (0.30, 0.20, 0.02)}
HUMANOID_SIZE = (0.60, 1.70, 0.05)


def _vec3(v: Sequence[float], name: str) -> Vec3:
    if len(v) != 3:
        raise ValueError(f"{name} must have 3 components, got {len(v)}")
    out = (float(v[0]), float(v[1]), float(v[2]))
    if not all(math.isfinite(c) for c in out):
        raise ValueError(f"{name} must be finite, got {out}")
    return out


@dataclass(frozen=True)
class SensorRig:
    """Positions of the photon detector, the radar and the depth camera."""

    spd_pos: Vec3 = (0.0, 0.0, 0.0)
    radar_pos: Vec3 = (-0.5, 0.0, 0.0)
    camera_pos: Vec3 = (0.0, 0.0, 0.0)
    optical_axis: Vec3 = (0.0, 0.0, 1.0)

    def __post_init__(self):
        for name in ("spd_pos", "radar_pos", "camera_pos", "optical_axis"):
            object.__setattr__(self, name, _vec3(getattr(self, name), name))
        if abs(math.sqrt(sum(c * c for c in self.optical_axis)) - 1.0) > 1e-12:
            raise ValueError("optical_axis must have unit norm")
        if self.baseline_m <= 0:
            raise ValueError("spd_pos and radar_pos must not coincide")

    @property
    def baseline_m(self) -> float:
        return math.dist(self.spd_pos, self.radar_pos)

    @classmethod
    def with_baseline(cls, baseline_m: float, **kwargs) -> "SensorRig":
        """Rig with the radar ``baseline_m`` to the left (-x) of the detector."""
        spd = _vec3(kwargs.pop("spd_pos", (0.0, 0.0, 0.0)), "spd_pos")
        radar = (spd[0] - baseline_m, spd[1], spd[2])
        kwargs.setdefault("camera_pos", spd)
        return cls(spd_pos=spd, radar_pos=radar, **kwargs)


@dataclass(frozen=True)
class TargetPrimitive:
    """One target: a box, an extruded letter plate or a humanoid silhouette.

    ``label`` selects the glyph for letters ("C" or "T").  ``mirrored`` flips
    the shape's handedness; it is toggled by :func:`mirror_scene`.
    """

    kind: str
    center: Vec3
    width: float
    height: float
    depth: float
    reflectivity: float = 1.0
    label: str = ""
    mirrored: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "letter" and self.label not in _GLYPHS:
            raise ValueError(f"unknown letter {self.label!r}; expected one of {sorted(_GLYPHS)}")
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        for name in ("width", "height", "depth"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)
        rho = float(self.reflectivity)
        if not 0.0 < rho <= 1.0:
            raise ValueError(f"reflectivity must lie in (0, 1], got {rho}")
        object.__setattr__(self, "reflectivity", rho)

    def strokes(self):
        if self.kind == "letter":
            return _GLYPHS[self.label]
        if self.kind == "humanoid":
            return _HUMANOID
        return _FULL

    def boxes(self) -> np.ndarray:
        """Axis-aligned component boxes as rows ``(x0, x1, y0, y1, z0, z1)``."""
        cx, cy, cz = self.center
        sgn = -1.0 if self.mirrored else 1.0
        hd = 0.5 * self.depth
        rows = []
        for u0, u1, v0, v1 in self.strokes():
            xa = cx + sgn * (u0 * self.width)
            xb = cx + sgn * (u1 * self.width)
            rows.append((min(xa, xb), max(xa, xb),
                         cy + v0 * self.height, cy + v1 * self.height,
                         cz - hd, cz + hd))
        return np.array(rows, dtype=float)


@dataclass(frozen=True)
class Room:
    """Empty rectangular room enclosing the rig; walls act as background."""

    width: float = 6.0
    depth: float = 6.0
    height: float = 3.0
    wall_reflectivity: float = 0.3
    center_x: float = 0.0
    floor_y: float = -1.2
    near_z: float = -0.5

    def __post_init__(self):
        for name in ("width", "depth", "height"):
            if not getattr(self, name) > 0:
                raise ValueError(f"room {name} must be positive")
        if not 0.0 < self.wall_reflectivity <= 1.0:
            raise ValueError("wall_reflectivity must lie in (0, 1]")

    @property
    def bounds(self) -> tuple[float, float, float, float, float, float]:
        hw = 0.5 * self.width
        return (self.center_x - hw, self.center_x + hw,
                self.floor_y, self.floor_y + self.height,
                self.near_z, self.near_z + self.depth)


@dataclass(frozen=True)
class SceneSpec:
    targets: tuple[TargetPrimitive, ...]
    rig: SensorRig = field(default_factory=SensorRig)
    background: Optional[Room] = None
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if not self.targets:
            raise ValueError("a scene needs at least one target")
        if self.background is not None:
            x0, x1, y0, y1, z0, z1 = self.background.bounds
            for t in self.targets:
                b = t.boxes()
                if (b[:, 0].min() < x0 or b[:, 1].max() > x1 or b[:, 2].min() < y0
                        or b[:, 3].max() > y1 or b[:, 4].min() < z0 or b[:, 5].max() > z1):
                    raise ValueError(f"target at {t.center} extends outside the room")

    def boxes(self) -> tuple[np.ndarray, np.ndarray]:
        """All component boxes (n, 6) and their reflectivities (n,)."""
        blocks, rho = [], []
        for t in self.targets:
            b = t.boxes()
            blocks.append(b)
            rho.append(np.full(len(b), t.reflectivity))
        return np.concatenate(blocks), np.concatenate(rho)

    def to_dict(self) -> dict:
        return {
            "rng_seed": int(self.rng_seed),
            "rig": {
                "spd_pos": list(self.rig.spd_pos),
                "radar_pos": list(self.rig.radar_pos),
                "camera_pos": list(self.rig.camera_pos),
                "optical_axis": list(self.rig.optical_axis),
            },
            "background": None if self.background is None else {
                "width": self.background.width,
                "depth": self.background.depth,
                "height": self.background.height,
                "wall_reflectivity": self.background.wall_reflectivity,
                "center_x": self.background.center_x,
                "floor_y": self.background.floor_y,
                "near_z": self.background.near_z,
            },
            "targets": [
                {
                    "kind": t.kind, "label": t.label, "center": list(t.center),
                    "width": t.width, "height": t.height, "depth": t.depth,
                    "reflectivity": t.reflectivity, "mirrored": t.mirrored,
                }
                for t in self.targets
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        rig = SensorRig(**{k: tuple(v) for k, v in d["rig"].items()})
        room = None if d.get("background") is None else Room(**d["background"])
        targets = tuple(
            TargetPrimitive(**{**t, "center": tuple(t["center"])}) for t in d["targets"]
        )
        return cls(targets=targets, rig=rig, background=room, rng_seed=int(d["rng_seed"]))


@dataclass(frozen=True)
class GenerationParams:
    """Randomisation ranges for :func:`generate_scene`.

    ``labels`` draws uniformly among "C", "T", "humanoid" and "box".
    Bounds constrain the whole target extent, not just its centre.
    """

    labels: tuple[str, ...] = ("C", "T", "humanoid")
    x_bounds: tuple[float, float] = (-1.5, 1.5)
    y_bounds: tuple[float, float] = (-1.0, 1.0)
    z_bounds: tuple[float, float] = (3.0, 4.0)
    background: bool = False
    reflectivity: tuple[float, float] = (0.5, 1.0)
    random_handedness: bool = True
    box_size: tuple[float, float] = (0.2, 0.6)
    rig: SensorRig = field(default_factory=SensorRig)
    room: Room = field(default_factory=Room)


def _target_size(label: str, rng: np.random.Generator, params: GenerationParams):
    if label in LETTER_SIZES:
        return ("letter", label) + LETTER_SIZES[label]
    if label == "humanoid":
        return ("humanoid", "") + HUMANOID_SIZE
    if label == "box":
        lo, hi = params.box_size
        w, h = rng.uniform(lo, hi, size=2)
        return ("box", "", float(w), float(h), 0.2)
    raise ValueError(f"unknown target label {label!r}")


def generate_scene(seed: int, params: GenerationParams = GenerationParams()) -> SceneSpec:
    """Random single-target scene, a pure function of ``seed`` and ``params``."""
    rng = np.random.default_rng(seed)
    label = params.labels[int(rng.integers(len(params.labels)))]
    kind, glyph, w, h, d = _target_size(label, rng, params)
    center = []
    for axis, (lo, hi), size in zip("xyz", (params.x_bounds, params.y_bounds, params.z_bounds), (w, h, d)):
        a, b = lo + size / 2, hi - size / 2
        if a > b:
            raise ValueError(
                f"{axis} bounds [{lo}, {hi}] are narrower than the {label} target ({size:.3f} m)"
            )
        center.append(float(rng.uniform(a, b)))
    mirrored = bool(rng.integers(2)) if params.random_handedness else False
    rho = float(rng.uniform(*params.reflectivity))
    target = TargetPrimitive(kind, tuple(center), w, h, d, rho, glyph, mirrored)
    room = params.room if params.background else None
    return SceneSpec((target,), params.rig, room, int(seed))


def mirror_scene(scene: SceneSpec, plane_x: Optional[float] = None) -> SceneSpec:
    """Reflect every target about the plane ``x = plane_x``.

    The plane must pass through the photon detector and contain the optical
    axis.  Shapes keep their size and reflectivity; their handedness flips.
    """
    px = scene.rig.spd_pos[0] if plane_x is None else float(plane_x)
    if px != scene.rig.spd_pos[0]:
        raise ValueError(f"mirror plane x={px} does not contain spd_pos {scene.rig.spd_pos}")
    if scene.rig.optical_axis[0] != 0.0:
        raise ValueError("mirror plane must contain the optical axis (axis x-component must be 0)")

    def reflect(x: float) -> float:
        return -x if px == 0.0 else 2.0 * px - x

    targets = tuple(
        replace(t, center=(reflect(t.center[0]), t.center[1], t.center[2]), mirrored=not t.mirrored)
        for t in scene.targets
    )
    room = scene.background
    if room is not None:
        room = replace(room, center_x=reflect(room.center_x))
    return replace(scene, targets=targets, background=room)


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel range (metres) along each pixel ray, plus reflectivity."""

    depth: np.ndarray
    reflectivity: np.ndarray
    fov_x: float
    fov_y: float
    no_return: float = 6.0
    optical_axis: Vec3 = (0.0, 0.0, 1.0)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    def hits(self) -> np.ndarray:
        return self.depth < self.no_return

    def normalized(self) -> np.ndarray:
        return self.depth / self.no_return


def _basis(axis: Sequence[float]):
    f = np.asarray(axis, dtype=float)
    hint = np.array([0.0, 1.0, 0.0]) if abs(f[1]) < 0.99 else np.array([1.0, 0.0, 0.0])
    right = np.cross(hint, f)
    right /= np.linalg.norm(right)
    up = np.cross(f, right)
    return right, up, f


def pixel_rays(width: int, height: int, fov_x: float, fov_y: float,
               axis: Sequence[float] = (0.0, 0.0, 1.0)) -> np.ndarray:
    """Unit ray directions, shape (height, width, 3), row 0 at the top."""
    right, up, fwd = _basis(axis)
    u = (np.arange(width) - (width - 1) / 2) * (2 * math.tan(fov_x / 2) / width)
    v = ((height - 1) / 2 - np.arange(height)) * (2 * math.tan(fov_y / 2) / height)
    d = (fwd[None, None, :] + u[None, :, None] * right[None, None, :]
         + v[:, None, None] * up[None, None, :])
    return d / np.sqrt(np.sum(d * d, axis=-1, keepdims=True))


def ray_box_distances(origin: np.ndarray, dirs: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Slab-test entry distance of every ray into every box, ``inf`` on a miss.

    dirs is (n, 3), boxes is (m, 6); the result is (n, m).
    """
    o = np.asarray(origin, dtype=float)
    tnear = np.full((dirs.shape[0], boxes.shape[0]), -np.inf)
    tfar = np.full_like(tnear, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(3):
            lo = boxes[None, :, 2 * k] - o[k]
            hi = boxes[None, :, 2 * k + 1] - o[k]
            d = dirs[:, k:k + 1]
            t1, t2 = lo / d, hi / d
            par = d == 0
            inside = (lo <= 0) & (hi >= 0)
            tmin = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
            tmax = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
            tnear = np.maximum(tnear, tmin)
            tfar = np.minimum(tfar, tmax)
    ok = (tnear <= tfar) & (tnear > 0)
    return np.where(ok, tnear, np.inf)


def _room_exit(origin, dirs, room: Room) -> np.ndarray:
    o = np.asarray(origin, dtype=float)
    b = room.bounds
    t = np.full(dirs.shape[0], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(3):
            d = dirs[:, k]
            tk = np.where(d > 0, (b[2 * k + 1] - o[k]) / d,
                          np.where(d < 0, (b[2 * k] - o[k]) / d, np.inf))
            t = np.minimum(t, tk)
    return t


def _resolution(resolution) -> tuple[int, int]:
    if np.isscalar(resolution):
        w = h = int(resolution)
    else:
        w, h = (int(r) for r in resolution)
    return w, h


def render_depth_map(scene: SceneSpec, resolution=(64, 64), fov: float = 0.5,
                     camera_pos: Optional[Sequence[float]] = None,
                     no_return: float = 6.0) -> DepthMap:
    """Ray-cast a depth map.

    Parameters
    ----------
    scene : SceneSpec
    resolution : int or (width, height)
        Pixel counts, at least 8 in each direction.
    fov : float
        Horizontal field of view in radians; the vertical one follows from the
        aspect ratio.
    camera_pos : Vec3, optional
        Defaults to ``scene.rig.camera_pos``.
    no_return : float
        Sentinel depth for pixels whose nearest hit is absent or at or beyond
        this range.
    """
    w, h = _resolution(resolution)
    if w < 8 or h < 8:
        raise ValueError(f"resolution must be at least 8x8, got {w}x{h}")
    if not 0.0 < fov < math.pi:
        raise ValueError(f"fov must lie in (0, pi), got {fov}")
    fov_y = 2 * math.atan(math.tan(fov / 2) * h / w)
    cam = scene.rig.camera_pos if camera_pos is None else _vec3(camera_pos, "camera_pos")
    axis = scene.rig.optical_axis
    dirs = pixel_rays(w, h, fov, fov_y, axis).reshape(-1, 3)

    boxes, rho = scene.boxes()
    t = ray_box_distances(np.asarray(cam), dirs, boxes)
    idx = np.argmin(t, axis=1)
    best = t[np.arange(len(t)), idx]
    refl = rho[idx]
    if scene.background is not None:
        wall = _room_exit(cam, dirs, scene.background)
        use_wall = wall < best
        best = np.where(use_wall, wall, best)
        refl = np.where(use_wall, scene.background.wall_reflectivity, refl)
    miss = ~(best < no_return)
    depth = np.where(miss, no_return, best).reshape(h, w)
    refl = np.where(miss, 0.0, refl).reshape(h, w)
    return DepthMap(depth, refl, fov, fov_y, float(no_return), axis)


class PointCloud(NamedTuple):
    points: np.ndarray  # (n, 3)
    reflectivity: np.ndarray  # (n,)


def point_cloud(dm: DepthMap, camera_pos: Sequence[float] = (0.0, 0.0, 0.0)) -> PointCloud:
    """Back-project every hit pixel along its ray, in row-major pixel order."""
    dirs = pixel_rays(dm.width, dm.height, dm.fov_x, dm.fov_y, dm.optical_axis)
    mask = dm.hits()
    pts = np.asarray(camera_pos, dtype=float) + dm.depth[mask][:, None] * dirs[mask]
    return PointCloud(pts, dm.reflectivity[mask].astype(float))
