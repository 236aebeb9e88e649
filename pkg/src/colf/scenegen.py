"""Procedural multi-view dataset generator: analytic Lambertian ray tracer
over simple primitives, with ground-truth instance masks and posed cameras.

Scenes are sampled deterministically from a seed; all cameras of a scene sit
at a fixed elevation on a circle and point at the room center.
"""
from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .raygeom import Camera, RigidTransform, camera_ray_grid, look_at

_EPS = 1e-9
_T_MIN = 1e-6


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenePrimitive:
    shape: str  # sphere | cube | cylinder
    pose: RigidTransform
    size: float  # world units; radius for spheres, edge/height otherwise
    albedo: tuple[float, float, float]
    object_id: int
    aspect: tuple[float, float, float] = (1.0, 1.0, 1.0)  # cube stretch (toy-room "chairs")

    def bounding_radius(self) -> float:
        if self.shape == "sphere":
            return self.size
        if self.shape == "cube":
            ax, ay, az = self.aspect
            return 0.5 * self.size * float(np.sqrt(ax * ax + ay * ay + az * az))
        if self.shape == "cylinder":
            r = _cylinder_radius(self.size)
            return float(np.sqrt(r * r + (0.5 * self.size) ** 2))
        raise GenerationError(f"unknown shape {self.shape!r}")

    def lowest_point_y(self) -> float:
        c = self.pose.translation[1]
        if self.shape == "sphere":
            return c - self.size
        if self.shape == "cube":
            # rotation is about y only for sampled scenes; height unaffected
            return c - 0.5 * self.size * self.aspect[1]
        if self.shape == "cylinder":
            return c - 0.5 * self.size
        raise GenerationError(f"unknown shape {self.shape!r}")


def _cylinder_radius(size: float) -> float:
    return 0.35 * size


@dataclass(frozen=True)
class SceneSpec:
    primitives: tuple[ScenePrimitive, ...]
    ground_albedo: tuple[float, float, float]
    checker_albedo: tuple[float, float, float] | None  # None -> flat ground
    checker_scale: float
    sky_color: tuple[float, float, float]
    light_direction: tuple[float, float, float]  # unit, pointing from surface toward light
    ambient: float
    shadows: bool = False


@dataclass(frozen=True)
class ViewRecord:
    image: np.ndarray  # (H, W, 3) float in [0, 1]
    instance_mask: np.ndarray  # (H, W) int, 0 = background
    depth: np.ndarray  # (H, W) float, inf at sky
    camera: Camera


@dataclass
class GeneratorConfig:
    name: str = "toy-clevr"
    profile: str = "toy-clevr"
    image_size: int = 64
    num_train: int = 500
    num_test: int = 50
    views_per_scene: int = 4
    seed: int = 0
    n_min: int = 2
    n_max: int = 4
    shapes: tuple[str, ...] = ("sphere", "cube", "cylinder")
    size_range: tuple[float, float] = (0.55, 0.95)
    cube_aspect: tuple[float, float, float] = (1.0, 1.0, 1.0)
    palette: tuple[tuple[float, float, float], ...] = (
        (0.85, 0.20, 0.20),
        (0.20, 0.45, 0.85),
        (0.20, 0.70, 0.30),
        (0.90, 0.75, 0.20),
        (0.60, 0.30, 0.75),
        (0.25, 0.75, 0.75),
        (0.90, 0.50, 0.20),
        (0.55, 0.55, 0.55),
    )
    ground_albedos: tuple[tuple[float, float, float], ...] = ((0.62, 0.62, 0.62),)
    checker: bool = False
    placement_extent: float = 2.2
    min_gap: float = 0.08
    camera_radius: float = 7.5
    camera_height: float = 4.5
    target_height: float = 0.5
    fov_deg: float = 42.0
    light_direction: tuple[float, float, float] = (0.35, 0.8, 0.47)
    ambient: float = 0.35
    shadows: bool = False
    supersample: int = 2  # images only; masks/depth stay at 1 sample per pixel
    max_attempts: int = 1000


def sample_scene(seed: int, cfg: GeneratorConfig) -> SceneSpec:
    """Deterministic scene draw: rejection-samples non-overlapping primitives."""
    if not cfg.palette:
        raise GenerationError("palette must be nonempty")
    if cfg.n_min < 0 or cfg.n_max < cfg.n_min:
        raise GenerationError("need 0 <= n_min <= n_max")
    rng = np.random.default_rng(seed)
    n = int(rng.integers(cfg.n_min, cfg.n_max + 1))
    ground = cfg.ground_albedos[int(rng.integers(len(cfg.ground_albedos)))]
    prims: list[ScenePrimitive] = []
    for i in range(n):
        for attempt in range(cfg.max_attempts):
            shape = cfg.shapes[int(rng.integers(len(cfg.shapes)))]
            size = float(rng.uniform(*cfg.size_range))
            albedo = cfg.palette[int(rng.integers(len(cfg.palette)))]
            x, z = rng.uniform(-cfg.placement_extent, cfg.placement_extent, size=2)
            yaw = float(rng.uniform(0.0, 2.0 * np.pi))
            aspect = cfg.cube_aspect if shape == "cube" else (1.0, 1.0, 1.0)
            if shape == "sphere":
                cy = size
            elif shape == "cube":
                cy = 0.5 * size * aspect[1]
            else:
                cy = 0.5 * size
            c, s = np.cos(yaw), np.sin(yaw)
            rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
            cand = ScenePrimitive(
                shape=shape,
                pose=RigidTransform(rot, (x, cy, z)),
                size=size,
                albedo=albedo,
                object_id=i + 1,
                aspect=aspect,
            )
            if all(_separated(cand, p, cfg.min_gap) for p in prims):
                prims.append(cand)
                break
        else:
            raise GenerationError(
                f"placement failed for object {i + 1} after {cfg.max_attempts} attempts (seed {seed})"
            )
    light = np.asarray(cfg.light_direction, dtype=np.float64)
    light = light / np.linalg.norm(light)
    return SceneSpec(
        primitives=tuple(prims),
        ground_albedo=ground,
        checker_albedo=(0.45, 0.45, 0.48) if cfg.checker else None,
        checker_scale=1.1,
        sky_color=tuple(np.minimum(1.0, np.asarray(ground) * 1.08)),
        light_direction=tuple(light),
        ambient=cfg.ambient,
        shadows=cfg.shadows,
    )


def _separated(a: ScenePrimitive, b: ScenePrimitive, gap: float) -> bool:
    d = np.linalg.norm(a.pose.translation - b.pose.translation)
    return d > a.bounding_radius() + b.bounding_radius() + gap


def validate_scene(scene: SceneSpec) -> None:
    """Checks the sampled-scene invariants: unique contiguous ids, resting, non-overlap."""
    ids = sorted(p.object_id for p in scene.primitives)
    if ids != list(range(1, len(ids) + 1)):
        raise GenerationError(f"object ids not contiguous from 1: {ids}")
    for p in scene.primitives:
        if abs(p.lowest_point_y()) > 1e-6:
            raise GenerationError(f"object {p.object_id} not resting on ground")
    for i, a in enumerate(scene.primitives):
        for b in scene.primitives[i + 1 :]:
            if not _separated(a, b, 0.0):
                raise GenerationError(f"objects {a.object_id} and {b.object_id} overlap")


# ---------------------------------------------------------------------------
# analytic intersections, vectorized over rays
# ---------------------------------------------------------------------------


def _intersect_sphere(o, d, center, radius):
    oc = o - center
    b = np.sum(oc * d, axis=-1)
    c = np.sum(oc * oc, axis=-1) - radius * radius
    disc = b * b - c
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    t = np.where(t0 > _T_MIN, t0, np.where(t1 > _T_MIN, t1, np.inf))
    t = np.where(hit, t, np.inf)
    p = o + t[..., None] * d
    n = (p - center) / radius
    return t, n


def _intersect_box(o, d, pose: RigidTransform, half):
    inv = pose.inverse()
    ol = inv.apply_point(o)
    dl = inv.apply_direction(d)
    half = np.asarray(half, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv_d = 1.0 / dl
        t1 = (-half - ol) * inv_d
        t2 = (half - ol) * inv_d
    tmin_ax = np.minimum(t1, t2)
    tmax_ax = np.maximum(t1, t2)
    # parallel rays: axis bounds become +-inf; nan (0 * inf) only when on-face, treat as miss
    tmin_ax = np.nan_to_num(tmin_ax, nan=np.inf, posinf=np.inf, neginf=-np.inf)
    tmax_ax = np.nan_to_num(tmax_ax, nan=-np.inf, posinf=np.inf, neginf=-np.inf)
    tmin = np.max(tmin_ax, axis=-1)
    tmax = np.min(tmax_ax, axis=-1)
    # on-face parallel misses: a parallel axis with |o| > half never intersects
    parallel_miss = np.any((np.abs(dl) < _EPS) & (np.abs(ol) > half), axis=-1)
    hit = (tmax >= tmin) & (tmax > _T_MIN) & ~parallel_miss
    t = np.where(tmin > _T_MIN, tmin, tmax)
    t = np.where(hit, t, np.inf)
    with np.errstate(invalid="ignore"):
        pl = ol + np.where(hit, t, 0.0)[..., None] * dl
        rel = pl / half
    axis = np.argmax(np.abs(rel), axis=-1)
    nl = np.zeros_like(pl)
    idx = np.arange(nl.shape[0])
    nl[idx, axis] = np.sign(rel[idx, axis])
    n = pose.apply_direction(nl)
    return t, n


def _intersect_cylinder(o, d, pose: RigidTransform, radius, height):
    inv = pose.inverse()
    ol = inv.apply_point(o)
    dl = inv.apply_direction(d)
    hh = 0.5 * height
    # infinite side surface in xz
    a = dl[..., 0] ** 2 + dl[..., 2] ** 2
    b = ol[..., 0] * dl[..., 0] + ol[..., 2] * dl[..., 2]
    c = ol[..., 0] ** 2 + ol[..., 2] ** 2 - radius * radius
    disc = b * b - a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.where(disc >= 0, disc, 0.0))
        ts0 = (-b - sq) / a
        ts1 = (-b + sq) / a
    t_side = np.full(ol.shape[0], np.inf)
    n_side = np.zeros_like(ol)
    with np.errstate(invalid="ignore"):
        for ts in (ts0, ts1):
            y = ol[..., 1] + ts * dl[..., 1]
            ok = (disc >= 0) & (a > _EPS) & (ts > _T_MIN) & (np.abs(y) <= hh) & (ts < t_side)
            t_side = np.where(ok, ts, t_side)
            p = ol + np.where(ok, ts, 0.0)[..., None] * dl
            n_cand = np.stack([p[..., 0], np.zeros_like(ts), p[..., 2]], axis=-1) / radius
            n_side = np.where(ok[..., None], n_cand, n_side)
    # caps at y = +-hh
    t_cap = np.full(ol.shape[0], np.inf)
    n_cap = np.zeros_like(ol)
    with np.errstate(divide="ignore", invalid="ignore"):
        for ycap, ny in ((hh, 1.0), (-hh, -1.0)):
            tc = (ycap - ol[..., 1]) / dl[..., 1]
            p = ol + tc[..., None] * dl
            ok = (
                (np.abs(dl[..., 1]) > _EPS)
                & (tc > _T_MIN)
                & (p[..., 0] ** 2 + p[..., 2] ** 2 <= radius * radius)
                & (tc < t_cap)
            )
            t_cap = np.where(ok, tc, t_cap)
            n_cap = np.where(ok[..., None], np.array([0.0, ny, 0.0]), n_cap)
    use_cap = t_cap < t_side
    t = np.where(use_cap, t_cap, t_side)
    nl = np.where(use_cap[..., None], n_cap, n_side)
    return t, pose.apply_direction(nl)


def _intersect_primitive(p: ScenePrimitive, o, d):
    if p.shape == "sphere":
        return _intersect_sphere(o, d, p.pose.translation, p.size)
    if p.shape == "cube":
        half = 0.5 * p.size * np.asarray(p.aspect)
        return _intersect_box(o, d, p.pose, half)
    if p.shape == "cylinder":
        return _intersect_cylinder(o, d, p.pose, _cylinder_radius(p.size), p.size)
    raise GenerationError(f"unknown shape {p.shape!r}")


def _trace_rays(scene: SceneSpec, origins, dirs):
    """Returns (color (N,3), mask (N,), depth (N,)) for arbitrary ray batches."""
    n_rays = origins.shape[0]
    best_t = np.full(n_rays, np.inf)
    best_n = np.zeros((n_rays, 3))
    best_albedo = np.zeros((n_rays, 3))
    mask = np.zeros(n_rays, dtype=np.int32)
    for p in scene.primitives:
        t, nrm = _intersect_primitive(p, origins, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_n = np.where(closer[..., None], nrm, best_n)
        best_albedo = np.where(closer[..., None], np.asarray(p.albedo), best_albedo)
        mask = np.where(closer, p.object_id, mask)
    # ground plane y=0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_ground = -origins[..., 1] / dirs[..., 1]
    ground_ok = (dirs[..., 1] < -_EPS) & (t_ground > _T_MIN) & (t_ground < best_t)
    gp = origins + t_ground[..., None] * dirs
    g_albedo = np.broadcast_to(np.asarray(scene.ground_albedo), (n_rays, 3)).copy()
    if scene.checker_albedo is not None:
        parity = (
            np.floor(gp[..., 0] / scene.checker_scale) + np.floor(gp[..., 2] / scene.checker_scale)
        ) % 2
        g_albedo = np.where(parity[..., None] > 0.5, np.asarray(scene.checker_albedo), g_albedo)
    best_t = np.where(ground_ok, t_ground, best_t)
    best_n = np.where(ground_ok[..., None], np.array([0.0, 1.0, 0.0]), best_n)
    best_albedo = np.where(ground_ok[..., None], g_albedo, best_albedo)
    mask = np.where(ground_ok, 0, mask)

    hit_any = np.isfinite(best_t)
    light = np.asarray(scene.light_direction)
    diffuse = np.maximum(0.0, best_n @ light)
    if scene.shadows:
        hp = origins + np.where(hit_any, best_t, 0.0)[..., None] * dirs
        shadow_o = hp + 1e-4 * best_n
        shadow_d = np.broadcast_to(light, shadow_o.shape)
        occluded = np.zeros(n_rays, dtype=bool)
        for p in scene.primitives:
            t, _ = _intersect_primitive(p, shadow_o, shadow_d)
            occluded |= np.isfinite(t)
        diffuse = np.where(occluded & hit_any, 0.0, diffuse)
    shade = best_albedo * (scene.ambient + (1.0 - scene.ambient) * diffuse)[..., None]
    color = np.where(hit_any[..., None], shade, np.asarray(scene.sky_color))
    return color, mask, best_t


def trace_view(scene: SceneSpec, camera: Camera, supersample: int = 1) -> ViewRecord:
    """Renders one posed view; masks/depth always use 1 center sample per pixel."""
    h, w = camera.height, camera.width
    origins, dirs = camera_ray_grid(camera)
    color, mask, depth = _trace_rays(scene, origins, dirs)
    if supersample > 1:
        s = supersample
        big = camera.scaled(w * s, h * s)
        o_big, d_big = camera_ray_grid(big)
        c_big, _, _ = _trace_rays(scene, o_big, d_big)
        # fold (H*s, W*s) -> (H, W) by averaging each s x s block
        color = c_big.reshape(h, s, w, s, 3).mean(axis=(1, 3)).reshape(-1, 3)
    return ViewRecord(
        image=np.clip(color.reshape(h, w, 3), 0.0, 1.0),
        instance_mask=mask.reshape(h, w).astype(np.int32),
        depth=depth.reshape(h, w),
        camera=camera,
    )


def scene_cameras(seed: int, cfg: GeneratorConfig) -> list[Camera]:
    """Fixed-elevation circle, random azimuths, pointed at the room center."""
    rng = np.random.default_rng((seed, 0xC0FFEE))
    cams = []
    focal = 0.5 * cfg.image_size / np.tan(np.deg2rad(cfg.fov_deg) / 2)
    for _ in range(cfg.views_per_scene):
        az = rng.uniform(0.0, 2.0 * np.pi)
        eye = (cfg.camera_radius * np.cos(az), cfg.camera_height, cfg.camera_radius * np.sin(az))
        cams.append(
            Camera(
                world_from_camera=look_at(eye, (0.0, cfg.target_height, 0.0)),
                focal_px=focal,
                principal_point=(cfg.image_size / 2, cfg.image_size / 2),
                width=cfg.image_size,
                height=cfg.image_size,
            )
        )
    return cams


# ---------------------------------------------------------------------------
# dataset directory writer / reader
# ---------------------------------------------------------------------------


def generate_dataset(cfg: GeneratorConfig, root: str | Path) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    scenes_dir = root / "scenes"
    scenes_dir.mkdir(exist_ok=True)
    total = cfg.num_train + cfg.num_test
    for i in range(total):
        scene_seed = cfg.seed + i
        scene_dir = scenes_dir / f"scene_{i:06d}"
        try:
            _write_scene(scene_dir, scene_seed, cfg)
        except Exception:
            if scene_dir.exists():
                shutil.rmtree(scene_dir)
            raise
    manifest = {
        "name": cfg.name,
        "profile": cfg.profile,
        "image_size": cfg.image_size,
        "num_train": cfg.num_train,
        "num_test": cfg.num_test,
        "views_per_scene": cfg.views_per_scene,
        "seed": cfg.seed,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root


def _write_scene(scene_dir: Path, scene_seed: int, cfg: GeneratorConfig) -> None:
    scene_dir.mkdir(parents=True, exist_ok=True)
    scene = sample_scene(scene_seed, cfg)
    validate_scene(scene)
    cameras = scene_cameras(scene_seed, cfg)
    cam_records = []
    for v, cam in enumerate(cameras):
        view = trace_view(scene, cam, supersample=cfg.supersample)
        img = Image.fromarray(np.round(view.image * 255.0).astype(np.uint8), mode="RGB")
        img.save(scene_dir / f"view_{v}.png")
        msk = Image.fromarray(view.instance_mask.astype(np.uint8), mode="L")
        msk.save(scene_dir / f"mask_{v}.png")
        cam_records.append(cam.to_wire())
    (scene_dir / "cameras.json").write_text(json.dumps(cam_records, sort_keys=True) + "\n")
    meta = [
        {
            "shape": p.shape,
            "size": p.size,
            "albedo": list(p.albedo),
            "pose": p.pose.to_wire(),
            "object_id": p.object_id,
            "aspect": list(p.aspect),
        }
        for p in scene.primitives
    ]
    (scene_dir / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")


class SceneDataset:
    """Reader for the generated layout; splits are disjoint by scene index/seed."""

    def __init__(self, root: str | Path, split: str = "train"):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"no dataset manifest at {manifest_path}")
        self.manifest = json.loads(manifest_path.read_text())
        n_train = self.manifest["num_train"]
        n_test = self.manifest["num_test"]
        if split == "train":
            self.indices = list(range(n_train))
        elif split == "test":
            self.indices = list(range(n_train, n_train + n_test))
        else:
            raise ValueError(f"unknown split {split!r}")
        self.split = split

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def image_size(self) -> int:
        return self.manifest["image_size"]

    @property
    def views_per_scene(self) -> int:
        return self.manifest.get("views_per_scene", 4)

    def scene_dir(self, i: int) -> Path:
        return self.root / "scenes" / f"scene_{self.indices[i]:06d}"

    def load_scene(self, i: int) -> dict:
        d = self.scene_dir(i)
        cams = [Camera.from_wire(r) for r in json.loads((d / "cameras.json").read_text())]
        images, masks = [], []
        for v in range(len(cams)):
            images.append(np.asarray(Image.open(d / f"view_{v}.png"), dtype=np.float32) / 255.0)
            masks.append(np.asarray(Image.open(d / f"mask_{v}.png"), dtype=np.int32))
        return {"images": np.stack(images), "masks": np.stack(masks), "cameras": cams}


def downsample_views(images: np.ndarray, masks: np.ndarray, cameras: list[Camera], resolution: int):
    """Area-averages images and nearest-subsamples masks to `resolution`."""
    size = images.shape[1]
    if size == resolution:
        return images, masks, cameras
    if size % resolution != 0:
        raise ValueError(f"resolution {resolution} does not divide image size {size}")
    f = size // resolution
    v, h, w, c = images.shape
    images = images.reshape(v, resolution, f, resolution, f, c).mean(axis=(2, 4))
    masks = masks[:, f // 2 :: f, f // 2 :: f]
    cameras = [cam.scaled(resolution, resolution) for cam in cameras]
    return images, masks, cameras
