"""Camera models, ray generation, Plücker embedding, and rigid-transform algebra.

Conventions (fixed here, used everywhere downstream):
  * right-handed world frame, ground plane at y=0, +y up
  * camera looks down its local +z; image x grows right, image y grows down
  * pixel centers at integer+0.5 coordinates
  * all geometry is float64 numpy; values are immutable once constructed
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ROTATION_ATOL = 1e-6


class GeometryError(ValueError):
    """Domain error for invalid geometric inputs."""


def _as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(3)
    v.flags.writeable = False
    return v


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion: x -> rotation @ x + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = _as_vec3(self.translation)
        if not np.allclose(R @ R.T, np.eye(3), atol=ROTATION_ATOL):
            raise GeometryError("rotation is not orthonormal")
        if np.linalg.det(R) < 0:
            raise GeometryError("rotation has negative determinant (reflection)")
        R = R.copy()
        R.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_translation(t) -> "RigidTransform":
        return RigidTransform(np.eye(3), t)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other: apply `other` first, then `self`."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -(self.rotation.T @ self.translation))

    def apply_point(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def apply_direction(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=np.float64)
        return d @ self.rotation.T

    def to_wire(self) -> list[float]:
        """Row-major 3x4 [R | t], 12 floats."""
        return np.hstack([self.rotation, self.translation[:, None]]).reshape(-1).tolist()

    @staticmethod
    def from_wire(values) -> "RigidTransform":
        m = np.asarray(values, dtype=np.float64).reshape(3, 4)
        return RigidTransform(nearest_rotation(m[:, :3]), m[:, 3])


def nearest_rotation(matrix) -> np.ndarray:
    """Project a near-rotation onto SO(3); absorbs serialization drift."""
    u, _, vt = np.linalg.svd(np.asarray(matrix, dtype=np.float64).reshape(3, 3))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u = u.copy()
        u[:, -1] *= -1.0
        r = u @ vt
    return r


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> RigidTransform:
    """world_from_camera for a camera at `eye` looking at `target` (+z forward, y down)."""
    eye = _as_vec3(eye)
    z = np.asarray(target, dtype=np.float64) - eye
    nz = np.linalg.norm(z)
    if nz < 1e-12:
        raise GeometryError("look_at: eye and target coincide")
    z = z / nz
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise GeometryError("look_at: view direction parallel to up")
    x = x / nx
    y = np.cross(z, x)
    return RigidTransform(np.stack([x, y, z], axis=1), eye)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera. `world_from_camera` maps camera-frame points to world."""

    world_from_camera: RigidTransform
    focal_px: float
    principal_point: np.ndarray  # (cx, cy) pixels
    width: int
    height: int

    def __post_init__(self):
        pp = np.asarray(self.principal_point, dtype=np.float64).reshape(2)
        pp.flags.writeable = False
        object.__setattr__(self, "principal_point", pp)
        if self.focal_px <= 0:
            raise GeometryError("focal_px must be positive")
        if self.width <= 0 or self.height <= 0:
            raise GeometryError("image dimensions must be positive")
        if not (0 < pp[0] < self.width and 0 < pp[1] < self.height):
            raise GeometryError("principal point outside image bounds")

    @property
    def position(self) -> np.ndarray:
        return self.world_from_camera.translation

    def to_wire(self) -> dict:
        return {
            "world_from_camera": self.world_from_camera.to_wire(),
            "focal_px": float(self.focal_px),
            "cx": float(self.principal_point[0]),
            "cy": float(self.principal_point[1]),
            "width": int(self.width),
            "height": int(self.height),
        }

    @staticmethod
    def from_wire(record: dict) -> "Camera":
        return Camera(
            world_from_camera=RigidTransform.from_wire(record["world_from_camera"]),
            focal_px=float(record["focal_px"]),
            principal_point=(float(record["cx"]), float(record["cy"])),
            width=int(record["width"]),
            height=int(record["height"]),
        )

    def scaled(self, width: int, height: int) -> "Camera":
        """Same view at a different image resolution."""
        sx = width / self.width
        sy = height / self.height
        return Camera(
            world_from_camera=self.world_from_camera,
            focal_px=self.focal_px * sx,
            principal_point=(self.principal_point[0] * sx, self.principal_point[1] * sy),
            width=width,
            height=height,
        )


@dataclass(frozen=True)
class OrientedRay:
    origin: np.ndarray
    direction: np.ndarray  # unit norm

    def __post_init__(self):
        o = _as_vec3(self.origin)
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        n = np.linalg.norm(d)
        if abs(n - 1.0) > 1e-9:
            if n < 1e-12:
                raise GeometryError("ray direction has zero norm")
            d = d / n
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass(frozen=True)
class PluckerRay:
    """(direction, moment) embedding; invariant to sliding the origin along the ray."""

    direction: np.ndarray
    moment: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.direction, self.moment])


def pixel_to_ray(camera: Camera, pixel) -> OrientedRay:
    """World-frame ray through the center of `pixel` = (x, y)."""
    px, py = float(pixel[0]), float(pixel[1])
    if not (0 <= px < camera.width and 0 <= py < camera.height):
        raise GeometryError(f"pixel ({px}, {py}) outside image bounds")
    d_cam = np.array(
        [
            (px + 0.5 - camera.principal_point[0]) / camera.focal_px,
            (py + 0.5 - camera.principal_point[1]) / camera.focal_px,
            1.0,
        ]
    )
    d_world = camera.world_from_camera.apply_direction(d_cam)
    return OrientedRay(camera.position, d_world / np.linalg.norm(d_world))


def camera_ray_grid(camera: Camera) -> tuple[np.ndarray, np.ndarray]:
    """All pixel rays at once: origins (H*W, 3) and unit directions (H*W, 3), row-major."""
    xs = (np.arange(camera.width, dtype=np.float64) + 0.5 - camera.principal_point[0]) / camera.focal_px
    ys = (np.arange(camera.height, dtype=np.float64) + 0.5 - camera.principal_point[1]) / camera.focal_px
    gx, gy = np.meshgrid(xs, ys)  # (H, W)
    d_cam = np.stack([gx, gy, np.ones_like(gx)], axis=-1).reshape(-1, 3)
    d_world = camera.world_from_camera.apply_direction(d_cam)
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.position, d_world.shape).copy()
    return origins, d_world


def to_plucker(ray: OrientedRay) -> PluckerRay:
    d, m = plucker_arrays(ray.origin[None], ray.direction[None])
    return PluckerRay(direction=d[0], moment=m[0])


def plucker_arrays(origins: np.ndarray, directions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched Plücker embedding, float64.

    The moment is taken at the ray point closest to the world origin, which
    cancels the along-ray component of the origin before the cross product;
    the residue is ~1e-16 of scale and vanishes under a float32 cast, making
    the embedding invariant to along-ray origin shifts at model precision.
    """
    o = np.asarray(origins, dtype=np.float64)
    d = np.asarray(directions, dtype=np.float64)
    closest = o - np.sum(o * d, axis=-1, keepdims=True) * d
    return d, np.cross(closest, d)


def transform_ray(T: RigidTransform, ray: OrientedRay) -> OrientedRay:
    return OrientedRay(T.apply_point(ray.origin), T.apply_direction(ray.direction))


def transform_ray_arrays(
    T: RigidTransform, origins: np.ndarray, directions: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    return T.apply_point(origins), T.apply_direction(directions)
