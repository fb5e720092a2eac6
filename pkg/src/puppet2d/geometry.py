"""Pinhole cameras: projection, reprojection error, look-at, view sampling.

World frame is z-up with the ground plane at z = 0. Camera frame follows the
computer-vision convention: +z forward, +x right, +y down, so pixel v grows
downward. All functions are pure.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, ConfigError, DataError, DegenerateFrameError

EPS_Z = 1e-4  # minimum camera-frame depth (m)
DEFAULT_FOV = math.radians(55.0)

_WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class CameraView:
    """Extrinsics (R world->camera, t meters) plus pinhole intrinsics."""

    R: np.ndarray
    t: np.ndarray
    f: float
    c: np.ndarray
    image_size: tuple

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=np.float64).reshape(2))
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))
        if self.f <= 0:
            raise ConfigError(f"focal length must be positive, got {self.f}")
        if self.image_size[0] <= 0 or self.image_size[1] <= 0:
            raise ConfigError(f"image size must be positive, got {self.image_size}")
        err = np.abs(self.R.T @ self.R - np.eye(3)).max()
        if err > 1e-6 or abs(np.linalg.det(self.R) - 1.0) > 1e-6:
            raise ConfigError(f"R is not a proper rotation (orthogonality error {err:.2e})")

    @property
    def diagonal(self):
        return math.hypot(*self.image_size)

    def eye(self):
        """Camera center in world coordinates (-R^T t)."""
        return -self.R.T @ self.t

    def to_dict(self):
        return {
            "R": [float(x) for x in self.R.reshape(-1)],
            "t": [float(x) for x in self.t],
            "f": float(self.f),
            "c": [float(x) for x in self.c],
            "image_size": list(self.image_size),
        }

    @staticmethod
    def from_dict(d):
        return CameraView(
            R=np.array(d["R"], dtype=np.float64).reshape(3, 3),
            t=np.array(d["t"], dtype=np.float64),
            f=float(d["f"]),
            c=np.array(d["c"], dtype=np.float64),
            image_size=tuple(d["image_size"]),
        )


def default_focal(image_size, fov=DEFAULT_FOV):
    """Fixed intrinsics rule: f = 0.5 * W / tan(fov / 2)."""
    return 0.5 * image_size[0] / math.tan(0.5 * fov)


def project(points, cam, eps_z=EPS_Z):
    """Project world points [..., 3] (m) to pixels [..., 2].

    Raises BehindCameraError when any point has camera-frame depth <= eps_z;
    the caller decides whether to terminate the episode or mask the joint.
    """
    points = np.asarray(points, dtype=np.float64)
    pc = points @ cam.R.T + cam.t
    z = pc[..., 2]
    if np.any(z <= eps_z) or not np.all(np.isfinite(pc)):
        raise BehindCameraError(
            f"{int(np.count_nonzero(z <= eps_z))} point(s) at or behind the camera plane",
            depths=z,
        )
    uv = cam.f * pc[..., :2] / z[..., None]
    return uv + cam.c


def reprojection_error(proj, ref, reduction="mean"):
    """Reduce per-joint Euclidean pixel distances over the last two axes."""
    proj = np.asarray(proj, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if proj.shape != ref.shape:
        raise ConfigError(f"shape mismatch {proj.shape} vs {ref.shape}")
    if not (np.all(np.isfinite(proj)) and np.all(np.isfinite(ref))):
        raise DataError("non-finite keypoints in reprojection_error")
    dist = np.linalg.norm(proj - ref, axis=-1)
    if reduction == "sum":
        return float(dist.sum())
    if reduction == "mean":
        return float(dist.mean())
    if reduction == "max":
        return float(dist.max())
    raise ConfigError(f"unknown reduction {reduction!r}")


def look_at(eye, target, up=_WORLD_UP):
    """World->camera rotation and translation with +z pointing at target."""
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    norm = np.linalg.norm(fwd)
    if norm < 1e-9:
        raise DegenerateFrameError("eye and target coincide")
    fwd = fwd / norm
    right = np.cross(fwd, up)
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        raise DegenerateFrameError("up vector parallel to view direction")
    right = right / rn
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd])
    return rot, -rot @ eye


@dataclass(frozen=True)
class CameraSamplerConfig:
    """Ranges for the diverse-view training camera distribution."""

    azimuth: tuple = (-math.pi, math.pi)
    elevation: tuple = (math.radians(5.0), math.radians(35.0))
    distance: tuple = (2.5, 4.5)
    target_height: tuple = (0.6, 1.0)
    image_size: tuple = (640, 480)
    fov: float = DEFAULT_FOV

    def __post_init__(self):
        for name in ("azimuth", "elevation", "distance", "target_height"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ConfigError(f"{name} range is empty: {(lo, hi)}")
        if self.distance[0] <= 0:
            raise ConfigError("distance must be positive")


def sample_camera(rng, cfg, target):
    """Place a camera on a sampled azimuth/elevation/distance orbit."""
    az = rng.uniform(*cfg.azimuth)
    el = rng.uniform(*cfg.elevation)
    dist = rng.uniform(*cfg.distance)
    height = rng.uniform(*cfg.target_height)
    look_target = np.array([target[0], target[1], height])
    offset = dist * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
    rot, t = look_at(look_target + offset, look_target)
    return CameraView(
        R=rot,
        t=t,
        f=default_focal(cfg.image_size, cfg.fov),
        c=np.array(cfg.image_size, dtype=np.float64) / 2.0,
        image_size=cfg.image_size,
    )
