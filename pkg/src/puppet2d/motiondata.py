"""2D motion clips: dataset model, file I/O, and the canonical codec.

A clip is canonicalized per frame into a root/scale-normalized pose plus
incremental root shift and log-scale change; the transform is exactly
invertible given the first frame's root position and scale (the anchor).

File format: a single JSON document with base64-embedded little-endian
float32 arrays::

    {"version": 1, "fps": 30.0, "image_size": [640, 480], "skeleton": "...",
     "root_index": 0, "shape": [T, J, 2], "keypoints_b64": "...",
     "confidence_b64": "...",          # optional, shape [T, J]
     "camera": {...},                   # optional, see CameraView.to_dict
     "object_shape": [T, Jo, 2], "object_keypoints_b64": "..."}  # optional
"""

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import AnchorError, DataError
from .geometry import CameraView

SCALE_FLOOR_FRAC = 1e-3  # of the image diagonal


def _encode_f32(arr):
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def _decode_f32(text, shape):
    buf = base64.b64decode(text.encode("ascii"))
    expected = int(np.prod(shape)) * 4
    if len(buf) != expected:
        raise DataError(f"array payload has {len(buf)} bytes, expected {expected}")
    return np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float64)


@dataclass
class Motion2D:
    """A timed sequence of per-frame 2D keypoints in pixels."""

    fps: float
    image_size: tuple
    keypoints: np.ndarray  # [T, J, 2]
    root_index: int = 0
    skeleton: str = "unknown"
    confidence: np.ndarray = None  # [T, J] in [0, 1]
    camera: CameraView = None
    object_keypoints: np.ndarray = None  # [T, Jo, 2]

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=np.float64)
        if self.keypoints.ndim != 3 or self.keypoints.shape[2] != 2:
            raise DataError(f"keypoints must be [T, J, 2], got {self.keypoints.shape}")
        if self.num_frames < 2:
            raise DataError(f"need at least 2 frames, got {self.num_frames}")
        if self.fps <= 0:
            raise DataError(f"fps must be positive, got {self.fps}")
        if not (0 <= self.root_index < self.num_joints):
            raise DataError(f"root_index {self.root_index} outside [0, {self.num_joints})")
        bad = np.argwhere(~np.isfinite(self.keypoints))
        if len(bad):
            t, j = bad[0][0], bad[0][1]
            raise DataError(f"non-finite keypoint at frame {t}, joint {j}")
        if self.confidence is not None:
            self.confidence = np.asarray(self.confidence, dtype=np.float64)
            if self.confidence.shape != self.keypoints.shape[:2]:
                raise DataError(f"confidence shape {self.confidence.shape} != [T, J]")
        if self.object_keypoints is not None:
            self.object_keypoints = np.asarray(self.object_keypoints, dtype=np.float64)
            if self.object_keypoints.ndim != 3 or self.object_keypoints.shape[0] != self.num_frames:
                raise DataError("object_keypoints must be [T, Jo, 2] aligned with keypoints")
            if not np.all(np.isfinite(self.object_keypoints)):
                raise DataError("non-finite object keypoint")

    @property
    def num_frames(self):
        return self.keypoints.shape[0]

    @property
    def num_joints(self):
        return self.keypoints.shape[1]

    @property
    def diagonal(self):
        return float(np.hypot(*self.image_size))


@dataclass
class CanonicalMotion2D:
    """Root/scale-normalized frames plus incremental root and log-scale.

    Invariants: first-frame deltas are exactly zero, the root component of
    every normalized pose is exactly zero, and the anchor scale is positive.
    """

    pose: np.ndarray  # [T, J, 2] normalized, root row == 0
    root_shift: np.ndarray  # [T, 2] (x_t^root - x_{t-1}^root) / s_t
    log_scale: np.ndarray  # [T] log(s_t / s_{t-1})
    anchor_root: np.ndarray  # [2] px
    anchor_scale: float  # px
    root_index: int = 0

    def __post_init__(self):
        self.pose = np.asarray(self.pose, dtype=np.float64)
        self.root_shift = np.asarray(self.root_shift, dtype=np.float64)
        self.log_scale = np.asarray(self.log_scale, dtype=np.float64)
        self.anchor_root = np.asarray(self.anchor_root, dtype=np.float64).reshape(2)
        if self.anchor_scale <= 0:
            raise AnchorError(f"anchor scale must be positive, got {self.anchor_scale}")
        self.root_shift[0] = 0.0
        self.log_scale[0] = 0.0

    @property
    def num_frames(self):
        return self.pose.shape[0]

    def scales(self):
        """Per-frame absolute scale recovered from the anchor."""
        return self.anchor_scale * np.exp(np.cumsum(self.log_scale))


def compute_scale(frame, root_index, image_size):
    """Mean distance of non-root keypoints to the root, floored away from 0."""
    frame = np.asarray(frame, dtype=np.float64)
    rel = np.delete(frame, root_index, axis=0) - frame[root_index]
    floor = SCALE_FLOOR_FRAC * float(np.hypot(*image_size))
    return max(float(np.linalg.norm(rel, axis=1).mean()), floor)


def canonicalize(motion):
    """Forward codec G: Motion2D -> CanonicalMotion2D."""
    kp = motion.keypoints
    t_len = motion.num_frames
    roots = kp[:, motion.root_index, :]
    scales = np.array([compute_scale(kp[t], motion.root_index, motion.image_size) for t in range(t_len)])
    pose = (kp - roots[:, None, :]) / scales[:, None, None]
    pose[:, motion.root_index, :] = 0.0
    log_scale = np.zeros(t_len)
    log_scale[1:] = np.log(scales[1:] / scales[:-1])
    root_shift = np.zeros((t_len, 2))
    root_shift[1:] = (roots[1:] - roots[:-1]) / scales[1:, None]
    return CanonicalMotion2D(
        pose=pose,
        root_shift=root_shift,
        log_scale=log_scale,
        anchor_root=roots[0].copy(),
        anchor_scale=float(scales[0]),
        root_index=motion.root_index,
    )


def decanonicalize(canon, anchor_root=None, anchor_scale=None):
    """Inverse codec: recover absolute keypoints [T, J, 2] from an anchor.

    Defaults to the anchor stored on the canonical clip; passing a different
    anchor re-grounds the whole trajectory.
    """
    root0 = np.asarray(anchor_root if anchor_root is not None else canon.anchor_root, dtype=np.float64)
    s0 = float(anchor_scale if anchor_scale is not None else canon.anchor_scale)
    if s0 <= 0:
        raise AnchorError(f"anchor scale must be positive, got {s0}")
    scales = s0 * np.exp(np.cumsum(canon.log_scale))
    roots = root0[None, :] + np.cumsum(scales[:, None] * canon.root_shift, axis=0)
    return scales[:, None, None] * canon.pose + roots[:, None, :]


def slice_window(motion, start, length):
    """Reference window [start, start+length); clamps past the final frame."""
    if start < 0:
        raise DataError(f"window start must be >= 0, got {start}")
    idx = np.minimum(np.arange(start, start + length), motion.num_frames - 1)
    return motion.keypoints[idx]


@dataclass
class MotionDataset:
    """Homogeneous collection of clips sharing a skeleton."""

    clips: list
    skeleton: str = "unknown"
    source: str = ""

    def __post_init__(self):
        joints = {c.num_joints for c in self.clips}
        if len(joints) > 1:
            raise DataError(f"dataset mixes joint counts {sorted(joints)}")
        skels = {c.skeleton for c in self.clips}
        if len(skels) > 1:
            raise DataError(f"dataset mixes skeletons {sorted(skels)}")

    def __len__(self):
        return len(self.clips)


def save_motion2d(motion, path):
    doc = {
        "version": 1,
        "fps": float(motion.fps),
        "image_size": list(motion.image_size),
        "skeleton": motion.skeleton,
        "root_index": int(motion.root_index),
        "shape": list(motion.keypoints.shape),
        "keypoints_b64": _encode_f32(motion.keypoints),
    }
    if motion.confidence is not None:
        doc["confidence_b64"] = _encode_f32(motion.confidence)
    if motion.camera is not None:
        doc["camera"] = motion.camera.to_dict()
    if motion.object_keypoints is not None:
        doc["object_shape"] = list(motion.object_keypoints.shape)
        doc["object_keypoints_b64"] = _encode_f32(motion.object_keypoints)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_motion2d(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"unparseable motion file {path}: {exc}") from exc
    for key in ("fps", "image_size", "root_index", "shape", "keypoints_b64"):
        if key not in doc:
            raise DataError(f"{path}: missing field {key!r}")
    kp = _decode_f32(doc["keypoints_b64"], doc["shape"])
    conf = None
    if "confidence_b64" in doc:
        conf = _decode_f32(doc["confidence_b64"], doc["shape"][:2])
    camera = CameraView.from_dict(doc["camera"]) if "camera" in doc else None
    obj = None
    if "object_keypoints_b64" in doc:
        obj = _decode_f32(doc["object_keypoints_b64"], doc["object_shape"])
    return Motion2D(
        fps=doc["fps"],
        image_size=tuple(doc["image_size"]),
        keypoints=kp,
        root_index=doc["root_index"],
        skeleton=doc.get("skeleton", "unknown"),
        confidence=conf,
        camera=camera,
        object_keypoints=obj,
    )
