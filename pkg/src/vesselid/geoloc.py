"""Target position reconstruction by ray-plane intersection.

Camera convention: x right, y down, z forward (optical axis). Pixel rays are
taken relative to the principal point, rotated camera -> UAV body -> world
ENU, and intersected with the horizontal plane z = target_height. Fixes
aggregate into a mean and a one-sigma confidence ellipse.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import BelowPlane, InvalidRotation, NoIntersection, NoPose, ProtocolError
from .wire import canonical_dumps

ROTATION_TOLERANCE = 1e-9
RAY_EPSILON = 1e-9


def _check_rotation(r: np.ndarray, what: str) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise InvalidRotation(f"{what}: expected 3x3 matrix, got {r.shape}")
    if np.abs(r.T @ r - np.eye(3)).max() > ROTATION_TOLERANCE:
        raise InvalidRotation(f"{what}: not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > ROTATION_TOLERANCE:
        raise InvalidRotation(f"{what}: determinant is not +1")
    return r


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Project an almost-orthonormal matrix onto SO(3) (polar decomposition)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    if np.linalg.det(u @ vt) < 0.0:
        u = u.copy()
        u[:, -1] *= -1.0
    return u @ vt


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float  # focal length, pixels
    cx_pp: float
    cy_pp: float
    width: int
    height: int

    def __post_init__(self):
        if self.f <= 0.0:
            raise ValueError("focal length must be positive")
        if not (0.0 <= self.cx_pp < self.width and 0.0 <= self.cy_pp < self.height):
            raise ValueError("principal point outside image")


@dataclass(frozen=True, eq=False)
class Extrinsics:
    """Rotation from camera frame to UAV body frame."""

    r_uav_cam: np.ndarray

    def __post_init__(self):
        r = _check_rotation(self.r_uav_cam, "r_uav_cam")
        r.setflags(write=False)
        object.__setattr__(self, "r_uav_cam", r)

    def __eq__(self, other):
        return isinstance(other, Extrinsics) and np.array_equal(
            self.r_uav_cam, other.r_uav_cam
        )


@dataclass(frozen=True, eq=False)
class UavPose:
    timestamp: float
    position: Tuple[float, float, float]  # meters, world ENU
    r_world_uav: np.ndarray  # UAV body -> world ENU

    def __post_init__(self):
        r = _check_rotation(self.r_world_uav, "r_world_uav")
        r.setflags(write=False)
        object.__setattr__(self, "r_world_uav", r)
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))

    def __eq__(self, other):
        return (
            isinstance(other, UavPose)
            and self.timestamp == other.timestamp
            and self.position == other.position
            and np.array_equal(self.r_world_uav, other.r_world_uav)
        )


@dataclass(frozen=True)
class TargetFix:
    x: float
    y: float
    timestamp: float
    frame_id: int

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("non-finite fix")


@dataclass(frozen=True, eq=False)
class FixAggregate:
    mean: Tuple[float, float]
    covariance: np.ndarray  # 2x2 symmetric PSD
    semi_axes: Tuple[float, float]  # one-sigma, major first (meters)
    orientation: float  # principal-axis angle in [0, pi)
    count: int
    degenerate: bool

    def __post_init__(self):
        cov = np.ascontiguousarray(self.covariance, dtype=np.float64)
        cov.setflags(write=False)
        object.__setattr__(self, "covariance", cov)

    def __eq__(self, other):
        return (
            isinstance(other, FixAggregate)
            and self.mean == other.mean
            and np.array_equal(self.covariance, other.covariance)
            and self.semi_axes == other.semi_axes
            and self.orientation == other.orientation
            and self.count == other.count
            and self.degenerate == other.degenerate
        )

    @classmethod
    def empty(cls) -> "FixAggregate":
        return cls((0.0, 0.0), np.zeros((2, 2)), (0.0, 0.0), 0.0, 0, True)


def pixel_ray(intr: CameraIntrinsics, px: float, py: float) -> np.ndarray:
    """Unit direction in the camera frame for an image point."""
    v = np.array([px - intr.cx_pp, py - intr.cy_pp, intr.f], dtype=np.float64)
    return v / np.linalg.norm(v)


def ray_to_world(v_cam: np.ndarray, ext: Extrinsics, pose: UavPose) -> np.ndarray:
    """Rotate a camera-frame direction into the world ENU frame (renormalized)."""
    v = pose.r_world_uav @ (ext.r_uav_cam @ np.asarray(v_cam, dtype=np.float64))
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero direction vector")
    return v / n


def intersect_plane(
    origin: Tuple[float, float, float], v_world: np.ndarray, target_height: float
) -> Tuple[float, float]:
    """Intersect the ray with the horizontal plane z = target_height.

    Requires a downward-pointing ray from above the plane; the intersection
    parameter t is positive by construction.
    """
    ox, oy, oz = origin
    if oz <= target_height:
        raise BelowPlane(f"origin z {oz} not above plane z = {target_height}")
    vz = float(v_world[2])
    if vz >= -RAY_EPSILON:
        raise NoIntersection("ray is horizontal or points upward")
    t = (target_height - oz) / vz
    return (ox + t * float(v_world[0]), oy + t * float(v_world[1]))


def pose_lookup(t: float, buffer: Sequence[UavPose], tol: float) -> UavPose:
    """Pose at time t from a time-ordered buffer.

    Between samples the position is linearly interpolated and the rotation is
    taken from the nearer sample; outside the buffer the nearest sample is
    used. Raises NoPose when the nearest sample is farther than tol.
    """
    if not buffer:
        raise NoPose("empty pose buffer")
    times = [p.timestamp for p in buffer]
    i = bisect.bisect_left(times, t)
    if i < len(buffer) and buffer[i].timestamp == t:
        return buffer[i]
    if i == 0:
        nearest = buffer[0]
        if abs(nearest.timestamp - t) > tol:
            raise NoPose(f"nearest pose {abs(nearest.timestamp - t):.3f}s away")
        return nearest
    if i == len(buffer):
        nearest = buffer[-1]
        if abs(nearest.timestamp - t) > tol:
            raise NoPose(f"nearest pose {abs(nearest.timestamp - t):.3f}s away")
        return nearest

    before, after = buffer[i - 1], buffer[i]
    d_before, d_after = t - before.timestamp, after.timestamp - t
    if min(d_before, d_after) > tol:
        raise NoPose(f"nearest pose {min(d_before, d_after):.3f}s away")
    span = after.timestamp - before.timestamp
    u = (t - before.timestamp) / span if span > 0.0 else 0.0
    position = tuple(
        (1.0 - u) * bp + u * ap for bp, ap in zip(before.position, after.position)
    )
    nearer = before if d_before <= d_after else after
    return UavPose(timestamp=t, position=position, r_world_uav=nearer.r_world_uav)


def aggregate_fixes(fixes: Sequence[TargetFix]) -> FixAggregate:
    """Mean, sample covariance and one-sigma ellipse of reconstructed fixes."""
    if not fixes:
        raise ValueError("aggregate_fixes requires at least one fix")
    pts = np.array([[f.x, f.y] for f in fixes], dtype=np.float64)
    mean = pts.mean(axis=0)
    n = len(fixes)
    if n < 2:
        return FixAggregate(
            mean=(float(mean[0]), float(mean[1])),
            covariance=np.zeros((2, 2)),
            semi_axes=(0.0, 0.0),
            orientation=0.0,
            count=n,
            degenerate=True,
        )
    centered = pts - mean
    cov = centered.T @ centered / (n - 1)
    cov = (cov + cov.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending
    eigvals = np.maximum(eigvals, 0.0)
    major, minor = float(eigvals[1]), float(eigvals[0])
    principal = eigvecs[:, 1]
    angle = math.atan2(float(principal[1]), float(principal[0])) % math.pi
    rank_deficient = minor <= max(major, 1.0) * 1e-12
    return FixAggregate(
        mean=(float(mean[0]), float(mean[1])),
        covariance=cov,
        semi_axes=(math.sqrt(major), math.sqrt(minor)),
        orientation=angle,
        count=n,
        degenerate=rank_deficient,
    )


def parse_pose_line(line: str) -> UavPose:
    """Parse one NDJSON pose message {timestamp, position, rotation}."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid pose JSON: {exc.msg}", byte_offset=exc.pos) from exc
    try:
        timestamp = float(obj["timestamp"])
        position = tuple(float(v) for v in obj["position"])
        rot = [float(v) for v in obj["rotation"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"missing or invalid pose field: {exc}") from exc
    if len(position) != 3 or len(rot) != 9:
        raise ProtocolError("pose needs a 3-vector position and 9 rotation entries")
    r = np.array(rot, dtype=np.float64).reshape(3, 3)
    # Six-decimal wire floats cannot carry a rotation to the 1e-9 invariant;
    # snap near-rotations back onto SO(3), reject anything genuinely broken.
    if np.abs(r.T @ r - np.eye(3)).max() > 1e-4:
        raise ProtocolError("pose rotation is not close to orthonormal")
    try:
        return UavPose(timestamp=timestamp, position=position, r_world_uav=nearest_rotation(r))
    except InvalidRotation as exc:
        raise ProtocolError(str(exc)) from exc


def serialize_pose_line(pose: UavPose) -> str:
    return canonical_dumps(
        {
            "timestamp": pose.timestamp,
            "position": [float(v) for v in pose.position],
            "rotation": [float(v) for v in pose.r_world_uav.reshape(-1)],
        }
    )


def serialize_fix_line(fix: TargetFix) -> str:
    return canonical_dumps(
        {"timestamp": fix.timestamp, "frame_id": fix.frame_id, "x": fix.x, "y": fix.y}
    )


def load_pose_file(path) -> List[UavPose]:
    poses = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            stripped = line.strip()
            if stripped:
                poses.append(parse_pose_line(stripped))
    poses.sort(key=lambda p: p.timestamp)
    return poses
