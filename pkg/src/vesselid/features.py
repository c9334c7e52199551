"""Keypoint detection, binary descriptors and brute-force matching.

Single-scale pipeline: FAST-9 segment-test corners ranked by Harris response,
intensity-centroid orientation, and a steered 256-bit binary descriptor built
from a fixed sampling-pair table. Matching is brute-force Hamming with
cross-checking. Everything is deterministic for identical inputs.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ._sampling_pairs import SAMPLING_PAIRS
from .errors import ImageTooSmall, NoKeypoints, PatternOutOfBounds

DESCRIPTOR_BITS = 256
DESCRIPTOR_BYTES = DESCRIPTOR_BITS // 8
ORIENTATION_BUCKETS = 30  # descriptor steering discretized to 12 degree steps
HARRIS_K = 0.04

FEATURE_SET_MAGIC = b"VFSET1"

# Bresenham circle of radius 3 as (dx, dy), index 0 at 12 o'clock, clockwise.
_CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1),
    (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1),
    (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)

_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)

_segment_lut: Optional[np.ndarray] = None
_rotated_pairs: Optional[np.ndarray] = None


@dataclass(frozen=True)
class FeatureConfig:
    fast_threshold: int = 20
    max_keypoints: int = 500
    patch_radius: int = 15


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    response: float
    orientation: float = 0.0  # radians in [0, 2*pi)


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Parallel lists of keypoints and 256-bit descriptors (32 bytes each)."""

    keypoints: Tuple[Keypoint, ...]
    descriptors: np.ndarray  # (N, 32) uint8

    def __eq__(self, other):
        return (
            isinstance(other, FeatureSet)
            and self.keypoints == other.keypoints
            and np.array_equal(self.descriptors, other.descriptors)
        )

    def __post_init__(self):
        desc = np.ascontiguousarray(self.descriptors, dtype=np.uint8)
        if desc.ndim != 2 or desc.shape[1] != DESCRIPTOR_BYTES:
            desc = desc.reshape((-1, DESCRIPTOR_BYTES))
        if desc.shape[0] != len(self.keypoints):
            raise ValueError("keypoint and descriptor counts differ")
        desc.setflags(write=False)
        object.__setattr__(self, "descriptors", desc)
        object.__setattr__(self, "keypoints", tuple(self.keypoints))

    def __len__(self) -> int:
        return len(self.keypoints)

    @classmethod
    def empty(cls) -> "FeatureSet":
        return cls((), np.zeros((0, DESCRIPTOR_BYTES), dtype=np.uint8))

    def to_bytes(self) -> bytes:
        out = [FEATURE_SET_MAGIC, struct.pack("<I", len(self.keypoints))]
        for kp, desc in zip(self.keypoints, self.descriptors):
            out.append(struct.pack("<ffff", kp.x, kp.y, kp.response, kp.orientation))
            out.append(desc.tobytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "FeatureSet":
        if data[:6] != FEATURE_SET_MAGIC:
            raise ValueError("bad feature-set magic")
        (count,) = struct.unpack_from("<I", data, 6)
        kps: List[Keypoint] = []
        descs = np.zeros((count, DESCRIPTOR_BYTES), dtype=np.uint8)
        off = 10
        for i in range(count):
            x, y, resp, ori = struct.unpack_from("<ffff", data, off)
            off += 16
            descs[i] = np.frombuffer(data, dtype=np.uint8, count=DESCRIPTOR_BYTES, offset=off)
            off += DESCRIPTOR_BYTES
            kps.append(Keypoint(x, y, resp, ori))
        return cls(tuple(kps), descs)


@dataclass(frozen=True)
class MatchPair:
    index_a: int
    index_b: int
    distance: int


def _build_segment_lut() -> np.ndarray:
    """LUT over 16-bit rings: does the ring contain >= 9 contiguous set bits?"""
    lut = np.zeros(1 << 16, dtype=bool)
    for ring in range(1 << 16):
        doubled = ring | (ring << 16)
        run = 0
        best = 0
        for i in range(32):
            if doubled & (1 << i):
                run += 1
                best = max(best, run)
            else:
                run = 0
        lut[ring] = best >= 9
    return lut


def _segment_lut_ref() -> np.ndarray:
    global _segment_lut
    if _segment_lut is None:
        _segment_lut = _build_segment_lut()
    return _segment_lut


def _rotated_pairs_ref() -> np.ndarray:
    """Per-bucket integer sampling coordinates, shape (30, 256, 4) as (y0,x0,y1,x1)."""
    global _rotated_pairs
    if _rotated_pairs is None:
        rows0 = SAMPLING_PAIRS[:, 0].astype(np.float64)
        cols0 = SAMPLING_PAIRS[:, 1].astype(np.float64)
        rows1 = SAMPLING_PAIRS[:, 2].astype(np.float64)
        cols1 = SAMPLING_PAIRS[:, 3].astype(np.float64)
        out = np.zeros((ORIENTATION_BUCKETS, DESCRIPTOR_BITS, 4), dtype=np.int32)
        for b in range(ORIENTATION_BUCKETS):
            ang = 2.0 * math.pi * b / ORIENTATION_BUCKETS
            c, s = math.cos(ang), math.sin(ang)
            # Image coordinates: x right, y down; rotate (x, y) by +ang.
            out[b, :, 0] = np.rint(cols0 * s + rows0 * c)
            out[b, :, 1] = np.rint(cols0 * c - rows0 * s)
            out[b, :, 2] = np.rint(cols1 * s + rows1 * c)
            out[b, :, 3] = np.rint(cols1 * c - rows1 * s)
        out.setflags(write=False)
        _rotated_pairs = out
    return _rotated_pairs


def orientation_bucket(orientation: float) -> int:
    step = 2.0 * math.pi / ORIENTATION_BUCKETS
    return int(round(orientation / step)) % ORIENTATION_BUCKETS


def _harris_response(gray: np.ndarray) -> np.ndarray:
    """Harris corner response with 3x3 Sobel derivatives and a 7x7 window."""
    g = gray.astype(np.float64)
    pad = np.pad(g, 1, mode="edge")
    # Sobel x and y.
    ix = (
        (pad[:-2, 2:] + 2.0 * pad[1:-1, 2:] + pad[2:, 2:])
        - (pad[:-2, :-2] + 2.0 * pad[1:-1, :-2] + pad[2:, :-2])
    )
    iy = (
        (pad[2:, :-2] + 2.0 * pad[2:, 1:-1] + pad[2:, 2:])
        - (pad[:-2, :-2] + 2.0 * pad[:-2, 1:-1] + pad[:-2, 2:])
    )
    ixx, iyy, ixy = ix * ix, iy * iy, ix * iy

    def box7(a: np.ndarray) -> np.ndarray:
        p = np.pad(a, 3, mode="constant")
        c = np.cumsum(np.cumsum(p, axis=0), axis=1)
        c = np.pad(c, ((1, 0), (1, 0)), mode="constant")
        h, w = a.shape
        return (
            c[7 : 7 + h, 7 : 7 + w]
            - c[:h, 7 : 7 + w]
            - c[7 : 7 + h, :w]
            + c[:h, :w]
        )

    sxx, syy, sxy = box7(ixx), box7(iyy), box7(ixy)
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    return det - HARRIS_K * trace * trace


def detect_keypoints(gray: np.ndarray, cfg: FeatureConfig) -> List[Keypoint]:
    """FAST-9 corners, 3x3 non-max suppressed, ranked by Harris response.

    Keypoints closer than ``cfg.patch_radius`` to any border are dropped.
    Raises ImageTooSmall below the (2*patch_radius+7) minimum side.
    """
    h, w = gray.shape
    min_side = 2 * cfg.patch_radius + 7
    if h < min_side or w < min_side:
        raise ImageTooSmall(f"{w}x{h} below minimum {min_side}x{min_side}")

    g = gray.astype(np.int32)
    t = int(cfg.fast_threshold)
    center = g[3 : h - 3, 3 : w - 3]
    bright_ring = np.zeros(center.shape, dtype=np.uint32)
    dark_ring = np.zeros(center.shape, dtype=np.uint32)
    bright_excess = np.zeros(center.shape, dtype=np.int64)
    dark_excess = np.zeros(center.shape, dtype=np.int64)
    for k, (dx, dy) in enumerate(_CIRCLE):
        ring_px = g[3 + dy : h - 3 + dy, 3 + dx : w - 3 + dx]
        diff = ring_px - center
        bright = diff > t
        dark = diff < -t
        bright_ring |= bright.astype(np.uint32) << k
        dark_ring |= dark.astype(np.uint32) << k
        bright_excess += np.where(bright, diff - t, 0)
        dark_excess += np.where(dark, -diff - t, 0)

    lut = _segment_lut_ref()
    corner = lut[bright_ring] | lut[dark_ring]
    if not corner.any():
        return []

    # FAST score: total threshold excess on the dominant side; used for NMS only.
    score = np.where(corner, np.maximum(bright_excess, dark_excess), 0)
    padded = np.pad(score, 1, mode="constant")
    keep = corner.copy()
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            keep &= score >= padded[1 + dy : 1 + dy + score.shape[0],
                                    1 + dx : 1 + dx + score.shape[1]]
    ys, xs = np.nonzero(keep)
    ys = ys + 3
    xs = xs + 3

    r = cfg.patch_radius
    inside = (xs >= r) & (xs <= w - 1 - r) & (ys >= r) & (ys <= h - 1 - r)
    ys, xs = ys[inside], xs[inside]
    if len(xs) == 0:
        return []

    harris = _harris_response(gray)[ys, xs]
    # Descending response, ties broken by (y, x) for determinism.
    order = np.lexsort((xs, ys, -harris))[: cfg.max_keypoints]
    return [
        Keypoint(float(xs[i]), float(ys[i]), float(harris[i]))
        for i in order
    ]


def _disc_offsets(radius: int) -> Tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    inside = ys * ys + xs * xs <= radius * radius
    return ys[inside], xs[inside]


def compute_orientation(gray: np.ndarray, kp: Keypoint, patch_radius: int) -> float:
    """Intensity-centroid orientation atan2(m01, m10) in [0, 2*pi)."""
    cy, cx = int(round(kp.y)), int(round(kp.x))
    dys, dxs = _disc_offsets(patch_radius)
    vals = gray[cy + dys, cx + dxs].astype(np.float64)
    m10 = float(np.dot(dxs, vals))
    m01 = float(np.dot(dys, vals))
    if m10 == 0.0 and m01 == 0.0:
        return 0.0
    theta = math.atan2(m01, m10)
    return theta if theta >= 0.0 else theta + 2.0 * math.pi


def compute_descriptor(gray: np.ndarray, kp: Keypoint) -> np.ndarray:
    """Steered 256-bit descriptor as 32 packed bytes (MSB-first per byte)."""
    h, w = gray.shape
    cy, cx = int(round(kp.y)), int(round(kp.x))
    coords = _rotated_pairs_ref()[orientation_bucket(kp.orientation)]
    y0 = cy + coords[:, 0]
    x0 = cx + coords[:, 1]
    y1 = cy + coords[:, 2]
    x1 = cx + coords[:, 3]
    if (
        y0.min() < 0 or x0.min() < 0 or y1.min() < 0 or x1.min() < 0
        or y0.max() >= h or x0.max() >= w or y1.max() >= h or x1.max() >= w
    ):
        raise PatternOutOfBounds(f"keypoint ({kp.x}, {kp.y}) too close to border")
    bits = gray[y0, x0] < gray[y1, x1]
    return np.packbits(bits)


def extract_features(gray: np.ndarray, cfg: FeatureConfig) -> FeatureSet:
    """Detect, orient and describe; drops keypoints whose pattern exits the image."""
    kps = detect_keypoints(gray, cfg)
    if not kps:
        return FeatureSet.empty()

    h, w = gray.shape
    ys = np.array([int(round(k.y)) for k in kps], dtype=np.intp)
    xs = np.array([int(round(k.x)) for k in kps], dtype=np.intp)

    # Orientations, batched over the shared disc.
    dys, dxs = _disc_offsets(cfg.patch_radius)
    patches = gray[ys[:, None] + dys[None, :], xs[:, None] + dxs[None, :]].astype(np.float64)
    m10 = patches @ dxs.astype(np.float64)
    m01 = patches @ dys.astype(np.float64)
    thetas = np.arctan2(m01, m10)
    thetas = np.where((m10 == 0.0) & (m01 == 0.0), 0.0, thetas)
    thetas = np.where(thetas < 0.0, thetas + 2.0 * math.pi, thetas)

    rotated = _rotated_pairs_ref()
    buckets = np.array([orientation_bucket(t) for t in thetas], dtype=np.intp)
    kept: List[Keypoint] = []
    descriptors: List[np.ndarray] = []
    for idx in range(len(kps)):
        coords = rotated[buckets[idx]]
        y0 = ys[idx] + coords[:, 0]
        x0 = xs[idx] + coords[:, 1]
        y1 = ys[idx] + coords[:, 2]
        x1 = xs[idx] + coords[:, 3]
        if (
            y0.min() < 0 or x0.min() < 0 or y1.min() < 0 or x1.min() < 0
            or y0.max() >= h or x0.max() >= w or y1.max() >= h or x1.max() >= w
        ):
            continue
        bits = gray[y0, x0] < gray[y1, x1]
        kept.append(Keypoint(kps[idx].x, kps[idx].y, kps[idx].response, float(thetas[idx])))
        descriptors.append(np.packbits(bits))

    if not kept:
        return FeatureSet.empty()
    return FeatureSet(tuple(kept), np.vstack(descriptors))


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    """Popcount of XOR between two 32-byte descriptors."""
    return int(_POPCOUNT[np.bitwise_xor(a, b)].sum())


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(len(a), len(b)) matrix of Hamming distances between descriptor rows."""
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros((a.shape[0], b.shape[0]), dtype=np.int32)
    xored = np.bitwise_xor(a[:, None, :], b[None, :, :])
    return _POPCOUNT[xored].sum(axis=2, dtype=np.int32)


def match_cross_check(a: FeatureSet, b: FeatureSet, d_max: int) -> List[MatchPair]:
    """Mutual-nearest-neighbor matches below d_max, sorted by distance.

    Nearest-neighbor ties are broken by the lowest index; the pair (i, j) is
    kept only when each side is the other's nearest neighbor.
    """
    if len(a) == 0 or len(b) == 0:
        return []
    dist = hamming_matrix(a.descriptors, b.descriptors)
    nearest_in_b = dist.argmin(axis=1)  # first occurrence wins ties
    nearest_in_a = dist.argmin(axis=0)
    pairs = []
    for i, j in enumerate(nearest_in_b):
        d = int(dist[i, j])
        if d < d_max and nearest_in_a[j] == i:
            pairs.append(MatchPair(i, int(j), d))
    pairs.sort(key=lambda m: (m.distance, m.index_a))
    return pairs


def match_percentage(matches: Sequence[MatchPair], candidate_keypoints: int) -> float:
    """Valid matches relative to the candidate's keypoint count."""
    if candidate_keypoints <= 0:
        raise NoKeypoints("candidate has no keypoints")
    return len(matches) / candidate_keypoints
