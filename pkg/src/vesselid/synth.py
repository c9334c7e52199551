"""Deterministic synthetic sea scenes for desk-scale end-to-end evaluation.

Renders a blue-noise sea with textured boat hulls (oriented polygons with
deck structure so corner detection has something to bite on). Identical
specs and seeds produce byte-identical images; ground-truth boxes are exact
axis-aligned bounds of the transformed hull polygon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .evalkit import GroundTruthFrame
from .imaging import ImageBuffer

BEAM_RATIO = 0.42  # hull beam relative to length
BOW_RATIO = 0.30   # bow taper length relative to length


@dataclass(frozen=True)
class BoatSpec:
    """One rendered hull. hue is in degrees; achromatic hulls use saturation 0."""

    hue: float
    saturation: float
    value: float
    length_px: float
    cx: float  # normalized center
    cy: float
    heading: float  # radians, 0 points along +x


@dataclass(frozen=True)
class SynthSceneSpec:
    width: int = 640
    height: int = 480
    sea_hue: Tuple[float, float] = (205.0, 230.0)
    boats: Tuple[BoatSpec, ...] = ()
    noise_amplitude: int = 4
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "boats", tuple(self.boats))
        for boat in self.boats:
            box = hull_bounding_box(boat, self.width, self.height)
            x0 = box[0] - box[2] / 2.0
            x1 = box[0] + box[2] / 2.0
            y0 = box[1] - box[3] / 2.0
            y1 = box[1] + box[3] / 2.0
            if x0 < 0.0 or y0 < 0.0 or x1 > 1.0 or y1 > 1.0:
                raise ValueError(f"boat at ({boat.cx}, {boat.cy}) exits the frame")


def hsv_to_rgb_array(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Vectorized HSV (deg, [0,1], [0,1]) to uint8 RGB."""
    h = np.asarray(h, dtype=np.float64) % 360.0
    s = np.clip(np.asarray(s, dtype=np.float64), 0.0, 1.0)
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    c = v * s
    hp = h / 60.0
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    z = np.zeros_like(c)
    sector = np.floor(hp).astype(np.int64) % 6
    r = np.select([sector == 0, sector == 1, sector == 2,
                   sector == 3, sector == 4, sector == 5], [c, x, z, z, x, c])
    g = np.select([sector == 0, sector == 1, sector == 2,
                   sector == 3, sector == 4, sector == 5], [x, c, c, x, z, z])
    b = np.select([sector == 0, sector == 1, sector == 2,
                   sector == 3, sector == 4, sector == 5], [z, z, x, c, c, x])
    m = v - c
    rgb = np.stack([r + m, g + m, b + m], axis=-1)
    return np.floor(rgb * 255.0 + 0.5).astype(np.uint8)


def _smooth_field(rng: np.random.Generator, height: int, width: int, cells: int) -> np.ndarray:
    """Smooth [0,1] field from a bilinearly stretched coarse random grid."""
    coarse = rng.random((cells, cells))
    ys = np.linspace(0.0, cells - 1.0, height)
    xs = np.linspace(0.0, cells - 1.0, width)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, cells - 1)
    x1 = np.minimum(x0 + 1, cells - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = coarse[y0[:, None], x0[None, :]] * (1 - wx) + coarse[y0[:, None], x1[None, :]] * wx
    bot = coarse[y1[:, None], x0[None, :]] * (1 - wx) + coarse[y1[:, None], x1[None, :]] * wx
    return top * (1 - wy) + bot * wy


def _hull_half_width(u: np.ndarray, length: float) -> np.ndarray:
    """Half beam as a function of the along-hull coordinate u."""
    beam = BEAM_RATIO * length
    bow_len = BOW_RATIO * length
    bow_start = length / 2.0 - bow_len
    taper = np.clip((length / 2.0 - u) / bow_len, 0.0, 1.0)
    half = np.where(u > bow_start, taper * (beam / 2.0), beam / 2.0)
    return np.where((u < -length / 2.0) | (u > length / 2.0), -1.0, half)


def hull_vertices(boat: BoatSpec) -> np.ndarray:
    """Hull outline in pixels, transformed by heading and center."""
    length = boat.length_px
    beam = BEAM_RATIO * length
    bow_start = length / 2.0 - BOW_RATIO * length
    local = np.array(
        [
            (-length / 2.0, -beam / 2.0),
            (bow_start, -beam / 2.0),
            (length / 2.0, 0.0),
            (bow_start, beam / 2.0),
            (-length / 2.0, beam / 2.0),
        ]
    )
    c, s = math.cos(boat.heading), math.sin(boat.heading)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T


def hull_bounding_box(boat: BoatSpec, width: int, height: int) -> Tuple[float, float, float, float]:
    """Exact normalized (cx, cy, w, h) of the transformed hull polygon."""
    verts = hull_vertices(boat)
    cx_px = boat.cx * width
    cy_px = boat.cy * height
    xs = verts[:, 0] + cx_px
    ys = verts[:, 1] + cy_px
    x0, x1 = xs.min(), xs.max()
    y0, y1 = ys.min(), ys.max()
    return (
        (x0 + x1) / 2.0 / width,
        (y0 + y1) / 2.0 / height,
        (x1 - x0) / width,
        (y1 - y0) / height,
    )


def _paint_boat(hsv: Tuple[np.ndarray, np.ndarray, np.ndarray], boat: BoatSpec,
                width: int, height: int) -> None:
    """Rasterize one hull with deck texture into the scene HSV planes."""
    hue_plane, sat_plane, val_plane = hsv
    length = boat.length_px
    beam = BEAM_RATIO * length
    cx_px = boat.cx * width
    cy_px = boat.cy * height

    radius = length / 2.0 + 2.0
    x_lo = max(0, int(math.floor(cx_px - radius)))
    x_hi = min(width, int(math.ceil(cx_px + radius)) + 1)
    y_lo = max(0, int(math.floor(cy_px - radius)))
    y_hi = min(height, int(math.ceil(cy_px + radius)) + 1)
    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
    dx = xs + 0.0 - cx_px
    dy = ys + 0.0 - cy_px
    c, s = math.cos(boat.heading), math.sin(boat.heading)
    u = dx * c + dy * s       # along hull
    v = -dx * s + dy * c      # across hull

    half = _hull_half_width(u, length)
    inside = (half >= 0.0) & (np.abs(v) <= half)
    if not inside.any():
        return

    hue = np.full(u.shape, boat.hue)
    sat = np.full(u.shape, boat.saturation)
    val = np.full(u.shape, boat.value)

    deck_val = min(boat.value + 0.14, 0.68)
    dark_val = max(boat.value - 0.26, 0.06)

    # Gunwale rim: darker outline to separate hull from deck.
    rim = inside & (np.abs(v) >= half - max(1.5, 0.04 * length))
    # Deck inset, lighter than the hull.
    deck = inside & ~rim
    val = np.where(deck, deck_val, val)
    # Checkerboard cargo deck amidships: dense, scale-proportional corners.
    cell = max(2.5, length / 12.0)
    checker = deck & (u >= -0.05 * length) & (u <= 0.42 * length)
    parity = (
        np.floor((u + 0.05 * length) / cell).astype(np.int64)
        + np.floor((v + beam) / cell).astype(np.int64)
    ) % 2 == 0
    val = np.where(checker & parity, dark_val, val)
    # Cabin block astern of the checkerboard, dark and saturated.
    cabin = deck & (u >= -0.33 * length) & (u <= -0.09 * length) & (np.abs(v) <= 0.26 * beam)
    val = np.where(cabin, dark_val + 0.06, val)
    sat = np.where(cabin, min(boat.saturation + 0.15, 1.0), sat)
    # Stern hatches: two dark squares off the cabin corners.
    hatch_size = 0.10 * length
    for hu, hv in ((-0.42 * length, -0.11 * beam), (-0.42 * length, 0.11 * beam)):
        hatch = deck & (np.abs(u - hu) <= hatch_size / 2.0) & (np.abs(v - hv) <= hatch_size / 2.0)
        val = np.where(hatch, dark_val, val)
    # Bow chevron for an unambiguous heading cue.
    chevron = deck & (u >= 0.44 * length) & (np.abs(v) <= (u - 0.44 * length) * 0.8)
    val = np.where(chevron, dark_val, val)
    val = np.where(rim, max(boat.value - 0.15, 0.05), val)

    region_h = hue_plane[y_lo:y_hi, x_lo:x_hi]
    region_s = sat_plane[y_lo:y_hi, x_lo:x_hi]
    region_v = val_plane[y_lo:y_hi, x_lo:x_hi]
    hue_plane[y_lo:y_hi, x_lo:x_hi] = np.where(inside, hue, region_h)
    sat_plane[y_lo:y_hi, x_lo:x_hi] = np.where(inside, sat, region_s)
    val_plane[y_lo:y_hi, x_lo:x_hi] = np.where(inside, val, region_v)


def _boat_mask(boat: BoatSpec, width: int, height: int) -> np.ndarray:
    cx_px = boat.cx * width
    cy_px = boat.cy * height
    ys, xs = np.mgrid[0:height, 0:width]
    dx = xs + 0.0 - cx_px
    dy = ys + 0.0 - cy_px
    c, s = math.cos(boat.heading), math.sin(boat.heading)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    half = _hull_half_width(u, boat.length_px)
    return (half >= 0.0) & (np.abs(v) <= half)


def generate_scene(spec: SynthSceneSpec) -> Tuple[ImageBuffer, GroundTruthFrame]:
    """Render one frame; fully deterministic per spec + seed."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    h, w = spec.height, spec.width

    hue_lo, hue_hi = spec.sea_hue
    hue = hue_lo + _smooth_field(rng, h, w, 9) * (hue_hi - hue_lo)
    sat = 0.45 + 0.25 * _smooth_field(rng, h, w, 7)
    val = 0.40 + 0.22 * _smooth_field(rng, h, w, 8)

    for boat in spec.boats:
        _paint_boat((hue, sat, val), boat, w, h)

    rgb = hsv_to_rgb_array(hue, sat, val).astype(np.int16)
    if spec.noise_amplitude > 0:
        noise = rng.integers(
            -spec.noise_amplitude, spec.noise_amplitude + 1, size=rgb.shape, dtype=np.int16
        )
        rgb = rgb + noise
    pixels = np.clip(rgb, 0, 255).astype(np.uint8)

    boxes = tuple(
        (0,) + hull_bounding_box(boat, w, h) for boat in spec.boats
    )
    gt = GroundTruthFrame(frame_id=0, boxes=boxes, target_index=None)
    return ImageBuffer.from_array(pixels), gt


def render_boat_template(boat: BoatSpec, canvas: int, seed: int = 0,
                         noise_amplitude: int = 2) -> ImageBuffer:
    """RGBA cutout of one boat on a transparent (black) background."""
    rng = np.random.Generator(np.random.PCG64(seed))
    spec_boat = replace(boat, cx=0.5, cy=0.5)
    hue = np.zeros((canvas, canvas))
    sat = np.zeros((canvas, canvas))
    val = np.zeros((canvas, canvas))
    _paint_boat((hue, sat, val), spec_boat, canvas, canvas)
    mask = _boat_mask(spec_boat, canvas, canvas)
    rgb = hsv_to_rgb_array(hue, sat, val).astype(np.int16)
    if noise_amplitude > 0:
        noise = rng.integers(-noise_amplitude, noise_amplitude + 1, size=rgb.shape, dtype=np.int16)
        rgb = rgb + noise
    pixels = np.where(mask[:, :, None], np.clip(rgb, 0, 255), 0).astype(np.uint8)
    alpha = np.where(mask, 255, 0).astype(np.uint8)
    return ImageBuffer.from_array(pixels, alpha)


# --- Mission scenario ------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    """A full synthetic sequence: one moving target plus two gray decoys."""

    frames: int = 200
    width: int = 640
    height: int = 480
    seed: int = 7
    fps: float = 10.0
    noise_amplitude: int = 4
    sea_hue: Tuple[float, float] = (205.0, 230.0)
    target_hue: float = 0.0
    target_saturation: float = 0.85
    target_value: float = 0.50
    target_length: Tuple[float, float] = (40.0, 100.0)  # swept across the run
    decoy_length: float = 62.0
    template_length: float = 150.0
    template_canvas: int = 176
    # Geometry written to poses.ndjson / meta.json for the geolocation stage.
    focal_px: float = 600.0
    altitude_m: float = 20.0
    target_height_m: float = 1.0


def _clamped_center(cx: float, cy: float, boat: BoatSpec, width: int, height: int) -> BoatSpec:
    """Shift a boat center so its bounding box stays inside the frame."""
    probe = replace(boat, cx=0.5, cy=0.5)
    _, _, bw, bh = hull_bounding_box(probe, width, height)
    margin_x = bw / 2.0 + 2.0 / width
    margin_y = bh / 2.0 + 2.0 / height
    return replace(
        boat,
        cx=min(max(cx, margin_x), 1.0 - margin_x),
        cy=min(max(cy, margin_y), 1.0 - margin_y),
    )


def scenario_boats(spec: ScenarioSpec, frame_index: int) -> Tuple[BoatSpec, BoatSpec, BoatSpec]:
    """(decoy1, decoy2, target) for one frame; trajectories are closed-form."""
    n = max(spec.frames - 1, 1)
    t = frame_index / n
    lo, hi = spec.target_length
    target_len = lo + (hi - lo) * t

    tau = 2.0 * math.pi
    target = BoatSpec(
        hue=spec.target_hue,
        saturation=spec.target_saturation,
        value=spec.target_value,
        length_px=target_len,
        cx=0.5 + 0.30 * math.sin(tau * (0.9 * t + 0.07)),
        cy=0.74 + 0.08 * math.sin(tau * (0.6 * t + 0.31)),
        heading=(tau * 1.35 * t) % tau,
    )
    decoy1 = BoatSpec(
        hue=45.0, saturation=0.13, value=0.45,
        length_px=spec.decoy_length,
        cx=0.5 + 0.33 * math.sin(tau * (0.40 * t + 0.55)),
        cy=0.15 + 0.04 * math.sin(tau * (0.5 * t + 0.12)),
        heading=(0.8 + tau * 0.7 * t) % tau,
    )
    decoy2 = BoatSpec(
        hue=300.0, saturation=0.13, value=0.58,
        length_px=spec.decoy_length * 0.9,
        cx=0.5 - 0.31 * math.sin(tau * (0.35 * t + 0.21)),
        cy=0.40 + 0.04 * math.sin(tau * (0.45 * t + 0.77)),
        heading=(2.1 + tau * 0.55 * t) % tau,
    )
    w, h = spec.width, spec.height
    return (
        _clamped_center(decoy1.cx, decoy1.cy, decoy1, w, h),
        _clamped_center(decoy2.cx, decoy2.cy, decoy2, w, h),
        _clamped_center(target.cx, target.cy, target, w, h),
    )


def scenario_frame(spec: ScenarioSpec, frame_index: int) -> SynthSceneSpec:
    boats = scenario_boats(spec, frame_index)
    return SynthSceneSpec(
        width=spec.width,
        height=spec.height,
        sea_hue=spec.sea_hue,
        boats=boats,
        noise_amplitude=spec.noise_amplitude,
        seed=spec.seed * 1_000_003 + frame_index,
    )


TARGET_BOX_INDEX = 2  # boats order is (decoy1, decoy2, target)


def scenario_template_boats(spec: ScenarioSpec) -> Tuple[BoatSpec, BoatSpec]:
    """Two target views at different headings, template-sized."""
    base = BoatSpec(
        hue=spec.target_hue,
        saturation=spec.target_saturation,
        value=spec.target_value,
        length_px=spec.template_length,
        cx=0.5, cy=0.5, heading=0.0,
    )
    return base, replace(base, heading=1.9)


def nadir_camera_rotation() -> np.ndarray:
    """Camera (x right, y down, z forward) to body with the lens pointing down."""
    return np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])


def scenario_pose(spec: ScenarioSpec, frame_index: int):
    """Hovering UAV pose for one frame (level flight, slow drift)."""
    from .geoloc import UavPose  # local import: synth stays free of geoloc at import time

    t = frame_index / max(spec.frames - 1, 1)
    tau = 2.0 * math.pi
    position = (
        2.5 * math.sin(tau * 0.5 * t),
        -3.0 + 1.5 * math.cos(tau * 0.4 * t),
        spec.altitude_m,
    )
    yaw = 0.08 * math.sin(tau * 0.8 * t)
    c, s = math.cos(yaw), math.sin(yaw)
    r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return UavPose(
        timestamp=frame_index / spec.fps, position=position, r_world_uav=r
    )


def write_scenario_dataset(spec: ScenarioSpec, out_dir, force: bool = False) -> None:
    """Write the dataset layout plus poses, template sources and meta.

    Layout: images/NNNNNN.png, labels/NNNNNN.txt, targets/NNNNNN.txt,
    poses.ndjson, templates_src/template{1,2}.png, meta.json.
    """
    import json
    from pathlib import Path

    from .gateway import Detection, format_annotation_line
    from .geoloc import serialize_pose_line

    root = Path(out_dir)
    if root.exists() and any(root.iterdir()) and not force:
        raise FileExistsError(f"{root} exists and is not empty (use force)")
    for sub in ("images", "labels", "targets", "templates_src"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    pose_lines = []
    for i in range(spec.frames):
        frame_spec = scenario_frame(spec, i)
        image, gt = generate_scene(frame_spec)
        stem = f"{i:06d}"
        image.save_png(root / "images" / f"{stem}.png")
        lines = []
        for class_id, cx, cy, w, h in gt.boxes:
            lines.append(format_annotation_line(Detection(class_id, cx, cy, w, h)))
        (root / "labels" / f"{stem}.txt").write_text("\n".join(lines) + "\n")
        (root / "targets" / f"{stem}.txt").write_text(f"{TARGET_BOX_INDEX}\n")
        pose_lines.append(serialize_pose_line(scenario_pose(spec, i)))
    (root / "poses.ndjson").write_text("\n".join(pose_lines) + "\n")

    tpl1, tpl2 = scenario_template_boats(spec)
    render_boat_template(tpl1, spec.template_canvas, seed=spec.seed * 31 + 1).save_png(
        root / "templates_src" / "template1.png"
    )
    render_boat_template(tpl2, spec.template_canvas, seed=spec.seed * 31 + 2).save_png(
        root / "templates_src" / "template2.png"
    )

    meta = {
        "fps": spec.fps,
        "frames": spec.frames,
        "seed": spec.seed,
        "image_size": [spec.width, spec.height],
        "intrinsics": {
            "f": spec.focal_px,
            "cx_pp": spec.width / 2.0,
            "cy_pp": spec.height / 2.0,
            "width": spec.width,
            "height": spec.height,
        },
        "extrinsics": [float(v) for v in nadir_camera_rotation().reshape(-1)],
        "target_height": spec.target_height_m,
        "target_box_index": TARGET_BOX_INDEX,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

