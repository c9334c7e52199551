"""Target identification: template models, candidate scoring and verdicts.

Each detection is cropped, background-masked, feature-matched against both
reference templates and compared by hue-histogram distance; the verdict
combines match strength with the histogram distance thresholds. At most one
candidate per frame is upgraded to Target.
"""

from __future__ import annotations

import enum
import hashlib
import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import features as ft
from . import imaging as im
from .errors import ConfigError, EmptyCrop, ImageTooSmall, InsufficientPixels, NoFeatures
from .gateway import Detection, FrameDetections, area_filter, AreaFilterConfig

HIST_CACHE_SUFFIX = ".hist"
FEATURE_CACHE_SUFFIX = ".vfset"
BUNDLE_MANIFEST = "manifest.json"


class MatchStrength(enum.IntEnum):
    WEAK = 0
    ACCEPTABLE = 1
    STRONG = 2


class Verdict(enum.Enum):
    TARGET = "target"
    POSSIBLE_TARGET = "possible_target"
    NOT_TARGET = "not_target"
    REJECTED = "rejected"


class RejectReason(enum.Enum):
    AREA_FILTERED = "area_filtered"
    TOO_FEW_PIXELS = "too_few_pixels"
    NO_FEATURES = "no_features"
    TOO_FEW_MATCHES = "too_few_matches"


_VERDICT_RANK = {Verdict.REJECTED: -1, Verdict.NOT_TARGET: 0,
                 Verdict.POSSIBLE_TARGET: 1, Verdict.TARGET: 2}


def verdict_rank(v: Verdict) -> int:
    return _VERDICT_RANK[v]


@dataclass(frozen=True)
class IdentifyConfig:
    p_max: float = 0.85            # max masked-out fraction before rejection
    d_max: int = 64                # Hamming validity threshold (of 256 bits)
    p_strong: float = 0.15
    p_accept: float = 0.08
    d_certain: float = 0.30
    d_likely: float = 0.45
    d_uncertain: float = 0.60
    min_matches: int = 5
    min_side: int = 64             # crop upscaling floor, pixels

    def __post_init__(self):
        if not 0.0 < self.p_max < 1.0:
            raise ConfigError(f"p_max {self.p_max} outside (0, 1)")
        if not self.d_certain < self.d_likely < self.d_uncertain <= 1.0:
            raise ConfigError(
                "need d_certain < d_likely < d_uncertain <= 1, got "
                f"{self.d_certain}, {self.d_likely}, {self.d_uncertain}"
            )
        if self.p_accept > self.p_strong:
            raise ConfigError(f"p_accept {self.p_accept} above p_strong {self.p_strong}")
        if not 0 < self.d_max <= ft.DESCRIPTOR_BITS:
            raise ConfigError(f"d_max {self.d_max} outside (0, {ft.DESCRIPTOR_BITS}]")


@dataclass(frozen=True)
class TemplateModel:
    template_id: int  # 1 or 2
    features: ft.FeatureSet
    histogram: im.HueHistogram
    source_hash: str


@dataclass(frozen=True)
class CandidateReport:
    """Identification outcome for one detection, with all intermediate scores."""

    frame_id: int
    detection: Detection
    verdict: Verdict
    reject_reason: Optional[RejectReason] = None
    p_m1: Optional[float] = None
    p_m2: Optional[float] = None
    match_count1: Optional[int] = None
    match_count2: Optional[int] = None
    candidate_keypoints: Optional[int] = None
    d1: Optional[float] = None
    d2: Optional[float] = None
    d_hist: Optional[float] = None
    strength: Optional[MatchStrength] = None
    retained_ratio: Optional[float] = None
    histogram: Optional[im.HueHistogram] = None  # candidate hue bins, for review UIs
    crop: Optional[im.ImageBuffer] = None
    crop_ref: Optional[str] = None


def image_content_hash(img: im.ImageBuffer) -> str:
    """Digest of decoded pixel content (dims + RGB + alpha)."""
    digest = hashlib.sha256()
    digest.update(struct.pack("<II", img.width, img.height))
    digest.update(np.asarray(img.pixels).tobytes())
    if img.alpha is not None:
        digest.update(np.asarray(img.alpha).tobytes())
    return digest.hexdigest()


def load_template(
    img: im.ImageBuffer,
    template_id: int,
    feature_cfg: ft.FeatureConfig = ft.FeatureConfig(),
    hist_cfg: im.HistogramConfig = im.HistogramConfig(),
) -> TemplateModel:
    """Build a TemplateModel from a pre-segmented RGBA cutout.

    The alpha channel is the segmentation: background pixels are zeroed for
    feature extraction and excluded from the histogram. Fails rather than
    degrade: NoFeatures / InsufficientPixels propagate.
    """
    if img.alpha is None:
        raise ValueError("template image must carry an alpha channel")
    mask_bits = np.asarray(img.alpha) > 0
    if not mask_bits.any():
        raise InsufficientPixels("template alpha is fully transparent")

    gray = im.to_grayscale(img)
    gray = np.where(mask_bits, gray, 0).astype(np.uint8)
    feats = ft.extract_features(gray, feature_cfg)
    if len(feats) == 0:
        raise NoFeatures(f"template {template_id} produced no features")

    mask = im.PixelMask(img.width, img.height, mask_bits)
    hist = im.hue_histogram(img, mask, hist_cfg)
    return TemplateModel(
        template_id=template_id,
        features=feats,
        histogram=hist,
        source_hash=image_content_hash(img),
    )


def classify_strength(p_m1: float, p_m2: float, cfg: IdentifyConfig) -> MatchStrength:
    """Strong needs both templates above p_strong; acceptable one strong, one moderate."""
    lo, hi = min(p_m1, p_m2), max(p_m1, p_m2)
    if lo >= cfg.p_strong:
        return MatchStrength.STRONG
    if hi >= cfg.p_strong and lo >= cfg.p_accept:
        return MatchStrength.ACCEPTABLE
    return MatchStrength.WEAK


def decide(
    strength: MatchStrength, d_hist: float, passed_min_matches: bool, cfg: IdentifyConfig
) -> Verdict:
    """Apply the decision list top-down; the first matching rule wins."""
    if not passed_min_matches:
        return Verdict.NOT_TARGET
    if d_hist < cfg.d_certain:
        return Verdict.TARGET
    if d_hist < cfg.d_likely and strength >= MatchStrength.ACCEPTABLE:
        return Verdict.POSSIBLE_TARGET
    if d_hist < cfg.d_uncertain and strength == MatchStrength.STRONG:
        return Verdict.POSSIBLE_TARGET
    return Verdict.NOT_TARGET


def assess_candidate(
    frame: im.ImageBuffer,
    det: Detection,
    templates: Tuple[TemplateModel, TemplateModel],
    cfg: IdentifyConfig,
    mask_cfg: im.MaskConfig = im.MaskConfig(),
    hist_cfg: im.HistogramConfig = im.HistogramConfig(),
    feature_cfg: ft.FeatureConfig = ft.FeatureConfig(),
    frame_id: int = 0,
) -> CandidateReport:
    """Run the per-candidate pipeline; imaging failures become Rejected reports."""
    try:
        crop = im.crop_and_upscale(frame, (det.cx, det.cy, det.w, det.h), cfg.min_side)
    except EmptyCrop:
        return CandidateReport(
            frame_id, det, Verdict.REJECTED, reject_reason=RejectReason.TOO_FEW_PIXELS
        )

    mask, retained = im.background_mask(crop, mask_cfg)
    if 1.0 - retained > cfg.p_max:
        return CandidateReport(
            frame_id, det, Verdict.REJECTED,
            reject_reason=RejectReason.TOO_FEW_PIXELS,
            retained_ratio=retained, crop=crop,
        )

    gray = im.to_grayscale(crop)
    gray = np.where(np.asarray(mask.bits), gray, 0).astype(np.uint8)
    try:
        feats = ft.extract_features(gray, feature_cfg)
    except ImageTooSmall:
        # Only reachable when min_side is configured below the detector minimum.
        feats = ft.FeatureSet.empty()
    if len(feats) == 0:
        return CandidateReport(
            frame_id, det, Verdict.REJECTED,
            reject_reason=RejectReason.NO_FEATURES,
            retained_ratio=retained, crop=crop,
        )

    t1, t2 = templates
    matches1 = ft.match_cross_check(t1.features, feats, cfg.d_max)
    matches2 = ft.match_cross_check(t2.features, feats, cfg.d_max)
    p_m1 = ft.match_percentage(matches1, len(feats))
    p_m2 = ft.match_percentage(matches2, len(feats))
    if len(matches1) < cfg.min_matches and len(matches2) < cfg.min_matches:
        return CandidateReport(
            frame_id, det, Verdict.REJECTED,
            reject_reason=RejectReason.TOO_FEW_MATCHES,
            p_m1=p_m1, p_m2=p_m2,
            match_count1=len(matches1), match_count2=len(matches2),
            candidate_keypoints=len(feats),
            retained_ratio=retained, crop=crop,
        )

    try:
        hist = im.hue_histogram(crop, mask, hist_cfg)
    except InsufficientPixels:
        return CandidateReport(
            frame_id, det, Verdict.REJECTED,
            reject_reason=RejectReason.TOO_FEW_PIXELS,
            p_m1=p_m1, p_m2=p_m2,
            match_count1=len(matches1), match_count2=len(matches2),
            candidate_keypoints=len(feats),
            retained_ratio=retained, crop=crop,
        )
    d1 = im.bhattacharyya(hist, t1.histogram)
    d2 = im.bhattacharyya(hist, t2.histogram)
    d_hist = max(d1, d2)

    strength = classify_strength(p_m1, p_m2, cfg)
    verdict = decide(strength, d_hist, True, cfg)
    return CandidateReport(
        frame_id, det, verdict,
        p_m1=p_m1, p_m2=p_m2,
        match_count1=len(matches1), match_count2=len(matches2),
        candidate_keypoints=len(feats),
        d1=d1, d2=d2, d_hist=d_hist,
        strength=strength, retained_ratio=retained,
        histogram=hist, crop=crop,
    )


def identify_frame(
    frame: im.ImageBuffer,
    dets: FrameDetections,
    templates: Tuple[TemplateModel, TemplateModel],
    cfg: IdentifyConfig,
    area_cfg: AreaFilterConfig = AreaFilterConfig(),
    mask_cfg: im.MaskConfig = im.MaskConfig(),
    hist_cfg: im.HistogramConfig = im.HistogramConfig(),
    feature_cfg: ft.FeatureConfig = ft.FeatureConfig(),
    report_filtered: bool = False,
) -> List[CandidateReport]:
    """Assess every area-qualified detection; at most one Target per frame.

    When several candidates reach Target, the lowest d_hist keeps the verdict
    and the rest are demoted to PossibleTarget (the mission needs a unique
    interception goal). Filtered detections are dropped unless
    ``report_filtered`` asks for Rejected(AreaFiltered) placeholders.
    """
    survivors = set(id(d) for d in area_filter(dets.detections, area_cfg))
    reports: List[CandidateReport] = []
    for det in dets.detections:
        if id(det) not in survivors:
            if report_filtered:
                reports.append(
                    CandidateReport(
                        dets.frame_id, det, Verdict.REJECTED,
                        reject_reason=RejectReason.AREA_FILTERED,
                    )
                )
            continue
        reports.append(
            assess_candidate(
                frame, det, templates, cfg,
                mask_cfg=mask_cfg, hist_cfg=hist_cfg, feature_cfg=feature_cfg,
                frame_id=dets.frame_id,
            )
        )

    target_indices = [i for i, r in enumerate(reports) if r.verdict == Verdict.TARGET]
    if len(target_indices) > 1:
        best = min(target_indices, key=lambda i: (reports[i].d_hist, i))
        for i in target_indices:
            if i != best:
                reports[i] = replace(reports[i], verdict=Verdict.POSSIBLE_TARGET)
    return reports


# --- Template bundle on disk -------------------------------------------------

def _hist_to_bytes(hist: im.HueHistogram) -> bytes:
    return struct.pack("<I", hist.num_bins) + np.asarray(hist.bins, dtype="<f8").tobytes()

def _hist_from_bytes(data: bytes, pixel_count: int) -> im.HueHistogram:
    (count,) = struct.unpack_from("<I", data, 0)
    bins = np.frombuffer(data, dtype="<f8", count=count, offset=4)
    return im.HueHistogram(bins=bins.copy(), pixel_count=pixel_count)


def save_template_bundle(bundle_dir, templates: Sequence[TemplateModel],
                         images: Sequence[im.ImageBuffer]) -> None:
    """Write template PNGs plus feature/histogram caches and the manifest."""
    root = Path(bundle_dir)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for model, img in zip(templates, images):
        stem = f"template{model.template_id}"
        img.save_png(root / f"{stem}.png")
        (root / f"{stem}{FEATURE_CACHE_SUFFIX}").write_bytes(model.features.to_bytes())
        (root / f"{stem}{HIST_CACHE_SUFFIX}").write_bytes(_hist_to_bytes(model.histogram))
        manifest[stem] = {
            "source_hash": model.source_hash,
            "histogram_pixels": model.histogram.pixel_count,
        }
    (root / BUNDLE_MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_template_bundle(
    bundle_dir,
    feature_cfg: ft.FeatureConfig = ft.FeatureConfig(),
    hist_cfg: im.HistogramConfig = im.HistogramConfig(),
) -> Tuple[TemplateModel, TemplateModel]:
    """Load templates, honoring caches whose source hash still matches."""
    root = Path(bundle_dir)
    manifest = {}
    manifest_path = root / BUNDLE_MANIFEST
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    models = []
    for template_id in (1, 2):
        stem = f"template{template_id}"
        png = root / f"{stem}.png"
        if not png.exists():
            raise FileNotFoundError(f"missing {png}")
        img = im.ImageBuffer.load_png(png)
        content_hash = image_content_hash(img)
        entry = manifest.get(stem, {})
        vfset = root / f"{stem}{FEATURE_CACHE_SUFFIX}"
        hist_file = root / f"{stem}{HIST_CACHE_SUFFIX}"
        if (
            entry.get("source_hash") == content_hash
            and vfset.exists()
            and hist_file.exists()
        ):
            feats = ft.FeatureSet.from_bytes(vfset.read_bytes())
            hist = _hist_from_bytes(
                hist_file.read_bytes(), int(entry.get("histogram_pixels", 0))
            )
            models.append(
                TemplateModel(template_id, feats, hist, content_hash)
            )
        else:
            models.append(load_template(img, template_id, feature_cfg, hist_cfg))
    return models[0], models[1]
