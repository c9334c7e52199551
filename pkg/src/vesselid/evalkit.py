"""Detection and identification metrics: IoU, AP, mAP, confusion counts.

Single-class (vessel) evaluation. AP uses all-point interpolation (area
under the precision envelope); identification counts follow the convention
that a true negative is a detected non-target boat correctly not classified
as the target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .identify import CandidateReport, Verdict

Box = Tuple[float, float, float, float]  # (cx, cy, w, h), consistent units

MAP_COARSE = (0.5,)
MAP_FULL = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))  # 0.50 .. 0.95


@dataclass(frozen=True)
class GroundTruthFrame:
    frame_id: int
    boxes: Tuple[Tuple[int, float, float, float, float], ...]  # (class_id, cx, cy, w, h)
    target_index: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(tuple(b) for b in self.boxes))
        if self.target_index is not None and not (0 <= self.target_index < len(self.boxes)):
            raise ValueError(
                f"target_index {self.target_index} outside {len(self.boxes)} boxes"
            )


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def precision(self) -> float:
        return 1.0 if self.tp + self.fp == 0 else self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        return 1.0 if self.tp + self.fn == 0 else self.tp / (self.tp + self.fn)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two center-size boxes; 0 when disjoint."""
    ax0, ax1 = a[0] - a[2] / 2.0, a[0] + a[2] / 2.0
    ay0, ay1 = a[1] - a[3] / 2.0, a[1] + a[3] / 2.0
    bx0, bx1 = b[0] - b[2] / 2.0, b[0] + b[2] / 2.0
    by0, by1 = b[1] - b[3] / 2.0, b[1] + b[3] / 2.0
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0.0 else 0.0


@dataclass(frozen=True)
class MatchOutcome:
    """Greedy score-ordered matching of detections to ground truth."""

    flags: Tuple[Tuple[float, bool], ...]  # (score, is_tp) in descending score order
    fn: int
    assignments: Dict[int, int]  # detection index -> matched gt index


def match_detections(
    dets: Sequence[Tuple[Box, float]], gts: Sequence[Box], iou_thr: float
) -> MatchOutcome:
    """Greedy one-to-one matching; highest-score detections claim GTs first.

    Ties on IoU break toward the lower GT index; unmatched detections are
    false positives and unmatched ground truths count into ``fn``.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][1], i))
    taken = [False] * len(gts)
    flags: List[Tuple[float, bool]] = []
    assignments: Dict[int, int] = {}
    for di in order:
        box, score = dets[di]
        best_iou, best_gt = 0.0, -1
        for gi, gt in enumerate(gts):
            if taken[gi]:
                continue
            overlap = iou(box, gt)
            if overlap > best_iou:  # ascending scan: IoU ties keep the lower index
                best_iou, best_gt = overlap, gi
        if best_gt >= 0 and best_iou >= iou_thr:
            taken[best_gt] = True
            assignments[di] = best_gt
            flags.append((score, True))
        else:
            flags.append((score, False))
    fn = taken.count(False)
    return MatchOutcome(tuple(flags), fn, assignments)


def average_precision(flags: Sequence[Tuple[float, bool]], total_gt: int) -> float:
    """All-point interpolated AP from a scored TP/FP sequence."""
    if total_gt == 0:
        return 1.0 if len(flags) == 0 else 0.0
    ordered = sorted(flags, key=lambda f: -f[0])
    tp_cum = 0
    fp_cum = 0
    recalls = [0.0]
    precisions = [1.0]
    for _, is_tp in ordered:
        tp_cum += 1 if is_tp else 0
        fp_cum += 0 if is_tp else 1
        recalls.append(tp_cum / total_gt)
        precisions.append(tp_cum / (tp_cum + fp_cum))
    # Precision envelope, right to left.
    for i in range(len(precisions) - 2, -1, -1):
        precisions[i] = max(precisions[i], precisions[i + 1])
    ap = 0.0
    for i in range(1, len(recalls)):
        ap += (recalls[i] - recalls[i - 1]) * precisions[i]
    return ap


def mean_ap(
    dets_per_frame: Sequence[Sequence[Tuple[Box, float]]],
    gts_per_frame: Sequence[Sequence[Box]],
    thresholds: Sequence[float] = MAP_FULL,
) -> Dict[str, float]:
    """Pooled single-class AP per IoU threshold, averaged over thresholds."""
    if len(dets_per_frame) != len(gts_per_frame):
        raise ValueError("detection and ground-truth frame counts differ")
    total_gt = sum(len(g) for g in gts_per_frame)
    per_threshold: Dict[str, float] = {}
    aps = []
    for thr in thresholds:
        flags: List[Tuple[float, bool]] = []
        for dets, gts in zip(dets_per_frame, gts_per_frame):
            outcome = match_detections(dets, gts, thr)
            flags.extend(outcome.flags)
        ap = average_precision(flags, total_gt)
        per_threshold[f"ap@{thr:.2f}"] = ap
        aps.append(ap)
    per_threshold["map"] = sum(aps) / len(aps) if aps else 1.0
    return per_threshold


@dataclass(frozen=True)
class IdentificationMetrics:
    counts: ConfusionCounts
    precision: float
    recall: float


def identification_metrics(
    reports_per_frame: Sequence[Sequence[CandidateReport]],
    gt_frames: Sequence[GroundTruthFrame],
    iou_thr: float = 0.5,
) -> IdentificationMetrics:
    """Confusion counts for target identification against labeled frames.

    Detections are matched one-to-one to GT boxes at ``iou_thr``. A Target
    verdict on the labeled target is a TP; on any other matched boat an FP.
    A labeled, visible target with no Target verdict on it is an FN; a
    matched non-target boat without a Target verdict is a TN. Frames without
    a labeled target contribute no TP/FN.
    """
    if len(reports_per_frame) != len(gt_frames):
        raise ValueError("report and ground-truth frame counts differ")
    tp = fp = fn = tn = 0
    for reports, gt in zip(reports_per_frame, gt_frames):
        dets = [((r.detection.cx, r.detection.cy, r.detection.w, r.detection.h),
                 r.detection.score) for r in reports]
        gt_boxes = [(b[1], b[2], b[3], b[4]) for b in gt.boxes]
        outcome = match_detections(dets, gt_boxes, iou_thr)
        gt_to_det = {gi: di for di, gi in outcome.assignments.items()}
        for gi in range(len(gt_boxes)):
            di = gt_to_det.get(gi)
            is_target_gt = gt.target_index is not None and gi == gt.target_index
            got_target_verdict = (
                di is not None and reports[di].verdict == Verdict.TARGET
            )
            if is_target_gt:
                if got_target_verdict:
                    tp += 1
                else:
                    fn += 1
            elif di is not None:
                if got_target_verdict:
                    fp += 1
                else:
                    tn += 1
    counts = ConfusionCounts(tp, fp, fn, tn)
    return IdentificationMetrics(counts, counts.precision, counts.recall)


# --- Dataset layout -------------------------------------------------------------

def load_ground_truth(dataset_dir) -> List[GroundTruthFrame]:
    """Read labels/NNNNNN.txt and targets/NNNNNN.txt sidecars for every image."""
    from .gateway import parse_annotation_line  # local import to avoid a cycle

    root = Path(dataset_dir)
    frames: List[GroundTruthFrame] = []
    for image_path in sorted((root / "images").glob("*.png")):
        frame_id = int(image_path.stem)
        label_path = root / "labels" / f"{image_path.stem}.txt"
        boxes = []
        if label_path.exists():
            for raw in label_path.read_text().splitlines():
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                det = parse_annotation_line(line)
                boxes.append((det.class_id, det.cx, det.cy, det.w, det.h))
        target_index: Optional[int] = None
        target_path = root / "targets" / f"{image_path.stem}.txt"
        if target_path.exists():
            text = target_path.read_text().strip()
            if text and text != "-":
                target_index = int(text)
        frames.append(GroundTruthFrame(frame_id, tuple(boxes), target_index))
    return frames


def metrics_report(
    detection_metrics: Dict[str, float], ident: IdentificationMetrics
) -> Tuple[str, str]:
    """(json_text, aligned_table_text) for the combined metrics report."""
    payload = {
        "detection": detection_metrics,
        "identification": {
            "tp": ident.counts.tp,
            "fp": ident.counts.fp,
            "fn": ident.counts.fn,
            "tn": ident.counts.tn,
            "precision": ident.precision,
            "recall": ident.recall,
        },
    }
    rows = [("metric", "value")]
    for key in sorted(detection_metrics):
        rows.append((key, f"{detection_metrics[key]:.4f}"))
    rows.append(("id/tp", str(ident.counts.tp)))
    rows.append(("id/fp", str(ident.counts.fp)))
    rows.append(("id/fn", str(ident.counts.fn)))
    rows.append(("id/tn", str(ident.counts.tn)))
    rows.append(("id/precision", f"{ident.precision:.4f}"))
    rows.append(("id/recall", f"{ident.recall:.4f}"))
    width = max(len(r[0]) for r in rows)
    table = "\n".join(f"{name:<{width}}  {value}" for name, value in rows)
    return json.dumps(payload, indent=2, sort_keys=True), table
