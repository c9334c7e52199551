"""Command-line entry points: template prep, identification, mission, eval.

Exit codes are a stable scripting contract: 0 success, 1 usage error,
2 data error (bad files, schema violations), 3 runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import evalkit, gateway, geoloc, identify as idf, imaging as im, mission as ms, synth
from .config import AppConfig, load_config
from .errors import ConfigError, VesselIdError
from .wire import canonical_dumps

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

VERDICT_COLORS = {
    idf.Verdict.TARGET: (0, 220, 0),
    idf.Verdict.POSSIBLE_TARGET: (255, 200, 0),
    idf.Verdict.NOT_TARGET: (230, 40, 40),
    idf.Verdict.REJECTED: (128, 128, 128),
}


class UsageError(Exception):
    pass


def report_line(report: idf.CandidateReport) -> str:
    """Canonical NDJSON line for one candidate report."""
    payload = {
        "frame_id": report.frame_id,
        "verdict": report.verdict.value,
        "reject_reason": report.reject_reason.value if report.reject_reason else None,
        "p_m1": report.p_m1,
        "p_m2": report.p_m2,
        "match_count1": report.match_count1,
        "match_count2": report.match_count2,
        "candidate_keypoints": report.candidate_keypoints,
        "d1": report.d1,
        "d2": report.d2,
        "d_hist": report.d_hist,
        "strength": report.strength.name.lower() if report.strength is not None else None,
        "retained_ratio": report.retained_ratio,
        "detection": {
            "class_id": report.detection.class_id,
            "cx": report.detection.cx,
            "cy": report.detection.cy,
            "w": report.detection.w,
            "h": report.detection.h,
            "score": report.detection.score,
        },
        "crop": report.crop_ref,
    }
    return canonical_dumps(payload)


def _annotate(frame: im.ImageBuffer, reports: Sequence[idf.CandidateReport]) -> im.ImageBuffer:
    """Copy of the frame with verdict-colored detection rectangles."""
    pixels = np.asarray(frame.pixels).copy()
    h, w = frame.height, frame.width
    for report in reports:
        det = report.detection
        x0 = max(0, int(round((det.cx - det.w / 2) * w)))
        x1 = min(w - 1, int(round((det.cx + det.w / 2) * w)))
        y0 = max(0, int(round((det.cy - det.h / 2) * h)))
        y1 = min(h - 1, int(round((det.cy + det.h / 2) * h)))
        color = VERDICT_COLORS[report.verdict]
        pixels[y0, x0 : x1 + 1] = color
        pixels[y1, x0 : x1 + 1] = color
        pixels[y0 : y1 + 1, x0] = color
        pixels[y0 : y1 + 1, x1] = color
    return im.ImageBuffer.from_array(pixels)


def _parse_frame_range(text: Optional[str]) -> Optional[Tuple[int, int]]:
    if text is None:
        return None
    try:
        lo, hi = text.split("..")
        return int(lo), int(hi)
    except ValueError as exc:
        raise UsageError(f"bad --frames range {text!r}, expected A..B") from exc


def _load_templates(bundle: str, cfg: AppConfig):
    return idf.load_template_bundle(
        bundle, feature_cfg=cfg.features, hist_cfg=cfg.histogram
    )


def _geo_context(cfg: AppConfig, poses) -> ms.GeoContext:
    return ms.GeoContext(
        intrinsics=cfg.geoloc.intrinsics,
        extrinsics=cfg.geoloc.extrinsics,
        poses=tuple(poses),
        sync_tolerance=cfg.geoloc.sync_tolerance,
        target_height=cfg.geoloc.target_height,
    )


def _apply_meta_geoloc(cfg: AppConfig, dataset: Path) -> AppConfig:
    """Fill geoloc settings from the dataset's meta.json when present."""
    meta_path = dataset / "meta.json"
    if not meta_path.exists():
        return cfg
    meta = json.loads(meta_path.read_text())
    intr = meta.get("intrinsics", {})
    intrinsics = geoloc.CameraIntrinsics(
        f=float(intr["f"]),
        cx_pp=float(intr["cx_pp"]),
        cy_pp=float(intr["cy_pp"]),
        width=int(intr["width"]),
        height=int(intr["height"]),
    )
    extr = geoloc.Extrinsics(np.array(meta["extrinsics"], dtype=float).reshape(3, 3))
    geo = replace(
        cfg.geoloc,
        intrinsics=intrinsics,
        extrinsics=extr,
        target_height=float(meta.get("target_height", cfg.geoloc.target_height)),
    )
    gwy = replace(cfg.gateway, fps=float(meta.get("fps", cfg.gateway.fps)))
    return replace(cfg, geoloc=geo, gateway=gwy)


# --- commands ---------------------------------------------------------------------

def cmd_prepare_template(args) -> int:
    cfg = load_config(args.config)
    images = []
    models = []
    for template_id, path in enumerate(args.images, start=1):
        img = im.ImageBuffer.load_png(path)
        if img.alpha is None:
            raise VesselIdError(f"{path}: template must be RGBA (pre-segmented)")
        model = idf.load_template(
            img, template_id, feature_cfg=cfg.features, hist_cfg=cfg.histogram
        )
        images.append(img)
        models.append(model)
        bins = np.asarray(model.histogram.bins)
        nonzero = bins[bins > 0]
        entropy = float(-(nonzero * np.log2(nonzero)).sum())
        print(
            f"template{template_id}: {len(model.features)} keypoints, "
            f"histogram entropy {entropy:.3f} bits",
            file=sys.stderr,
        )
    idf.save_template_bundle(args.out, models, images)
    print(f"bundle written to {args.out}", file=sys.stderr)
    return EXIT_OK


class _SingleImageSource:
    """One image plus its same-stem '.txt' annotation sidecar."""

    def __init__(self, image_path):
        self.path = Path(image_path)
        if not self.path.exists():
            raise FileNotFoundError(f"image not found: {self.path}")

    def image_path(self, frame_id: int) -> Path:
        return self.path

    def __iter__(self):
        dets = []
        sidecar = self.path.with_suffix(".txt")
        if sidecar.exists():
            for raw in sidecar.read_text().splitlines():
                line = raw.strip()
                if line and not line.startswith("#"):
                    dets.append(gateway.parse_annotation_line(line))
        yield gateway.FrameDetections(frame_id=0, timestamp=0.0, detections=dets)


def _identify_stream(args, cfg: AppConfig, out=None):
    if out is None:
        out = sys.stdout
    templates = _load_templates(args.templates, cfg)
    if getattr(args, "image", None):
        source = _SingleImageSource(args.image)
    else:
        source = gateway.AnnotationReplaySource(args.dataset, fps=cfg.gateway.fps)
    frame_range = _parse_frame_range(args.frames)
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        (out_dir / "crops").mkdir(parents=True, exist_ok=True)
        (out_dir / "annotated").mkdir(parents=True, exist_ok=True)

    for frame_dets in source:
        if frame_range and not (frame_range[0] <= frame_dets.frame_id <= frame_range[1]):
            continue
        frame = im.ImageBuffer.load_png(source.image_path(frame_dets.frame_id))
        dets = gateway.filter_classes(frame_dets.detections, cfg.gateway.class_allow)
        frame_dets = gateway.FrameDetections(
            frame_dets.frame_id, frame_dets.timestamp, dets
        )
        reports = idf.identify_frame(
            frame, frame_dets, templates, cfg.identify,
            area_cfg=cfg.gateway.area, mask_cfg=cfg.mask,
            hist_cfg=cfg.histogram, feature_cfg=cfg.features,
            report_filtered=args.report_filtered,
        )
        if out_dir:
            tagged = []
            for index, report in enumerate(reports):
                if report.crop is not None:
                    ref = f"crops/{report.frame_id:06d}_{index}.png"
                    report.crop.save_png(out_dir / ref)
                    report = replace(report, crop_ref=ref)
                tagged.append(report)
            reports = tagged
            _annotate(frame, reports).save_png(
                out_dir / "annotated" / f"{frame_dets.frame_id:06d}.png"
            )
        for report in reports:
            print(report_line(report), file=out)
        yield frame_dets, reports


def cmd_identify(args) -> int:
    cfg = load_config(args.config)
    for _ in _identify_stream(args, cfg):
        pass
    return EXIT_OK


def cmd_run_mission(args) -> int:
    cfg = load_config(args.config)
    if not args.dataset and not (args.detections and args.frames_dir):
        raise UsageError("run-mission needs --dataset, or --detections with --frames-dir")
    dataset = Path(args.dataset) if args.dataset else Path(args.frames_dir)
    if args.config is None and args.dataset:
        cfg = _apply_meta_geoloc(cfg, dataset)

    pose_path = Path(args.poses) if args.poses else dataset / "poses.ndjson"
    poses = geoloc.load_pose_file(pose_path) if pose_path.exists() else []
    runner = ms.MissionRunner(
        geo=_geo_context(cfg, poses) if poses else None,
        history_cap=cfg.service.history_cap,
    )
    from .service import MissionService, build_app

    templates = _load_templates(args.templates, cfg)
    service = MissionService(runner, templates=templates, identify_cfg=cfg.identify)

    server = None
    if args.serve:
        import socket
        import threading
        import uvicorn

        host, _, port = args.serve.rpartition(":")
        host = host or "127.0.0.1"
        # Fail fast on an unavailable port instead of dying in the server thread.
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        try:
            probe.bind((host, int(port)))
        finally:
            probe.close()
        app = build_app(service)
        server_config = uvicorn.Config(app, host=host, port=int(port), log_level="warning")
        server = uvicorn.Server(server_config)
        threading.Thread(target=server.run, daemon=True).start()

    fix_out = open(args.fix_out, "w") if args.fix_out else None
    if args.detections:
        source = gateway.open_wire_source(args.detections)
        frames_dir = Path(args.frames_dir)
        image_for = lambda frame_id: frames_dir / f"{frame_id:06d}.png"  # noqa: E731
    else:
        replay = gateway.AnnotationReplaySource(dataset, fps=cfg.gateway.fps)
        source = replay
        image_for = replay.image_path
    pump = gateway.FramePump(source, capacity=cfg.gateway.queue_capacity).start()

    service.submit(ms.StartSearch())
    confirmed = False
    try:
        for frame_dets in pump:
            frame = im.ImageBuffer.load_png(image_for(frame_dets.frame_id))
            reports = idf.identify_frame(
                frame, frame_dets, templates, cfg.identify,
                area_cfg=cfg.gateway.area, mask_cfg=cfg.mask,
                hist_cfg=cfg.histogram, feature_cfg=cfg.features,
            )
            runner.note_frame_timestamp(frame_dets.frame_id, frame_dets.timestamp)
            actions = service.submit(ms.FrameProcessed(tuple(reports)))
            for action in actions:
                if isinstance(action, ms.EmitFix) and fix_out:
                    print(geoloc.serialize_fix_line(action.fix), file=fix_out)
                elif isinstance(action, ms.NotifyOperator):
                    print(
                        f"operator: candidate on frame {action.report.frame_id} "
                        f"(d_hist={action.report.d_hist:.3f})",
                        file=sys.stderr,
                    )
                elif isinstance(action, ms.NotifyUsv):
                    print(
                        json.dumps(
                            {"usv_notify": ms.state_name(runner.state),
                             "aggregate": _aggregate_dict(action.aggregate)},
                            sort_keys=True,
                        )
                    )
            if args.auto_decision and isinstance(runner.state, ms.AwaitingConfirmation):
                if len(runner.current_fixes()) >= args.auto_decision_after:
                    event = (
                        ms.OperatorConfirm()
                        if args.auto_decision == "confirm"
                        else ms.OperatorReject()
                    )
                    for action in service.submit(event):
                        if isinstance(action, ms.NotifyUsv):
                            print(
                                json.dumps(
                                    {"usv_notify": ms.state_name(runner.state),
                                     "aggregate": _aggregate_dict(action.aggregate)},
                                    sort_keys=True,
                                )
                            )
            if isinstance(runner.state, ms.Confirmed):
                confirmed = True
                if args.exit_when == "confirmed":
                    break
    finally:
        if fix_out:
            fix_out.close()
        if server is not None:
            server.should_exit = True

    final = {
        "state": ms.state_name(runner.state),
        "aggregate": _aggregate_dict(runner.current_aggregate()),
        "skips": runner.skip_counts,
    }
    if args.state_out:
        Path(args.state_out).write_text(json.dumps(final, indent=2, sort_keys=True) + "\n")
    print(json.dumps(final, sort_keys=True))
    if args.exit_when == "confirmed" and not confirmed:
        print("stream ended before confirmation", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _aggregate_dict(agg) -> dict:
    return {
        "mean": list(agg.mean),
        "covariance": np.asarray(agg.covariance).tolist(),
        "semi_axes": list(agg.semi_axes),
        "orientation": agg.orientation,
        "count": agg.count,
        "degenerate": agg.degenerate,
    }


def _reports_from_ndjson(path) -> Dict[int, List[idf.CandidateReport]]:
    by_frame: Dict[int, List[idf.CandidateReport]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
                det = gateway.Detection(
                    class_id=int(obj["detection"]["class_id"]),
                    cx=float(obj["detection"]["cx"]),
                    cy=float(obj["detection"]["cy"]),
                    w=float(obj["detection"]["w"]),
                    h=float(obj["detection"]["h"]),
                    score=float(obj["detection"].get("score", 1.0)),
                )
                report = idf.CandidateReport(
                    frame_id=int(obj["frame_id"]),
                    detection=det,
                    verdict=idf.Verdict(obj["verdict"]),
                    d_hist=obj.get("d_hist"),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise VesselIdError(f"{path}:{line_no}: bad report line: {exc}") from exc
            by_frame.setdefault(report.frame_id, []).append(report)
    return by_frame


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    gt_frames = evalkit.load_ground_truth(args.dataset)
    if not gt_frames:
        raise VesselIdError(f"no ground truth found under {args.dataset}")

    if args.predictions:
        by_frame = _reports_from_ndjson(args.predictions)
        reports_per_frame = [by_frame.get(gt.frame_id, []) for gt in gt_frames]
    elif args.templates:
        import contextlib
        import os

        identify_args = argparse.Namespace(
            dataset=args.dataset, templates=args.templates, frames=None,
            out_dir=None, report_filtered=False,
        )
        sidecar = (
            Path(args.out).with_suffix(".reports.ndjson") if args.out else os.devnull
        )
        reports_per_frame = []
        with contextlib.ExitStack() as stack:
            sink = stack.enter_context(open(sidecar, "w"))
            for _, reports in _identify_stream(identify_args, cfg, out=sink):
                reports_per_frame.append(reports)
    else:
        raise UsageError("evaluate needs --predictions or --templates")

    dets_per_frame = [
        [((r.detection.cx, r.detection.cy, r.detection.w, r.detection.h),
          r.detection.score) for r in reports]
        for reports in reports_per_frame
    ]
    gts_per_frame = [[(b[1], b[2], b[3], b[4]) for b in gt.boxes] for gt in gt_frames]

    detection_metrics = dict(evalkit.mean_ap(dets_per_frame, gts_per_frame, evalkit.MAP_FULL))
    map50 = evalkit.mean_ap(dets_per_frame, gts_per_frame, evalkit.MAP_COARSE)
    detection_metrics["map50"] = map50["map"]
    detection_metrics["map50_95"] = detection_metrics.pop("map")

    ident = evalkit.identification_metrics(reports_per_frame, gt_frames)
    json_text, table = evalkit.metrics_report(detection_metrics, ident)
    print(table)
    if args.out:
        Path(args.out).write_text(json_text + "\n")
    else:
        print(json_text)
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    load_config(args.config)  # validate early; generation itself has no knobs here
    scenario = synth.ScenarioSpec()
    if args.spec:
        path = Path(args.spec)
        if not path.exists():
            raise VesselIdError(f"spec file not found: {path}")
        import sys as _sys
        if _sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        try:
            raw = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise VesselIdError(f"invalid TOML in {path}: {exc}") from exc
        section = raw.get("scenario", raw)
        allowed = {f.name for f in fields(synth.ScenarioSpec)}
        unknown = set(section) - allowed
        if unknown:
            raise VesselIdError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
        coerced = {}
        for f in fields(synth.ScenarioSpec):
            if f.name in section:
                value = section[f.name]
                coerced[f.name] = tuple(value) if isinstance(value, list) else value
        scenario = synth.ScenarioSpec(**coerced)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.frames is not None:
        scenario = replace(scenario, frames=args.frames)
    try:
        synth.write_scenario_dataset(scenario, args.out, force=args.force)
    except FileExistsError as exc:
        raise VesselIdError(str(exc)) from exc
    print(f"dataset written to {args.out} ({scenario.frames} frames)", file=sys.stderr)
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vesselid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-template", help="build a template bundle from two RGBA cutouts")
    p.add_argument("images", nargs=2, metavar="IMAGE")
    p.add_argument("--out", required=True, help="bundle directory")
    p.add_argument("--config")
    p.set_defaults(func=cmd_prepare_template)

    p = sub.add_parser("identify", help="replay a dataset and stream candidate reports")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--dataset", help="dataset directory (images/ + labels/)")
    group.add_argument("--image", help="single image with a same-stem .txt sidecar")
    p.add_argument("--templates", required=True)
    p.add_argument("--config")
    p.add_argument("--frames", help="inclusive frame range A..B")
    p.add_argument("--out-dir", help="write crops and annotated frames here")
    p.add_argument("--report-filtered", action="store_true",
                   help="emit Rejected(area_filtered) reports for filtered detections")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("run-mission", help="gateway -> identify -> mission loop with service")
    p.add_argument("--dataset", help="dataset directory for annotation replay")
    p.add_argument("--detections",
                   help="NDJSON detection source: file path, '-' (stdin) or tcp://host:port")
    p.add_argument("--frames-dir", help="frame PNGs keyed by frame id (with --detections)")
    p.add_argument("--templates", required=True)
    p.add_argument("--poses", help="pose NDJSON (default: DATASET/poses.ndjson)")
    p.add_argument("--config")
    p.add_argument("--serve", metavar="HOST:PORT", help="serve the mission API")
    p.add_argument("--auto-decision", choices=("confirm", "reject"),
                   help="scripted operator decision (for replay testing)")
    p.add_argument("--auto-decision-after", type=int, default=3,
                   help="fixes to accumulate before the scripted decision")
    p.add_argument("--exit-when", choices=("confirmed", "stream-end"), default="stream-end")
    p.add_argument("--fix-out", help="write EmitFix NDJSON here")
    p.add_argument("--state-out", help="write the final state JSON here")
    p.set_defaults(func=cmd_run_mission)

    p = sub.add_parser("evaluate", help="detection mAP and identification metrics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", help="report NDJSON from 'identify'")
    p.add_argument("--templates", help="run the live pipeline instead of --predictions")
    p.add_argument("--config")
    p.add_argument("--out", help="write metrics JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-dataset", help="write a deterministic synthetic dataset")
    p.add_argument("--spec", help="scenario TOML")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--force", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_gen_dataset)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, VesselIdError, FileNotFoundError) as exc:
        print(f"data error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
