"""Mission HTTP/WS service consumed by the operator console.

Thin API over a MissionRunner: state snapshots, candidate review payloads
with crop images, operator decisions, and a push stream of events. All
runner access is serialized through one lock; the event stream is fanned
out from the runner's sequence-numbered event log.
"""

from __future__ import annotations

import asyncio
import io
import threading
from typing import Dict, List, Optional

from fastapi import FastAPI, Response, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from PIL import Image
import numpy as np

from . import mission as ms
from .identify import CandidateReport
from .geoloc import FixAggregate


def report_payload(candidate_id: int, report: CandidateReport) -> dict:
    return {
        "candidate_id": candidate_id,
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
        "histogram": (
            [float(v) for v in report.histogram.bins]
            if report.histogram is not None
            else None
        ),
        "detection": {
            "class_id": report.detection.class_id,
            "cx": report.detection.cx,
            "cy": report.detection.cy,
            "w": report.detection.w,
            "h": report.detection.h,
            "score": report.detection.score,
        },
        "crop_url": f"/api/crops/{candidate_id}" if report.crop is not None else None,
    }


def aggregate_payload(agg: FixAggregate) -> dict:
    return {
        "mean": list(agg.mean),
        "covariance": [list(row) for row in np.asarray(agg.covariance).tolist()],
        "semi_axes": list(agg.semi_axes),
        "orientation": agg.orientation,
        "count": agg.count,
        "degenerate": agg.degenerate,
    }


class MissionService:
    """Serializes access to the runner and exposes snapshots for the API."""

    def __init__(self, runner: ms.MissionRunner, templates=None, identify_cfg=None):
        self.runner = runner
        self._lock = threading.Lock()
        self._template_payload = [
            {
                "template_id": t.template_id,
                "histogram": [float(v) for v in t.histogram.bins],
                "keypoints": len(t.features),
            }
            for t in (templates or ())
        ]
        self._thresholds = (
            {
                "d_certain": identify_cfg.d_certain,
                "d_likely": identify_cfg.d_likely,
                "d_uncertain": identify_cfg.d_uncertain,
                "p_strong": identify_cfg.p_strong,
                "p_accept": identify_cfg.p_accept,
            }
            if identify_cfg is not None
            else None
        )

    def submit(self, event: ms.MissionEvent) -> List[ms.MissionAction]:
        with self._lock:
            return self.runner.handle_event(event)

    def decide(self, candidate_id: int, decision: str) -> Optional[dict]:
        """Apply an operator decision; None when the candidate is not pending."""
        with self._lock:
            if self.runner.pending_id != candidate_id:
                return None
            event = ms.OperatorConfirm() if decision == "confirm" else ms.OperatorReject()
            self.runner.handle_event(event)
            return self._state_snapshot()

    def state(self) -> dict:
        with self._lock:
            return self._state_snapshot()

    def _state_snapshot(self) -> dict:
        runner = self.runner
        pending = None
        if runner.pending_id is not None:
            report = runner.pending_candidate()
            if report is not None:
                pending = report_payload(runner.pending_id, report)
        fixes = [
            {"x": f.x, "y": f.y, "timestamp": f.timestamp, "frame_id": f.frame_id}
            for f in runner.current_fixes()
        ]
        return {
            "state": ms.state_name(runner.state),
            "pending": pending,
            "aggregate": aggregate_payload(runner.current_aggregate()),
            "fixes": fixes,
            "skips": dict(runner.skip_counts),
            "seq": runner.events[-1]["seq"] if runner.events else 0,
            "templates": self._template_payload,
            "thresholds": self._thresholds,
        }

    def candidates_since(self, since: int) -> List[dict]:
        with self._lock:
            return [
                report_payload(cid, report)
                for cid, report in self.runner.candidates
                if cid > since
            ]

    def crop_png(self, candidate_id: int) -> Optional[bytes]:
        with self._lock:
            for cid, report in self.runner.candidates:
                if cid == candidate_id and report.crop is not None:
                    buf = io.BytesIO()
                    Image.fromarray(np.asarray(report.crop.pixels)).save(buf, format="PNG")
                    return buf.getvalue()
        return None

    def events_since(self, seq: int) -> List[dict]:
        with self._lock:
            out = []
            for event in self.runner.events:
                if event["seq"] > seq:
                    entry = dict(event)
                    if event["type"] == "report":
                        match = [r for c, r in self.runner.candidates
                                 if c == event["candidate_id"]]
                        if match:
                            entry["report"] = report_payload(event["candidate_id"], match[0])
                    elif event["type"] == "state":
                        entry["snapshot"] = self._state_snapshot()
                    out.append(entry)
            return out


def build_app(service: MissionService) -> FastAPI:
    app = FastAPI(title="vesselid mission service")
    # The operator console is served as static files from anywhere.
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/api/state")
    def get_state():
        return service.state()

    @app.get("/api/candidates")
    def get_candidates(since: int = 0):
        return service.candidates_since(since)

    @app.get("/api/crops/{candidate_id}")
    def get_crop(candidate_id: int):
        png = service.crop_png(candidate_id)
        if png is None:
            return JSONResponse({"error": "no crop"}, status_code=404)
        return Response(content=png, media_type="image/png")

    @app.post("/api/decision")
    def post_decision(body: Dict):
        candidate_id = body.get("candidate_id")
        decision = body.get("decision")
        if decision not in ("confirm", "reject") or not isinstance(candidate_id, int):
            return JSONResponse({"error": "bad decision payload"}, status_code=400)
        snapshot = service.decide(candidate_id, decision)
        if snapshot is None:
            return JSONResponse({"error": "candidate not pending"}, status_code=409)
        return snapshot

    @app.websocket("/api/events")
    async def events(ws: WebSocket):
        await ws.accept()
        last_seq = int(ws.query_params.get("since", 0))
        try:
            while True:
                fresh = service.events_since(last_seq)
                for event in fresh:
                    await ws.send_json(event)
                    last_seq = event["seq"]
                await asyncio.sleep(0.05)
        except WebSocketDisconnect:
            return

    return app
