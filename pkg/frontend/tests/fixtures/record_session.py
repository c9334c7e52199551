"""Record a live mission-service session for the console acceptance tests.

Drives the real service (synthetic frames through the identification
pipeline) and captures raw response bodies, so the console tests replay
actual payloads instead of hand-written ones.

Run from the repository root:  python3 frontend/tests/fixtures/record_session.py
"""

import json
from dataclasses import replace
from pathlib import Path

from fastapi.testclient import TestClient

from vesselid import geoloc as gl
from vesselid import identify as idf
from vesselid import mission as ms
from vesselid import synth
from vesselid.gateway import Detection, FrameDetections
from vesselid.service import MissionService, build_app

OUT = Path(__file__).parent / "session.json"


def build_service():
    spec = synth.ScenarioSpec(frames=16, seed=11)
    boats = synth.scenario_template_boats(spec)
    img1 = synth.render_boat_template(boats[0], spec.template_canvas, seed=spec.seed * 31 + 1)
    img2 = synth.render_boat_template(boats[1], spec.template_canvas, seed=spec.seed * 31 + 2)
    templates = (idf.load_template(img1, 1), idf.load_template(img2, 2))
    cfg = idf.IdentifyConfig()

    geo = ms.GeoContext(
        intrinsics=gl.CameraIntrinsics(
            f=spec.focal_px, cx_pp=spec.width / 2, cy_pp=spec.height / 2,
            width=spec.width, height=spec.height,
        ),
        extrinsics=gl.Extrinsics(synth.nadir_camera_rotation()),
        poses=tuple(synth.scenario_pose(spec, i) for i in range(spec.frames)),
        sync_tolerance=0.1,
        target_height=spec.target_height_m,
    )
    runner = ms.MissionRunner(geo=geo)
    service = MissionService(runner, templates=templates, identify_cfg=cfg)

    service.submit(ms.StartSearch())

    def feed_until_awaiting():
        for i in range(spec.frames):
            frame_spec = synth.scenario_frame(spec, i)
            image, gt = synth.generate_scene(frame_spec)
            dets = [Detection(b[0], b[1], b[2], b[3], b[4]) for b in gt.boxes]
            reports = idf.identify_frame(
                image, FrameDetections(i, i / spec.fps, dets), templates, cfg
            )
            runner.note_frame_timestamp(i, i / spec.fps)
            service.submit(ms.FrameProcessed(tuple(reports)))
            if isinstance(runner.state, ms.AwaitingConfirmation):
                if len(runner.current_fixes()) >= 3:
                    return
    feed_until_awaiting()
    return service


def record(decision):
    service = build_service()
    client = TestClient(build_app(service))

    session = {}
    state = client.get("/api/state")
    session["awaiting_state_raw"] = state.text
    session["awaiting_state"] = state.json()
    assert session["awaiting_state"]["state"] == "awaiting_confirmation"

    session["candidates"] = client.get("/api/candidates").json()
    session["events"] = service.events_since(0)

    pending_id = session["awaiting_state"]["pending"]["candidate_id"]
    decision_resp = client.post(
        "/api/decision", json={"candidate_id": pending_id, "decision": decision}
    )
    session["decision"] = {
        "candidate_id": pending_id,
        "decision": decision,
        "status": decision_resp.status_code,
        "body_raw": decision_resp.text,
        "body": decision_resp.json(),
    }
    repeat = client.post(
        "/api/decision", json={"candidate_id": pending_id, "decision": decision}
    )
    session["repeat_status"] = repeat.status_code

    final = client.get("/api/state")
    session["final_state"] = final.json()
    return session


def main():
    payload = {
        "confirm": record("confirm"),
        "reject": record("reject"),
    }
    OUT.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"recorded session -> {OUT}")
    print("confirm final:", payload["confirm"]["final_state"]["state"])
    print("reject final:", payload["reject"]["final_state"]["state"])


if __name__ == "__main__":
    main()
