import numpy as np
import pytest
from fastapi.testclient import TestClient

from vesselid import geoloc as gl
from vesselid import imaging as im
from vesselid import mission as ms
from vesselid.gateway import Detection
from vesselid.identify import CandidateReport, Verdict
from vesselid.service import MissionService, build_app


def crop_image():
    rng = np.random.default_rng(0)
    return im.ImageBuffer.from_array(rng.integers(0, 255, (24, 24, 3), dtype=np.uint8))


def report(verdict, frame_id=0, d_hist=0.12, with_crop=True):
    return CandidateReport(
        frame_id=frame_id,
        detection=Detection(0, 0.5, 0.5, 0.1, 0.1),
        verdict=verdict,
        d_hist=d_hist,
        p_m1=0.3,
        p_m2=0.2,
        crop=crop_image() if with_crop else None,
    )


@pytest.fixture()
def service():
    runner = ms.MissionRunner(geo=None)
    svc = MissionService(runner)
    svc.submit(ms.StartSearch())
    return svc


@pytest.fixture()
def client(service):
    return TestClient(build_app(service))


def push_target(service, frame_id=0):
    service.submit(ms.FrameProcessed((report(Verdict.TARGET, frame_id),)))


class TestStateEndpoint:
    def test_initial_search_state(self, client):
        payload = client.get("/api/state").json()
        assert payload["state"] == "search"
        assert payload["pending"] is None
        assert payload["aggregate"]["count"] == 0

    def test_pending_candidate_appears(self, service, client):
        push_target(service)
        payload = client.get("/api/state").json()
        assert payload["state"] == "awaiting_confirmation"
        assert payload["pending"]["verdict"] == "target"
        assert payload["pending"]["crop_url"].startswith("/api/crops/")


class TestCandidates:
    def test_since_filter(self, service, client):
        service.submit(ms.FrameProcessed((report(Verdict.NOT_TARGET, 1),)))
        service.submit(ms.FrameProcessed((report(Verdict.NOT_TARGET, 2),)))
        every = client.get("/api/candidates").json()
        assert len(every) == 2
        later = client.get("/api/candidates", params={"since": every[0]["candidate_id"]}).json()
        assert len(later) == 1
        assert later[0]["candidate_id"] > every[0]["candidate_id"]

    def test_payload_carries_scores(self, service, client):
        push_target(service)
        payload = client.get("/api/candidates").json()[0]
        assert payload["p_m1"] == 0.3
        assert payload["d_hist"] == 0.12
        assert payload["detection"]["cx"] == 0.5


class TestCrops:
    def test_png_round_trip(self, service, client):
        push_target(service)
        cid = client.get("/api/state").json()["pending"]["candidate_id"]
        resp = client.get(f"/api/crops/{cid}")
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        import io

        from PIL import Image

        img = Image.open(io.BytesIO(resp.content))
        assert img.size == (24, 24)

    def test_missing_crop_404(self, client):
        assert client.get("/api/crops/999").status_code == 404


class TestDecision:
    def test_confirm_flow(self, service, client):
        push_target(service)
        cid = client.get("/api/state").json()["pending"]["candidate_id"]
        resp = client.post("/api/decision", json={"candidate_id": cid, "decision": "confirm"})
        assert resp.status_code == 200
        assert resp.json()["state"] == "confirmed"
        assert client.get("/api/state").json()["state"] == "confirmed"

    def test_reject_returns_to_search(self, service, client):
        push_target(service)
        cid = client.get("/api/state").json()["pending"]["candidate_id"]
        resp = client.post("/api/decision", json={"candidate_id": cid, "decision": "reject"})
        assert resp.status_code == 200
        assert resp.json()["state"] == "search"
        assert resp.json()["fixes"] == []

    def test_stale_candidate_conflicts(self, service, client):
        push_target(service)
        cid = client.get("/api/state").json()["pending"]["candidate_id"]
        client.post("/api/decision", json={"candidate_id": cid, "decision": "reject"})
        resp = client.post("/api/decision", json={"candidate_id": cid, "decision": "confirm"})
        assert resp.status_code == 409

    def test_bad_payload(self, client):
        resp = client.post("/api/decision", json={"candidate_id": "x", "decision": "maybe"})
        assert resp.status_code == 400

    def test_double_submit_second_conflicts(self, service, client):
        push_target(service)
        cid = client.get("/api/state").json()["pending"]["candidate_id"]
        first = client.post("/api/decision", json={"candidate_id": cid, "decision": "confirm"})
        second = client.post("/api/decision", json={"candidate_id": cid, "decision": "confirm"})
        assert first.status_code == 200
        assert second.status_code == 409


class TestEventStream:
    def test_events_replay_and_push(self, service, client):
        push_target(service)
        backlog = service.events_since(0)
        with client.websocket_connect("/api/events") as ws:
            received = [ws.receive_json() for _ in backlog]
            assert [e["seq"] for e in received] == [e["seq"] for e in backlog]
            assert {e["type"] for e in received} == {"report", "state"}
            # A fresh event arrives over the same socket.
            service.submit(ms.FrameProcessed((report(Verdict.NOT_TARGET, 5),)))
            pushed = ws.receive_json()
            assert pushed["type"] == "report"
            assert pushed["report"]["frame_id"] == 5

    def test_since_skips_backlog(self, service, client):
        push_target(service)
        backlog = service.events_since(0)
        last = backlog[-1]["seq"]
        with client.websocket_connect(f"/api/events?since={last}") as ws:
            service.submit(ms.FrameProcessed((report(Verdict.NOT_TARGET, 9),)))
            event = ws.receive_json()
            assert event["seq"] > last


class TestAggregatePayload:
    def test_fix_scatter_in_state(self):
        intr = gl.CameraIntrinsics(f=600.0, cx_pp=320.0, cy_pp=240.0, width=640, height=480)
        nadir = np.array([[1.0, 0, 0], [0, -1.0, 0], [0, 0, -1.0]])
        poses = tuple(gl.UavPose(i / 10.0, (0, 0, 50.0), np.eye(3)) for i in range(20))
        geo = ms.GeoContext(intr, gl.Extrinsics(nadir), poses, 0.05, 1.0)
        runner = ms.MissionRunner(geo=geo)
        svc = MissionService(runner)
        svc.submit(ms.StartSearch())
        for i in range(3):
            runner.note_frame_timestamp(i, i / 10.0)
            svc.submit(ms.FrameProcessed((report(Verdict.TARGET, i, with_crop=False),)))
        payload = svc.state()
        assert payload["aggregate"]["count"] == 3
        assert len(payload["fixes"]) == 3
