import random

import numpy as np
import pytest

from vesselid import geoloc as gl
from vesselid import mission as ms
from vesselid.gateway import Detection
from vesselid.identify import CandidateReport, Verdict


def report(verdict, d_hist=0.1, frame_id=0, cx=0.5, cy=0.5):
    return CandidateReport(
        frame_id=frame_id,
        detection=Detection(0, cx, cy, 0.1, 0.1),
        verdict=verdict,
        d_hist=d_hist,
    )


def target_event(d_hist=0.1, frame_id=0):
    return ms.FrameProcessed((report(Verdict.TARGET, d_hist, frame_id),))


ALL_STATES = lambda: [
    ms.Idle(),
    ms.Search(),
    ms.AwaitingConfirmation(report(Verdict.TARGET)),
    ms.Confirmed(report(Verdict.TARGET), gl.FixAggregate.empty()),
]


def random_event(rng):
    choice = rng.randrange(6)
    if choice == 0:
        return ms.StartSearch()
    if choice == 1:
        return ms.OperatorConfirm()
    if choice == 2:
        return ms.OperatorReject()
    if choice == 3:
        return ms.Abort()
    verdict = rng.choice([Verdict.TARGET, Verdict.POSSIBLE_TARGET, Verdict.NOT_TARGET])
    return ms.FrameProcessed((report(verdict, rng.random()),))


class TestStep:
    def test_idle_start_search(self):
        state, actions = ms.step(ms.Idle(), ms.StartSearch())
        assert state == ms.Search()
        assert actions == []

    def test_search_target_notifies_operator(self):
        state, actions = ms.step(ms.Search(), target_event())
        assert isinstance(state, ms.AwaitingConfirmation)
        assert len(actions) == 1 and isinstance(actions[0], ms.NotifyOperator)
        assert actions[0].report is state.candidate

    def test_search_without_target_stays(self):
        event = ms.FrameProcessed((report(Verdict.POSSIBLE_TARGET), report(Verdict.NOT_TARGET)))
        state, actions = ms.step(ms.Search(), event)
        assert state == ms.Search()
        assert actions == []

    def test_reject_resets(self):
        awaiting = ms.AwaitingConfirmation(report(Verdict.TARGET))
        state, actions = ms.step(awaiting, ms.OperatorReject())
        assert state == ms.Search()
        assert actions == [ms.ResetFlags()]

    def test_confirm_notifies_usv(self):
        fix = gl.TargetFix(1.0, 2.0, 0.0, 0)
        awaiting = ms.AwaitingConfirmation(report(Verdict.TARGET), fixes=(fix,))
        state, actions = ms.step(awaiting, ms.OperatorConfirm())
        assert isinstance(state, ms.Confirmed)
        assert len(actions) == 1 and isinstance(actions[0], ms.NotifyUsv)
        assert actions[0].aggregate.count == 1

    def test_invalid_pair_is_inert(self):
        state, actions = ms.step(ms.Idle(), ms.OperatorConfirm())
        assert state == ms.Idle()
        assert actions == [ms.NoOp()]

    def test_abort_from_any_state(self):
        for state in ALL_STATES():
            after, _ = ms.step(state, ms.Abort())
            assert after == ms.Idle()

    def test_abort_then_start_reaches_search(self):
        for state in ALL_STATES():
            mid, _ = ms.step(state, ms.Abort())
            final, _ = ms.step(mid, ms.StartSearch())
            assert final == ms.Search()

    def test_pure_and_deterministic(self):
        rng = random.Random(5)
        for _ in range(300):
            state = rng.choice(ALL_STATES())
            event = random_event(rng)
            first = ms.step(state, event)
            second = ms.step(state, event)
            assert first == second

    def test_best_target_selected_by_lowest_distance(self):
        event = ms.FrameProcessed(
            (report(Verdict.TARGET, 0.25), report(Verdict.TARGET, 0.05))
        )
        state, actions = ms.step(ms.Search(), event)
        assert state.candidate.d_hist == 0.05

    def test_notify_usv_only_on_confirm_random_sequences(self):
        rng = random.Random(99)
        for _ in range(1000):
            state = ms.Idle()
            for _ in range(rng.randrange(1, 12)):
                event = random_event(rng)
                was_awaiting = isinstance(state, ms.AwaitingConfirmation)
                state, actions = ms.step(state, event)
                usv = [a for a in actions if isinstance(a, ms.NotifyUsv)]
                if usv:
                    assert was_awaiting and isinstance(event, ms.OperatorConfirm)
                    assert len(usv) == 1


NADIR = np.array([[1.0, 0, 0], [0, -1.0, 0], [0, 0, -1.0]])


def make_geo(n_poses=30, fps=10.0):
    intr = gl.CameraIntrinsics(f=600.0, cx_pp=320.0, cy_pp=240.0, width=640, height=480)
    poses = tuple(
        gl.UavPose(i / fps, (0.0, 0.0, 50.0), np.eye(3)) for i in range(n_poses)
    )
    return ms.GeoContext(
        intrinsics=intr,
        extrinsics=gl.Extrinsics(NADIR),
        poses=poses,
        sync_tolerance=0.05,
        target_height=1.0,
    )


class TestAccumulateFix:
    def test_happy_path(self):
        geo = make_geo()
        fix, skip = ms.accumulate_fix(report(Verdict.TARGET, frame_id=3), 0.3, geo)
        assert skip is None
        assert fix.frame_id == 3
        # Center pixel under a nadir camera maps straight down.
        assert fix.x == pytest.approx(0.0, abs=1e-9)
        assert fix.y == pytest.approx(0.0, abs=1e-9)

    def test_off_center_pixel_displaces_fix(self):
        geo = make_geo()
        fix, _ = ms.accumulate_fix(report(Verdict.TARGET, cx=0.75), 0.0, geo)
        # 160 px off center at f=600 from 49 m above the plane: 49*160/600.
        assert fix.x == pytest.approx(49.0 * 160.0 / 600.0, rel=1e-9)

    def test_no_pose_skips(self):
        geo = make_geo(n_poses=1)
        fix, skip = ms.accumulate_fix(report(Verdict.TARGET), 99.0, geo)
        assert fix is None and skip == "no_pose"


class TestMissionRunner:
    def _runner(self, **kwargs):
        runner = ms.MissionRunner(geo=make_geo(n_poses=100), **kwargs)
        runner.handle_event(ms.StartSearch())
        return runner

    def _frame(self, runner, frame_id, verdict=Verdict.TARGET):
        runner.note_frame_timestamp(frame_id, frame_id / 10.0)
        return runner.handle_event(
            ms.FrameProcessed((report(verdict, 0.1, frame_id),))
        )

    def test_fixes_accumulate_while_awaiting(self):
        runner = self._runner()
        self._frame(runner, 0)
        assert isinstance(runner.state, ms.AwaitingConfirmation)
        for i in range(1, 5):
            actions = self._frame(runner, i)
            assert any(isinstance(a, ms.EmitFix) for a in actions)
        assert len(runner.current_fixes()) == 5

    def test_reject_clears_aggregate(self):
        runner = self._runner()
        for i in range(4):
            self._frame(runner, i)
        assert len(runner.current_fixes()) == 4
        runner.handle_event(ms.OperatorReject())
        assert runner.state == ms.Search()
        assert runner.current_fixes() == ()
        assert runner.current_aggregate().count == 0
        # A fresh candidate starts a fresh aggregate.
        self._frame(runner, 10)
        self._frame(runner, 11)
        assert len(runner.current_fixes()) == 2
        assert {f.frame_id for f in runner.current_fixes()} == {10, 11}

    def test_confirm_flow_continues_streaming(self):
        runner = self._runner()
        for i in range(3):
            self._frame(runner, i)
        actions = runner.handle_event(ms.OperatorConfirm())
        assert isinstance(runner.state, ms.Confirmed)
        assert any(isinstance(a, ms.NotifyUsv) for a in actions)
        self._frame(runner, 7)
        assert len(runner.current_fixes()) == 4
        assert runner.state.aggregate.count == 4

    def test_non_target_reports_do_not_accumulate(self):
        runner = self._runner()
        self._frame(runner, 0)
        self._frame(runner, 1, verdict=Verdict.POSSIBLE_TARGET)
        assert len(runner.current_fixes()) == 1

    def test_skip_counter_on_missing_pose(self):
        runner = self._runner()
        self._frame(runner, 0)
        runner.note_frame_timestamp(55, 999.0)  # far outside the pose buffer
        runner.handle_event(ms.FrameProcessed((report(Verdict.TARGET, 0.1, 55),)))
        assert runner.skip_counts.get("no_pose") == 1
        assert len(runner.current_fixes()) == 1

    def test_aggregate_count_matches_valid_frames(self):
        runner = self._runner()
        valid = 0
        for i in range(40):
            verdict = Verdict.TARGET if i % 3 != 2 else Verdict.NOT_TARGET
            runner.note_frame_timestamp(i, i / 10.0)
            runner.handle_event(ms.FrameProcessed((report(verdict, 0.1, i),)))
            if verdict == Verdict.TARGET and isinstance(
                runner.state, (ms.AwaitingConfirmation, ms.Confirmed)
            ):
                valid += 1
        assert len(runner.current_fixes()) == valid

    def test_pending_id_tracks_notify(self):
        runner = self._runner()
        self._frame(runner, 0)
        assert runner.pending_id is not None
        runner.handle_event(ms.OperatorReject())
        assert runner.pending_id is None

    def test_event_log_sequencing(self):
        runner = self._runner()
        self._frame(runner, 0)
        seqs = [e["seq"] for e in runner.events]
        assert seqs == sorted(seqs)
        assert len(set(seqs)) == len(seqs)
        kinds = {e["type"] for e in runner.events}
        assert kinds == {"state", "report"}
