"""Human-in-the-loop search mission: a pure state machine plus a runner.

The state machine (`step`) is a total deterministic function over
(state, event); invalid pairs are inert. The runner owns the side effects:
it serializes events, accumulates geolocation fixes for the pending or
confirmed candidate, and records candidate history for the operator API.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

from . import geoloc
from .geoloc import CameraIntrinsics, Extrinsics, FixAggregate, TargetFix, UavPose
from .identify import CandidateReport, Verdict
from .errors import BelowPlane, NoIntersection, NoPose

log = logging.getLogger(__name__)


# --- States -------------------------------------------------------------------

@dataclass(frozen=True)
class Idle:
    pass


@dataclass(frozen=True)
class Search:
    pass


@dataclass(frozen=True)
class AwaitingConfirmation:
    candidate: CandidateReport
    fixes: Tuple[TargetFix, ...] = ()


@dataclass(frozen=True)
class Confirmed:
    candidate: CandidateReport
    aggregate: FixAggregate
    fixes: Tuple[TargetFix, ...] = ()


MissionState = Union[Idle, Search, AwaitingConfirmation, Confirmed]


def state_name(state: MissionState) -> str:
    return {
        Idle: "idle",
        Search: "search",
        AwaitingConfirmation: "awaiting_confirmation",
        Confirmed: "confirmed",
    }[type(state)]


# --- Events -------------------------------------------------------------------

@dataclass(frozen=True)
class StartSearch:
    pass


@dataclass(frozen=True)
class FrameProcessed:
    reports: Tuple[CandidateReport, ...]

    def __post_init__(self):
        object.__setattr__(self, "reports", tuple(self.reports))


@dataclass(frozen=True)
class OperatorConfirm:
    pass


@dataclass(frozen=True)
class OperatorReject:
    pass


@dataclass(frozen=True)
class Abort:
    pass


MissionEvent = Union[StartSearch, FrameProcessed, OperatorConfirm, OperatorReject, Abort]


# --- Actions ------------------------------------------------------------------

@dataclass(frozen=True)
class NotifyOperator:
    report: CandidateReport


@dataclass(frozen=True)
class EmitFix:
    fix: TargetFix


@dataclass(frozen=True)
class NotifyUsv:
    aggregate: FixAggregate


@dataclass(frozen=True)
class ResetFlags:
    pass


@dataclass(frozen=True)
class NoOp:
    pass


MissionAction = Union[NotifyOperator, EmitFix, NotifyUsv, ResetFlags, NoOp]


def _best_target(reports: Sequence[CandidateReport]) -> Optional[CandidateReport]:
    targets = [r for r in reports if r.verdict == Verdict.TARGET]
    if not targets:
        return None
    return min(targets, key=lambda r: r.d_hist if r.d_hist is not None else 1.0)


def step(state: MissionState, event: MissionEvent) -> Tuple[MissionState, List[MissionAction]]:
    """Deterministic transition table; invalid pairs are inert with NoOp."""
    if isinstance(event, Abort):
        return Idle(), []

    if isinstance(state, Idle):
        if isinstance(event, StartSearch):
            return Search(), []

    elif isinstance(state, Search):
        if isinstance(event, FrameProcessed):
            best = _best_target(event.reports)
            if best is not None:
                return AwaitingConfirmation(candidate=best), [NotifyOperator(best)]
            return state, []

    elif isinstance(state, AwaitingConfirmation):
        if isinstance(event, OperatorConfirm):
            agg = (
                geoloc.aggregate_fixes(state.fixes)
                if state.fixes
                else FixAggregate.empty()
            )
            return (
                Confirmed(candidate=state.candidate, aggregate=agg, fixes=state.fixes),
                [NotifyUsv(agg)],
            )
        if isinstance(event, OperatorReject):
            return Search(), [ResetFlags()]
        if isinstance(event, FrameProcessed):
            return state, []

    elif isinstance(state, Confirmed):
        if isinstance(event, FrameProcessed):
            return state, []

    log.warning("inert transition: %s + %s", state_name(state), type(event).__name__)
    return state, [NoOp()]


@dataclass(frozen=True)
class GeoContext:
    """Everything needed to turn a report into a world-frame fix."""

    intrinsics: CameraIntrinsics
    extrinsics: Extrinsics
    poses: Tuple[UavPose, ...]
    sync_tolerance: float = 0.1
    target_height: float = 1.0


def accumulate_fix(
    report: CandidateReport,
    frame_timestamp: float,
    geo: GeoContext,
) -> Tuple[Optional[TargetFix], Optional[str]]:
    """Geolocate one report; returns (fix, None) or (None, skip_reason)."""
    det = report.detection
    px = det.cx * geo.intrinsics.width
    py = det.cy * geo.intrinsics.height
    try:
        pose = geoloc.pose_lookup(frame_timestamp, geo.poses, geo.sync_tolerance)
    except NoPose:
        return None, "no_pose"
    ray_cam = geoloc.pixel_ray(geo.intrinsics, px, py)
    ray_world = geoloc.ray_to_world(ray_cam, geo.extrinsics, pose)
    try:
        x, y = geoloc.intersect_plane(pose.position, ray_world, geo.target_height)
    except NoIntersection:
        return None, "no_intersection"
    except BelowPlane:
        return None, "below_plane"
    return TargetFix(x=x, y=y, timestamp=frame_timestamp, frame_id=report.frame_id), None


class MissionRunner:
    """Single-writer event loop around the state machine.

    Serializes all events, performs fix accumulation for the pending or
    confirmed candidate, applies ResetFlags semantics, and keeps a capped
    candidate history for the operator API.
    """

    def __init__(
        self,
        geo: Optional[GeoContext] = None,
        accumulate_verdicts: Sequence[Verdict] = (Verdict.TARGET,),
        history_cap: int = 256,
    ):
        self.state: MissionState = Idle()
        self.geo = geo
        self.accumulate_verdicts = tuple(accumulate_verdicts)
        self.history_cap = history_cap
        self.candidates: List[Tuple[int, CandidateReport]] = []  # (candidate_id, report)
        self.skip_counts: Dict[str, int] = {}
        self.pending_id: Optional[int] = None
        self.events: List[dict] = []  # transition / report log for the event stream
        self._timestamps: Dict[int, float] = {}
        self._report_ids: Dict[int, int] = {}  # id(report) -> candidate_id
        self._next_candidate_id = 1
        self._seq = 0

    # -- event handling --------------------------------------------------------

    def note_frame_timestamp(self, frame_id: int, timestamp: float) -> None:
        self._timestamps[frame_id] = timestamp

    def handle_event(self, event: MissionEvent) -> List[MissionAction]:
        if isinstance(event, FrameProcessed):
            for report in event.reports:
                self._remember_candidate(report)

        before = self.state
        state, actions = step(self.state, event)
        self.state = state
        actions = list(actions)
        if not isinstance(self.state, AwaitingConfirmation):
            self.pending_id = None
        for action in actions:
            if isinstance(action, NotifyOperator):
                self.pending_id = self._report_ids.get(id(action.report))

        if isinstance(event, FrameProcessed):
            actions.extend(self._accumulate(event))

        if type(before) is not type(self.state):
            self._log_transition(before, self.state)
        return actions

    def _accumulate(self, event: FrameProcessed) -> List[MissionAction]:
        if self.geo is None or not isinstance(self.state, (AwaitingConfirmation, Confirmed)):
            return []
        emitted: List[MissionAction] = []
        for report in event.reports:
            if report.verdict not in self.accumulate_verdicts:
                continue
            ts = self._timestamps.get(report.frame_id, 0.0)
            fix, skip = accumulate_fix(report, ts, self.geo)
            if fix is None:
                self.skip_counts[skip] = self.skip_counts.get(skip, 0) + 1
                continue
            self._append_fix(fix)
            emitted.append(EmitFix(fix))
        return emitted

    def _append_fix(self, fix: TargetFix) -> None:
        if isinstance(self.state, AwaitingConfirmation):
            self.state = replace(self.state, fixes=self.state.fixes + (fix,))
        elif isinstance(self.state, Confirmed):
            fixes = self.state.fixes + (fix,)
            self.state = replace(
                self.state, fixes=fixes, aggregate=geoloc.aggregate_fixes(fixes)
            )

    # -- bookkeeping -------------------------------------------------------------

    def _remember_candidate(self, report: CandidateReport) -> int:
        candidate_id = self._next_candidate_id
        self._next_candidate_id += 1
        self.candidates.append((candidate_id, report))
        self._report_ids[id(report)] = candidate_id
        if len(self.candidates) > self.history_cap:
            evicted = self.candidates[: -self.history_cap]
            self.candidates = self.candidates[-self.history_cap :]
            for _, old in evicted:
                self._report_ids.pop(id(old), None)
        self._seq += 1
        self.events.append(
            {"seq": self._seq, "type": "report", "candidate_id": candidate_id}
        )
        return candidate_id

    def _log_transition(self, before: MissionState, after: MissionState) -> None:
        self._seq += 1
        self.events.append(
            {
                "seq": self._seq,
                "type": "state",
                "from": state_name(before),
                "to": state_name(after),
            }
        )

    # -- snapshots ---------------------------------------------------------------

    def current_fixes(self) -> Tuple[TargetFix, ...]:
        if isinstance(self.state, (AwaitingConfirmation, Confirmed)):
            return self.state.fixes
        return ()

    def current_aggregate(self) -> FixAggregate:
        fixes = self.current_fixes()
        if not fixes:
            return FixAggregate.empty()
        return geoloc.aggregate_fixes(fixes)

    def pending_candidate(self) -> Optional[CandidateReport]:
        if isinstance(self.state, AwaitingConfirmation):
            return self.state.candidate
        return None
