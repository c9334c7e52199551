// Mission view state: a reducer over service snapshots and pushed events.
// Candidates are deduplicated by candidate_id and capped to the most recent.

import type {
  CandidateView,
  EventPayload,
  MissionView,
  StatePayload,
} from "./types.js";

export const CANDIDATE_CAP = 50;

export class MissionStore {
  private view: MissionView = {
    stateName: "disconnected",
    pending: null,
    aggregate: null,
    fixes: [],
    templates: [],
    thresholds: null,
    candidates: [],
    lastSeq: 0,
    connected: false,
    stale: false,
    eventLog: [],
  };
  private listeners: Array<(view: MissionView) => void> = [];

  subscribe(listener: (view: MissionView) => void): void {
    this.listeners.push(listener);
  }

  snapshot(): MissionView {
    return {
      ...this.view,
      fixes: [...this.view.fixes],
      candidates: [...this.view.candidates],
      eventLog: [...this.view.eventLog],
    };
  }

  private emit(): void {
    const snap = this.snapshot();
    for (const listener of this.listeners) listener(snap);
  }

  applyState(payload: StatePayload): void {
    this.view.stateName = payload.state;
    this.view.pending = payload.pending;
    this.view.aggregate = payload.aggregate;
    this.view.fixes = payload.fixes;
    this.view.templates = payload.templates ?? [];
    this.view.thresholds = payload.thresholds ?? null;
    this.view.lastSeq = Math.max(this.view.lastSeq, payload.seq ?? 0);
    if (payload.pending) this.upsertCandidate(payload.pending);
    this.emit();
  }

  applyEvent(event: EventPayload): void {
    // The stream replays from `since`; drop anything already applied.
    if (event.seq <= this.view.lastSeq) return;
    this.view.lastSeq = event.seq;
    if (event.type === "report" && event.report) {
      this.upsertCandidate(event.report);
      this.view.eventLog.push(
        `#${event.seq} report ${event.report.verdict} (frame ${event.report.frame_id})`,
      );
    } else if (event.type === "state") {
      this.view.eventLog.push(`#${event.seq} state ${event.from} -> ${event.to}`);
      if (event.snapshot) {
        this.applyState({ ...event.snapshot, seq: event.seq });
        return; // applyState already emitted
      }
    }
    if (this.view.eventLog.length > 200) {
      this.view.eventLog = this.view.eventLog.slice(-200);
    }
    this.emit();
  }

  replayCandidates(candidates: CandidateView[]): void {
    for (const candidate of candidates) this.upsertCandidate(candidate);
    this.emit();
  }

  setConnected(connected: boolean): void {
    this.view.connected = connected;
    if (!connected) this.view.stale = true;
    this.emit();
  }

  setStale(stale: boolean): void {
    if (this.view.stale !== stale) {
      this.view.stale = stale;
      this.emit();
    }
  }

  lastCandidateId(): number {
    let last = 0;
    for (const candidate of this.view.candidates) {
      last = Math.max(last, candidate.candidate_id);
    }
    return last;
  }

  private upsertCandidate(candidate: CandidateView): void {
    const existing = this.view.candidates.findIndex(
      (c) => c.candidate_id === candidate.candidate_id,
    );
    if (existing >= 0) {
      this.view.candidates[existing] = candidate;
      return;
    }
    this.view.candidates.push(candidate);
    this.view.candidates.sort((a, b) => a.candidate_id - b.candidate_id);
    if (this.view.candidates.length > CANDIDATE_CAP) {
      this.view.candidates = this.view.candidates.slice(-CANDIDATE_CAP);
    }
  }
}
