// Live event subscription: WebSocket with reconnect/backoff, missed-report
// replay through GET /api/candidates?since, and a stale-state indicator
// when nothing has been heard for a while.

import type { ApiClient } from "./api.js";
import type { MissionStore } from "./store.js";
import type { EventPayload } from "./types.js";

export interface SocketLike {
  onmessage: ((event: { data: string }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface TimerLike {
  setTimeout(fn: () => void, ms: number): unknown;
  clearTimeout(handle: unknown): void;
}

export const STALE_AFTER_MS = 5000;
const BACKOFF_START_MS = 500;
const BACKOFF_MAX_MS = 10_000;

export class EventSubscription {
  private socket: SocketLike | null = null;
  private backoff = BACKOFF_START_MS;
  private staleTimer: unknown = null;
  private stopped = false;

  constructor(
    private readonly wsBaseUrl: string,
    private readonly api: ApiClient,
    private readonly store: MissionStore,
    private readonly makeSocket: SocketFactory,
    private readonly timers: TimerLike = {
      setTimeout: (fn, ms) => setTimeout(fn, ms),
      clearTimeout: (h) => clearTimeout(h as Parameters<typeof clearTimeout>[0]),
    },
  ) {}

  start(): void {
    this.stopped = false;
    this.connect();
  }

  stop(): void {
    this.stopped = true;
    if (this.staleTimer !== null) this.timers.clearTimeout(this.staleTimer);
    this.socket?.close();
  }

  private connect(): void {
    const since = this.store.snapshot().lastSeq;
    const socket = this.makeSocket(`${this.wsBaseUrl}/api/events?since=${since}`);
    this.socket = socket;

    socket.onopen = () => {
      this.backoff = BACKOFF_START_MS;
      this.store.setConnected(true);
      this.store.setStale(false);
      this.armStaleTimer();
      // Reports pushed while disconnected are replayed over HTTP and
      // deduplicated by candidate_id inside the store.
      void this.api
        .getCandidates(this.store.lastCandidateId())
        .then((candidates) => this.store.replayCandidates(candidates))
        .catch(() => undefined);
      void this.api
        .getState()
        .then((state) => this.store.applyState(state))
        .catch(() => undefined);
    };

    socket.onmessage = (message) => {
      this.armStaleTimer();
      this.store.setStale(false);
      const event = JSON.parse(message.data) as EventPayload;
      this.store.applyEvent(event);
    };

    const retry = () => {
      if (this.stopped) return;
      this.store.setConnected(false);
      this.timers.setTimeout(() => this.connect(), this.backoff);
      this.backoff = Math.min(this.backoff * 2, BACKOFF_MAX_MS);
    };
    socket.onclose = retry;
    socket.onerror = () => socket.close();
  }

  private armStaleTimer(): void {
    if (this.staleTimer !== null) this.timers.clearTimeout(this.staleTimer);
    this.staleTimer = this.timers.setTimeout(
      () => this.store.setStale(true),
      STALE_AFTER_MS,
    );
  }
}
