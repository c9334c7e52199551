// Operator decisions: at most one POST per pending candidate, no matter how
// often the button fires; a 409 means the candidate expired and the view
// should be refreshed from /api/state instead of retried.

import type { ApiClient, DecisionResult } from "./api.js";

export interface DecisionHooks {
  onApplied(result: DecisionResult): void;
  onExpired(): void;
  onError(err: unknown): void;
}

export class DecisionGate {
  private inFlight = false;
  private decided = new Set<number>();

  constructor(
    private readonly api: ApiClient,
    private readonly hooks: DecisionHooks,
  ) {}

  /** True when a submit for this candidate would issue a POST. */
  canSubmit(candidateId: number): boolean {
    return !this.inFlight && !this.decided.has(candidateId);
  }

  async submit(candidateId: number, decision: "confirm" | "reject"): Promise<void> {
    if (!this.canSubmit(candidateId)) return;
    this.inFlight = true;
    this.decided.add(candidateId);
    try {
      const result = await this.api.postDecision(candidateId, decision);
      if (result.status === 200) {
        this.hooks.onApplied(result);
      } else if (result.status === 409) {
        this.hooks.onExpired();
      } else {
        // Transient failure: allow a retry for this candidate.
        this.decided.delete(candidateId);
        this.hooks.onError(new Error(`decision failed: ${result.status}`));
      }
    } catch (err) {
      this.decided.delete(candidateId);
      this.hooks.onError(err);
    } finally {
      this.inFlight = false;
    }
  }
}
