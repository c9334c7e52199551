// Thin HTTP client; fetch is injectable so tests can record every request.

import type { CandidateView, StatePayload } from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export interface DecisionResult {
  status: number;
  state: StatePayload | null;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch as unknown as FetchLike,
  ) {}

  cropUrl(path: string): string {
    return this.baseUrl + path;
  }

  async getState(): Promise<StatePayload> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/state`);
    if (resp.status !== 200) throw new Error(`state fetch failed: ${resp.status}`);
    return (await resp.json()) as StatePayload;
  }

  async getCandidates(since: number): Promise<CandidateView[]> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/candidates?since=${since}`);
    if (resp.status !== 200) throw new Error(`candidate fetch failed: ${resp.status}`);
    return (await resp.json()) as CandidateView[];
  }

  async postDecision(
    candidateId: number,
    decision: "confirm" | "reject",
  ): Promise<DecisionResult> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/decision`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ candidate_id: candidateId, decision }),
    });
    if (resp.status === 200) {
      return { status: 200, state: (await resp.json()) as StatePayload };
    }
    return { status: resp.status, state: null };
  }
}
