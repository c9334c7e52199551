import { describe, expect, it } from "vitest";

import { ApiClient, type FetchLike } from "../src/api.js";
import { DecisionGate } from "../src/decision.js";

interface Call {
  url: string;
  body?: string;
}

function fetchStub(status: number, body: unknown, calls: Call[]): FetchLike {
  return async (url, init) => {
    calls.push({ url, body: init?.body });
    return { status, json: async () => body };
  };
}

function hooksRecorder() {
  const record = { applied: 0, expired: 0, errors: 0 };
  return {
    record,
    hooks: {
      onApplied: () => record.applied++,
      onExpired: () => record.expired++,
      onError: () => record.errors++,
    },
  };
}

describe("DecisionGate", () => {
  it("double submit issues exactly one POST", async () => {
    const calls: Call[] = [];
    const api = new ApiClient("http://svc", fetchStub(200, { state: "confirmed" }, calls));
    const { hooks, record } = hooksRecorder();
    const gate = new DecisionGate(api, hooks);
    await Promise.all([gate.submit(3, "confirm"), gate.submit(3, "confirm")]);
    await gate.submit(3, "confirm"); // and a later click, after settle
    expect(calls.length).toBe(1);
    expect(record.applied).toBe(1);
    expect(JSON.parse(calls[0].body ?? "{}")).toEqual({
      candidate_id: 3,
      decision: "confirm",
    });
  });

  it("409 reports expiry without retry", async () => {
    const calls: Call[] = [];
    const api = new ApiClient("http://svc", fetchStub(409, { error: "gone" }, calls));
    const { hooks, record } = hooksRecorder();
    const gate = new DecisionGate(api, hooks);
    await gate.submit(4, "reject");
    await gate.submit(4, "reject");
    expect(calls.length).toBe(1);
    expect(record.expired).toBe(1);
  });

  it("network failure allows a retry", async () => {
    const calls: Call[] = [];
    let failures = 1;
    const api = new ApiClient("http://svc", async (url, init) => {
      calls.push({ url, body: init?.body });
      if (failures-- > 0) throw new Error("offline");
      return { status: 200, json: async () => ({ state: "confirmed" }) };
    });
    const { hooks, record } = hooksRecorder();
    const gate = new DecisionGate(api, hooks);
    await gate.submit(5, "confirm");
    expect(record.errors).toBe(1);
    await gate.submit(5, "confirm");
    expect(calls.length).toBe(2);
    expect(record.applied).toBe(1);
  });

  it("a new candidate can be decided after the previous one", async () => {
    const calls: Call[] = [];
    const api = new ApiClient("http://svc", fetchStub(200, { state: "search" }, calls));
    const { hooks } = hooksRecorder();
    const gate = new DecisionGate(api, hooks);
    await gate.submit(1, "reject");
    await gate.submit(2, "reject");
    expect(calls.length).toBe(2);
  });
});
