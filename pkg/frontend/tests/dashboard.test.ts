import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import {
  DashboardPoller,
  HIGHLIGHT_THRESHOLD,
  certaintyOf,
  deriveDashboard,
} from "../src/dashboard.js";
import type { StateResponse } from "../src/types.js";

function stateFixture(overrides: Partial<StateResponse> = {}): StateResponse {
  return {
    session_id: "s1",
    mode: "single",
    status: "active",
    k: 3,
    attribute_labels: ["a", "b", "c"],
    n_q: 10,
    respondent_count: 4,
    respondents_done: 1,
    question_count: 17,
    human_answers: 15,
    pi: [0.5, 0.96, 0.04],
    certainty: [0, 0.92, 0.92],
    extracted_product: [0, 1, 0],
    pi_trace: [
      { step: 0, pi: [0.5, 0.5, 0.5] },
      { step: 10, pi: [0.5, 0.9, 0.2] },
      { step: 17, pi: [0.5, 0.96, 0.04] },
    ],
    ...overrides,
  };
}

describe("certainty", () => {
  it("is |2 pi - 1|", () => {
    expect(certaintyOf(0.5)).toBe(0);
    expect(certaintyOf(1)).toBe(1);
    expect(certaintyOf(0)).toBe(1);
    expect(certaintyOf(0.75)).toBeCloseTo(0.5, 12);
  });
});

describe("deriveDashboard", () => {
  it("flags attributes above the highlight threshold", () => {
    const view = deriveDashboard(stateFixture());
    expect(view.attributes.map((a) => a.decided)).toEqual([false, true, true]);
    expect(view.attributes[1].certainty).toBeGreaterThanOrEqual(HIGHLIGHT_THRESHOLD);
    expect(view.attributes[0].certainty).toBe(0);
  });

  it("carries the extracted product and counters through", () => {
    const view = deriveDashboard(stateFixture());
    expect(view.extractedProduct).toEqual([0, 1, 0]);
    expect(view.questionCount).toBe(17);
    expect(view.humanAnswers).toBe(15);
    expect(view.attributes.map((a) => a.bit)).toEqual([0, 1, 0]);
  });

  it("builds one series per attribute from the trace", () => {
    const view = deriveDashboard(stateFixture());
    expect(view.series).toHaveLength(3);
    expect(view.series[1].points.map((p) => p.value)).toEqual([0.5, 0.9, 0.96]);
    expect(view.series[2].points.map((p) => p.step)).toEqual([0, 10, 17]);
  });

  it("tolerates policy-mode states without pi", () => {
    const view = deriveDashboard(
      stateFixture({ pi: null, certainty: null, extracted_product: null, pi_trace: null }),
    );
    expect(view.attributes.every((a) => a.pi === 0.5)).toBe(true);
    expect(view.extractedProduct).toEqual([]);
    expect(view.series.every((s) => s.points.length === 0)).toBe(true);
  });
});

describe("poller", () => {
  function fetchReturning(status: number, body: unknown) {
    let calls: { url: string; method: string }[] = [];
    const fetchImpl = async (url: string, init?: RequestInit) => {
      calls.push({ url, method: init?.method ?? "GET" });
      return new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      });
    };
    return { fetchImpl, calls };
  }

  it("delivers derived views and never mutates", async () => {
    const { fetchImpl, calls } = fetchReturning(200, stateFixture());
    const api = new ApiClient("http://mock", fetchImpl);
    let got: unknown = null;
    const poller = new DashboardPoller(api, "s1", { onUpdate: (v) => (got = v) }, 10_000);
    await poller.pollOnce();
    expect(got).not.toBeNull();
    expect(calls).toHaveLength(1);
    expect(calls[0].method).toBe("GET");
    expect(calls[0].url).toContain("/sessions/s1/state");
  });

  it("routes 404 to the session picker handler", async () => {
    const { fetchImpl } = fetchReturning(404, { detail: "unknown session" });
    const api = new ApiClient("http://mock", fetchImpl);
    let missing = false;
    const poller = new DashboardPoller(
      api, "ghost",
      { onUpdate: () => undefined, onMissing: () => (missing = true) },
      10_000,
    );
    await poller.pollOnce();
    expect(missing).toBe(true);
  });
});
