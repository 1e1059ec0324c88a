/**
 * In-memory stand-in for the survey service, faithful to its protocol:
 * one pending question per respondent, token-checked idempotent submits,
 * outstanding question shipped inside 409 details.
 */

import type { FetchLike } from "../src/api.js";

export interface MockOptions {
  k?: number;
  nQ?: number;
  /** drop the response (network loss) for the nth fetch-question call */
  dropQuestionResponseAt?: number;
  /** fail submits with a 500 this many times before succeeding */
  failSubmits?: number;
}

export class MockServer {
  k: number;
  nQ: number;
  answered = 0;
  step = 0;
  submits = 0;
  questionFetches = 0;
  pending: { token: string; z1: number[]; z2: number[] } | null = null;
  applied = new Set<string>();
  private failSubmitsLeft: number;
  private dropAt: number;

  constructor(opts: MockOptions = {}) {
    this.k = opts.k ?? 3;
    this.nQ = opts.nQ ?? 5;
    this.dropAt = opts.dropQuestionResponseAt ?? -1;
    this.failSubmitsLeft = opts.failSubmits ?? 0;
  }

  private labels(): string[] {
    return Array.from({ length: this.k }, (_, i) => `attr_${i}`);
  }

  private questionBody() {
    return {
      question_token: this.pending!.token,
      z1: this.pending!.z1,
      z2: this.pending!.z2,
      attribute_labels: this.labels(),
      answered: this.answered,
      n_q: this.nQ,
    };
  }

  private json(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    if (url.endsWith("/question") && method === "GET") {
      this.questionFetches += 1;
      if (this.answered >= this.nQ) {
        return this.json(409, { detail: "respondent already answered all questions" });
      }
      if (this.pending !== null) {
        return this.json(409, {
          detail: { error: "unanswered question", question: this.questionBody() },
        });
      }
      const bit = this.step % 2;
      this.pending = {
        token: `tok-${this.step}`,
        z1: Array.from({ length: this.k }, (_, i) => (i + bit) % 2),
        z2: Array.from({ length: this.k }, (_, i) => (i + bit + 1) % 2),
      };
      if (this.questionFetches === this.dropAt) {
        throw new TypeError("network dropped");
      }
      return this.json(200, this.questionBody());
    }
    if (url.endsWith("/choice") && method === "POST") {
      const body = JSON.parse(String(init?.body));
      const token = body.question_token as string;
      if (this.applied.has(token)) {
        return this.json(200, {
          ok: true, step: this.step, answered: this.answered,
          done: this.answered >= this.nQ, duplicate: true,
        });
      }
      if (this.failSubmitsLeft > 0) {
        this.failSubmitsLeft -= 1;
        throw new TypeError("network dropped");
      }
      if (this.pending === null || this.pending.token !== token) {
        return this.json(409, { detail: "stale or unknown question token" });
      }
      this.submits += 1;
      this.applied.add(token);
      this.pending = null;
      this.step += 1;
      this.answered += 1;
      return this.json(200, {
        ok: true, step: this.step, answered: this.answered,
        done: this.answered >= this.nQ, duplicate: false,
      });
    }
    if (url.endsWith("/respondents") && method === "POST") {
      return this.json(200, { respondent_id: "r1" });
    }
    return this.json(404, { detail: `no route for ${method} ${url}` });
  };
}
