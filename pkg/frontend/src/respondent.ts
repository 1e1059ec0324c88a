/**
 * Respondent flow: fetch question, render, capture one forced choice,
 * submit, repeat until the quota is answered.
 *
 * The machine owns all protocol quirks so the DOM layer stays dumb:
 * duplicate clicks are swallowed while a submission is in flight (the
 * server is idempotent anyway), a conflict on fetch means the server
 * already holds our outstanding question and ships it back in the error
 * detail, and transient network failures retry against server state.
 */

import { ApiClient, ApiError } from "./api.js";
import type { Choice, ChoiceResponse, QuestionResponse } from "./types.js";

export interface QuestionView {
  token: string;
  answered: number;
  total: number;
  rows: {
    label: string;
    left: number;
    right: number;
    differs: boolean;
  }[];
}

export function toQuestionView(q: QuestionResponse): QuestionView {
  return {
    token: q.question_token,
    answered: q.answered,
    total: q.n_q,
    rows: q.attribute_labels.map((label, i) => ({
      label,
      left: q.z1[i],
      right: q.z2[i],
      differs: q.z1[i] !== q.z2[i],
    })),
  };
}

export interface FlowEvents {
  onQuestion?: (view: QuestionView) => void;
  onProgress?: (answered: number, total: number) => void;
  onDone?: () => void;
  onError?: (message: string) => void;
}

const RETRY_DELAY_MS = 500;

export class RespondentFlow {
  private current: QuestionView | null = null;
  private submitting = false;
  private finished = false;

  constructor(
    private api: ApiClient,
    private sessionId: string,
    private respondentId: string,
    private events: FlowEvents = {},
    private maxRetries = 3,
  ) {}

  get isDone(): boolean {
    return this.finished;
  }

  get question(): QuestionView | null {
    return this.current;
  }

  /** Fetch the next (or outstanding) question and surface it. */
  async begin(): Promise<QuestionView | null> {
    try {
      const q = await this.fetchQuestion();
      if (q === null) {
        this.markDone();
        return null;
      }
      this.current = toQuestionView(q);
      this.events.onQuestion?.(this.current);
      this.events.onProgress?.(this.current.answered, this.current.total);
      return this.current;
    } catch (err) {
      this.events.onError?.(String(err));
      throw err;
    }
  }

  /**
   * Submit the forced choice for the question on screen. Returns null when
   * the click was suppressed (nothing on screen or a submit already in
   * flight); otherwise resolves once the next question is up or the quota
   * is reached.
   */
  async choose(choice: Choice): Promise<ChoiceResponse | null> {
    if (this.submitting || this.finished || this.current === null) {
      return null;
    }
    this.submitting = true;
    const token = this.current.token;
    const total = this.current.total;
    try {
      const ack = await this.submitWithRetry(token, choice);
      this.current = null;
      this.events.onProgress?.(ack.answered, total);
      if (ack.done) {
        this.markDone();
      } else {
        this.submitting = false;
        await this.begin();
        return ack;
      }
      return ack;
    } finally {
      this.submitting = false;
    }
  }

  private currentTotal(): number {
    return this.current?.total ?? 0;
  }

  private markDone(): void {
    if (!this.finished) {
      this.finished = true;
      this.events.onDone?.();
    }
  }

  private async fetchQuestion(): Promise<QuestionResponse | null> {
    for (let attempt = 0; ; attempt++) {
      try {
        return await this.api.nextQuestion(this.sessionId, this.respondentId);
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          const outstanding = this.outstandingFromConflict(err);
          if (outstanding) return outstanding;
          return null; // quota reached
        }
        if (attempt >= this.maxRetries) throw err;
        await delay(RETRY_DELAY_MS);
      }
    }
  }

  private outstandingFromConflict(err: ApiError): QuestionResponse | null {
    // detail is either a plain string (respondent done) or carries the
    // outstanding question to resume with
    try {
      const parsed = JSON.parse(err.detail);
      if (parsed && parsed.question) return parsed.question as QuestionResponse;
    } catch {
      /* plain-string detail */
    }
    return null;
  }

  private async submitWithRetry(token: string, choice: Choice): Promise<ChoiceResponse> {
    for (let attempt = 0; ; attempt++) {
      try {
        return await this.api.submitChoice(
          this.sessionId,
          this.respondentId,
          token,
          choice,
        );
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          // stale token: drop the stale view and resync with the server
          const q = await this.fetchQuestion();
          if (q === null) {
            return { ok: true, step: 0, answered: this.currentTotal(), done: true, duplicate: true };
          }
          this.current = toQuestionView(q);
          this.events.onQuestion?.(this.current);
          token = this.current.token;
          continue;
        }
        if (attempt >= this.maxRetries) throw err;
        await delay(RETRY_DELAY_MS);
      }
    }
  }
}

function delay(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
