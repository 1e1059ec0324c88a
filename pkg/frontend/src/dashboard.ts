/**
 * Experimenter dashboard state: everything is derived from one
 * GET /sessions/{id}/state response; the dashboard never mutates the
 * experiment. Certainty per attribute is |2 pi - 1|, which runs from 0
 * (coin-flip attribute) to 1 (decided); attributes crossing
 * HIGHLIGHT_THRESHOLD get flagged.
 */

import { ApiClient } from "./api.js";
import type { StateResponse } from "./types.js";

export const HIGHLIGHT_THRESHOLD = 0.9;
export const DEFAULT_POLL_MS = 2000;

export interface AttributeRow {
  label: string;
  pi: number;
  certainty: number;
  decided: boolean;
  bit: number;
}

export interface DashboardView {
  sessionId: string;
  status: string;
  mode: string;
  respondentCount: number;
  respondentsDone: number;
  questionCount: number;
  humanAnswers: number;
  attributes: AttributeRow[];
  extractedProduct: number[];
  series: { label: string; points: { step: number; value: number }[] }[];
}

export function certaintyOf(pi: number): number {
  return Math.abs(2 * pi - 1);
}

export function deriveDashboard(state: StateResponse): DashboardView {
  const pi = state.pi ?? [];
  const attributes: AttributeRow[] = state.attribute_labels.map((label, i) => {
    const p = pi[i] ?? 0.5;
    const certainty = certaintyOf(p);
    return {
      label,
      pi: p,
      certainty,
      decided: certainty >= HIGHLIGHT_THRESHOLD,
      bit: state.extracted_product ? state.extracted_product[i] : 0,
    };
  });
  const trace = state.pi_trace ?? [];
  const series = state.attribute_labels.map((label, i) => ({
    label,
    points: trace.map((pt) => ({ step: pt.step, value: pt.pi[i] })),
  }));
  return {
    sessionId: state.session_id,
    status: state.status,
    mode: state.mode,
    respondentCount: state.respondent_count,
    respondentsDone: state.respondents_done,
    questionCount: state.question_count,
    humanAnswers: state.human_answers,
    attributes,
    extractedProduct: state.extracted_product ?? [],
    series,
  };
}

export interface PollerEvents {
  onUpdate: (view: DashboardView) => void;
  onMissing?: () => void; // 404: session unknown, show the picker
  onError?: (message: string) => void;
}

/** setInterval-based poller; a poll never mutates server state. */
export class DashboardPoller {
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private api: ApiClient,
    private sessionId: string,
    private events: PollerEvents,
    private intervalMs: number = DEFAULT_POLL_MS,
  ) {}

  async pollOnce(): Promise<void> {
    try {
      const state = await this.api.state(this.sessionId);
      this.events.onUpdate(deriveDashboard(state));
    } catch (err: any) {
      if (err && err.status === 404) {
        this.stop();
        this.events.onMissing?.();
      } else {
        this.events.onError?.(String(err));
      }
    }
  }

  start(): void {
    if (this.timer !== null) return;
    void this.pollOnce();
    this.timer = setInterval(() => void this.pollOnce(), this.intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }
}
