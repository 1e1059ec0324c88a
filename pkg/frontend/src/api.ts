/**
 * Typed client for the survey service. The fetch implementation is
 * injectable so the flow logic can be unit-tested without a server and
 * driven from node for integration runs.
 */

import type {
  Choice,
  ChoiceResponse,
  CreateSessionResponse,
  QuestionResponse,
  StateResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
    public path: string,
  ) {
    super(`${path} -> ${status}: ${detail}`);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && body.detail !== undefined) {
          detail =
            typeof body.detail === "string"
              ? body.detail
              : JSON.stringify(body.detail);
        }
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, detail, path);
    }
    return (await resp.json()) as T;
  }

  createSession(
    attributes: string[],
    config: Record<string, unknown> = {},
  ): Promise<CreateSessionResponse> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ schema: { attributes }, config }),
    });
  }

  async addRespondent(sessionId: string, covariates?: number[]): Promise<string> {
    const body = await this.request<{ respondent_id: string }>(
      `/sessions/${sessionId}/respondents`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ covariates: covariates ?? null }),
      },
    );
    return body.respondent_id;
  }

  nextQuestion(sessionId: string, respondentId: string): Promise<QuestionResponse> {
    return this.request(`/sessions/${sessionId}/respondents/${respondentId}/question`);
  }

  submitChoice(
    sessionId: string,
    respondentId: string,
    token: string,
    choice: Choice,
  ): Promise<ChoiceResponse> {
    return this.request(`/sessions/${sessionId}/respondents/${respondentId}/choice`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ question_token: token, choice }),
    });
  }

  state(sessionId: string): Promise<StateResponse> {
    return this.request(`/sessions/${sessionId}/state`);
  }

  async exportLog(sessionId: string): Promise<string> {
    const resp = await this.fetchImpl(`${this.baseUrl}/sessions/${sessionId}/export`);
    if (!resp.ok) throw new ApiError(resp.status, resp.statusText, "/export");
    return resp.text();
  }
}
