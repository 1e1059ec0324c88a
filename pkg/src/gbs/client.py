"""Thin HTTP client for the survey service, plus a simulated-respondent
driver that pushes a synthetic population through a live session.

The driver answers questions with the same logit choice rule the in-process
simulation uses, so a live session driven this way is statistically
identical to a local run; it exists to exercise the full HTTP path and to
feed demo sessions for the browser UI.
"""

from __future__ import annotations

from dataclasses import dataclass

import httpx
import numpy as np

from .population import Population, answer


class ServiceClientError(RuntimeError):
    pass


@dataclass
class SurveyClient:
    base_url: str
    timeout: float = 30.0

    def __post_init__(self):
        self._http = httpx.Client(base_url=self.base_url.rstrip("/"), timeout=self.timeout)

    def close(self) -> None:
        self._http.close()

    def _check(self, resp: httpx.Response) -> httpx.Response:
        if resp.status_code >= 400:
            raise ServiceClientError(
                f"{resp.request.method} {resp.request.url.path} -> {resp.status_code}: {resp.text}"
            )
        return resp

    def health(self) -> bool:
        try:
            return self._http.get("/healthz").status_code == 200
        except httpx.HTTPError:
            return False

    def create_session(self, attributes: list[str], config: dict | None = None) -> dict:
        body = {"schema": {"attributes": attributes}, "config": config or {}}
        return self._check(self._http.post("/sessions", json=body)).json()

    def add_respondent(self, session_id: str, covariates=None) -> str:
        body = {"covariates": None if covariates is None else list(covariates)}
        resp = self._check(self._http.post(f"/sessions/{session_id}/respondents", json=body))
        return resp.json()["respondent_id"]

    def next_question(self, session_id: str, rid: str) -> dict:
        return self._check(
            self._http.get(f"/sessions/{session_id}/respondents/{rid}/question")
        ).json()

    def submit_choice(self, session_id: str, rid: str, token: str, choice: str) -> dict:
        body = {"question_token": token, "choice": choice}
        return self._check(
            self._http.post(f"/sessions/{session_id}/respondents/{rid}/choice", json=body)
        ).json()

    def state(self, session_id: str, token: str | None = None) -> dict:
        headers = {"Authorization": f"Bearer {token}"} if token else None
        return self._check(
            self._http.get(f"/sessions/{session_id}/state", headers=headers)
        ).json()

    def export(self, session_id: str, token: str | None = None) -> str:
        headers = {"Authorization": f"Bearer {token}"} if token else None
        return self._check(
            self._http.get(f"/sessions/{session_id}/export", headers=headers)
        ).text


def drive_simulated_respondents(
    client: SurveyClient,
    session_id: str,
    pop: Population,
    n_respondents: int,
    n_q: int,
    rng: np.random.Generator,
    send_covariates: bool = False,
) -> dict:
    """Run ``n_respondents`` synthetic respondents through a live session.

    Each respondent is enrolled, then repeatedly fetches a question and
    submits the logit-rule choice until the service reports them done.
    Returns simple counters for reporting.
    """
    if n_respondents > len(pop):
        raise ValueError("population too small for the requested respondent count")
    answered = 0
    for i in range(n_respondents):
        r = pop.respondents[i]
        covariates = r.x if send_covariates else None
        rid = client.add_respondent(session_id, covariates)
        while True:
            q = client.next_question(session_id, rid)
            z1 = np.asarray(q["z1"], dtype=np.int64)
            z2 = np.asarray(q["z2"], dtype=np.int64)
            y = answer(r, z1, z2, pop.context, rng)
            ack = client.submit_choice(
                session_id, rid, q["question_token"], "z1" if y == 1 else "z2"
            )
            answered += 1
            if ack["done"]:
                break
    return {"respondents": n_respondents, "answers": answered}
