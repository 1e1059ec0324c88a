"""Event-sourced live survey sessions.

A session is a metadata JSON (schema, config, initial state) plus an
append-only JSONL event log; every state mutation is an event appended
before it is applied in memory, so current state is always
fold(update, initial_state, log). A crashed or restarted process replays
the log and lands on bit-identical logits; the stored per-event logits act
as a corruption check during replay.

Questions are drawn from counter-based random streams keyed by
(session seed, respondent index, per-respondent event count), which makes
live sessions deterministic for a given call sequence and lets a respondent
whose fetched-but-unanswered question was lost in a crash refetch the exact
same question. Each session serializes mutations through one lock; distinct
sessions are independent.
"""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import threading
import time
from dataclasses import dataclass

import numpy as np

from ..core import (
    extract_product,
    gbs_gradient,
    init_logits,
    profiles_from_uniform,
    sgd_update,
    sigmoid,
)
from ..policy import AmortizedPolicy, PairedQuestion, policy_gradient_step, policy_logits

MODE_SINGLE = "single"
MODE_POLICY = "policy"
STATUSES = ("active", "suspended", "completed")

# rng stream tags
_TAG_INIT = 101
_TAG_DRAW = 0
_TAG_COIN = 1

MAX_IDENTICAL_RESAMPLES = 50
PI_TRACE_POINTS = 200


class SessionError(Exception):
    """Base class; subclasses map to HTTP statuses in the API layer."""


class SessionNotFound(SessionError):
    pass


class RespondentNotFound(SessionError):
    pass


class ConflictError(SessionError):
    """Pending-question, stale-token, status, or quota violations.

    ``payload`` optionally carries the state the caller collided with (the
    outstanding question), so a client that lost a response can resume.
    """

    def __init__(self, message: str, payload: dict | None = None):
        super().__init__(message)
        self.payload = payload


@dataclass
class SessionConfig:
    mode: str = MODE_SINGLE
    eta: float = 1.0
    n_q: int = 10
    seed: int = 0
    skip_identical: bool = True
    phi_init_std: float = 0.05
    covariate_dim: int | None = None
    policy_hidden: tuple[int, ...] = (64, 64)
    require_token: bool = False
    fsync: bool = False

    def to_json_dict(self) -> dict:
        d = dict(self.__dict__)
        d["policy_hidden"] = list(self.policy_hidden)
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "SessionConfig":
        d = dict(d)
        d["policy_hidden"] = tuple(d.get("policy_hidden", (64, 64)))
        return SessionConfig(**d)


@dataclass
class _Respondent:
    rid: str
    index: int
    covariates: np.ndarray | None = None
    answered: int = 0  # human answers counted against n_q
    events: int = 0  # all recorded events incl. auto-answers; drives rng streams
    pending: dict | None = None  # {token, u, z1, z2}

    def done(self, n_q: int) -> bool:
        return self.answered >= n_q


def _question_token(session_id: str, rid: str, draw_index: int, u: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(f"{session_id}:{rid}:{draw_index}:".encode())
    h.update(np.ascontiguousarray(u).tobytes())
    return h.hexdigest()[:32]


class LiveSession:
    """One adaptive survey session; all mutations go through self._lock."""

    def __init__(self, session_id: str, labels: list[str], config: SessionConfig,
                 data_dir: str, token: str, create: bool):
        self.session_id = session_id
        self.labels = list(labels)
        self.k = len(labels)
        self.config = config
        self.token = token
        self.status = "active"
        self.data_dir = data_dir
        self._lock = threading.RLock()
        self._respondents: dict[str, _Respondent] = {}
        self._applied: dict[str, dict] = {}  # question token -> ack (idempotency)
        self.step_count = 0
        self._pi_history: list[tuple[int, list[float]]] = []

        self.phi: np.ndarray | None = None
        self.policy: AmortizedPolicy | None = None
        if create:
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, _TAG_INIT]))
            if config.mode == MODE_SINGLE:
                self.phi = init_logits(self.k, rng, config.phi_init_std)
                initial = {"phi": self.phi.tolist()}
            else:
                if not config.covariate_dim or config.covariate_dim < 1:
                    raise ValueError("policy mode requires covariate_dim >= 1")
                self.policy = AmortizedPolicy.init(
                    config.covariate_dim, self.k, rng, config.policy_hidden
                )
                initial = {"policy": self.policy.net.to_json_dict()}
            meta = {
                "session_id": session_id,
                "attributes": self.labels,
                "config": config.to_json_dict(),
                "token": token,
                "created_at": time.time(),
                "initial": initial,
            }
            with open(self._meta_path(), "w", encoding="utf-8") as fh:
                json.dump(meta, fh)
            open(self._events_path(), "a", encoding="utf-8").close()
            self._record_pi()

    # --- paths and log plumbing ----------------------------------------

    def _meta_path(self) -> str:
        return os.path.join(self.data_dir, f"{self.session_id}.meta.json")

    def _events_path(self) -> str:
        return os.path.join(self.data_dir, f"{self.session_id}.events.jsonl")

    def _append_event(self, record: dict) -> None:
        line = json.dumps(record)
        with open(self._events_path(), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            if self.config.fsync:
                os.fsync(fh.fileno())

    def export_text(self) -> str:
        with open(self._events_path(), "r", encoding="utf-8") as fh:
            return fh.read()

    # --- state transitions ----------------------------------------------

    def _record_pi(self) -> None:
        if self.phi is not None:
            self._pi_history.append((self.step_count, sigmoid(self.phi).tolist()))

    def _require_active(self) -> None:
        if self.status != "active":
            raise ConflictError(f"session is {self.status}")

    def add_respondent(self, covariates=None) -> str:
        with self._lock:
            self._require_active()
            if self.config.mode == MODE_POLICY:
                if covariates is None:
                    raise ValueError("policy-mode sessions need covariates per respondent")
                covariates = np.asarray(covariates, dtype=np.float64)
                if covariates.shape != (self.config.covariate_dim,):
                    raise ValueError(
                        f"covariates must have length {self.config.covariate_dim}"
                    )
            elif covariates is not None:
                covariates = np.asarray(covariates, dtype=np.float64)
            index = len(self._respondents)
            rid = f"r{index + 1}"
            self._append_event({
                "type": "respondent",
                "respondent_id": rid,
                "index": index,
                "covariates": None if covariates is None else covariates.tolist(),
                "ts": time.time(),
            })
            self._respondents[rid] = _Respondent(rid=rid, index=index, covariates=covariates)
            return rid

    def _respondent(self, rid: str) -> _Respondent:
        r = self._respondents.get(rid)
        if r is None:
            raise RespondentNotFound(f"unknown respondent {rid}")
        return r

    def _current_logits(self, r: _Respondent) -> np.ndarray:
        if self.config.mode == MODE_SINGLE:
            return self.phi
        return policy_logits(self.policy, r.covariates)

    def _draw_u(self, r: _Respondent) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.config.seed, r.index, r.events, _TAG_DRAW])
        )
        return rng.uniform(0.0, 1.0, size=self.k)

    def _fair_coin(self, r: _Respondent) -> int:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.config.seed, r.index, r.events, _TAG_COIN])
        )
        return int(rng.integers(0, 2))

    def _apply_choice(self, r: _Respondent, u: np.ndarray, z1: np.ndarray,
                      z2: np.ndarray, y: int, token: str, auto: bool) -> dict:
        """Append the event, then apply the update; returns the ack dict."""
        record = {
            "type": "choice",
            "respondent_id": r.rid,
            "step": self.step_count + 1,
            "u": u.tolist(),
            "z1": z1.tolist(),
            "z2": z2.tolist(),
            "y": int(y),
            "auto": bool(auto),
            "token": token,
            "ts": time.time(),
        }
        grad = gbs_gradient(int(y), u, self.k)
        if self.config.mode == MODE_SINGLE:
            new_phi = sgd_update(self.phi, grad, self.config.eta)
            record["phi_after"] = new_phi.tolist()
        else:
            q = PairedQuestion(u=u, z1=z1, z2=z2, step=self.step_count)
            new_policy = policy_gradient_step(self.policy, r.covariates, q,
                                              int(y), self.config.eta)
            record["policy_hash"] = new_policy.checkpoint_hash()
        self._append_event(record)
        if self.config.mode == MODE_SINGLE:
            self.phi = new_phi
        else:
            self.policy = new_policy
        self.step_count += 1
        r.events += 1
        if not auto:
            r.answered += 1
        self._record_pi()
        ack = {
            "ok": True,
            "step": self.step_count,
            "answered": r.answered,
            "done": r.done(self.config.n_q),
            "duplicate": False,
        }
        self._applied[token] = ack
        return ack

    def next_question(self, rid: str) -> dict:
        with self._lock:
            self._require_active()
            r = self._respondent(rid)
            if r.done(self.config.n_q):
                raise ConflictError(f"respondent {rid} already answered all questions")
            if r.pending is not None:
                raise ConflictError(
                    f"respondent {rid} has an unanswered question; submit it first",
                    payload=self._pending_view(r),
                )
            for attempt in range(MAX_IDENTICAL_RESAMPLES + 1):
                phi = self._current_logits(r)
                u = self._draw_u(r)
                z1, z2 = profiles_from_uniform(u, phi)
                identical = bool(np.array_equal(z1, z2))
                if identical and self.config.skip_identical and attempt < MAX_IDENTICAL_RESAMPLES:
                    # answer the uninformative pair with a fair coin, off-screen
                    y = self._fair_coin(r)
                    token = _question_token(self.session_id, rid, r.events, u)
                    self._apply_choice(r, u, z1, z2, y, token, auto=True)
                    continue
                token = _question_token(self.session_id, rid, r.events, u)
                r.pending = {"token": token, "u": u, "z1": z1, "z2": z2}
                return self._pending_view(r)
            raise AssertionError("unreachable")

    def _pending_view(self, r: _Respondent) -> dict:
        return {
            "question_token": r.pending["token"],
            "z1": r.pending["z1"].tolist(),
            "z2": r.pending["z2"].tolist(),
            "attribute_labels": self.labels,
            "answered": r.answered,
            "n_q": self.config.n_q,
        }

    def submit_choice(self, rid: str, token: str, choice: str) -> dict:
        with self._lock:
            r = self._respondent(rid)
            prior = self._applied.get(token)
            if prior is not None:
                ack = dict(prior)
                ack["duplicate"] = True
                return ack
            self._require_active()
            if r.pending is None or r.pending["token"] != token:
                raise ConflictError("stale or unknown question token")
            if choice not in ("z1", "z2"):
                raise ValueError("choice must be 'z1' or 'z2'")
            pending = r.pending
            y = 1 if choice == "z1" else 0
            ack = self._apply_choice(
                r, pending["u"], pending["z1"], pending["z2"], y, token, auto=False
            )
            r.pending = None
            return ack

    def set_status(self, status: str) -> None:
        if status not in STATUSES:
            raise ValueError(f"status must be one of {STATUSES}")
        with self._lock:
            if status == self.status:
                return
            self._append_event({"type": "status", "status": status, "ts": time.time()})
            self.status = status

    def snapshot(self) -> dict:
        with self._lock:
            done = sum(1 for r in self._respondents.values() if r.done(self.config.n_q))
            answered = sum(r.answered for r in self._respondents.values())
            out = {
                "session_id": self.session_id,
                "mode": self.config.mode,
                "status": self.status,
                "k": self.k,
                "attribute_labels": self.labels,
                "n_q": self.config.n_q,
                "respondent_count": len(self._respondents),
                "respondents_done": done,
                "question_count": self.step_count,
                "human_answers": answered,
                "pi": None,
                "certainty": None,
                "extracted_product": None,
                "pi_trace": None,
            }
            if self.config.mode == MODE_SINGLE:
                pi = sigmoid(self.phi)
                out["pi"] = pi.tolist()
                out["certainty"] = np.abs(2 * pi - 1).tolist()
                out["extracted_product"] = extract_product(self.phi).tolist()
                hist = self._pi_history
                stride = max(1, len(hist) // PI_TRACE_POINTS)
                sampled = hist[::stride]
                if sampled[-1] != hist[-1]:
                    sampled = sampled + [hist[-1]]
                out["pi_trace"] = [{"step": s, "pi": p} for s, p in sampled]
            return out

    # --- replay -----------------------------------------------------------

    @staticmethod
    def load(session_id: str, data_dir: str) -> "LiveSession":
        meta_path = os.path.join(data_dir, f"{session_id}.meta.json")
        if not os.path.exists(meta_path):
            raise SessionNotFound(f"unknown session {session_id}")
        with open(meta_path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        config = SessionConfig.from_json_dict(meta["config"])
        s = LiveSession(session_id, meta["attributes"], config, data_dir,
                        meta["token"], create=False)
        if config.mode == MODE_SINGLE:
            s.phi = np.asarray(meta["initial"]["phi"], dtype=np.float64)
        else:
            from ..nn import Mlp

            s.policy = AmortizedPolicy(net=Mlp.from_json_dict(meta["initial"]["policy"]))
        s._record_pi()
        events_path = s._events_path()
        if os.path.exists(events_path):
            with open(events_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        s._replay_event(json.loads(line))
        return s

    def _replay_event(self, rec: dict) -> None:
        kind = rec["type"]
        if kind == "respondent":
            cov = rec.get("covariates")
            self._respondents[rec["respondent_id"]] = _Respondent(
                rid=rec["respondent_id"],
                index=rec["index"],
                covariates=None if cov is None else np.asarray(cov, dtype=np.float64),
            )
        elif kind == "choice":
            r = self._respondent(rec["respondent_id"])
            u = np.asarray(rec["u"], dtype=np.float64)
            grad = gbs_gradient(int(rec["y"]), u, self.k)
            if self.config.mode == MODE_SINGLE:
                self.phi = sgd_update(self.phi, grad, self.config.eta)
                stored = np.asarray(rec["phi_after"], dtype=np.float64)
                if not np.array_equal(self.phi, stored):
                    raise ValueError(
                        f"corrupt event log: replayed logits diverge at step {rec['step']}"
                    )
            else:
                q = PairedQuestion(
                    u=u,
                    z1=np.asarray(rec["z1"], dtype=np.int64),
                    z2=np.asarray(rec["z2"], dtype=np.int64),
                    step=self.step_count,
                )
                self.policy = policy_gradient_step(
                    self.policy, r.covariates, q, int(rec["y"]), self.config.eta
                )
                if self.policy.checkpoint_hash() != rec["policy_hash"]:
                    raise ValueError(
                        f"corrupt event log: replayed policy diverges at step {rec['step']}"
                    )
            self.step_count += 1
            r.events += 1
            if not rec.get("auto", False):
                r.answered += 1
            self._applied[rec["token"]] = {
                "ok": True,
                "step": self.step_count,
                "answered": r.answered,
                "done": r.done(self.config.n_q),
                "duplicate": False,
            }
            self._record_pi()
        elif kind == "status":
            self.status = rec["status"]
        else:
            raise ValueError(f"unknown event type {kind!r}")


class SessionStore:
    """All sessions under one data directory; lazy disk loading."""

    def __init__(self, data_dir: str):
        self.data_dir = data_dir
        os.makedirs(data_dir, exist_ok=True)
        self._sessions: dict[str, LiveSession] = {}
        self._lock = threading.Lock()

    def create(self, labels: list[str], config: SessionConfig) -> LiveSession:
        if len(labels) < 1:
            raise ValueError("need at least one attribute")
        if len(set(labels)) != len(labels):
            raise ValueError("attribute names must be unique")
        session_id = secrets.token_hex(8)
        token = secrets.token_hex(16)
        session = LiveSession(session_id, labels, config, self.data_dir, token, create=True)
        with self._lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> LiveSession:
        with self._lock:
            s = self._sessions.get(session_id)
            if s is None:
                s = LiveSession.load(session_id, self.data_dir)
                self._sessions[session_id] = s
            return s

    def drop_cached(self, session_id: str) -> None:
        """Forget the in-memory copy (crash simulation / tests)."""
        with self._lock:
            self._sessions.pop(session_id, None)
