"""Personalized product design with an amortized logit network.

Instead of one shared logit vector, a small network maps an individual's
covariates x to per-attribute logits phi = net(x), so heterogeneous
respondents are asked questions tailored to their own current product
distribution. Each answered question produces the same per-logit ascent
direction as the single-product survey; the chain rule pushes it through
the network, and plain SGD updates the shared parameters. Any unknown
per-individual scale factor is absorbed into the stepsize, which makes the
effective stepsize uneven across individuals; this is a known rough edge,
not something the update corrects for.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .core import PairedQuestion, gbs_gradient, sample_question, validate_logits
from .nn import Mlp
from .population import Population, answer

POLICY_HIDDEN = (64, 64)


@dataclass(frozen=True)
class AmortizedPolicy:
    """Covariates -> per-attribute Bernoulli logits."""

    net: Mlp

    @property
    def k(self) -> int:
        return self.net.out_dim

    @property
    def covariate_dim(self) -> int:
        return self.net.in_dim

    @staticmethod
    def init(covariate_dim: int, k: int, rng: np.random.Generator,
             hidden: tuple[int, ...] = POLICY_HIDDEN) -> "AmortizedPolicy":
        # tanh hidden layers keep activations bounded under per-question SGD
        # even for covariates on wildly different scales; the zeroed output
        # layer starts every individual at pi = 0.5 exactly
        net = Mlp.init([covariate_dim, *hidden, k], activation="tanh",
                       rng=rng, last_layer_zero=True)
        return AmortizedPolicy(net=net)

    def checkpoint_hash(self) -> str:
        h = hashlib.sha256()
        for w in self.net.weights:
            h.update(np.ascontiguousarray(w).tobytes())
        for b in self.net.biases:
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()[:16]

    def save(self, path) -> None:
        self.net.save(path)

    @staticmethod
    def load(path) -> "AmortizedPolicy":
        return AmortizedPolicy(net=Mlp.load(path))


def policy_logits(policy: AmortizedPolicy, x: np.ndarray) -> np.ndarray:
    """Forward pass to one individual's logit vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != policy.covariate_dim:
        raise ValueError(
            f"covariate vector has shape {x.shape}, expected ({policy.covariate_dim},)"
        )
    return validate_logits(policy.net.forward(x), policy.k)


def policy_products(policy: AmortizedPolicy, X: np.ndarray) -> np.ndarray:
    """Deterministic extraction for a covariate batch: 1[net(x) > 0]."""
    X = np.asarray(X, dtype=np.float64)
    out = policy.net.forward(X)
    return (out > 0).astype(np.int64)


def policy_gradient_step(
    policy: AmortizedPolicy,
    x: np.ndarray,
    question: PairedQuestion,
    y: int,
    eta: float,
) -> AmortizedPolicy:
    """Ascend the network parameters through one answered question.

    The upstream per-logit signal is exactly the paired-choice estimate
    (2y - 1)(u - 1/2); backprop distributes it over the parameters and the
    step is theta + eta * grad. Returns a new policy; inputs are untouched.
    """
    ghat = gbs_gradient(y, question.u, policy.k).g
    x = np.asarray(x, dtype=np.float64)
    _, cache = policy.net.forward_cached(x)
    grads, _ = policy.net.backward(cache, ghat)
    net = policy.net.copy()
    net.apply_gradients(grads, eta)
    return AmortizedPolicy(net=net)


@dataclass
class PolicyConfig:
    k: int
    covariate_dim: int
    respondents: int
    n_q: int = 10
    eta: float = 0.01
    seed: int = 0
    hidden: tuple[int, ...] = POLICY_HIDDEN

    def __post_init__(self):
        if self.k < 1 or self.covariate_dim < 1:
            raise ValueError("k and covariate_dim must be >= 1")
        if self.n_q < 1:
            raise ValueError("n_q must be >= 1")
        if self.respondents < 0:
            raise ValueError("respondent budget must be nonnegative")


@dataclass(frozen=True)
class PolicyTraceStep:
    step: int
    respondent_id: int
    covariate_hash: str
    u: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    y: int
    policy_hash: str

    def to_json_dict(self) -> dict:
        return {
            "step": self.step,
            "respondent_id": self.respondent_id,
            "covariate_hash": self.covariate_hash,
            "u": self.u.tolist(),
            "z1": self.z1.tolist(),
            "z2": self.z2.tolist(),
            "y": self.y,
            "policy_hash": self.policy_hash,
        }


@dataclass
class PolicyResult:
    config: PolicyConfig
    policy: AmortizedPolicy
    trace: list[PolicyTraceStep] = field(default_factory=list)


def covariate_hash(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(np.asarray(x, dtype=np.float64)).tobytes()).hexdigest()[:16]


def run_policy_learning(
    config: PolicyConfig,
    pop: Population,
    rng: np.random.Generator | None = None,
) -> PolicyResult:
    """Adaptive survey loop for the amortized policy.

    Respondents take turns; each question is generated from that
    individual's current logits net(x), answered by the population's logit
    choice rule, and immediately turned into a parameter update.
    """
    if any(r.x is None for r in pop.respondents[: config.respondents]):
        raise ValueError("policy learning needs covariates; use a mixture population")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    policy = AmortizedPolicy.init(config.covariate_dim, config.k, rng, config.hidden)
    trace: list[PolicyTraceStep] = []
    step = 0
    for i in range(config.respondents):
        r = pop.respondents[i]
        for _ in range(config.n_q):
            phi = policy_logits(policy, r.x)
            q = sample_question(phi, rng, step=step)
            y = answer(r, q.z1, q.z2, pop.context, rng)
            policy = policy_gradient_step(policy, r.x, q, y, config.eta)
            step += 1
            trace.append(
                PolicyTraceStep(
                    step=step,
                    respondent_id=i,
                    covariate_hash=covariate_hash(r.x),
                    u=q.u,
                    z1=q.z1,
                    z2=q.z2,
                    y=y,
                    policy_hash=policy.checkpoint_hash(),
                )
            )
    return PolicyResult(config=config, policy=policy, trace=trace)


def write_policy_trace_jsonl(trace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec.to_json_dict()) + "\n")
