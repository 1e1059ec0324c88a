"""Core machinery for gradient-based paired-comparison surveys.

A product is a vector of K binary attributes. Instead of searching the 2^K
discrete profiles directly, the engine maintains K unconstrained logits phi;
pi = sigmoid(phi) parameterizes an independent-Bernoulli distribution over
profiles. Each survey question is built from one uniform draw u in (0,1)^K
through an antithetic pair of indicator profiles:

    z1 = 1[u > sigmoid(-phi)]        z2 = 1[u < sigmoid(phi)]

A respondent's single forced choice between z1 and z2 yields the stochastic
ascent direction (2y - 1)(u - 1/2), which the survey loop feeds into plain
SGD on phi. The two attributes differ at coordinate k with probability
1 - |2*pi_k - 1|, so undecided attributes are asked about most often and the
questions sharpen as the logits converge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

PAIRED_CHOICE = "paired-choice"
TWO_QUESTION = "two-question"
MARGINALIZED = "marginalized"


def sigmoid(x):
    """Numerically stable logistic function 1 / (1 + exp(-x)).

    Splits on the sign of x so that neither branch exponentiates a large
    positive number; safe for |x| well beyond 500. Accepts scalars or arrays.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def validate_logits(phi: np.ndarray, k: int | None = None) -> np.ndarray:
    """Check a logit vector: finite entries, optional length check."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 1:
        raise ValueError(f"logits must be a 1-D vector, got shape {phi.shape}")
    if k is not None and phi.shape[0] != k:
        raise ValueError(f"expected {k} logits, got {phi.shape[0]}")
    if not np.all(np.isfinite(phi)):
        raise ValueError("logits must be finite")
    return phi


def validate_profile(bits, k: int | None = None) -> np.ndarray:
    """Check a product profile: 1-D, entries exactly 0 or 1."""
    z = np.asarray(bits, dtype=np.int64)
    if z.ndim != 1:
        raise ValueError(f"profile must be a 1-D vector, got shape {z.shape}")
    if k is not None and z.shape[0] != k:
        raise ValueError(f"expected {k} attributes, got {z.shape[0]}")
    if not np.all((z == 0) | (z == 1)):
        raise ValueError("profile entries must be 0 or 1")
    return z


@dataclass(frozen=True)
class PairedQuestion:
    """One survey question: the uniform draw and the two derived profiles.

    ``u`` must be kept exactly as drawn; it is reused verbatim when the
    answer is turned into a gradient.
    """

    u: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    step: int = 0

    @property
    def identical(self) -> bool:
        return bool(np.array_equal(self.z1, self.z2))


@dataclass(frozen=True)
class GradientEstimate:
    g: np.ndarray
    kind: str


def profiles_from_uniform(u: np.ndarray, phi: np.ndarray):
    """Indicator profiles for a uniform draw: z1 = 1[u > sigmoid(-phi)],
    z2 = 1[u < sigmoid(phi)]. Broadcasts over leading axes of ``u``."""
    lo = sigmoid(-phi)
    hi = sigmoid(phi)
    z1 = (u > lo).astype(np.int64)
    z2 = (u < hi).astype(np.int64)
    return z1, z2


def sample_question(phi: np.ndarray, rng: np.random.Generator, step: int = 0) -> PairedQuestion:
    """Draw u ~ Uniform(0,1)^K and build the antithetic profile pair."""
    phi = validate_logits(phi)
    u = rng.uniform(0.0, 1.0, size=phi.shape[0])
    z1, z2 = profiles_from_uniform(u, phi)
    return PairedQuestion(u=u, z1=z1, z2=z2, step=step)


def paired_gradient_values(y, u):
    """(2y - 1) * (u - 1/2), broadcast over arrays of choices and draws.

    The arithmetic shared by the survey estimator and the verification
    suite; every coordinate is bounded by 1/2 in magnitude.
    """
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if y.ndim > 0 and u.ndim > 1:
        y = y[..., None]
    return (2.0 * y - 1.0) * (u - 0.5)


def choice_difference_values(y1, y2, u):
    """(y1 - y2) * (u - 1/2) for two baseline-anchored choices."""
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    d = y1 - y2
    if d.ndim > 0 and u.ndim > 1:
        d = d[..., None]
    return d * (u - 0.5)


def gbs_gradient(y: int, u: np.ndarray, k: int | None = None) -> GradientEstimate:
    """Ascent direction from a single paired choice.

    ``y`` is 1 when the respondent picked z1, 0 for z2. ``u`` must be the
    exact draw that generated the question.
    """
    if y not in (0, 1):
        raise ValueError(f"choice must be 0 or 1, got {y!r}")
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1 or (k is not None and u.shape[0] != k):
        raise ValueError(f"uniform draw has wrong shape {u.shape} for K={k}")
    return GradientEstimate(g=paired_gradient_values(y, u), kind=PAIRED_CHOICE)


def two_question_gradient(y1: int, y2: int, u: np.ndarray) -> GradientEstimate:
    """Score-function estimate from two choices against a shared baseline.

    y1 answers "z1(u) vs baseline", y2 answers "z2(u) vs baseline". Used for
    verification and benchmarking only; the survey loop asks a single paired
    question instead. When y1 == y2 the estimate is identically zero, which
    is exactly the waste the paired design marginalizes away.
    """
    for y in (y1, y2):
        if y not in (0, 1):
            raise ValueError(f"choice must be 0 or 1, got {y!r}")
    u = np.asarray(u, dtype=np.float64)
    return GradientEstimate(g=choice_difference_values(y1, y2, u), kind=TWO_QUESTION)


def sgd_update(phi: np.ndarray, grad: GradientEstimate, eta: float) -> np.ndarray:
    """One gradient-ascent step phi + eta * g. Returns a new vector."""
    if eta < 0:
        raise ValueError("stepsize must be nonnegative")
    out = np.asarray(phi, dtype=np.float64) + eta * grad.g
    if not np.all(np.isfinite(out)):
        raise FloatingPointError(
            f"non-finite logits after update: phi={phi!r} g={grad.g!r} eta={eta!r}"
        )
    return out


def extract_product(phi: np.ndarray) -> np.ndarray:
    """Threshold the logits to a concrete profile: bit k is 1 iff phi_k > 0.

    Ties at exactly zero resolve to 0 so extraction is deterministic.
    """
    phi = np.asarray(phi, dtype=np.float64)
    return (phi > 0.0).astype(np.int64)


ENUMERATION_MAX_K = 20


def enumerate_profiles(k: int) -> np.ndarray:
    """All 2^K profiles in ascending lexicographic order (row 0 = all zeros).

    Bit 0 is the most significant digit, so np.argmax over per-profile
    scores picks the lexicographically smallest maximizer. Guarded at
    K <= 20; beyond that enumeration is deliberately refused.
    """
    if k > ENUMERATION_MAX_K:
        raise ValueError(
            f"enumeration over 2^{k} profiles is infeasible (limit K={ENUMERATION_MAX_K})"
        )
    idx = np.arange(2**k, dtype=np.int64)
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.int64)


def profile_index(z: np.ndarray) -> np.ndarray:
    """Row index of a profile (or batch of profiles) in enumerate_profiles."""
    z = np.asarray(z, dtype=np.int64)
    k = z.shape[-1]
    weights = 1 << np.arange(k - 1, -1, -1, dtype=np.int64)
    return z @ weights


def init_logits(k: int, rng: np.random.Generator, std: float = 0.05) -> np.ndarray:
    """Near-zero random start: pi ~ 0.5 keeps early questions maximally
    informative while breaking exact ties."""
    return rng.normal(0.0, std, size=k)


@dataclass
class SurveyConfig:
    """Settings for one single-product survey run."""

    k: int
    respondents: int
    n_q: int = 10
    eta: float = 1.0
    seed: int = 0
    phi_init_std: float = 0.05
    skip_identical: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.n_q < 1:
            raise ValueError("n_q must be >= 1")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.respondents < 0:
            raise ValueError("respondent budget must be nonnegative")


@dataclass(frozen=True)
class TraceStep:
    """Persisted record of one answered question."""

    step: int
    respondent_id: int
    u: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    y: int
    phi_after: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "step": self.step,
            "respondent_id": self.respondent_id,
            "u": self.u.tolist(),
            "z1": self.z1.tolist(),
            "z2": self.z2.tolist(),
            "y": self.y,
            "phi_after": self.phi_after.tolist(),
        }


@dataclass
class SurveyResult:
    config: SurveyConfig
    phi_init: np.ndarray
    phi_final: np.ndarray
    product: np.ndarray
    trace: list[TraceStep] = field(default_factory=list)

    def extraction_history(self) -> list[tuple[int, np.ndarray]]:
        """(step, product) at every step where the running extraction changed."""
        out = []
        prev = extract_product(self.phi_init)
        out.append((0, prev))
        for rec in self.trace:
            cur = extract_product(rec.phi_after)
            if not np.array_equal(cur, prev):
                out.append((rec.step, cur))
                prev = cur
        return out


AnswerFn = Callable[[int, np.ndarray, np.ndarray, np.random.Generator], int]


def run_single_product(
    config: SurveyConfig,
    answer: AnswerFn,
    rng: np.random.Generator | None = None,
) -> SurveyResult:
    """Run the adaptive survey loop against a choice source.

    ``answer(respondent_index, z1, z2, rng)`` returns 1 if z1 is chosen.
    Respondents 0..N-1 each face ``n_q`` questions; phi is updated after
    every answer. Deterministic given the seed and a deterministic source.
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    phi = init_logits(config.k, rng, config.phi_init_std)
    phi_init = phi.copy()
    trace: list[TraceStep] = []
    step = 0
    for i in range(config.respondents):
        for _ in range(config.n_q):
            q = sample_question(phi, rng, step=step)
            if config.skip_identical and q.identical:
                # fair coin stands in for an uninformative question
                y = int(rng.integers(0, 2))
            else:
                y = answer(i, q.z1, q.z2, rng)
            if y not in (0, 1):
                raise ValueError(f"answer source returned {y!r}, expected 0 or 1")
            phi = sgd_update(phi, gbs_gradient(y, q.u, config.k), config.eta)
            step += 1
            trace.append(
                TraceStep(
                    step=step,
                    respondent_id=i,
                    u=q.u,
                    z1=q.z1,
                    z2=q.z2,
                    y=y,
                    phi_after=phi.copy(),
                )
            )
    return SurveyResult(
        config=config,
        phi_init=phi_init,
        phi_final=phi,
        product=extract_product(phi),
        trace=trace,
    )


def write_trace_jsonl(trace: Iterable[TraceStep], path) -> None:
    """One JSON record per answered question."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec.to_json_dict()) + "\n")


def read_trace_jsonl(path) -> list[TraceStep]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out.append(
                TraceStep(
                    step=d["step"],
                    respondent_id=d["respondent_id"],
                    u=np.asarray(d["u"], dtype=np.float64),
                    z1=np.asarray(d["z1"], dtype=np.int64),
                    z2=np.asarray(d["z2"], dtype=np.int64),
                    y=int(d["y"]),
                    phi_after=np.asarray(d["phi_after"], dtype=np.float64),
                )
            )
    return out
