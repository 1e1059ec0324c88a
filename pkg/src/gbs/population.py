"""Synthetic respondent populations and their choice behavior.

Three families of representative utility are supported:

* ``linear`` -- V(z) = w . z with individual part-worths w.
* ``pairwise`` -- linear plus negative pairwise interaction terms, so
  attributes that are good alone can clash in combination.
* ``net`` -- V(z) = f0(z) for a fixed random two-hidden-layer tanh network
  shared by the whole population, giving higher-order attribute
  interactions with no parametric structure to exploit.

Part-worths are drawn around a population mean mu (itself random per
trial), or from a symmetric two-cluster mixture for personalization
studies, in which case each respondent also carries observed covariates
x = exp(w). Choices follow the logit rule: P(pick z1) =
sigmoid(V(z1) - V(z2)), the closed form of utility maximization under
i.i.d. Gumbel noise, sampled directly as a Bernoulli.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import sigmoid, validate_profile
from .nn import Mlp

LINEAR = "linear"
PAIRWISE = "pairwise"
NET = "net"
UTILITY_TYPES = (LINEAR, PAIRWISE, NET)

# numeric shorthand used by config files and the CLI
TYPE_BY_NUMBER = {1: LINEAR, 2: PAIRWISE, 3: NET}

# interaction weights ~ Uniform(-2a, 0) with a = 1
INTERACTION_LOW = -2.0
# dense pairwise interactions up to this K; a random subset of
# SPARSE_PAIR_COUNT shared pairs beyond it
DENSE_PAIR_MAX_K = 10
SPARSE_PAIR_COUNT = 100

F0_HIDDEN = (32, 32)
F0_OUTPUT_SCALE = 4.0


@dataclass(frozen=True)
class MixtureSpec:
    """Symmetric two-cluster heterogeneity.

    mu1 defaults to +1 on the first ceil(K/2) coordinates and -1 on the
    rest; mu2 is its negation. sigma scales the within-cluster spread
    (covariance sigma^2 * I).
    """

    mu1: tuple[float, ...] | None = None
    mu2: tuple[float, ...] | None = None
    sigma: float = 1.0

    def means(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        if self.mu1 is not None:
            m1 = np.asarray(self.mu1, dtype=np.float64)
        else:
            m1 = np.ones(k)
            m1[(k + 1) // 2:] = -1.0
        m2 = np.asarray(self.mu2, dtype=np.float64) if self.mu2 is not None else -m1
        if m1.shape != (k,) or m2.shape != (k,):
            raise ValueError("mixture means must have length K")
        return m1, m2


@dataclass(frozen=True)
class PopulationSpec:
    k: int
    size: int
    utility_type: str = LINEAR
    mixture: MixtureSpec | None = None
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.size < 1:
            raise ValueError("population size must be >= 1")
        if self.utility_type not in UTILITY_TYPES:
            raise ValueError(
                f"unknown utility type {self.utility_type!r}; expected one of {UTILITY_TYPES}"
            )
        if self.mixture is not None and self.utility_type != PAIRWISE:
            raise ValueError("mixture populations require the pairwise utility type")


@dataclass(frozen=True)
class UtilityContext:
    """Trial-level draws shared by everyone in a population.

    Training and hold-out populations of the same trial share this context
    (same mu, same interaction-pair subset, same f0) while drawing disjoint
    respondents.
    """

    k: int
    utility_type: str
    mu: np.ndarray | None = None
    mixture: MixtureSpec | None = None
    pair_index: np.ndarray | None = None  # (P, 2) int array of (k, k') pairs
    f0: Mlp | None = None

    @staticmethod
    def create(
        k: int,
        utility_type: str,
        rng: np.random.Generator,
        mixture: MixtureSpec | None = None,
    ) -> "UtilityContext":
        mu = None if mixture is not None else rng.normal(1.0, 1.0, size=k)
        pair_index = None
        f0 = None
        if utility_type == PAIRWISE:
            pair_index = _draw_pair_index(k, rng)
        elif utility_type == NET:
            f0 = Mlp.init([k, *F0_HIDDEN, 1], activation="tanh", rng=rng)
        return UtilityContext(
            k=k, utility_type=utility_type, mu=mu, mixture=mixture,
            pair_index=pair_index, f0=f0,
        )


def _all_pairs(k: int) -> np.ndarray:
    idx = [(a, b) for a in range(k) for b in range(a + 1, k)]
    return np.asarray(idx, dtype=np.int64).reshape(-1, 2)


def _draw_pair_index(k: int, rng: np.random.Generator) -> np.ndarray:
    pairs = _all_pairs(k)
    if k <= DENSE_PAIR_MAX_K:
        return pairs
    chosen = rng.choice(len(pairs), size=SPARSE_PAIR_COUNT, replace=False)
    return pairs[np.sort(chosen)]


@dataclass(frozen=True)
class RespondentModel:
    """One simulated individual: id, part-worths, optional extras."""

    id: int
    w: np.ndarray
    interactions: np.ndarray | None = None  # weights aligned with context.pair_index
    x: np.ndarray | None = None  # observed covariates, exp(w), mixture only


@dataclass
class Population:
    spec: PopulationSpec
    context: UtilityContext
    respondents: list[RespondentModel]

    @property
    def k(self) -> int:
        return self.spec.k

    def __len__(self) -> int:
        return len(self.respondents)

    def covariate_matrix(self) -> np.ndarray:
        if any(r.x is None for r in self.respondents):
            raise ValueError("population has no covariates (not a mixture population)")
        return np.stack([r.x for r in self.respondents])


def sample_respondents(
    context: UtilityContext,
    size: int,
    rng: np.random.Generator,
    id_offset: int = 0,
) -> list[RespondentModel]:
    """Draw ``size`` fresh respondents under a fixed trial context."""
    k = context.k
    out = []
    for i in range(size):
        if context.mixture is not None:
            m1, m2 = context.mixture.means(k)
            center = m1 if rng.uniform() < 0.5 else m2
            w = rng.normal(center, context.mixture.sigma, size=k)
            x = np.exp(w)
        else:
            w = rng.normal(context.mu, 1.0, size=k)
            x = None
        inter = None
        if context.utility_type == PAIRWISE:
            inter = rng.uniform(INTERACTION_LOW, 0.0, size=len(context.pair_index))
        out.append(RespondentModel(id=id_offset + i, w=w, interactions=inter, x=x))
    return out


def generate_population(spec: PopulationSpec, rng: np.random.Generator | None = None) -> Population:
    """Draw the trial context and all respondents from one seed."""
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    context = UtilityContext.create(spec.k, spec.utility_type, rng, spec.mixture)
    respondents = sample_respondents(context, spec.size, rng)
    return Population(spec=spec, context=context, respondents=respondents)


def holdout_population(pop: Population, size: int, seed: int) -> Population:
    """Fresh respondents under the same trial context, disjoint rng stream."""
    rng = np.random.default_rng(seed)
    spec = PopulationSpec(
        k=pop.spec.k, size=size, utility_type=pop.spec.utility_type,
        mixture=pop.spec.mixture, seed=seed,
    )
    respondents = sample_respondents(pop.context, size, rng, id_offset=len(pop))
    return Population(spec=spec, context=pop.context, respondents=respondents)


def representative_utility(
    r: RespondentModel, z: np.ndarray, context: UtilityContext
) -> float:
    """Deterministic utility of profile z for one respondent."""
    z = validate_profile(z, context.k)
    if context.utility_type == LINEAR:
        return float(r.w @ z)
    if context.utility_type == PAIRWISE:
        zf = z.astype(np.float64)
        base = float(r.w @ zf)
        pk = context.pair_index
        return base + float(r.interactions @ (zf[pk[:, 0]] * zf[pk[:, 1]]))
    return float(F0_OUTPUT_SCALE * context.f0.forward(z.astype(np.float64))[0])


def utility_matrix(pop: Population, profiles: np.ndarray) -> np.ndarray:
    """Utilities for a batch of profiles across a whole population.

    profiles: (P, K) binary array. Returns (P, N) where column i holds
    respondent i's utility for every profile. Vectorized equivalent of
    calling representative_utility in a double loop.
    """
    ctx = pop.context
    Z = np.asarray(profiles, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[None, :]
    if ctx.utility_type == NET:
        vals = F0_OUTPUT_SCALE * ctx.f0.forward(Z)[:, 0]
        return np.repeat(vals[:, None], len(pop), axis=1)
    W = np.stack([r.w for r in pop.respondents])  # (N, K)
    out = Z @ W.T
    if ctx.utility_type == PAIRWISE:
        pk = ctx.pair_index
        pair_feats = Z[:, pk[:, 0]] * Z[:, pk[:, 1]]  # (P, Pn)
        Wt = np.stack([r.interactions for r in pop.respondents])  # (N, Pn)
        out = out + pair_feats @ Wt.T
    return out


def choice_probability(
    r: RespondentModel, z1: np.ndarray, z2: np.ndarray, context: UtilityContext
) -> float:
    """P(respondent picks z1 over z2) under the logit rule."""
    dv = representative_utility(r, z1, context) - representative_utility(r, z2, context)
    return float(sigmoid(dv))


def answer(
    r: RespondentModel,
    z1: np.ndarray,
    z2: np.ndarray,
    context: UtilityContext,
    rng: np.random.Generator,
) -> int:
    """Sample one forced choice; 1 means z1 was picked."""
    p = choice_probability(r, z1, z2, context)
    return int(rng.uniform() < p)


def population_answer_fn(pop: Population):
    """Adapter matching the survey loop's answer-source signature.

    Budgets beyond the population size cycle back through it, so a small
    panel can be surveyed repeatedly.
    """

    def _answer(i: int, z1: np.ndarray, z2: np.ndarray, rng: np.random.Generator) -> int:
        return answer(pop.respondents[i % len(pop.respondents)], z1, z2, pop.context, rng)

    return _answer


# --- JSON export/import so a trial is exactly replayable ---------------------

def population_to_json(pop: Population) -> dict:
    ctx = pop.context
    d = {
        "spec": {
            "k": pop.spec.k,
            "size": pop.spec.size,
            "utility_type": pop.spec.utility_type,
            "seed": pop.spec.seed,
            "mixture": None
            if pop.spec.mixture is None
            else {
                "mu1": None if pop.spec.mixture.mu1 is None else list(pop.spec.mixture.mu1),
                "mu2": None if pop.spec.mixture.mu2 is None else list(pop.spec.mixture.mu2),
                "sigma": pop.spec.mixture.sigma,
            },
        },
        "context": {
            "mu": None if ctx.mu is None else ctx.mu.tolist(),
            "pair_index": None if ctx.pair_index is None else ctx.pair_index.tolist(),
            "f0": None if ctx.f0 is None else ctx.f0.to_json_dict(),
        },
        "respondents": [
            {
                "id": r.id,
                "w": r.w.tolist(),
                "interactions": None if r.interactions is None else r.interactions.tolist(),
                "x": None if r.x is None else r.x.tolist(),
            }
            for r in pop.respondents
        ],
    }
    return d


def population_from_json(d: dict) -> Population:
    s = d["spec"]
    mix = None
    if s.get("mixture"):
        m = s["mixture"]
        mix = MixtureSpec(
            mu1=None if m["mu1"] is None else tuple(m["mu1"]),
            mu2=None if m["mu2"] is None else tuple(m["mu2"]),
            sigma=m["sigma"],
        )
    spec = PopulationSpec(
        k=s["k"], size=s["size"], utility_type=s["utility_type"], mixture=mix, seed=s["seed"]
    )
    c = d["context"]
    context = UtilityContext(
        k=spec.k,
        utility_type=spec.utility_type,
        mu=None if c["mu"] is None else np.asarray(c["mu"], dtype=np.float64),
        mixture=mix,
        pair_index=None if c["pair_index"] is None else np.asarray(c["pair_index"], dtype=np.int64),
        f0=None if c["f0"] is None else Mlp.from_json_dict(c["f0"]),
    )
    respondents = [
        RespondentModel(
            id=r["id"],
            w=np.asarray(r["w"], dtype=np.float64),
            interactions=None
            if r["interactions"] is None
            else np.asarray(r["interactions"], dtype=np.float64),
            x=None if r["x"] is None else np.asarray(r["x"], dtype=np.float64),
        )
        for r in d["respondents"]
    ]
    return Population(spec=spec, context=context, respondents=respondents)


def save_population(pop: Population, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(population_to_json(pop), fh)


def load_population(path) -> Population:
    with open(path, "r", encoding="utf-8") as fh:
        return population_from_json(json.load(fh))
