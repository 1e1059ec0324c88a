"""Analytic identity checks behind the `verify` command.

Each check pits the survey estimator's building blocks against an
independent route: full enumeration for unbiasedness, closed forms for the
conditional-choice and marginalization identities, Monte Carlo counts for
the differ-probability law, and finite differences for every hand-written
gradient. The checks call the same library code the survey loop uses, so
an arithmetic slip there (a flipped sign, a swapped indicator) surfaces
here as a hard failure.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .core import (
    choice_difference_values,
    paired_gradient_values,
    profiles_from_uniform,
    profile_index,
    sigmoid,
)
from .evaluation import enumerated_objective, exact_gradient
from .nn import Mlp
from .population import LINEAR, PopulationSpec, generate_population, utility_matrix


@dataclass
class CheckResult:
    name: str
    passed: bool
    tolerance: float
    observed: float
    detail: str = ""
    runtime_s: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"[{status}] {self.name}: observed={self.observed:.3e} "
            f"tolerance={self.tolerance:.3e} ({self.runtime_s:.2f}s) {self.detail}"
        )


def check_unbiasedness(
    k: int = 4,
    pop_size: int = 20,
    draws: int = 1_000_000,
    seed: int = 20240,
) -> CheckResult:
    """Two-question estimator vs. enumeration.

    With the inner choice expectation taken exactly, the Monte-Carlo mean
    of (E[y1|u] - E[y2|u])(u - 1/2) over uniform draws must match the
    enumerated objective gradient, coordinatewise, within 3 MC standard
    errors.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    pop = generate_population(PopulationSpec(k=k, size=pop_size, utility_type=LINEAR, seed=seed))
    phi = rng.normal(0.0, 1.0, size=k)
    z0 = np.zeros(k, dtype=np.int64)
    exact = exact_gradient(phi, pop, z0)

    # win probability against z0 for every profile, then per-draw lookups
    from .core import enumerate_profiles

    profiles = enumerate_profiles(k)
    v0 = utility_matrix(pop, z0[None, :])[0]
    pbar = sigmoid(utility_matrix(pop, profiles) - v0).mean(axis=1)

    U = rng.uniform(0.0, 1.0, size=(draws, k))
    z1, z2 = profiles_from_uniform(U, phi)
    p1 = pbar[profile_index(z1)]
    p2 = pbar[profile_index(z2)]
    # exact expectation over the four (y1, y2) outcomes, routed through the
    # estimator arithmetic so sign errors there are caught
    h = (
        (p1 * (1 - p2))[:, None] * choice_difference_values(1, 0, U)
        + ((1 - p1) * p2)[:, None] * choice_difference_values(0, 1, U)
        + (p1 * p2)[:, None] * choice_difference_values(1, 1, U)
        + ((1 - p1) * (1 - p2))[:, None] * choice_difference_values(0, 0, U)
    )
    mc_mean = h.mean(axis=0)
    mc_se = h.std(axis=0, ddof=1) / np.sqrt(draws)
    dev = np.abs(mc_mean - exact)
    worst = float(np.max(dev / (3 * mc_se)))
    return CheckResult(
        name="unbiasedness-vs-enumeration",
        passed=bool(np.all(dev <= 3 * mc_se)),
        tolerance=1.0,
        observed=worst,
        detail=f"max |mc-exact|/(3se) over {k} coords, {draws} draws",
        runtime_s=time.perf_counter() - t0,
    )


def check_conditional_choice_identity(n: int = 1000, seed: int = 7,
                                      tol: float = 1e-12) -> CheckResult:
    """Conditioned on the two baseline-anchored choices disagreeing, the
    sign of their difference is distributed exactly like a direct paired
    choice: P(S=1 | S != 0) = e^{V1} / (e^{V1} + e^{V2})."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    v0, v1, v2 = rng.normal(0.0, 1.5, size=(3, n))
    p1 = sigmoid(v1 - v0)
    p2 = sigmoid(v2 - v0)
    cond = p1 * (1 - p2) / (p1 * (1 - p2) + (1 - p1) * p2)
    direct = sigmoid(v1 - v2)
    worst = float(np.max(np.abs(cond - direct)))
    return CheckResult(
        name="conditional-choice-identity",
        passed=worst <= tol,
        tolerance=tol,
        observed=worst,
        detail=f"{n} random utility triples",
        runtime_s=time.perf_counter() - t0,
    )


def check_marginalized_identity(n: int = 1000, seed: int = 11,
                                tol: float = 1e-12) -> CheckResult:
    """Per-draw identity between the two-question and paired-choice forms.

    For fixed u and utilities, E[(y1 - y2)](u_k - 1/2) equals
    E[2T - 1](u_k - 1/2) * P(disagree), with T the direct paired choice.
    Both sides are evaluated through the estimator arithmetic.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    v0, v1, v2 = rng.normal(0.0, 1.5, size=(3, n))
    u = rng.uniform(0.0, 1.0, size=n)
    p1 = sigmoid(v1 - v0)
    p2 = sigmoid(v2 - v0)
    lhs = p1 * (1 - p2) * choice_difference_values(1, 0, u) \
        + (1 - p1) * p2 * choice_difference_values(0, 1, u) \
        + (p1 * p2 + (1 - p1) * (1 - p2)) * choice_difference_values(1, 1, u)
    p_t = sigmoid(v1 - v2)
    p_disagree = p1 * (1 - p2) + (1 - p1) * p2
    rhs = (p_t * paired_gradient_values(1, u)
           + (1 - p_t) * paired_gradient_values(0, u)) * p_disagree
    worst = float(np.max(np.abs(lhs - rhs)))
    return CheckResult(
        name="marginalized-estimator-identity",
        passed=worst <= tol,
        tolerance=tol,
        observed=worst,
        detail=f"{n} random (utilities, draw) instances",
        runtime_s=time.perf_counter() - t0,
    )


def check_differ_probability(draws: int = 1_000_000, seed: int = 13) -> CheckResult:
    """Empirical P(z1_k != z2_k) vs the law 1 - |2 pi - 1|."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    tol = 4.0 * np.sqrt(0.25 / draws)
    worst = 0.0
    for pi in (0.1, 0.25, 0.5, 0.75, 0.9):
        phi = np.array([np.log(pi / (1 - pi))])
        u = rng.uniform(0.0, 1.0, size=(draws, 1))
        z1, z2 = profiles_from_uniform(u, phi)
        freq = float(np.mean(z1 != z2))
        worst = max(worst, abs(freq - (1 - abs(2 * pi - 1))))
    return CheckResult(
        name="differ-probability-law",
        passed=worst <= tol,
        tolerance=tol,
        observed=worst,
        detail=f"pi grid, {draws} draws each",
        runtime_s=time.perf_counter() - t0,
    )


def check_backward_finite_difference(seed: int = 17, rel_tol: float = 1e-6) -> CheckResult:
    """Backprop vs central finite differences on a 4-8-8-1 network."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for activation in ("tanh", "relu"):
        net = Mlp.init([4, 8, 8, 1], activation=activation, rng=rng)
        x = rng.normal(0.0, 1.0, size=(5, 4))
        upstream = rng.normal(0.0, 1.0, size=(5, 1))
        _, cache = net.forward_cached(x)
        grads, _ = net.backward(cache, upstream)
        # same layout as params_flat: all weight blocks, then all biases
        analytic = np.concatenate(
            [dw.ravel() for dw, _ in grads] + [db.ravel() for _, db in grads]
        )
        flat = net.params_flat()
        h = 1e-5
        numeric = np.empty_like(flat)
        for i in range(len(flat)):
            bumped = flat.copy()
            bumped[i] = flat[i] + h
            net.set_params_flat(bumped)
            up = float(np.sum(net.forward(x) * upstream))
            bumped[i] = flat[i] - h
            net.set_params_flat(bumped)
            down = float(np.sum(net.forward(x) * upstream))
            numeric[i] = (up - down) / (2 * h)
        net.set_params_flat(flat)
        scale = np.maximum(np.abs(numeric), 1.0)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / scale)))
    return CheckResult(
        name="backprop-vs-finite-difference",
        passed=worst <= rel_tol,
        tolerance=rel_tol,
        observed=worst,
        detail="tanh and relu, 4-8-8-1 net",
        runtime_s=time.perf_counter() - t0,
    )


def check_exact_gradient_finite_difference(seed: int = 19, tol: float = 1e-8) -> CheckResult:
    """Enumeration gradient vs central differences of the enumerated objective."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    pop = generate_population(PopulationSpec(k=4, size=8, utility_type=LINEAR, seed=seed))
    phi = rng.normal(0.0, 0.8, size=4)
    z0 = rng.integers(0, 2, size=4)
    grad = exact_gradient(phi, pop, z0)
    h = 1e-6
    worst = 0.0
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        fd = (enumerated_objective(phi + e, pop, z0) - enumerated_objective(phi - e, pop, z0)) / (2 * h)
        worst = max(worst, abs(fd - grad[i]))
    return CheckResult(
        name="exact-gradient-vs-finite-difference",
        passed=worst <= tol,
        tolerance=tol,
        observed=worst,
        detail="K=4, 8 respondents",
        runtime_s=time.perf_counter() - t0,
    )


def run_all_checks(mc_draws: int = 1_000_000, seed: int = 20240) -> list[CheckResult]:
    return [
        check_unbiasedness(draws=mc_draws, seed=seed),
        check_conditional_choice_identity(),
        check_marginalized_identity(),
        check_differ_probability(draws=mc_draws),
        check_backward_finite_difference(),
        check_exact_gradient_finite_difference(),
    ]
