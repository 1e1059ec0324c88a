"""Comparison methods fitted on non-adaptive paired-choice data.

Four fitters share one dataset shape: (respondent, z1, z2, choice) records
collected from randomly generated profile pairs.

* ``fit_logistic`` -- pooled linear part-worths by regularized MLE;
  product = 1[W > 0].
* ``fit_hb_map`` -- mixed-logit hierarchy (population mean m, individual
  part-worths w_i ~ N(m, I)) maximized jointly at the posterior mode;
  product = 1[m > 0].
* ``fit_nn_utility`` -- nonparametric utility net fitted on choice pairs;
  product = exhaustive argmax over all 2^K profiles (refused for K > 20).
* ``fit_nn_ind`` -- personalized variant scoring V(z, x) = z . f(x);
  per-individual product = 1[f(x) > 0].

Likelihoods depend on a pair only through z1 - z2, the standard logit
paired-comparison form. Optimizer settings live in each result's metadata
so comparisons stay auditable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .core import ENUMERATION_MAX_K, enumerate_profiles
from .nn import Mlp, TrainConfig, softplus
from .population import Population, answer

LOGISTIC_L2 = 1e-4
NN_HIDDEN = (64, 64)


@dataclass
class PairedChoiceDataset:
    """Flat arrays of paired-choice records, plus optional covariates."""

    respondent_ids: np.ndarray  # (n,) int
    z1: np.ndarray  # (n, K) binary
    z2: np.ndarray  # (n, K) binary
    y: np.ndarray  # (n,) binary, 1 = z1 chosen
    covariates: dict[int, np.ndarray] | None = None

    def __post_init__(self):
        n = len(self.y)
        if not (len(self.respondent_ids) == self.z1.shape[0] == self.z2.shape[0] == n):
            raise ValueError("dataset arrays must have matching lengths")
        if self.z1.shape != self.z2.shape:
            raise ValueError("z1 and z2 must have the same shape")

    @property
    def k(self) -> int:
        return self.z1.shape[1]

    def __len__(self) -> int:
        return len(self.y)

    def diff(self) -> np.ndarray:
        """z1 - z2 as floats; the only pair statistic the logit models see."""
        return (self.z1 - self.z2).astype(np.float64)

    def covariate_rows(self) -> np.ndarray:
        """Per-record covariate matrix; raises naming the first respondent
        with no covariates."""
        if self.covariates is None:
            raise ValueError("dataset has no covariates")
        rows = []
        for rid in self.respondent_ids:
            x = self.covariates.get(int(rid))
            if x is None:
                raise ValueError(f"missing covariates for respondent {int(rid)}")
            rows.append(x)
        return np.stack(rows)


def collect_random_pairs(
    pop: Population,
    n_respondents: int,
    n_q: int,
    rng: np.random.Generator,
    with_covariates: bool = False,
) -> PairedChoiceDataset:
    """Non-adaptive data collection: each profile bit is an independent
    fair coin, drawn separately for z1 and z2; choices follow the
    population's logit rule."""
    if n_respondents > len(pop):
        raise ValueError("not enough respondents in the population")
    k = pop.k
    ids, z1s, z2s, ys = [], [], [], []
    for i in range(n_respondents):
        r = pop.respondents[i]
        for _ in range(n_q):
            z1 = rng.integers(0, 2, size=k)
            z2 = rng.integers(0, 2, size=k)
            y = answer(r, z1, z2, pop.context, rng)
            ids.append(i)
            z1s.append(z1)
            z2s.append(z2)
            ys.append(y)
    cov = None
    if with_covariates:
        cov = {i: pop.respondents[i].x for i in range(n_respondents)}
        if any(v is None for v in cov.values()):
            raise ValueError("population has no covariates; use a mixture population")
    return PairedChoiceDataset(
        respondent_ids=np.asarray(ids, dtype=np.int64),
        z1=np.asarray(z1s, dtype=np.int64).reshape(len(ys), k),
        z2=np.asarray(z2s, dtype=np.int64).reshape(len(ys), k),
        y=np.asarray(ys, dtype=np.int64),
        covariates=cov,
    )


@dataclass
class FitResult:
    method: str
    product: np.ndarray | None = None
    params: np.ndarray | None = None
    net: Mlp | None = None
    policy: Callable[[np.ndarray], np.ndarray] | None = None
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "product": None if self.product is None else self.product.tolist(),
            "params": None if self.params is None else self.params.tolist(),
            "net": None if self.net is None else self.net.to_json_dict(),
            "metadata": self.metadata,
        }


def _pairwise_loglik(w: np.ndarray, d: np.ndarray, y: np.ndarray):
    """Log-likelihood and per-record residuals for P(y=1) = sigmoid(w . d)."""
    f = d @ w
    ll = float(np.sum(y * f - softplus(f)))
    resid = y - 1.0 / (1.0 + np.exp(-np.clip(f, -500, 500)))
    return ll, resid


def fit_logistic(data: PairedChoiceDataset, l2: float = LOGISTIC_L2,
                 max_iter: int = 500) -> FitResult:
    """Pooled logistic MLE with a small L2 penalty.

    The penalty keeps the estimate finite on separable data (tiny bias
    otherwise). Product thresholds the fitted part-worths at zero.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    d = data.diff()
    y = data.y.astype(np.float64)

    def objective(w):
        ll, resid = _pairwise_loglik(w, d, y)
        obj = -ll + 0.5 * l2 * float(w @ w)
        grad = -(d.T @ resid) + l2 * w
        return obj, grad

    res = minimize(objective, np.zeros(data.k), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "ftol": 1e-14, "gtol": 1e-10})
    w_hat = res.x
    return FitResult(
        method="logistic",
        product=(w_hat > 0).astype(np.int64),
        params=w_hat,
        metadata={
            "l2": l2, "optimizer": "L-BFGS-B", "max_iter": max_iter,
            "iterations": int(res.nit), "converged": bool(res.success),
            "n_records": len(data),
        },
    )


def fit_hb_map(data: PairedChoiceDataset, prior_var: float = 1.0,
               max_iter: int = 2000) -> FitResult:
    """Joint posterior mode of the mixed-logit hierarchy.

    m ~ N(0, I), w_i | m ~ N(m, prior_var * I), logit likelihood per
    record; (m, {w_i}) maximized together. With no records the mode is the
    prior mean m = 0. A non-converged solve returns the best iterate with
    a warning flag in metadata.
    """
    k = data.k
    ridx_raw = data.respondent_ids
    uniq, ridx = np.unique(ridx_raw, return_inverse=True)
    n_ind = len(uniq)
    d = data.diff()
    y = data.y.astype(np.float64)

    if len(data) == 0 or n_ind == 0:
        return FitResult(method="hb", product=np.zeros(k, dtype=np.int64),
                         params=np.zeros(k), metadata={"n_records": 0})

    inv_v = 1.0 / prior_var

    def objective(theta):
        m = theta[:k]
        w = theta[k:].reshape(n_ind, k)
        dev = w - m
        f = np.sum(d * w[ridx], axis=1)
        ll = float(np.sum(y * f - softplus(f)))
        logpost = ll - 0.5 * float(m @ m) - 0.5 * inv_v * float(np.sum(dev * dev))
        resid = y - 1.0 / (1.0 + np.exp(-np.clip(f, -500, 500)))
        grad_w = -inv_v * dev
        np.add.at(grad_w, ridx, resid[:, None] * d)
        grad_m = -m + inv_v * dev.sum(axis=0)
        grad = np.concatenate([grad_m, grad_w.ravel()])
        return -logpost, -grad

    theta0 = np.zeros(k * (n_ind + 1))
    res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iter, "ftol": 1e-14, "gtol": 1e-9})
    m_hat = res.x[:k]
    return FitResult(
        method="hb",
        product=(m_hat > 0).astype(np.int64),
        params=m_hat,
        metadata={
            "prior_var": prior_var, "optimizer": "L-BFGS-B", "max_iter": max_iter,
            "iterations": int(res.nit), "converged": bool(res.success),
            "warning": None if res.success else "optimizer did not report convergence",
            "n_individuals": n_ind, "n_records": len(data),
            "final_grad_norm": float(np.linalg.norm(res.jac)),
        },
    )


def _fit_pair_difference_net(net: Mlp, in1: np.ndarray, in2: np.ndarray,
                             y: np.ndarray, cfg: TrainConfig) -> tuple[Mlp, list[float]]:
    """MLE for P(y=1) = sigmoid(net(in1) - net(in2)) by mini-batch SGD.

    Both sides of each pair go through the net as one stacked batch; the
    upstream signal is +r on the chosen-side rows and -r on the others.
    """
    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    n = len(y)
    batch = n if cfg.full_batch else cfg.batch_size
    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            b = len(idx)
            stacked = np.concatenate([in1[idx], in2[idx]], axis=0)
            out, cache = net.forward_cached(stacked)
            delta = out[:b, 0] - out[b:, 0]
            p = 1.0 / (1.0 + np.exp(-np.clip(delta, -500, 500)))
            r = (p - y[idx]) / b
            upstream = np.concatenate([r, -r])[:, None]
            grads, _ = net.backward(cache, upstream)
            net.apply_gradients(grads, -cfg.lr)
        delta = (net.forward(in1) - net.forward(in2))[:, 0]
        loss = float(np.mean((1.0 - y) * delta + softplus(-delta)))
        if not np.isfinite(loss):
            raise FloatingPointError("pairwise net training diverged")
        losses.append(loss)
    return net, losses


def argmax_profile(score_fn: Callable[[np.ndarray], np.ndarray], k: int,
                   batch: int = 8192) -> np.ndarray:
    """Exhaustive argmax of a per-profile score over all 2^K profiles.

    Ties resolve to the lexicographically smallest profile (enumeration
    order plus first-maximum argmax).
    """
    profiles = enumerate_profiles(k)
    best_val = -np.inf
    best = profiles[0]
    for start in range(0, len(profiles), batch):
        chunk = profiles[start : start + batch]
        vals = np.asarray(score_fn(chunk.astype(np.float64))).reshape(-1)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best = chunk[i]
    return best.copy()


def fit_nn_utility(data: PairedChoiceDataset, cfg: TrainConfig | None = None,
                   hidden: tuple[int, int] = NN_HIDDEN) -> FitResult:
    """Nonparametric utility net; product by exhaustive enumeration."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    if data.k > ENUMERATION_MAX_K:
        raise ValueError(
            f"enumeration infeasible: 2^{data.k} profiles exceeds the K={ENUMERATION_MAX_K} limit"
        )
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    net = Mlp.init([data.k, *hidden, 1], activation="relu", rng=rng)
    net, losses = _fit_pair_difference_net(
        net, data.z1.astype(np.float64), data.z2.astype(np.float64),
        data.y.astype(np.float64), cfg,
    )
    product = argmax_profile(lambda zs: net.forward(zs)[:, 0], data.k)
    return FitResult(
        method="nn",
        product=product,
        net=net,
        metadata={
            "hidden": list(hidden), "lr": cfg.lr, "batch_size": cfg.batch_size,
            "epochs": cfg.epochs, "seed": cfg.seed, "final_loss": losses[-1],
            "n_records": len(data),
        },
    )


def fit_nn_ind(data: PairedChoiceDataset, cfg: TrainConfig | None = None,
               hidden: tuple[int, int] = NN_HIDDEN) -> FitResult:
    """Personalized scorer V(z, x) = z . f(x); policy is 1[f(x) > 0].

    Covariates are standardized against the training sample before the net
    (they can span orders of magnitude); the learned shift/scale ships with
    the policy.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    X_raw = data.covariate_rows()
    x_mean = X_raw.mean(axis=0)
    x_scale = np.maximum(X_raw.std(axis=0), 1e-8)
    X = (X_raw - x_mean) / x_scale
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    k = data.k
    net = Mlp.init([X.shape[1], *hidden, k], activation="relu", rng=rng)
    d = data.diff()
    y = data.y.astype(np.float64)
    n = len(y)
    batch = n if cfg.full_batch else cfg.batch_size
    rng_fit = np.random.default_rng(cfg.seed)
    losses = []
    for _ in range(cfg.epochs):
        order = rng_fit.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            out, cache = net.forward_cached(X[idx])
            f = np.sum(d[idx] * out, axis=1)
            p = 1.0 / (1.0 + np.exp(-np.clip(f, -500, 500)))
            upstream = ((p - y[idx]) / len(idx))[:, None] * d[idx]
            grads, _ = net.backward(cache, upstream)
            net.apply_gradients(grads, -cfg.lr)
        f = np.sum(d * net.forward(X), axis=1)
        loss = float(np.mean((1.0 - y) * f + softplus(-f)))
        if not np.isfinite(loss):
            raise FloatingPointError("personalized net training diverged")
        losses.append(loss)

    def policy(x: np.ndarray) -> np.ndarray:
        xn = (np.asarray(x, dtype=np.float64) - x_mean) / x_scale
        return (net.forward(xn) > 0).astype(np.int64)

    return FitResult(
        method="nn_ind",
        net=net,
        policy=policy,
        metadata={
            "hidden": list(hidden), "lr": cfg.lr, "batch_size": cfg.batch_size,
            "epochs": cfg.epochs, "seed": cfg.seed, "final_loss": losses[-1],
            "n_records": len(data),
            "x_mean": x_mean.tolist(), "x_scale": x_scale.tolist(),
        },
    )
