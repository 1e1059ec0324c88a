"""Minimal feedforward-network substrate: forward, exact backprop, SGD.

Deliberately framework-free so every gradient is auditable against finite
differences. Networks are plain weight/bias lists with a tanh or relu
hidden activation and an identity output layer; batches are row-major
(B, d) arrays and a bare (d,) vector is treated as a batch of one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_ACTIVATIONS = {"tanh", "relu", "identity"}


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(x)
    if name == "relu":
        return np.maximum(x, 0.0)
    return x


def _act_grad(name: str, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - post * post
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    return np.ones_like(pre)


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)) without overflow."""
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


@dataclass
class Mlp:
    """Fully-connected network. weights[l] has shape (fan_in, fan_out)."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self):
        expected = list(zip(self.layer_dims, self.layer_dims[1:]))
        if len(self.weights) != len(expected) or len(self.biases) != len(expected):
            raise ValueError("layer count does not match layer_dims")
        for (fan_in, fan_out), w, b in zip(expected, self.weights, self.biases):
            if w.shape != (fan_in, fan_out) or b.shape != (fan_out,):
                raise ValueError(
                    f"inconsistent layer shapes: expected {(fan_in, fan_out)}, got {w.shape}"
                )
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @staticmethod
    def init(
        layer_dims: Sequence[int],
        activation: str = "tanh",
        rng: np.random.Generator | None = None,
        weight_std: float | None = None,
        last_layer_zero: bool = False,
    ) -> "Mlp":
        """Random network with weights ~ N(0, 1/fan_in) and zero biases.

        ``last_layer_zero`` starts the output layer at exactly zero, which
        pins the initial outputs to zero while leaving gradients nonzero.
        """
        if len(layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        weights, biases = [], []
        n_layers = len(layer_dims) - 1
        for l in range(n_layers):
            fan_in, fan_out = layer_dims[l], layer_dims[l + 1]
            std = weight_std if weight_std is not None else 1.0 / np.sqrt(fan_in)
            if last_layer_zero and l == n_layers - 1:
                w = np.zeros((fan_in, fan_out))
            else:
                w = rng.normal(0.0, std, size=(fan_in, fan_out))
            weights.append(w)
            biases.append(np.zeros(fan_out))
        return Mlp(list(layer_dims), weights, biases, activation)

    def copy(self) -> "Mlp":
        return Mlp(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def _check_input(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.in_dim:
            raise ValueError(f"input dim {x.shape[1]} != network input {self.in_dim}")
        return x, single

    def forward(self, x) -> np.ndarray:
        """Pure forward pass. (d,) -> (out,) or (B, d) -> (B, out)."""
        x, single = self._check_input(x)
        h = x
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            pre = h @ w + b
            h = pre if l == last else _act(self.activation, pre)
        return h[0] if single else h

    def forward_cached(self, x):
        """Forward pass keeping intermediates for backward()."""
        x, single = self._check_input(x)
        acts = [x]  # post-activation of each layer, acts[0] = input
        pres = []
        h = x
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            pre = h @ w + b
            pres.append(pre)
            h = pre if l == last else _act(self.activation, pre)
            acts.append(h)
        cache = (acts, pres, single)
        return (h[0] if single else h), cache

    def backward(self, cache, upstream):
        """Exact reverse-mode gradients.

        ``upstream`` is dL/d(output), shaped like the cached output. Returns
        (param_grads, input_grad) where param_grads is a list of (dW, db)
        summed over the batch.
        """
        acts, pres, single = cache
        g = np.asarray(upstream, dtype=np.float64)
        if single:
            g = g[None, :]
        if g.shape != pres[-1].shape:
            raise ValueError(f"upstream shape {g.shape} != output shape {pres[-1].shape}")
        param_grads = [None] * len(self.weights)
        last = len(self.weights) - 1
        for l in range(last, -1, -1):
            if l != last:
                g = g * _act_grad(self.activation, pres[l], acts[l + 1])
            dw = acts[l].T @ g
            db = g.sum(axis=0)
            param_grads[l] = (dw, db)
            g = g @ self.weights[l].T
        dx = g[0] if single else g
        return param_grads, dx

    def apply_gradients(self, param_grads, scale: float) -> None:
        """In-place parameter move: theta += scale * grad."""
        for (w, b), (dw, db) in zip(zip(self.weights, self.biases), param_grads):
            w += scale * dw
            b += scale * db

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params_flat(self) -> np.ndarray:
        return np.concatenate(
            [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        )

    def set_params_flat(self, flat: np.ndarray) -> None:
        i = 0
        for w in self.weights:
            w[...] = flat[i : i + w.size].reshape(w.shape)
            i += w.size
        for b in self.biases:
            b[...] = flat[i : i + b.size]
            i += b.size

    def to_json_dict(self) -> dict:
        return {
            "layer_dims": self.layer_dims,
            "activation": self.activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "Mlp":
        return Mlp(
            layer_dims=list(d["layer_dims"]),
            weights=[np.asarray(w, dtype=np.float64) for w in d["weights"]],
            biases=[np.asarray(b, dtype=np.float64) for b in d["biases"]],
            activation=d["activation"],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh)

    @staticmethod
    def load(path) -> "Mlp":
        with open(path, "r", encoding="utf-8") as fh:
            return Mlp.from_json_dict(json.load(fh))


@dataclass
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0
    full_batch: bool = False


def minibatch_indices(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def bce_with_logits(f: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy of sigmoid(f) against labels."""
    return float(np.mean((1.0 - y) * f + softplus(-f)))


def fit_logistic_choice(net: Mlp, features: np.ndarray, labels: np.ndarray,
                        cfg: TrainConfig | None = None) -> tuple[Mlp, list[float]]:
    """Fit sigmoid(net(x)) to binary labels by mini-batch SGD.

    Returns a fitted copy plus per-epoch mean losses. Raises on divergence
    (NaN loss). Deterministic given cfg.seed.
    """
    cfg = cfg or TrainConfig()
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a nonempty (n, d) feature matrix")
    if net.out_dim != 1:
        raise ValueError("logistic fitting needs a scalar-output network")
    net = net.copy()
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    batch = n if cfg.full_batch else cfg.batch_size
    losses = []
    for _ in range(cfg.epochs):
        for idx in minibatch_indices(n, batch, rng):
            xb, yb = X[idx], y[idx]
            out, cache = net.forward_cached(xb)
            f = out[:, 0]
            p = 1.0 / (1.0 + np.exp(-np.clip(f, -500, 500)))
            upstream = ((p - yb) / len(idx))[:, None]
            grads, _ = net.backward(cache, upstream)
            net.apply_gradients(grads, -cfg.lr)
        loss = bce_with_logits(net.forward(X)[:, 0], y)
        if not np.isfinite(loss):
            raise FloatingPointError(f"training diverged: loss={loss}")
        losses.append(loss)
    return net, losses
