"""Reference classifiers with hand-written gradients and plain minibatch SGD.

Parameters live in one flat float64 vector laid out as ``W1`` (row-major,
``fan_out x fan_in``), ``b1`` and, for the MLP, ``W2`` and ``b2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
import scipy.sparse as sp

from .corpus import N_CLASSES
from .dataset import FeatureVec


@dataclass(frozen=True)
class Linear:
    dim: int
    k: int = N_CLASSES

    @property
    def layers(self) -> list[tuple[int, int]]:
        return [(self.dim, self.k)]


@dataclass(frozen=True)
class MLP:
    dim: int
    hidden: int
    k: int = N_CLASSES

    @property
    def layers(self) -> list[tuple[int, int]]:
        return [(self.dim, self.hidden), (self.hidden, self.k)]


Arch = Union[Linear, MLP]


def n_params(arch: Arch) -> int:
    return sum(fan_out * fan_in + fan_out for fan_in, fan_out in arch.layers)


def arch_to_json(arch: Arch) -> dict:
    if isinstance(arch, MLP):
        return {"type": "mlp", "dim": arch.dim, "hidden": arch.hidden, "k": arch.k}
    return {"type": "linear", "dim": arch.dim, "k": arch.k}


def arch_from_json(obj: dict) -> Arch:
    if obj["type"] == "mlp":
        return MLP(int(obj["dim"]), int(obj["hidden"]), int(obj["k"]))
    if obj["type"] == "linear":
        return Linear(int(obj["dim"]), int(obj["k"]))
    raise ValueError(f"unknown arch type {obj['type']!r}")


@dataclass(frozen=True, eq=False)
class Params:
    arch: Arch
    flat: np.ndarray

    def __post_init__(self):
        if self.flat.shape != (n_params(self.arch),):
            raise ValueError(f"flat length {self.flat.shape} does not match {self.arch}")

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Read-only ``(W, b)`` views, ``W`` shaped ``(fan_out, fan_in)``."""
        out, off = [], 0
        for fan_in, fan_out in self.arch.layers:
            W = self.flat[off : off + fan_in * fan_out].reshape(fan_out, fan_in)
            off += fan_in * fan_out
            b = self.flat[off : off + fan_out]
            off += fan_out
            out.append((W, b))
        return out

    def to_json(self) -> dict:
        return {"arch": arch_to_json(self.arch), "flat": self.flat.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Params":
        return cls(arch_from_json(obj["arch"]), np.asarray(obj["flat"], dtype=np.float64))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    batch_size: int = 8
    local_epochs: int = 1
    mu: float = 0.01
    class_weights: tuple[float, ...] | None = None
    anchor: Params | None = None

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.local_epochs < 1 or self.mu < 0:
            raise ValueError("invalid TrainConfig")

    def weights(self, k: int) -> np.ndarray:
        if self.class_weights is None:
            return np.ones(k)
        w = np.asarray(self.class_weights, dtype=np.float64)
        if w.shape != (k,):
            raise ValueError(f"expected {k} class weights, got {w.shape}")
        return w


def init(arch: Arch, seed: int) -> Params:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in arch.layers:
        a = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-a, a, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return Params(arch, np.concatenate(chunks))


def as_matrix(x, dim: int):
    if isinstance(x, FeatureVec):
        if x.dim != dim:
            raise ValueError(f"input dim {x.dim} != model dim {dim}")
        return sp.csr_matrix(
            (np.asarray(x.counts, dtype=np.float64), np.asarray(x.indices, dtype=np.int64), [0, len(x.indices)]),
            shape=(1, dim),
        )
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"input shape {x.shape} does not match model dim {dim}")
    return x


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(params: Params, X):
    """Return (probabilities, cache for backprop)."""
    (W1, b1), *rest = params.layers()
    a1 = np.asarray(X @ W1.T) + b1
    if not rest:
        return _softmax(a1), (a1, None)
    (W2, b2), = rest
    h = np.maximum(a1, 0.0)
    return _softmax(h @ W2.T + b2), (a1, h)


def predict_proba(params: Params, X) -> np.ndarray:
    return _forward(params, as_matrix(X, params.arch.dim))[0]


def forward(params: Params, x: FeatureVec) -> np.ndarray:
    return predict_proba(params, x)[0]


def predict(params: Params, X) -> np.ndarray:
    return predict_proba(params, X).argmax(axis=1)


def _proximal(params: Params, cfg: TrainConfig) -> np.ndarray | None:
    if cfg.mu == 0:
        return None
    if cfg.anchor is None:
        raise ValueError("mu > 0 requires an anchor")
    return params.flat - cfg.anchor.flat


def loss(params: Params, X, y, cfg: TrainConfig) -> float:
    """Class-weighted mean cross-entropy plus ``mu/2 * ||w - anchor||^2``."""
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("empty batch")
    X = as_matrix(X, params.arch.dim)
    P, _ = _forward(params, X)
    w = cfg.weights(params.arch.k)[y]
    p_true = P[np.arange(len(y)), y]
    with np.errstate(divide="ignore"):
        value = float(np.mean(w * -np.log(p_true)))
    diff = _proximal(params, cfg)
    if diff is not None:
        value += 0.5 * cfg.mu * float(diff @ diff)
    return value


def _dense_columns(X: sp.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    """Compress a sparse batch to its non-empty columns: ``(cols, dense block)``."""
    cols, inv = np.unique(X.indices, return_inverse=True)
    block = np.zeros((X.shape[0], len(cols)))
    rows = np.repeat(np.arange(X.shape[0]), np.diff(X.indptr))
    np.add.at(block, (rows, inv), X.data)
    return cols, block


def _data_grad(params: Params, cols: np.ndarray, Xc: np.ndarray, y: np.ndarray, cfg: TrainConfig):
    """Cross-entropy gradient pieces as ``(flat_offset, column_index_or_None, values)``.

    ``W1`` only receives a gradient on the input columns present in the batch.
    """
    layers = params.layers()
    W1, b1 = layers[0]
    a1 = Xc @ W1[:, cols].T + b1
    B = len(y)
    if len(layers) == 1:
        P = _softmax(a1)
    else:
        W2, b2 = layers[1]
        h = np.maximum(a1, 0.0)
        P = _softmax(h @ W2.T + b2)
    G = P
    G[np.arange(B), y] -= 1.0
    G *= (cfg.weights(params.arch.k)[y] / B)[:, None]
    off_b1 = W1.size
    if len(layers) == 1:
        return [(0, cols, G.T @ Xc), (off_b1, None, G.sum(axis=0))]
    off_W2 = off_b1 + b1.size
    da = (G @ W2) * (a1 > 0)
    return [
        (0, cols, da.T @ Xc),
        (off_b1, None, da.sum(axis=0)),
        (off_W2, None, (G.T @ h).ravel()),
        (off_W2 + W2.size, None, G.sum(axis=0)),
    ]


def _apply(flat: np.ndarray, arch: Arch, pieces, scale: float) -> None:
    """``flat += scale * piece`` for each gradient piece, in place."""
    fan_out, fan_in = arch.layers[0][1], arch.layers[0][0]
    for off, cols, values in pieces:
        if cols is None:
            flat[off : off + values.size] += scale * values
        else:
            W = flat[off : off + fan_in * fan_out].reshape(fan_out, fan_in)
            W[:, cols] += scale * values


def grad(params: Params, X, y, cfg: TrainConfig) -> np.ndarray:
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("empty batch")
    X = sp.csr_matrix(as_matrix(X, params.arch.dim))
    diff = _proximal(params, cfg)
    g = np.zeros_like(params.flat) if diff is None else cfg.mu * diff
    _apply(g, params.arch, _data_grad(params, *_dense_columns(X), y, cfg), 1.0)
    return g


def sgd_train(params: Params, X, y, cfg: TrainConfig, seed: int) -> Params:
    """``local_epochs`` passes of minibatch SGD; the input Params is not modified.

    Each epoch reshuffles by ``(seed, epoch)``; the trailing partial batch is kept.
    Every step equals ``flat - lr * grad(...)`` on the current batch.
    """
    y = np.asarray(y)
    n = len(y)
    if n == 0:
        raise ValueError("empty shard")
    X = sp.csr_matrix(as_matrix(X, params.arch.dim))
    lr = cfg.learning_rate
    proximal = cfg.mu != 0
    if proximal and cfg.anchor is None:
        raise ValueError("mu > 0 requires an anchor")
    flat = params.flat.copy()
    cur = Params(params.arch, flat)
    g = np.empty_like(flat)
    for epoch in range(cfg.local_epochs):
        order = np.random.default_rng([seed, epoch]).permutation(n)
        Xe, ye = X[order], y[order]
        for start in range(0, n, cfg.batch_size):
            stop = min(start + cfg.batch_size, n)
            Xb = Xe[start:stop]
            pieces = _data_grad(cur, *_dense_columns(Xb), ye[start:stop], cfg)
            if proximal:
                np.subtract(flat, cfg.anchor.flat, out=g)
                g *= cfg.mu
                _apply(g, cur.arch, pieces, 1.0)
                g *= lr
                flat -= g
            else:
                # untouched entries have zero gradient, so only the pieces move
                _apply(flat, cur.arch, pieces, -lr)
    return Params(params.arch, flat)


def with_anchor(cfg: TrainConfig, anchor: Params | None, mu: float | None = None) -> TrainConfig:
    return replace(cfg, anchor=anchor, mu=cfg.mu if mu is None else mu)
