"""Splitting, class balancing, feature hashing and synthetic long-tail corpora."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import N_CLASSES, Example, read_examples
from .errors import DataError
from .jsonl import read_json, write_json, write_jsonl

DEFAULT_DIM = 4096
SPLIT_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class SplitSet:
    train: list[Example]
    validation: list[Example]
    test: list[Example]
    split_seed: int
    by_source: bool

    def parts(self) -> dict[str, list[Example]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}

    def manifest(self, k: int = N_CLASSES) -> dict:
        return {
            "seed": self.split_seed,
            "by_source": self.by_source,
            "counts": {name: class_counts(part, k).tolist() for name, part in self.parts().items()},
        }


def class_counts(examples: Sequence[Example], k: int = N_CLASSES) -> np.ndarray:
    return np.bincount(np.fromiter((e.label for e in examples), dtype=np.int64, count=len(examples)), minlength=k)


def split(corpus: Sequence[Example], seed: int, by_source: bool = True) -> SplitSet:
    """Shuffle units (examples, or source-id groups) by ``seed`` and cut 80/10/10."""
    if not corpus:
        raise DataError("empty corpus")
    if by_source:
        groups: dict[str, list[Example]] = {}
        for ex in corpus:
            groups.setdefault(ex.source_id, []).append(ex)
        units = [groups[key] for key in sorted(groups)]
    else:
        units = [[ex] for ex in sorted(corpus, key=lambda e: e.id)]
    order = np.random.default_rng(seed).permutation(len(units))
    n = len(units)
    cut_train, cut_val = (8 * n) // 10, (9 * n) // 10
    parts = ([], [], [])
    for pos, u in enumerate(order):
        dest = 0 if pos < cut_train else 1 if pos < cut_val else 2
        parts[dest].extend(units[u])
    return SplitSet(*parts, split_seed=seed, by_source=by_source)


def resample(train: Sequence[Example], seed: int, k: int = N_CLASSES) -> list[Example]:
    """Balance to exactly ``floor(len(train) / k)`` examples per class.

    Majority classes are down-sampled without replacement. Minority classes keep
    every original once and are topped up by sampling with replacement.
    """
    target = len(train) // k
    if target < 1:
        raise DataError(f"cannot balance {len(train)} examples over {k} classes")
    by_class: list[list[Example]] = [[] for _ in range(k)]
    for ex in train:
        by_class[ex.label].append(ex)
    rng = np.random.default_rng(seed)
    out: list[Example] = []
    for c, members in enumerate(by_class):
        n_c = len(members)
        if n_c == 0:
            raise DataError(f"class {c} has zero training examples")
        if n_c >= target:
            picks = rng.choice(n_c, size=target, replace=False)
        else:
            picks = np.concatenate([np.arange(n_c), rng.integers(0, n_c, size=target - n_c)])
        out.extend(members[i] for i in picks)
    return [out[i] for i in rng.permutation(len(out))]


def class_weights(train: Sequence[Example], k: int = N_CLASSES) -> np.ndarray:
    """Inverse-frequency weights normalized to mean one: ``n / (k * n_c)``."""
    counts = class_counts(train, k)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise DataError(f"class {int(missing[0])} has zero training examples")
    return len(train) / (k * counts.astype(np.float64))


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


@lru_cache(maxsize=1 << 18)
def fnv1a64(token: str) -> int:
    h = _FNV_OFFSET
    for byte in token.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class FeatureVec:
    dim: int
    indices: tuple[int, ...] = ()
    counts: tuple[int, ...] = ()


def _check_dim(dim: int) -> None:
    if dim < 1 or dim & (dim - 1):
        raise ValueError(f"dim must be a positive power of two, got {dim}")


def featurize(tokens: Sequence[str], dim: int = DEFAULT_DIM) -> FeatureVec:
    _check_dim(dim)
    bag = Counter(fnv1a64(t) & (dim - 1) for t in tokens)
    idx = sorted(bag)
    return FeatureVec(dim, tuple(idx), tuple(bag[i] for i in idx))


@dataclass(frozen=True)
class Samples:
    """Featurized examples: a CSR count matrix plus integer labels."""

    X: sp.csr_matrix
    y: np.ndarray

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def take(self, idx) -> "Samples":
        idx = np.asarray(idx, dtype=np.int64)
        return Samples(self.X[idx], self.y[idx])

    @staticmethod
    def concat(parts: Sequence["Samples"]) -> "Samples":
        return Samples(sp.vstack([p.X for p in parts], format="csr"), np.concatenate([p.y for p in parts]))


def stack(vectors: Sequence[FeatureVec], labels: Sequence[int], dim: int) -> Samples:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for v in vectors:
        if v.dim != dim:
            raise ValueError(f"feature dim {v.dim} != {dim}")
        indices.extend(v.indices)
        data.extend(v.counts)
        indptr.append(len(indices))
    X = sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(vectors), dim),
    )
    return Samples(X, np.asarray(labels, dtype=np.int64))


def featurize_examples(examples: Sequence[Example], dim: int = DEFAULT_DIM) -> Samples:
    return stack([featurize(e.tokens, dim) for e in examples], [e.label for e in examples], dim)


@dataclass(frozen=True)
class SyntheticSpec:
    n_examples: int
    n_classes: int = N_CLASSES
    zipf_s: float = 1.6
    signature_vocab_per_class: int = 50
    shared_vocab: int = 500
    signal_ratio: float = 0.7
    mean_length: float = 12.0

    def __post_init__(self):
        if self.n_examples < 1 or self.signature_vocab_per_class < 1 or self.shared_vocab < 1:
            raise ValueError("n_examples and vocabulary sizes must be positive")
        if self.n_classes != N_CLASSES:
            raise ValueError(f"n_classes is fixed at {N_CLASSES}")
        if self.zipf_s < 0 or self.mean_length <= 0:
            raise ValueError("zipf_s must be >= 0 and mean_length > 0")
        if not 0.0 <= self.signal_ratio <= 1.0:
            raise ValueError("signal_ratio must lie in [0, 1]")

    def class_probs(self) -> np.ndarray:
        w = np.arange(1, self.n_classes + 1, dtype=np.float64) ** -self.zipf_s
        return w / w.sum()


def synth(spec: SyntheticSpec, seed: int) -> list[Example]:
    """Long-tailed corpus: Zipf class prior, class-signature vs shared vocabulary tokens."""
    rng = np.random.default_rng(seed)
    n = spec.n_examples
    labels = rng.choice(spec.n_classes, size=n, p=spec.class_probs())
    lengths = np.maximum(rng.poisson(spec.mean_length, size=n), 1)
    total = int(lengths.sum())
    signal = rng.random(total) < spec.signal_ratio
    sig_word = rng.integers(0, spec.signature_vocab_per_class, size=total)
    shared_word = rng.integers(0, spec.shared_vocab, size=total)
    width = len(str(n - 1))
    out = []
    pos = 0
    for i in range(n):
        c = int(labels[i])
        toks = tuple(
            f"c{c}_w{sig_word[j]}" if signal[j] else f"s_w{shared_word[j]}" for j in range(pos, pos + lengths[i])
        )
        pos += lengths[i]
        eid = f"syn-{i:0{width}d}"
        out.append(Example(id=eid, source_id=eid, tokens=toks, label=c))
    return out


def checksum(examples: Sequence[Example]) -> str:
    h = hashlib.sha256()
    for ex in examples:
        h.update(repr((ex.id, ex.source_id, ex.tokens, ex.label)).encode("utf-8"))
    return h.hexdigest()


def save_split(splits: SplitSet, directory: str | Path) -> None:
    directory = Path(directory)
    for name, part in splits.parts().items():
        write_jsonl(directory / f"{name}.jsonl", (e.to_json() for e in part))
    write_json(directory / "manifest.json", splits.manifest())


def load_split(directory: str | Path) -> SplitSet:
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    parts = [read_examples(directory / f"{name}.jsonl") for name in SPLIT_NAMES]
    return SplitSet(*parts, split_seed=int(manifest["seed"]), by_source=bool(manifest["by_source"]))
