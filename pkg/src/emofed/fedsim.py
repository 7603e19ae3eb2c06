"""Federated simulation: partitioning, client sampling, FedAvg/FedProx rounds and
the two shared-pool CausalFedGSD variants.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .corpus import N_CLASSES
from .dataset import Samples
from .errors import ConfigError, DataError, NumericError
from .metrics import MetricsReport, evaluate
from .model import Arch, Linear, Params, TrainConfig, init, loss, predict, sgd_train

_INIT_STREAM = 1
_CLIENT_STREAM = 2
_SHARED_STREAM = 3
_WARM_STREAM = 4


def mix(*keys: int) -> int:
    """Derive an independent 63-bit seed from a tuple of non-negative ints."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1, np.uint64)[0] >> 1)


class Algorithm(str, enum.Enum):
    FEDAVG = "FedAvg"
    FEDPROX = "FedProx"
    CAUSAL_FEDGSD = "CausalFedGSD"
    CAUSAL_FEDGSD_MOD = "CausalFedGSDMod"


class PartitionMode(str, enum.Enum):
    IID = "iid"
    NON_IID = "noniid"


@dataclass(frozen=True)
class ClientShard:
    client_id: int
    data: Samples

    @property
    def n(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class PartitionPlan:
    mode: PartitionMode = PartitionMode.IID
    n_clients: int = 100
    bins_per_client: int = 2
    seed: int = 0

    @property
    def bins(self) -> int:
        return self.n_clients * self.bins_per_client


@dataclass(frozen=True)
class FedConfig:
    algorithm: Algorithm = Algorithm.FEDPROX
    client_fraction: float = 0.1
    rounds: int = 100
    shared_fraction: float = 0.30
    warm_epochs: int = 5
    shared_sample_fraction: float = 0.05
    train: TrainConfig = field(default_factory=TrainConfig)
    partition: PartitionPlan = field(default_factory=PartitionPlan)
    arch: Arch = field(default_factory=lambda: Linear(4096))
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.client_fraction <= 1:
            raise ConfigError("client_fraction must lie in (0, 1]")
        if round(self.client_fraction * self.partition.n_clients, 9) < 1:
            raise ConfigError("client_fraction * n_clients must be >= 1")
        if self.rounds < 1:
            raise ConfigError("rounds must be positive")
        if self.algorithm in (Algorithm.CAUSAL_FEDGSD, Algorithm.CAUSAL_FEDGSD_MOD):
            if not 0 < self.shared_fraction < 1:
                raise ConfigError("shared_fraction must lie in (0, 1)")
        if not 0 < self.shared_sample_fraction <= 1:
            raise ConfigError("shared_sample_fraction must lie in (0, 1]")
        if self.warm_epochs < 1:
            raise ConfigError("warm_epochs must be positive")


@dataclass(frozen=True)
class RoundLog:
    round: int
    clients: tuple[int, ...]
    client_loss: tuple[float, ...]
    val: MetricsReport
    update_norm: float

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "clients": list(self.clients),
            "client_loss": list(self.client_loss),
            "val": self.val.summary(),
            "update_norm": self.update_norm,
        }


def _ceil(x: float) -> int:
    # guards against 0.3 * 100 == 30.000000000000004
    return math.ceil(round(x, 9))


def n_selected(n_clients: int, fraction: float) -> int:
    return _ceil(fraction * n_clients)


def _shards(train: Samples, index_lists: Sequence[np.ndarray]) -> list[ClientShard]:
    return [ClientShard(i, train.take(np.sort(idx))) for i, idx in enumerate(index_lists)]


def iid_indices(y: np.ndarray, n_clients: int, seed: int) -> list[np.ndarray]:
    """Per-class shuffle, then deal round-robin with one cursor carried across classes."""
    if len(y) < n_clients:
        raise DataError(f"{len(y)} examples cannot fill {n_clients} clients")
    rng = np.random.default_rng(seed)
    owners = np.empty(len(y), dtype=np.int64)
    cursor = 0
    for c in np.unique(y):
        members = rng.permutation(np.flatnonzero(y == c))
        owners[members] = (cursor + np.arange(len(members))) % n_clients
        cursor = (cursor + len(members)) % n_clients
    return [np.flatnonzero(owners == i) for i in range(n_clients)]


def noniid_indices(y: np.ndarray, plan: PartitionPlan, seed: int) -> list[np.ndarray]:
    """Label-sorted contiguous bins, ``bins_per_client`` random bins per client."""
    if len(y) < plan.bins:
        raise DataError(f"{len(y)} examples cannot fill {plan.bins} bins")
    by_label = np.argsort(y, kind="stable")
    bins = np.array_split(by_label, plan.bins)
    order = np.random.default_rng(seed).permutation(plan.bins)
    b = plan.bins_per_client
    return [np.concatenate([bins[j] for j in order[i * b : (i + 1) * b]]) for i in range(plan.n_clients)]


def partition_iid(train: Samples, n_clients: int, seed: int) -> list[ClientShard]:
    return _shards(train, iid_indices(train.y, n_clients, seed))


def partition_noniid(train: Samples, plan: PartitionPlan, seed: int) -> list[ClientShard]:
    return _shards(train, noniid_indices(train.y, plan, seed))


def partition(train: Samples, plan: PartitionPlan) -> list[ClientShard]:
    if plan.mode is PartitionMode.IID:
        return partition_iid(train, plan.n_clients, plan.seed)
    return partition_noniid(train, plan, plan.seed)


def select_clients(n_clients: int, fraction: float, round_index: int, seed: int) -> list[int]:
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    rng = np.random.default_rng([seed, round_index])
    picked = rng.choice(n_clients, size=n_selected(n_clients, fraction), replace=False)
    return sorted(int(i) for i in picked)


def aggregate(updates: Sequence[tuple[Params, int]], client_ids: Sequence[int] | None = None) -> Params:
    """Sample-count weighted mean of client parameters.

    Computed as ``x_0 + sum_i (n_i / N) * (x_i - x_0)`` in ascending client order,
    so identical inputs reproduce their value exactly.
    """
    if not updates:
        raise ValueError("no updates to aggregate")
    if client_ids is not None:
        if len(client_ids) != len(updates):
            raise ValueError("client_ids and updates differ in length")
        updates = [u for _, u in sorted(zip(client_ids, updates), key=lambda t: t[0])]
    arch = updates[0][0].arch
    if any(p.arch != arch for p, _ in updates):
        raise ValueError("cannot aggregate parameters of different architectures")
    total = sum(n for _, n in updates)
    if total <= 0 or any(n <= 0 for _, n in updates):
        raise ValueError("sample counts must be positive")
    base = updates[0][0].flat
    out = base.copy()
    for p, n in updates:
        out += (n / total) * (p.flat - base)
    return Params(arch, out)


def _class_indices(y: np.ndarray):
    for c in np.unique(y):
        yield c, np.flatnonzero(y == c)


def reserve_shared(train: Samples, fraction: float, seed: int) -> tuple[Samples, Samples]:
    """Class-stratified reservation of ``ceil(fraction * n_c)`` examples per class."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    shared = []
    for _, members in _class_indices(train.y):
        shared.append(rng.choice(members, size=_ceil(fraction * len(members)), replace=False))
    shared_idx = np.sort(np.concatenate(shared))
    rest_idx = np.setdiff1d(np.arange(len(train)), shared_idx, assume_unique=True)
    return train.take(shared_idx), train.take(rest_idx)


def attach_shared_samples(
    shards: Sequence[ClientShard], shared: Samples, fraction: float, seed: int
) -> list[ClientShard]:
    """Give each client its own random draw of ``ceil(fraction * |shared|)`` pooled examples."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    m = _ceil(fraction * len(shared))
    out = []
    for shard in shards:
        rng = np.random.default_rng(mix(seed, _SHARED_STREAM, shard.client_id))
        extra = shared.take(np.sort(rng.choice(len(shared), size=m, replace=False)))
        out.append(ClientShard(shard.client_id, Samples.concat([shard.data, extra])))
    return out


def warm_start(arch: Arch, shared: Samples, epochs: int, train_cfg: TrainConfig, seed: int) -> Params:
    """Centrally pre-train a fresh model on the whole shared pool (no proximal term)."""
    if len(shared) == 0:
        raise ValueError("shared pool is empty")
    params = init(arch, seed)
    cfg = replace(train_cfg, local_epochs=epochs, mu=0.0, anchor=None)
    return sgd_train(params, shared.X, shared.y, cfg, mix(seed, _WARM_STREAM))


def evaluate_params(params: Params, data: Samples, k: int = N_CLASSES) -> MetricsReport:
    return evaluate(predict(params, data.X), data.y, k)


@dataclass(frozen=True)
class ExperimentResult:
    rounds: list[RoundLog]
    test: MetricsReport
    rounds_to_target: int | None
    initial_val: MetricsReport


def rounds_to_target(logs: Sequence[RoundLog], target: float) -> int | None:
    for log in logs:
        if log.val.f1 >= target:
            return log.round
    return None


def prepare_clients(cfg: FedConfig, train: Samples) -> tuple[list[ClientShard], Params]:
    """Build client shards and the round-0 global model for ``cfg.algorithm``."""
    init_seed = mix(cfg.seed, _INIT_STREAM)
    if cfg.algorithm in (Algorithm.FEDAVG, Algorithm.FEDPROX):
        return partition(train, cfg.partition), init(cfg.arch, init_seed)
    shared, remainder = reserve_shared(train, cfg.shared_fraction, mix(cfg.seed, _SHARED_STREAM))
    shards = partition(remainder, cfg.partition)
    if cfg.algorithm is Algorithm.CAUSAL_FEDGSD:
        shards = attach_shared_samples(shards, shared, cfg.shared_sample_fraction, cfg.seed)
        return shards, init(cfg.arch, init_seed)
    return shards, warm_start(cfg.arch, shared, cfg.warm_epochs, cfg.train, init_seed)


def _local_update(global_params: Params, shard: ClientShard, cfg: TrainConfig, seed: int) -> tuple[Params, float]:
    new = sgd_train(global_params, shard.data.X, shard.data.y, cfg, seed)
    value = loss(new, shard.data.X, shard.data.y, cfg)
    if not math.isfinite(value) or not np.all(np.isfinite(new.flat)):
        raise NumericError(f"client {shard.client_id}: non-finite local loss")
    return new, value


def run_experiment(
    cfg: FedConfig,
    train: Samples,
    val: Samples,
    test: Samples,
    workers: int = 1,
    target: float | None = None,
    on_round: Callable[[RoundLog], None] | None = None,
    stop_at_target: bool = False,
) -> ExperimentResult:
    """Run ``cfg.rounds`` federated rounds and evaluate the final global model on test.

    Clients only hand ``(Params, n)`` back to the server; results do not depend on
    ``workers`` because seeds are per (round, client) and aggregation is ordered.
    """
    shards, global_params = prepare_clients(cfg, train)
    initial_val = evaluate_params(global_params, val)
    proximal = cfg.algorithm is Algorithm.FEDPROX
    logs: list[RoundLog] = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for r in range(1, cfg.rounds + 1):
            selected = select_clients(cfg.partition.n_clients, cfg.client_fraction, r, cfg.seed)
            local_cfg = replace(cfg.train, anchor=global_params if proximal else None, mu=cfg.train.mu if proximal else 0.0)
            jobs = [(global_params, shards[i], local_cfg, mix(cfg.seed, _CLIENT_STREAM, r, i)) for i in selected]
            results = list(pool.map(lambda a: _local_update(*a), jobs)) if pool else [_local_update(*a) for a in jobs]
            new_global = aggregate([(p, shards[i].n) for (p, _), i in zip(results, selected)], selected)
            update_norm = float(np.linalg.norm(new_global.flat - global_params.flat))
            global_params = new_global
            log = RoundLog(r, tuple(selected), tuple(v for _, v in results), evaluate_params(global_params, val), update_norm)
            logs.append(log)
            if on_round is not None:
                on_round(log)
            if stop_at_target and target is not None and log.val.f1 >= target:
                break
    finally:
        if pool is not None:
            pool.shutdown()
    test_report = evaluate_params(global_params, test)
    reached = rounds_to_target(logs, target) if target is not None else None
    return ExperimentResult(logs, test_report, reached, initial_val)


def train_centralized(arch: Arch, train: Samples, cfg: TrainConfig, epochs: int, seed: int) -> Params:
    """Reference non-federated model: ``epochs`` SGD passes over the whole train set."""
    cfg = replace(cfg, local_epochs=epochs, mu=0.0, anchor=None)
    params = sgd_train(init(arch, mix(seed, _INIT_STREAM)), train.X, train.y, cfg, seed)
    value = loss(params, train.X, train.y, cfg)
    if not math.isfinite(value):
        raise NumericError("non-finite training loss")
    return params
