"""Experiment configuration: one JSON document, validated before any work starts."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

Balancing = Literal["none", "resample", "cost"]
AlgorithmName = Literal["FedAvg", "FedProx", "CausalFedGSD", "CausalFedGSDMod"]
PartitionName = Literal["iid", "noniid"]

BALANCING_ORDER: tuple[str, ...] = ("none", "resample", "cost")
BALANCING_LABELS = {"none": "Imbalanced", "resample": "Re-sampled", "cost": "Cost-Sensitive"}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SynthSettings(_Section):
    n_examples: int = Field(20000, gt=0)
    zipf_s: float = Field(1.6, ge=0)
    signature_vocab_per_class: int = Field(50, gt=0)
    shared_vocab: int = Field(500, gt=0)
    signal_ratio: float = Field(0.7, ge=0, le=1)
    mean_length: float = Field(12.0, gt=0)


class PrepSettings(_Section):
    mode: Literal["tokens", "plain"] = "tokens"
    table: str | None = None


class SplitSettings(_Section):
    by_source: bool = True


class ModelSettings(_Section):
    arch: Literal["linear", "mlp"] = "linear"
    dim: int = Field(4096, gt=0)
    hidden: int = Field(64, gt=0)

    @field_validator("dim")
    @classmethod
    def _power_of_two(cls, v: int) -> int:
        if v & (v - 1):
            raise ValueError("dim must be a power of two")
        return v


class TrainSettings(_Section):
    learning_rate: float = Field(1e-2, ge=0)
    batch_size: int = Field(8, gt=0)
    local_epochs: int = Field(1, gt=0)
    mu: float = Field(0.01, ge=0)


class CentralSettings(_Section):
    epochs: int = Field(25, gt=0)
    balancing: list[Balancing] = list(BALANCING_ORDER)


class FedSettings(_Section):
    algorithms: list[AlgorithmName] = ["FedProx", "CausalFedGSDMod"]
    fractions: list[float] = [0.1, 0.3, 0.5]
    partitions: list[PartitionName] = ["iid", "noniid"]
    balancing: list[Balancing] = list(BALANCING_ORDER)
    rounds: int = Field(100, gt=0)
    n_clients: int = Field(100, gt=0)
    bins_per_client: int = Field(2, gt=0)
    shared_fraction: float = Field(0.30, gt=0, lt=1)
    warm_epochs: int = Field(5, gt=0)
    shared_sample_fraction: float = Field(0.05, gt=0, le=1)
    target: float | None = Field(None, ge=0, le=1)
    workers: int = Field(1, gt=0)

    @field_validator("fractions")
    @classmethod
    def _fractions(cls, v: list[float]) -> list[float]:
        if not v or any(not 0 < c <= 1 for c in v):
            raise ValueError("client fractions must lie in (0, 1]")
        return v


class ExperimentConfig(_Section):
    seed: int = Field(0, ge=0)
    synth: SynthSettings = SynthSettings()
    prep: PrepSettings = PrepSettings()
    split: SplitSettings = SplitSettings()
    model: ModelSettings = ModelSettings()
    train: TrainSettings = TrainSettings()
    central: CentralSettings = CentralSettings()
    fed: FedSettings = FedSettings()

    def resolved(self) -> dict:
        """Every field with defaults materialized, JSON-ready."""
        return self.model_dump(mode="json")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.resolved(), sort_keys=True).encode()).hexdigest()


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(doc: dict, dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    node = doc
    for key in parents:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted}: {key} is not a section")
    node[leaf] = value


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None, sets: list[str] = ()) -> ExperimentConfig:
    """Read an optional JSON config, apply overrides, validate.

    ``overrides`` maps dotted paths to values (``None`` entries are ignored);
    ``sets`` holds raw ``path=value`` strings whose values are parsed as JSON when possible.
    """
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc.msg})") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    for item in sets:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects path=value, got {item!r}")
        set_path(doc, key.strip(), _parse_value(raw))
    for key, value in (overrides or {}).items():
        if value is not None:
            set_path(doc, key, value)
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
