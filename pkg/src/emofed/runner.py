"""Experiment commands behind the CLI: data preparation, training runs and reporting."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus, dataset
from .config import BALANCING_LABELS, BALANCING_ORDER, ExperimentConfig
from .dataset import Samples, SplitSet
from .errors import DataError
from .fedsim import (
    Algorithm,
    FedConfig,
    PartitionMode,
    PartitionPlan,
    evaluate_params,
    mix,
    run_experiment,
    train_centralized,
)
from .jsonl import read_json, write_json, write_jsonl
from .metrics import pct
from .model import MLP, Arch, Linear, TrainConfig

log = logging.getLogger(__name__)

_BALANCE_STREAM = 11


def _arch(cfg: ExperimentConfig) -> Arch:
    m = cfg.model
    return MLP(m.dim, m.hidden) if m.arch == "mlp" else Linear(m.dim)


def _train_cfg(cfg: ExperimentConfig, class_weights=None) -> TrainConfig:
    t = cfg.train
    return TrainConfig(
        learning_rate=t.learning_rate,
        batch_size=t.batch_size,
        local_epochs=t.local_epochs,
        mu=t.mu,
        class_weights=None if class_weights is None else tuple(float(w) for w in class_weights),
    )


def run_synth(cfg: ExperimentConfig, out: str | Path) -> dict:
    spec = dataset.SyntheticSpec(**cfg.synth.model_dump())
    examples = dataset.synth(spec, cfg.seed)
    write_jsonl(out, (e.to_json() for e in examples))
    counts = dataset.class_counts(examples)
    ranked = np.sort(counts)[::-1]
    summary = {
        "config": cfg.resolved(),
        "n_examples": len(examples),
        "class_counts": counts.tolist(),
        "head_to_second_ratio": float(ranked[0] / ranked[1]) if ranked[1] else None,
    }
    write_json(Path(f"{out}.summary.json"), summary)
    return summary


def run_prep(cfg: ExperimentConfig, input_path: str | Path, out: str | Path) -> dict:
    table = corpus.CategoryTable.load(cfg.prep.table)
    tweets = corpus.read_tweets(input_path)
    examples, stats = corpus.prepare(tweets, table, cfg.prep.mode)
    write_jsonl(out, (e.to_json() for e in examples))
    summary = {"config": cfg.resolved(), "table_checksum": table.checksum, **stats.to_json()}
    write_json(Path(f"{out}.stats.json"), summary)
    return summary


def run_split(cfg: ExperimentConfig, input_path: str | Path, out_dir: str | Path) -> dict:
    examples = corpus.read_examples(input_path)
    splits = dataset.split(examples, cfg.seed, cfg.split.by_source)
    dataset.save_split(splits, out_dir)
    return splits.manifest()


@dataclass
class PreparedData:
    train: Samples
    val: Samples
    test: Samples
    train_counts: list[int]
    class_weights: np.ndarray | None


def prepare_training_data(cfg: ExperimentConfig, splits: SplitSet, balancing: str) -> PreparedData:
    """Balance the training split only; validation and test are featurized as-is."""
    train = splits.train
    weights = None
    if balancing == "resample":
        train = dataset.resample(train, mix(cfg.seed, _BALANCE_STREAM))
    elif balancing == "cost":
        weights = dataset.class_weights(train)
    dim = cfg.model.dim
    return PreparedData(
        train=dataset.featurize_examples(train, dim),
        val=dataset.featurize_examples(splits.validation, dim),
        test=dataset.featurize_examples(splits.test, dim),
        train_counts=dataset.class_counts(train).tolist(),
        class_weights=weights,
    )


def _split_checksums(splits: SplitSet) -> dict:
    return {name: dataset.checksum(part) for name, part in splits.parts().items()}


def run_central(cfg: ExperimentConfig, splits_dir: str | Path, run_dir: str | Path) -> dict:
    run_dir = Path(run_dir)
    splits = dataset.load_split(splits_dir)
    write_json(run_dir / "config.json", cfg.resolved())
    results = {}
    for balancing in cfg.central.balancing:
        data = prepare_training_data(cfg, splits, balancing)
        params = train_centralized(_arch(cfg), data.train, _train_cfg(cfg, data.class_weights), cfg.central.epochs, cfg.seed)
        report = {
            "kind": "central",
            "config": cfg.resolved(),
            "balancing": balancing,
            "train_counts": data.train_counts,
            "class_weights": None if data.class_weights is None else data.class_weights.tolist(),
            "split_checksums": _split_checksums(splits),
            "val_metrics": evaluate_params(params, data.val).to_json(),
            "test_metrics": evaluate_params(params, data.test).to_json(),
        }
        cell = run_dir / balancing
        write_json(cell / "report.json", report)
        (cell / "params.json").write_text(params.dumps() + "\n", encoding="utf-8")
        results[balancing] = report
        log.info("central %s: test f1 %s", balancing, pct(report["test_metrics"]["f1_weighted"]))
    return results


def fed_cell_name(balancing: str, algorithm: str, fraction: float, partition: str) -> str:
    return f"{balancing}/{algorithm}/c{round(fraction * 100):03d}-{partition}"


def fed_config(cfg: ExperimentConfig, algorithm: str, fraction: float, partition: str, class_weights=None) -> FedConfig:
    f = cfg.fed
    return FedConfig(
        algorithm=Algorithm(algorithm),
        client_fraction=fraction,
        rounds=f.rounds,
        shared_fraction=f.shared_fraction,
        warm_epochs=f.warm_epochs,
        shared_sample_fraction=f.shared_sample_fraction,
        train=_train_cfg(cfg, class_weights),
        partition=PartitionPlan(PartitionMode(partition), f.n_clients, f.bins_per_client, cfg.seed),
        arch=_arch(cfg),
        seed=cfg.seed,
    )


def run_fed(cfg: ExperimentConfig, splits_dir: str | Path, run_dir: str | Path) -> dict:
    """Run the grid balancing x algorithm x client fraction x partition mode."""
    run_dir = Path(run_dir)
    splits = dataset.load_split(splits_dir)
    write_json(run_dir / "config.json", cfg.resolved())
    f = cfg.fed
    results = {}
    for balancing in f.balancing:
        data = prepare_training_data(cfg, splits, balancing)
        for algorithm in f.algorithms:
            for fraction in f.fractions:
                for partition in f.partitions:
                    name = fed_cell_name(balancing, algorithm, fraction, partition)
                    cell = run_dir / name
                    fc = fed_config(cfg, algorithm, fraction, partition, data.class_weights)
                    cell_cfg = {
                        "experiment": cfg.resolved(),
                        "balancing": balancing,
                        "algorithm": algorithm,
                        "client_fraction": fraction,
                        "partition": partition,
                        "baseline_noniid_extrapolation": algorithm == "CausalFedGSD" and partition == "noniid",
                    }
                    write_json(cell / "config.json", cell_cfg)
                    result = run_experiment(fc, data.train, data.val, data.test, workers=f.workers, target=f.target)
                    write_jsonl(cell / "rounds.jsonl", (r.to_json() for r in result.rounds))
                    report = {
                        "kind": "fed",
                        "config": cell_cfg,
                        "train_counts": data.train_counts,
                        "split_checksums": _split_checksums(splits),
                        "initial_val_metrics": result.initial_val.summary(),
                        "test_metrics": result.test.to_json(),
                    }
                    if f.target is not None:
                        report["rounds_to_target"] = result.rounds_to_target
                    write_json(cell / "report.json", report)
                    results[name] = report
                    log.info("fed %s: test f1 %s", name, pct(report["test_metrics"]["f1_weighted"]))
    return results


METRIC_COLUMNS = (("precision", "P"), ("recall", "R"), ("f1_weighted", "F1"))


def _column_key(report: dict) -> tuple:
    if report["kind"] == "central":
        return (0, "Centralised", 0.0, "")
    c = report["config"]
    return (1, c["algorithm"], float(c["client_fraction"]), c["partition"])


def _column_label(key: tuple) -> str:
    _, algorithm, fraction, partition = key
    if key[0] == 0:
        return algorithm
    return f"{algorithm} c={round(fraction * 100)}% {'IID' if partition == 'iid' else 'non-IID'}"


def _balancing_of(report: dict) -> str:
    return report["balancing"] if report["kind"] == "central" else report["config"]["balancing"]


def collect_reports(run_dir: str | Path) -> tuple[list[tuple[Path, dict, str]], list[str]]:
    """Completed reports as (path, body, sha256), plus cells that never finished.

    A cell is unfinished when it holds a config.json but no report.json anywhere below it.
    """
    run_dir = Path(run_dir)
    done = []
    for report_path in sorted(run_dir.rglob("report.json")):
        raw = report_path.read_bytes()
        done.append((report_path, read_json(report_path), hashlib.sha256(raw).hexdigest()))
    finished = {p.parent for p, _, _ in done}
    missing = []
    for cfg_path in sorted(run_dir.rglob("config.json")):
        cell = cfg_path.parent
        if not any(f == cell or cell in f.parents for f in finished):
            missing.append(str(cell.relative_to(run_dir)) or ".")
    return done, missing


def build_report(run_dir: str | Path, out_dir: str | Path | None = None) -> dict:
    """Pivot emitted reports into Markdown and CSV tables; metrics are copied, never recomputed."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir
    done, missing = collect_reports(run_dir)
    if not done:
        raise DataError(f"{run_dir}: no completed runs found")
    cells: dict[tuple[str, tuple], dict] = {}
    for _, report, _ in done:
        cells[(_balancing_of(report), _column_key(report))] = report["test_metrics"]
    rows = [b for b in BALANCING_ORDER if any(b == r for r, _ in cells)]
    columns = sorted({k for _, k in cells})

    md = io.StringIO()
    md.write(f"# Test metrics ({len(done)} runs)\n")
    for metric, short in METRIC_COLUMNS:
        values = [cells[(r, c)][metric] for r in rows for c in columns if (r, c) in cells]
        best = max(values)
        md.write(f"\n## {short}\n\n")
        md.write("| Balancing | " + " | ".join(_column_label(c) for c in columns) + " |\n")
        md.write("|---|" + "---|" * len(columns) + "\n")
        for r in rows:
            entries = []
            for c in columns:
                if (r, c) not in cells:
                    entries.append("–")
                    continue
                v = cells[(r, c)][metric]
                entries.append(f"**{pct(v)}**" if v == best else pct(v))
            md.write(f"| {BALANCING_LABELS[r]} | " + " | ".join(entries) + " |\n")
    if missing:
        md.write("\n## Missing or partial runs\n\n")
        for m in missing:
            md.write(f"- {m}\n")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["balancing"] + [f"{_column_label(c)} {short}" for c in columns for _, short in METRIC_COLUMNS])
    for r in rows:
        writer.writerow(
            [BALANCING_LABELS[r]]
            + [pct(cells[(r, c)][m]) if (r, c) in cells else "" for c in columns for m, _ in METRIC_COLUMNS]
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "tables.md").write_text(md.getvalue(), encoding="utf-8")
    (out_dir / "tables.csv").write_text(buf.getvalue(), encoding="utf-8")
    sources = [{"path": str(p.relative_to(run_dir)), "sha256": h} for p, _, h in done]
    write_json(out_dir / "report_sources.json", {"sources": sources, "missing": missing})
    return {"runs": len(done), "rows": rows, "columns": [_column_label(c) for c in columns], "missing": missing}


def default_run_dir(root: str | Path, command: str, cfg: ExperimentConfig) -> Path:
    return Path(root) / f"{command}-{cfg.digest()[:12]}"

