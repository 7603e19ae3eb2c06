import json
from pathlib import Path

import pytest

from emofed.cli import main
from emofed.jsonl import read_json

SMALL = ["--set", "model.dim=256", "--set", "fed.n_clients=10", "--set", "train.learning_rate=0.1"]


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    assert run("synth", "--out", root / "corpus.jsonl", "--n", 1500, "--seed", 7) == 0
    assert run("split", "--input", root / "corpus.jsonl", "--out", root / "splits", "--seed", 1) == 0
    return root


def test_synth_file_and_summary(workspace, tmp_path):
    corpus = workspace / "corpus.jsonl"
    assert len(corpus.read_text(encoding="utf-8").splitlines()) == 1500
    assert run("synth", "--out", tmp_path / "again.jsonl", "--n", 1500, "--seed", 7) == 0
    assert (tmp_path / "again.jsonl").read_bytes() == corpus.read_bytes()
    summary = read_json(f"{corpus}.summary.json")
    # Zipf(1.6): expected rank-1 / rank-2 ratio is 2 ** 1.6 ~= 3.03
    assert summary["head_to_second_ratio"] > 2
    assert summary["config"]["synth"]["zipf_s"] == 1.6


def test_synth_large(tmp_path):
    out = tmp_path / "big.jsonl"
    assert run("synth", "--out", out, "--n", 20000, "--seed", 7) == 0
    assert len(out.read_text(encoding="utf-8").splitlines()) == 20000
    counts = sorted(read_json(f"{out}.summary.json")["class_counts"], reverse=True)
    assert counts[0] > 2 * counts[1]


def write_raw(path, tweets):
    path.write_text("".join(json.dumps({"id": i, "text": t}, ensure_ascii=False) + "\n" for i, t in tweets), encoding="utf-8")


def test_prep_counts_and_modes(tmp_path, capsys):
    raw = tmp_path / "raw.jsonl"
    write_raw(raw, [("1", "one 😂"), ("2", "😂😂 @a #b 🎉"), ("3", "no emoji"), ("4", "🍕 http://x.y two 🚗"), ("5", "⚽")])
    assert run("prep", "--input", raw, "--out", tmp_path / "tok.jsonl") == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["examples_out"] == 7 and stats["tweets_dropped_no_emoji"] == 1
    assert run("prep", "--input", raw, "--out", tmp_path / "plain.jsonl", "--mode", "plain") == 0
    plain_stats = json.loads(capsys.readouterr().out)
    assert plain_stats["examples_out"] == 7
    tok = (tmp_path / "tok.jsonl").read_text(encoding="utf-8")
    plain = (tmp_path / "plain.jsonl").read_text(encoding="utf-8")
    assert tok != plain and "<mention>" in tok and "<mention>" not in plain
    assert read_json(tmp_path / "tok.jsonl.stats.json")["table_checksum"]


def test_prep_empty_file(tmp_path, capsys):
    raw = tmp_path / "empty.jsonl"
    raw.write_text("", encoding="utf-8")
    assert run("prep", "--input", raw, "--out", tmp_path / "out.jsonl") == 0
    assert json.loads(capsys.readouterr().out)["examples_out"] == 0


def test_prep_malformed_line(tmp_path, capsys):
    raw = tmp_path / "bad.jsonl"
    raw.write_text('{"id": "1", "text": "😂"}\n{oops\n', encoding="utf-8")
    assert run("prep", "--input", raw, "--out", tmp_path / "out.jsonl") == 3
    assert "bad.jsonl:2" in capsys.readouterr().err


def test_split_manifest(workspace):
    manifest = read_json(workspace / "splits" / "manifest.json")
    assert manifest["by_source"] is True
    sizes = [sum(manifest["counts"][k]) for k in ("train", "validation", "test")]
    assert sizes == [1200, 150, 150]


def test_config_errors(workspace, tmp_path, capsys):
    assert run("fed", "--splits", workspace / "splits", "--run-dir", tmp_path / "r", "--set", "fed.nope=1") == 2
    assert run("fed", "--splits", workspace / "splits", "--run-dir", tmp_path / "r", "--fractions", "0") == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]", encoding="utf-8")
    assert run("synth", "--out", tmp_path / "x.jsonl", "--config", cfg) == 2
    assert run("central", "--splits", tmp_path / "nowhere", "--run-dir", tmp_path / "r2") == 3


def test_run_root_env(workspace, tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("EMOFED_RUN_ROOT", raising=False)
    assert run("central", "--splits", workspace / "splits", "--epochs", 1, "--balancing", "none", *SMALL) == 2
    monkeypatch.setenv("EMOFED_RUN_ROOT", str(tmp_path))
    capsys.readouterr()
    assert run("central", "--splits", workspace / "splits", "--epochs", 1, "--balancing", "none", *SMALL) == 0
    run_dir = Path(json.loads(capsys.readouterr().out)["run_dir"])
    assert run_dir.parent == tmp_path and run_dir.name.startswith("central-")


def test_central(workspace, tmp_path):
    args = ["central", "--splits", workspace / "splits", "--epochs", 2, *SMALL]
    assert run(*args, "--run-dir", tmp_path / "a") == 0
    assert run(*args, "--run-dir", tmp_path / "b") == 0
    resampled = read_json(tmp_path / "a" / "resample" / "report.json")
    assert len(set(resampled["train_counts"])) == 1
    assert resampled["train_counts"][0] == 1200 // 10
    assert (tmp_path / "a" / "cost" / "params.json").read_text() != (tmp_path / "a" / "none" / "params.json").read_text()
    for cell in ("none", "resample", "cost"):
        assert (tmp_path / "a" / cell / "report.json").read_bytes() == (tmp_path / "b" / cell / "report.json").read_bytes()
    # validation / test untouched by balancing
    checks = {read_json(tmp_path / "a" / c / "report.json")["split_checksums"]["test"] for c in ("none", "resample", "cost")}
    assert len(checks) == 1
    resolved = read_json(tmp_path / "a" / "config.json")
    assert resolved["central"]["epochs"] == 2 and resolved["fed"]["shared_fraction"] == 0.3


@pytest.fixture(scope="module")
def fed_grid(workspace):
    run_dir = workspace / "fedgrid"
    code = run(
        "fed", "--splits", workspace / "splits", "--run-dir", run_dir, "--rounds", 2,
        "--algorithms", "FedProx", "--balancing", "none,resample,cost", *SMALL,
    )
    assert code == 0
    return run_dir


def test_fed_grid_layout(fed_grid):
    cells = sorted(p.parent.relative_to(fed_grid).as_posix() for p in fed_grid.rglob("rounds.jsonl"))
    assert len(cells) == 18
    assert len([c for c in cells if c.startswith("none/FedProx/")]) == 6
    cfg = read_json(fed_grid / "none" / "FedProx" / "c010-iid" / "config.json")
    assert cfg["experiment"]["train"]["mu"] == 0.01
    first = json.loads((fed_grid / "none" / "FedProx" / "c030-noniid" / "rounds.jsonl").read_text().splitlines()[0])
    assert set(first) >= {"round", "clients", "val", "update_norm"}
    assert set(first["val"]) == {"precision", "recall", "f1_weighted", "accuracy"}
    assert len(first["clients"]) == 3


def test_fed_rerun_identical(workspace, fed_grid, tmp_path):
    again = tmp_path / "again"
    assert run(
        "fed", "--splits", workspace / "splits", "--run-dir", again, "--rounds", 2,
        "--algorithms", "FedProx", "--balancing", "none,resample,cost", *SMALL, "--workers", 3,
    ) == 0
    for p in fed_grid.rglob("*.json*"):
        rel = p.relative_to(fed_grid)
        if rel.name == "config.json" and rel.parent == Path("."):
            continue
        other = again / rel
        if rel.name in ("config.json", "report.json"):
            a, b = read_json(p), read_json(other)
            for doc in (a, b):
                cfg = doc if rel.name == "config.json" else doc["config"]
                assert cfg["experiment"]["fed"].pop("workers") in (1, 3)
            assert a == b
        else:
            assert p.read_bytes() == other.read_bytes(), rel


def test_fed_target(workspace, tmp_path):
    assert run(
        "fed", "--splits", workspace / "splits", "--run-dir", tmp_path, "--rounds", 2, "--algorithms", "CausalFedGSD",
        "--fractions", "0.5", "--partitions", "noniid", "--balancing", "none", "--target", "0.01", *SMALL,
    ) == 0
    report = read_json(tmp_path / "none" / "CausalFedGSD" / "c050-noniid" / "report.json")
    assert report["rounds_to_target"] == 1
    assert report["config"]["baseline_noniid_extrapolation"] is True


def test_report_grid_shape_and_stability(fed_grid, tmp_path):
    assert run("report", fed_grid, "--out", tmp_path / "r1") == 0
    assert run("report", fed_grid, "--out", tmp_path / "r2") == 0
    csv1 = (tmp_path / "r1" / "tables.csv").read_bytes()
    assert csv1 == (tmp_path / "r2" / "tables.csv").read_bytes()
    lines = csv1.decode().splitlines()
    assert len(lines) == 1 + 3
    assert len(lines[0].split(",")) == 1 + 6 * 3
    md = (tmp_path / "r1" / "tables.md").read_text(encoding="utf-8")
    assert md.count("**") >= 6 and md.endswith("\n")


def test_report_copies_emitted_metrics(fed_grid, tmp_path):
    from emofed.jsonl import read_json as rj
    import hashlib

    assert run("report", fed_grid, "--out", tmp_path) == 0
    sources = rj(tmp_path / "report_sources.json")["sources"]
    assert len(sources) == 18
    for src in sources:
        assert hashlib.sha256((fed_grid / src["path"]).read_bytes()).hexdigest() == src["sha256"]
    report = rj(fed_grid / "cost" / "FedProx" / "c050-noniid" / "report.json")
    f1 = f"{100 * report['test_metrics']['f1_weighted']:.2f}"
    row = [l for l in (tmp_path / "tables.csv").read_text().splitlines() if l.startswith("Cost-Sensitive")][0]
    header = (tmp_path / "tables.csv").read_text().splitlines()[0].split(",")
    assert row.split(",")[header.index("FedProx c=50% non-IID F1")] == f1


def test_report_single_and_missing(workspace, tmp_path, capsys):
    run_dir = tmp_path / "one"
    assert run(
        "fed", "--splits", workspace / "splits", "--run-dir", run_dir, "--rounds", 1, "--algorithms", "FedAvg",
        "--fractions", "0.5", "--partitions", "iid", "--balancing", "none", *SMALL,
    ) == 0
    broken = run_dir / "none" / "FedAvg" / "c010-iid"
    broken.mkdir(parents=True)
    (broken / "config.json").write_text("{}", encoding="utf-8")
    capsys.readouterr()
    assert run("report", run_dir) == 0
    captured = capsys.readouterr()
    assert "missing run: none/FedAvg/c010-iid" in captured.err
    lines = (run_dir / "tables.csv").read_text().splitlines()
    assert len(lines) == 2 and len(lines[1].split(",")) == 4
    assert run("report", tmp_path / "empty-dir") == 3
