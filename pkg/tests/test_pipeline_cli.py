from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from vocab_squeeze.cli import main
from vocab_squeeze.ingest import parse_counts, read_counts
from vocab_squeeze.mi import partition_mi
from vocab_squeeze.pipeline import (
    ConfigError,
    RunConfig,
    compare,
    compress,
    load_features,
    read_compare_csv,
    read_mapping,
)
from vocab_squeeze.synthetic import SyntheticConfig, generate_table

FREQUENCY_TRAP = "".join(
    f"p\t{v}\t{a}\t{b}\n"
    for v, a, b in [("x1", 2, 2), ("x2", 2, 2), ("x3", 0, 1), ("x4", 0, 1), ("x5", 1, 0), ("x6", 1, 0)]
)


@pytest.fixture
def synth(tmp_path):
    path = tmp_path / "synth.tsv"
    assert main(["gen-synthetic", "--n", "3000", "--num-features", "4", "--seed", "3", "--output", str(path)]) == 0
    return path


def _compress(tmp_path, inp, tag, *extra):
    out, rep = tmp_path / f"{tag}.map", tmp_path / f"{tag}.json"
    code = main(["compress", "--input", str(inp), "--output", str(out), "--report", str(rep), *extra])
    return code, out, rep


def test_full_budget_is_identity(tmp_path, synth):
    code, out, rep = _compress(tmp_path, synth, "id", "--method", "submodular", "--budget", "3000")
    assert code == 0
    report = json.loads(rep.read_text())
    assert report["avg_mi_loss"] == pytest.approx(0.0, abs=1e-12)
    mapping = read_mapping(out)
    table = read_counts(synth)
    for name in table.feature_names:
        assert len(set(mapping[name].values())) == table[name].n


def test_frequency_trap_via_cli(tmp_path):
    inp = tmp_path / "trap.tsv"
    inp.write_text(FREQUENCY_TRAP)
    for budget in ("2", "3"):
        code, out, rep = _compress(tmp_path, inp, f"trap_{budget}", "--method", "frequency", "--budget", budget)
        assert code == 0
        feat = json.loads(rep.read_text())["per_feature"]["p"]
        assert feat["mi_before_bits"] == pytest.approx(1 / 3, abs=1e-12)
        assert feat["mi_after_bits"] == pytest.approx(0.0, abs=1e-12)
        assert feat["m"] == int(budget)


@pytest.mark.parametrize(
    "method, allocation",
    [
        ("submodular", "global"),
        ("submodular", "mi"),
        ("submodular-distributed", "uniform"),
        ("bucketing", "uniform"),
        ("frequency", "global"),
        ("divisive", "mi"),
    ],
)
def test_mapping_covers_values_and_evaluates(tmp_path, synth, method, allocation):
    code, out, rep = _compress(
        tmp_path, synth, method, "--method", method, "--budget", "300", "--allocation", allocation, "--min-count", "2"
    )
    assert code == 0
    table = read_counts(synth)
    mapping = read_mapping(out)
    report = json.loads(rep.read_text())
    assert sorted(mapping) == table.feature_names
    total = 0
    # the min_count OOV cluster sits outside the budget
    slack = sum(bool((table[name].totals < 2).any()) for name in table.feature_names)
    for name in table.feature_names:
        assert sorted(mapping[name]) == sorted(table[name].value_ids)
        ids = sorted(set(mapping[name].values()))
        assert ids == list(range(len(ids)))
        assert report["per_feature"][name]["m"] == len(ids)
        total += len(ids)
    assert total <= 300 + slack
    ev = tmp_path / f"{method}.eval.json"
    assert main(["evaluate", "--input", str(synth), "--mapping", str(out), "--report", str(ev), "--min-count", "2"]) == 0
    again = json.loads(ev.read_text())
    for name, row in report["per_feature"].items():
        assert again["per_feature"][name]["mi_before_bits"] == pytest.approx(row["mi_before_bits"], abs=1e-9)
        assert again["per_feature"][name]["mi_after_bits"] == pytest.approx(row["mi_after_bits"], abs=1e-9)
    assert (tmp_path / f"{method}.png").exists()


def test_byte_identical_reruns(tmp_path, synth, monkeypatch):
    outputs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("VOCAB_SQUEEZE_THREADS", threads)
        for method in ("submodular", "submodular-distributed", "divisive"):
            _, out, rep = _compress(
                tmp_path, synth, f"{method}_{threads}", "--method", method, "--budget", "400",
                "--allocation", "uniform", "--seed", "11",
            )
            outputs.append((method, out.read_bytes(), rep.read_bytes(), tmp_path.joinpath(f"{method}_{threads}.png").read_bytes()))
    half = len(outputs) // 2
    for a, b in zip(outputs[:half], outputs[half:]):
        assert a == b


def test_record_time_is_opt_in(tmp_path, synth):
    _, _, rep = _compress(tmp_path, synth, "t", "--method", "bucketing", "--budget", "40", "--record-time", "--no-figure")
    assert "wall_time_ms" in json.loads(rep.read_text())
    _, _, rep = _compress(tmp_path, synth, "nt", "--method", "bucketing", "--budget", "40", "--no-figure")
    assert "wall_time_ms" not in json.loads(rep.read_text())


def test_trace_written(tmp_path, synth):
    trace = tmp_path / "trace.jsonl"
    code, _, _ = _compress(
        tmp_path, synth, "tr", "--method", "submodular-distributed", "--budget", "400",
        "--epsilon", "0.1", "--trace", str(trace), "--no-figure",
    )
    assert code == 0
    lines = [json.loads(x) for x in trace.read_text().splitlines()]
    assert lines and {"feature", "round", "threshold", "inserted_per_shard"} <= set(lines[0])


def test_compare_single_cell_matches_compress(tmp_path, synth):
    csv = tmp_path / "cmp.csv"
    code = main([
        "compare", "--input", str(synth), "--report", str(csv), "--methods", "submodular",
        "--budgets", "250", "--allocation", "uniform", "--no-figure",
    ])
    assert code == 0
    rows = read_compare_csv(csv)
    assert len(rows) == 1 and rows[0]["status"] == "ok"
    _, _, rep = _compress(tmp_path, synth, "c", "--method", "submodular", "--budget", "250", "--allocation", "uniform", "--no-figure")
    assert rows[0]["avg_mi_loss"] == pytest.approx(json.loads(rep.read_text())["avg_mi_loss"], abs=1e-12)


def test_compare_marks_failed_cells(tmp_path, synth):
    csv = tmp_path / "cmp.csv"
    code = main([
        "compare", "--input", str(synth), "--report", str(csv), "--methods", "bucketing,submodular",
        "--budgets", "100,200", "--allocation", "global", "--no-figure",
    ])
    assert code == 0
    rows = read_compare_csv(csv)
    assert len(rows) == 4
    assert all(r["status"].startswith("error") for r in rows if r["method"] == "bucketing")
    assert all(r["status"] == "ok" for r in rows if r["method"] == "submodular")


def test_compare_submodular_beats_frequency(tmp_path):
    table = generate_table(SyntheticConfig(5000, 6, seed=1))
    loaded = load_features(table)
    rows = compare(loaded, ["submodular", "frequency"], [100, 400, 1600])
    loss = {(r["method"], r["budget"]): r["avg_mi_loss"] for r in rows}
    for b in (100, 400, 1600):
        assert loss[("submodular", b)] <= loss[("frequency", b)]


def test_usage_errors(tmp_path, synth, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["compare", "--input", str(synth), "--report", str(tmp_path / "x.csv"), "--methods", "", "--budgets", "10"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["compress", "--input", str(synth), "--output", "o", "--report", "r", "--method", "nope", "--budget", "3"])
    assert exc.value.code == 2


def test_runtime_errors_exit_1(tmp_path, synth, capsys):
    code, _, _ = _compress(tmp_path, synth, "e", "--method", "divisive", "--budget", "50", "--allocation", "global")
    assert code == 1
    assert "vocab-squeeze: error:" in capsys.readouterr().err
    code, _, _ = _compress(tmp_path, synth, "e2", "--method", "submodular", "--budget", "2")
    assert code == 1
    bad = tmp_path / "bad.tsv"
    bad.write_text("f\ta\t1\n")
    code, _, _ = _compress(tmp_path, bad, "e3", "--method", "submodular", "--budget", "2")
    assert code == 1
    assert "line 1" in capsys.readouterr().err


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig("bucketing", 10, "global")
    with pytest.raises(ConfigError):
        RunConfig("submodular", 10, epsilon=0.0)
    assert RunConfig("submodular", 10).resolved_allocation == "global"
    assert RunConfig("divisive", 10).resolved_allocation == "uniform"


def test_min_count_oov(tmp_path):
    table = parse_counts("f\ta\t5\t1\nf\tb\t1\t5\nf\tc\t1\t0\nf\td\t0\t1\n")
    res = compress(load_features(table, min_count=2), RunConfig("submodular", 3, min_count=2))
    (fr,) = res.features
    assert fr.loaded.dropped == ["c", "d"]
    assert fr.num_clusters == 3
    assert fr.mi_after == pytest.approx(fr.mi_before, abs=1e-12)
    assert partition_mi(fr.loaded.feature, fr.cmap) == pytest.approx(fr.mi_after, abs=1e-15)


def test_log_base_e_scales_report(tmp_path, synth):
    _, _, r2 = _compress(tmp_path, synth, "b2", "--method", "submodular", "--budget", "200", "--no-figure")
    _, _, re_ = _compress(tmp_path, synth, "be", "--method", "submodular", "--budget", "200", "--log-base", "e", "--no-figure")
    a, b = json.loads(r2.read_text()), json.loads(re_.read_text())
    assert a["avg_mi_loss"] == pytest.approx(b["avg_mi_loss"], abs=1e-12)
    assert b["params"]["log_base"] == "e"


def test_gen_synthetic_contract(tmp_path):
    one = tmp_path / "one.tsv"
    assert main(["gen-synthetic", "--n", "1", "--output", str(one)]) == 0
    assert len(one.read_text().splitlines()) == 1
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    for p in (a, b):
        main(["gen-synthetic", "--n", "500", "--num-features", "3", "--seed", "5", "--output", str(p)])
    assert a.read_bytes() == b.read_bytes()
    parse_counts(a.read_text(), dense=True)


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.tsv"
    proc = subprocess.run(
        [sys.executable, "-m", "vocab_squeeze", "gen-synthetic", "--n", "20", "--output", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert len(out.read_text().splitlines()) == 20
