import csv
import io
import json

import numpy as np
import pytest

from cennq.cli import main
from cennq.core import TemplateSet
from cennq.io import load_template, save_grid, save_template
from cennq.quantizer import QuantSet, is_closed

FAST = ["--pso-iterations", "2", "--swarm-size", "2"]


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def dataset(tmp_path):
    assert main(["synth-data", "--out", str(tmp_path / "data"), "--size", "12", "--count", "2",
                 "--seed", "4"]) == 0
    return tmp_path / "data" / "manifest.json"


@pytest.fixture
def identity(tmp_path):
    a = np.zeros((3, 3))
    a[1, 1] = 1.0
    path = tmp_path / "identity.json"
    save_template(path, TemplateSet(a, np.zeros((3, 3)), 0.0, 1.0), shift_form=True)
    return path


def test_synth_data_count(tmp_path, capsys):
    assert main(["synth-data", "--out", str(tmp_path), "--count", "5", "--size", "8"]) == 0
    doc = json.loads((tmp_path / "manifest.json").read_text())
    assert len(doc["pairs"]) == 5
    assert rows_of(capsys.readouterr().out)[0]["pairs"] == "5"


def test_train_writes_template_and_history(dataset, tmp_path, capsys):
    out = tmp_path / "train"
    assert main(["train", "--manifest", str(dataset), "--out", str(out), "--format", "json", *FAST]) == 0
    rec = json.loads(capsys.readouterr().out)[0]
    assert 0 <= rec["objective"] <= 4
    load_template(out / "template.json")
    hist = (out / "history.csv").read_text().splitlines()
    assert hist[0] == "iteration,best_objective" and len(hist) == 3


def test_quantize_single_row(dataset, tmp_path, capsys):
    out = tmp_path / "q"
    assert main(["quantize", "--manifest", str(dataset), "--out", str(out), "--strategies", "WNN",
                 "--batches", "C", "--m-values", "2", *FAST]) == 0
    rows = rows_of((out / "report.csv").read_text())
    assert len(rows) == 1 and rows[0]["strategy"] == "WNN" and rows[0]["closed"] == "True"
    report = json.loads((out / "report.json").read_text())
    assert set(report["environment"]) == {"seed", "version", "backend"}
    assert (out / rows[0]["round_log"]).exists()
    t = load_template(out / "templates" / "WNN-C_m2.json")
    assert is_closed(t, QuantSet.symmetric(2))


@pytest.mark.slow
def test_quantize_default_sweep_has_fifty_rows(dataset, tmp_path):
    out = tmp_path / "sweep"
    assert main(["quantize", "--manifest", str(dataset), "--out", str(out), "--pso-iterations", "1",
                 "--swarm-size", "1"]) == 0
    rows = rows_of((out / "report.csv").read_text())
    assert len(rows) == 50
    assert {(r["strategy"], r["batch"], r["m"]) for r in rows} == {
        (s, b, str(m)) for s in ("RAN", "PI", "WPI", "NN", "WNN") for b in "CL" for m in range(5)}
    for r in rows:
        t = load_template(out / "templates" / f"{r['strategy']}-{r['batch']}_m{r['m']}.json")
        assert is_closed(t, QuantSet.symmetric(int(r["m"])))


def test_quantize_deterministic(dataset, tmp_path):
    reports = []
    for n in range(2):
        out = tmp_path / f"q{n}"
        assert main(["quantize", "--manifest", str(dataset), "--out", str(out), "--strategies", "RAN,NN",
                     "--batches", "L", "--m-values", "1", "--seed", "7", *FAST]) == 0
        rows = rows_of((out / "report.csv").read_text())
        for r in rows:
            r.pop("wall_time")
        reports.append(rows)
    assert reports[0] == reports[1]


def test_quantize_rejects_unknown_strategy(dataset, tmp_path):
    assert main(["quantize", "--manifest", str(dataset), "--out", str(tmp_path), "--strategies", "XYZ",
                 *FAST]) == 1


def test_run_identity_objective_zero(dataset, identity, tmp_path, capsys):
    u = np.where(np.random.default_rng(0).random((6, 6)) < 0.5, 1.0, -1.0)
    save_grid(tmp_path / "u.pgm", u)
    assert main(["run", "--template", str(identity), "--input", str(tmp_path / "u.pgm"),
                 "--ideal", str(tmp_path / "u.pgm"), "--out", str(tmp_path / "r"), "--dt", "1"]) == 0
    assert float(rows_of(capsys.readouterr().out)[0]["objective"]) == 0.0
    assert (tmp_path / "r" / "output_000.pgm").exists()


def test_fixed_run_reports_schedule(dataset, identity, tmp_path, capsys):
    out = tmp_path / "f"
    assert main(["fixed-run", "--template", str(identity), "--manifest", str(dataset), "--out", str(out),
                 "--sparsity", "--repetition"]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert len(rows) == 2
    assert float(rows[0]["max_divergence_from_float"]) <= 1e-2
    # one multiply cycle pipelines fully
    assert rows[0]["cycles_per_pixel"] == "1"
    doc = json.loads((out / "schedule.json").read_text())
    assert doc["a"]["cycles"] == 1 and doc["b"]["cycles"] == 0
    assert "cycles_per_pixel=1" in (out / "schedule.txt").read_text()


def test_fixed_run_rejects_unquantized(dataset, tmp_path):
    path = tmp_path / "t.json"
    save_template(path, TemplateSet(np.full((3, 3), 0.3), np.zeros((3, 3)), 0, 0.5))
    assert main(["fixed-run", "--template", str(path), "--manifest", str(dataset), "--out", str(tmp_path)]) == 2


def test_analyze_corpus(tmp_path, capsys):
    assert main(["analyze", "--out", str(tmp_path)]) == 0
    rows = rows_of(capsys.readouterr().out)
    assert len(rows) == 28
    for r in rows:
        assert int(r["zero_count"]) + int(r["nonzero_count"]) == 9
    hist = rows_of((tmp_path / "histogram.csv").read_text())
    assert sum(int(h["templates_with_nonzero_count"]) for h in hist) == 28


def test_analyze_custom_corpus_quantized(tmp_path, capsys):
    corpus = tmp_path / "c.json"
    corpus.write_text(json.dumps([{"name": "x", "a": [[0.3, 0, 0], [0, 1.1, 0], [0, 0, 0.26]],
                                   "b": [[0] * 3] * 3}]))
    assert main(["analyze", "--corpus", str(corpus), "--quantize-m", "2", "--format", "json"]) == 0
    rec = json.loads(capsys.readouterr().out)[0]
    assert rec["nonzero_count"] == 3 and rec["repeated_params"] == 2


def test_project_tables(tmp_path, capsys):
    assert main(["project", "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    first = rows_of(text.split("\n\n")[0])
    assert [int(r["stages"]) for r in first] == [24, 28, 28, 24, 6, 16, 2, 7]
    assert (tmp_path / "project_devices.csv").exists()


def test_project_user_baselines(tmp_path, capsys):
    b = tmp_path / "b.json"
    b.write_text(json.dumps({"VC7VX980T": 176}))
    assert main(["project", "--baselines", str(b), "--format", "json"]) == 0
    out = capsys.readouterr().out
    assert '"user_baseline_speedup": 2.0' in out


def test_bench(capsys):
    assert main(["bench", "--sizes", "8", "--repeats", "1", "--cenn-iterations", "2"]) == 0
    assert len(rows_of(capsys.readouterr().out)) == 2


def test_config_defaults(dataset, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"pso-iterations": 3, "swarm_size": 2, "format": "json"}))
    assert main(["train", "--config", str(cfg), "--manifest", str(dataset), "--out", str(tmp_path / "t")]) == 0
    json.loads(capsys.readouterr().out)
    assert len((tmp_path / "t" / "history.csv").read_text().splitlines()) == 4


class TestExitCodes:
    def test_usage(self, capsys):
        assert main(["nope"]) == 1
        assert main([]) == 1
        assert main(["synth-data", "--size", "abc"]) == 1

    def test_small_size_is_usage(self, tmp_path):
        assert main(["synth-data", "--size", "4", "--out", str(tmp_path)]) == 1

    def test_missing_manifest(self, tmp_path):
        assert main(["train", "--manifest", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2

    def test_missing_template(self, tmp_path):
        assert main(["run", "--template", str(tmp_path / "none.json"), "--input", "x", "--out",
                     str(tmp_path)]) == 2

    def test_bad_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        assert main(["bench", "--config", str(cfg)]) == 2

    def test_unwritable_output(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["synth-data", "--out", str(blocker / "sub")]) == 2

    def test_numerical_failure(self, tmp_path):
        b = np.zeros((3, 3))
        b[1, 1] = 1e308
        path = tmp_path / "t.json"
        save_template(path, TemplateSet(np.zeros((3, 3)), b, 1e308, 1.0))
        save_grid(tmp_path / "u.pgm", np.ones((4, 4)))
        assert main(["run", "--template", str(path), "--input", str(tmp_path / "u.pgm"), "--out",
                     str(tmp_path / "r"), "--cenn-iterations", "3"]) == 3
