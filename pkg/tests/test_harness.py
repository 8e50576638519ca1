import csv
import filecmp
import logging
import os

import numpy as np
import pytest

from problem_evolution import harness
from problem_evolution.cli import main, read_config_file
from problem_evolution.evolution import EvolutionConfig
from problem_evolution.harness import (
    TABLE_CONFIGS,
    ExperimentSpec,
    derive_seed,
    emit_plot_data,
    read_manifest,
    read_runlog,
    rescore_champion,
    run_equal_weights,
    run_single,
    run_sweep,
)
from problem_evolution.network import evaluate, load_weights_csv
from problem_evolution.pbm import format_pbm, parse_pbm, read_pbm

FAST = dict(population_size=8, stagnation_limit=10, n_c=200, max_epochs=4000)


def fast_spec(tmp_path, **kw):
    base = dict(kind="single-layer-sweep", configs=((2, 2, 1), (2, 4, 1)), dims=(6, 6),
                repeats=2, base_seed=7, out_dir=str(tmp_path / "sweep"), overrides=dict(FAST))
    base.update(kw)
    return ExperimentSpec(**base)


def tree_files(root):
    out = []
    for dirpath, _, files in os.walk(root):
        out.extend(os.path.relpath(os.path.join(dirpath, f), root) for f in files)
    return sorted(out)


class TestPbm:
    def test_round_trip(self, rng):
        img = rng.integers(0, 2, (5, 7)).astype(np.uint8)
        np.testing.assert_array_equal(parse_pbm(format_pbm(img, comment="hi")), img)

    def test_header_and_layout(self):
        text = format_pbm(np.array([[0, 1, 1], [1, 0, 0]]))
        assert text == "P1\n3 2\n0 1 1\n1 0 0\n"

    def test_packed_digits_and_comments(self):
        img = parse_pbm("P1\n# c\n3 2\n011\n100 # trailing\n")
        np.testing.assert_array_equal(img, [[0, 1, 1], [1, 0, 0]])

    @pytest.mark.parametrize("text", ["P4\n1 1\n0\n", "P1\n2 2\n0 1 0\n", "P1\n1 1\n2\n", "P1\nx"])
    def test_malformed(self, text):
        with pytest.raises(ValueError):
            parse_pbm(text)


def test_derived_seeds_distinct_and_stable():
    seeds = {derive_seed(3, label, r) for label in ("2-2-1", "2-4-1", "2-8-1") for r in range(5)}
    assert len(seeds) == 15
    assert derive_seed(3, "2-4-1", 0) == derive_seed(3, "2-4-1", 0)
    assert derive_seed(3, "2-4-1", 0) != derive_seed(4, "2-4-1", 0)
    assert all(0 <= s < 2**64 for s in seeds)


class TestRunSingle:
    def test_artifacts(self, tmp_path):
        config = EvolutionConfig(layer_sizes=(2, 4, 1), dims=(10, 10), seed=1, **FAST)
        result = run_single(config, tmp_path / "run")
        run_dir = tmp_path / "run"
        assert result.status == "ok"
        for name in ("runlog.csv", "champion.pbm", "manifest.txt", "champion_weights.csv"):
            assert (run_dir / name).exists()
        meta = read_manifest(run_dir / "manifest.txt")
        rows = read_runlog(run_dir / "runlog.csv")
        assert meta["champion_complexity"] == rows[-1]["best_complexity"]
        assert int(meta["generations"]) == int(rows[-1]["generation"]) == len(rows) - 1
        assert meta["network"] == "2-4-1" and meta["weight_count"] == "17"
        complexity, _ = rescore_champion(run_dir)
        assert complexity == pytest.approx(float(meta["champion_complexity"]), abs=1e-12)
        net = load_weights_csv(run_dir / "champion_weights.csv")
        assert evaluate(net, read_pbm(run_dir / "champion.pbm"))[1] == 1.0

    def test_runlog_columns(self, tmp_path):
        run_single(EvolutionConfig(dims=(6, 6), seed=2, **FAST), tmp_path)
        with open(tmp_path / "runlog.csv") as fh:
            header = next(csv.reader(fh))
        assert header == ["generation", "best_complexity", "best_log_complexity",
                          "min_complexity", "mean_complexity", "admissions",
                          "cumulative_epochs"]

    def test_byte_identical_rerun(self, tmp_path):
        config = EvolutionConfig(layer_sizes=(2, 3, 1), dims=(6, 6), seed=1, **FAST)
        run_single(config, tmp_path / "a")
        run_single(config, tmp_path / "b")
        for name in ("runlog.csv", "champion.pbm", "manifest.txt", "champion_weights.csv"):
            assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)

    def test_infeasible(self, tmp_path):
        result = run_single(EvolutionConfig(dims=(2, 2), population_size=20), tmp_path)
        assert result.status == "infeasible"
        assert read_manifest(tmp_path / "manifest.txt")["status"] == "infeasible"

    def test_resume_reuses(self, tmp_path, monkeypatch):
        config = EvolutionConfig(dims=(6, 6), seed=4, **FAST)
        first = run_single(config, tmp_path)
        monkeypatch.setattr(harness, "evolve", lambda c: pytest.fail("recomputed"))
        again = run_single(config, tmp_path, resume=True)
        assert again.champion_log_complexity == pytest.approx(first.champion_log_complexity)
        assert again.generations == first.generations

    def test_resume_ignores_different_config(self, tmp_path):
        run_single(EvolutionConfig(dims=(6, 6), seed=4, **FAST), tmp_path)
        other = EvolutionConfig(dims=(6, 6), seed=5, **FAST)
        result = run_single(other, tmp_path, resume=True)
        assert read_manifest(tmp_path / "manifest.txt")["seed"] == "5"
        assert result.status == "ok"

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError, match="file"):
            run_single(EvolutionConfig(dims=(6, 6), **FAST), blocker / "run")


class TestSweep:
    def test_summary_and_plot_data(self, tmp_path):
        spec = fast_spec(tmp_path)
        table = run_sweep(spec)
        assert [r.configuration for r in table.rows] == ["2-2-1", "2-4-1"]
        for row in table.rows:
            assert len(row.complexities) == 2
            mine = [r for r in table.runs if r.label == row.configuration]
            read_back = [rescore_champion(r.run_dir)[1] for r in mine]
            assert row.max_log_complexity == pytest.approx(max(read_back), abs=1e-12)
            assert row.weight_count == (9 if row.configuration == "2-2-1" else 17)
        plot_rows = read_runlog(os.path.join(spec.out_dir, "plotdata.csv"))
        n_records = sum(len(read_runlog(os.path.join(r.run_dir, "runlog.csv"))) for r in table.runs)
        assert len(plot_rows) == n_records
        with open(os.path.join(spec.out_dir, "summary.csv")) as fh:
            assert next(csv.reader(fh))[0] == "configuration"

    def test_single_config_single_repeat(self, tmp_path):
        table = run_sweep(fast_spec(tmp_path, configs=((2, 3, 1),), repeats=1))
        assert len(table.rows) == 1 and len(table.runs) == 1

    def test_deterministic_outputs(self, tmp_path):
        run_sweep(fast_spec(tmp_path, out_dir=str(tmp_path / "a")))
        run_sweep(fast_spec(tmp_path, out_dir=str(tmp_path / "b")))
        files = tree_files(tmp_path / "a")
        assert files == tree_files(tmp_path / "b")
        for rel in files:
            if rel != "timing.csv":
                assert filecmp.cmp(tmp_path / "a" / rel, tmp_path / "b" / rel, shallow=False), rel

    def test_partial_failure_recorded(self, tmp_path):
        spec = fast_spec(tmp_path, dims=(2, 2), repeats=1,
                         overrides={**FAST, "population_size": 20})
        table = run_sweep(spec)
        assert all(r.failures == 1 and not r.complexities for r in table.rows)

    def test_parallel_workers_match_serial(self, tmp_path):
        serial = run_sweep(fast_spec(tmp_path, out_dir=str(tmp_path / "s"), repeats=1))
        parallel = run_sweep(fast_spec(tmp_path, out_dir=str(tmp_path / "p"), repeats=1, workers=2))
        assert [r.max_log_complexity for r in serial.rows] == \
            [r.max_log_complexity for r in parallel.rows]

    @pytest.mark.parametrize("bad", [{"repeats": 0}, {"configs": ()}, {"kind": "other"},
                                     {"workers": 0}, {"overrides": {"bogus": 1}}])
    def test_spec_validation(self, tmp_path, bad):
        with pytest.raises(ValueError):
            fast_spec(tmp_path, **bad)


def test_equal_weights_table(tmp_path):
    spec = ExperimentSpec(kind="equal-weights-table", configs=TABLE_CONFIGS, dims=(6, 6),
                          repeats=1, out_dir=str(tmp_path),
                          overrides={**FAST, "max_generations": 3})
    table = run_equal_weights(spec)
    counts = {r.configuration: r.weight_count for r in table.rows}
    assert counts == {"2-2-6-1": 31, "2-3-3-2-1": 32, "2-8-1": 33, "2-5-2-1": 30, "2-4-3-1": 31}
    logs = [r.max_log_complexity for r in table.rows]
    assert logs == sorted(logs, reverse=True)
    assert table.ranking() == [r.configuration for r in table.rows]
    assert (tmp_path / "table.csv").exists()


class TestPlotData:
    def test_values_match_runlogs(self, tmp_path):
        config = EvolutionConfig(dims=(6, 6), seed=3, **FAST)
        run_single(config, tmp_path / "r", repeat=2)
        n = emit_plot_data([tmp_path / "r"], tmp_path / "plot.csv")
        src = read_runlog(tmp_path / "r" / "runlog.csv")
        out = read_runlog(tmp_path / "plot.csv")
        assert n == len(src) == len(out)
        assert [o["best_complexity"] for o in out] == [s["best_complexity"] for s in src]
        assert {o["configuration"] for o in out} == {"2-4-1"}
        assert {o["repeat"] for o in out} == {"2"}

    def test_missing_runlog_skipped(self, tmp_path, caplog):
        (tmp_path / "empty").mkdir()
        with caplog.at_level(logging.WARNING):
            n = emit_plot_data([tmp_path / "empty"], tmp_path / "plot.csv")
        assert n == 0
        assert "no runlog.csv" in caplog.text


class TestCli:
    def test_run(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["run", "--net", "2-3-1", "--dims", "6x6", "--pop", "8", "--stagnation", "10",
                     "--nc", "200", "--seed", "9", "--out", str(out)])
        assert code == 0
        assert "champion complexity" in capsys.readouterr().out
        meta = read_manifest(out / "manifest.txt")
        assert meta["seed"] == "9" and meta["population_size"] == "8"

    def test_config_file_and_override(self, tmp_path):
        cfg = tmp_path / "exp.conf"
        cfg.write_text("# desk run\nnet = 2-2-1, 2-3-1\ndims = 6x6\npop = 8\nstagnation = 10\n"
                       "nc = 200\nrepeats = 1\nseed = 4\n")
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(cfg), "--pop", "7", "--out", str(out)]) == 0
        meta = read_manifest(out / "2-3-1" / "repeat-0" / "manifest.txt")
        assert meta["population_size"] == "7"
        assert (out / "summary.csv").exists() and (out / "plotdata.csv").exists()
        assert main(["plotdata", "--out", str(out), "--output", str(tmp_path / "p.csv")]) == 0
        assert len(read_runlog(tmp_path / "p.csv")) == len(read_runlog(out / "plotdata.csv"))

    def test_table(self, tmp_path, capsys):
        code = main(["table", "--net", "2-2-1", "--net", "2-4-1", "--dims", "6x6", "--pop", "6",
                     "--stagnation", "5", "--nc", "100", "--repeats", "1", "--out", str(tmp_path)])
        assert code == 0
        assert "2-4-1,17," in capsys.readouterr().out

    def test_bad_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.conf"
        cfg.write_text("colour = blue\n")
        assert main(["run", "--config", str(cfg)]) == 2
        assert "unknown keys" in capsys.readouterr().err

    def test_zero_repeats_rejected(self, tmp_path, capsys):
        assert main(["sweep", "--repeats", "0", "--out", str(tmp_path)]) == 2
        assert not os.listdir(tmp_path)

    def test_read_config_file(self, tmp_path):
        cfg = tmp_path / "c.conf"
        cfg.write_text("max_epochs = 10\nnet = 2-4-1\n")
        assert read_config_file(cfg) == {"max-epochs": "10", "net": "2-4-1"}
