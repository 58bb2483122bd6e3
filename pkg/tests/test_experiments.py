import csv
import json

import numpy as np
import pytest

from ragcn import cli, experiments
from ragcn.experiments import ExperimentConfig, ExperimentConfigError, aggregate, parse_method, read_results_csv, report

SMALL = {"kind": "synthetic", "n": 120, "f_graph": 3, "f_node": 3, "class_weights": [0.7, 0.3]}


def small_config(tmp_path, **kw):
    base = {
        "dataset": SMALL,
        "methods": ["gcn-unweighted", "ragcn"],
        "seeds": [0, 1],
        "train": {"epochs": 15},
        "out": str(tmp_path / "out"),
    }
    base.update(kw)
    return ExperimentConfig.from_dict(base)


class TestConfig:
    def test_method_parsing(self):
        assert parse_method("gcn-weighted") == {"graph": "fixed", "mode": "gcn", "weighted": True}
        assert parse_method("ragcn:shared-trunk+graph") == {"graph": "learned", "mode": "ragcn", "variant": "shared-trunk"}
        for bad in ("gat-weighted", "ragcn:nope", "mlp-weighted+graph", "gcn-weighted+foo"):
            with pytest.raises(ExperimentConfigError):
                parse_method(bad)

    @pytest.mark.parametrize(
        "change",
        [
            {"methods": []},
            {"seeds": []},
            {"dataset": {"kind": "mri"}},
            {"train": {"epochs": 0}},
            {"train": {"learning_rate": 0.1}},
            {"sweep": {"axis": "imbalance", "values": [1.2]}},
            {"sweep": {"axis": "gamma", "values": [-0.1]}},
            {"sweep": {"axis": "variant", "values": ["per-class"]}, "methods": ["gcn-weighted"]},
            {"sweep": {"axis": "depth", "values": [1]}},
            {"sweep": {"axis": "alpha", "values": []}},
            {"dataset": {**SMALL, "class_weights": [0.7, 0.2]}},
            {"dataset": {"kind": "bundled", "name": "haberman"}, "sweep": {"axis": "imbalance", "values": [0.6]}},
        ],
    )
    def test_invalid_configs_fail_before_training(self, tmp_path, change):
        with pytest.raises(ExperimentConfigError):
            small_config(tmp_path, **change)

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ExperimentConfigError):
            ExperimentConfig.from_dict({"dataset": SMALL, "methods": ["ragcn"], "colour": 1})

    def test_presets_validate(self):
        for name in experiments.PRESETS:
            cfg = experiments.preset(name)
            assert cfg.methods and cfg.seeds == [0, 1, 2, 3, 4]

    def test_preset_sweep_axes(self):
        assert experiments.preset("imbalance").sweep["values"] == [0.5, 0.6, 0.7, 0.8]
        assert experiments.preset("gamma").sweep["values"] == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
        assert experiments.preset("diabetes").train == {"alpha": 0.5, "hidden": [4]}
        assert experiments.preset("haberman").train == {"alpha": 1.0, "hidden": [2]}


class TestRun:
    def test_rows_and_files(self, tmp_path):
        out = experiments.run(small_config(tmp_path, seeds=[0, 1, 2, 3, 4], methods=["gcn-weighted"]))
        assert len(out.rows) == 5 and len(out.aggregate) == 1
        rows = list(csv.reader(out.files["results"].open()))
        assert rows[0] == ["method", "sweep_value", "seed", "accuracy", "macro_f1", "roc_auc", "wall_ms"]
        assert [r[2] for r in rows[1:]] == ["0", "1", "2", "3", "4"]
        for m in ("accuracy", "macro_f1", "roc_auc"):
            plot = list(csv.reader(out.files[f"plot_{m}"].open()))
            assert plot[0] == ["sweep_value", "method", "mean", "std"]

    def test_aggregate_matches_rows(self, tmp_path):
        out = experiments.run(small_config(tmp_path))
        emitted = json.loads(out.files["aggregate"].read_text())["entries"]
        recs = read_results_csv(out.files["results"])
        for entry in emitted:
            vals = [r["macro_f1"] for r in recs if r["method"] == entry["method"]]
            assert abs(entry["macro_f1"]["mean"] - np.mean(vals)) <= 1e-12
            assert abs(entry["macro_f1"]["std"] - np.std(vals)) <= 1e-12

    def test_byte_reproducible(self, tmp_path):
        a = experiments.run(small_config(tmp_path, out=str(tmp_path / "a")))
        b = experiments.run(small_config(tmp_path, out=str(tmp_path / "b")))
        for key in ("results", "aggregate", "plot_macro_f1"):
            assert a.files[key].read_bytes() == b.files[key].read_bytes()

    def test_sweep_ordering(self, tmp_path):
        cfg = small_config(tmp_path, sweep={"axis": "alpha", "values": [1.0, 0.0]}, methods=["ragcn", "mlp-weighted"], seeds=[3, 1])
        out = experiments.run(cfg)
        keys = [(r.method, r.sweep_value, r.seed) for r in out.rows]
        assert keys == [
            ("ragcn", 1.0, 3), ("ragcn", 1.0, 1), ("ragcn", 0.0, 3), ("ragcn", 0.0, 1),
            ("mlp-weighted", 1.0, 3), ("mlp-weighted", 1.0, 1), ("mlp-weighted", 0.0, 3), ("mlp-weighted", 0.0, 1),
        ]  # fmt: skip

    def test_imbalance_and_variant_sweeps(self, tmp_path):
        out = experiments.run(small_config(tmp_path, sweep={"axis": "imbalance", "values": [0.5, 0.8]}, seeds=[0], methods=["ragcn"]))
        assert [r.sweep_value for r in out.rows] == [0.5, 0.8]
        out = experiments.run(small_config(tmp_path, sweep={"axis": "variant", "values": ["per-class", "class-weighting"]}, seeds=[0], methods=["ragcn"]))
        assert [r.sweep_value for r in out.rows] == ["per-class", "class-weighting"]

    def test_failure_recorded_and_run_continues(self, tmp_path, monkeypatch):
        real = experiments.fit_and_evaluate

        def flaky(graph, config, mask=None):
            if config.seed == 1 and config.mode == "ragcn":
                raise experiments.TrainingError("loss became non-finite at iteration 3")
            return real(graph, config, mask)

        monkeypatch.setattr(experiments, "fit_and_evaluate", flaky)
        out = experiments.run(small_config(tmp_path))
        failed = [r for r in out.rows if r.error]
        assert len(failed) == 1 and "iteration 3" in failed[0].error
        rows = list(csv.DictReader(out.files["results"].open()))
        bad = [r for r in rows if r["method"] == "ragcn" and r["seed"] == "1"][0]
        assert bad["macro_f1"] == "" and bad["accuracy"] == ""
        assert "iteration 3" in out.files["errors"].read_text()
        entry = [e for e in out.aggregate if e["method"] == "ragcn"][0]
        assert entry["failures"] == 1 and entry["n"] == 2

    def test_csv_dataset_source(self, tmp_path):
        cfg = small_config(tmp_path, dataset={"kind": "bundled", "name": "haberman"}, seeds=[0], methods=["mlp-unweighted"])
        assert len(experiments.run(cfg).rows) == 1


class TestReport:
    def _write(self, tmp_path, rows):
        d = tmp_path / "res"
        d.mkdir()
        with (d / "results.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(experiments.RESULT_HEADER)
            w.writerows(rows)
        return d

    def test_single_row(self, tmp_path):
        d = self._write(tmp_path, [["ragcn", "", 0, 0.9, 0.7, 0.8, ""]])
        text = report(d)
        assert "0.700 ± 0.000" in text and "0.900 ± 0.000" in text

    def test_hand_computed_means_and_best_flag(self, tmp_path):
        d = self._write(
            tmp_path,
            [
                ["gcn-weighted", "", 0, 0.90, 0.60, 0.70, ""],
                ["gcn-weighted", "", 1, 0.80, 0.70, 0.90, ""],
                ["ragcn", "", 0, 0.85, 0.75, 0.80, ""],
                ["ragcn", "", 1, 0.75, 0.85, 0.84, ""],
            ],
        )
        text = report(d)
        assert "| gcn-weighted | 2 | 0.850 ± 0.050 * | 0.650 ± 0.050 | 0.800 ± 0.100 |" in text
        assert "| ragcn | 2 | 0.800 ± 0.050 | 0.800 ± 0.050 * | 0.820 ± 0.020 * |" in text

    def test_idempotent(self, tmp_path):
        d = self._write(tmp_path, [["ragcn", "", 0, 0.9, 0.7, 0.8, ""]])
        before = (d / "results.csv").read_bytes()
        assert report(d) == report(d)
        assert (d / "results.csv").read_bytes() == before

    def test_empty(self, tmp_path):
        d = self._write(tmp_path, [])
        with pytest.raises(ValueError):
            report(d)
        with pytest.raises(ValueError):
            report(tmp_path / "missing")

    def test_aggregate_single_value_std_zero(self):
        (entry,) = aggregate([{"method": "m", "sweep_value": "", "seed": 0, "accuracy": 0.5, "macro_f1": 0.4, "roc_auc": None}])
        assert entry["accuracy"] == {"mean": 0.5, "std": 0.0}
        assert entry["roc_auc"] == {"mean": None, "std": None}


class TestCli:
    def test_run_and_report(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(small_config(tmp_path).to_dict()))
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "4", "--quiet"]) == 0
        rows = list(csv.reader((tmp_path / "o" / "results.csv").open()))
        assert {r[2] for r in rows[1:]} == {"4"}
        assert cli.main(["report", str(tmp_path / "o")]) == 0
        assert "ragcn" in capsys.readouterr().out

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"dataset": SMALL, "methods": []}))
        assert cli.main(["run", "--config", str(cfg)]) == 2
        assert "error" in capsys.readouterr().err

    def test_generate(self, tmp_path):
        cfg = tmp_path / "d.json"
        cfg.write_text(json.dumps(SMALL))
        assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path / "g.csv"), "--quiet"]) == 0
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert len(lines) == 121 and lines[0].endswith("label,split")

    def test_gradcheck(self, capsys):
        assert cli.main(["gradcheck", "--instances", "1", "--quiet"]) == 0
        assert "passed" in capsys.readouterr().out
