import hashlib
import json

import pytest

from fundsvm.cli import load_pipeline_data, main
from fundsvm.config import RunConfig
from fundsvm.evaluate import sweep_cardinality, sweep_csv

SMALL = ["--set", "synth.n_stocks=30", "--set", "synth.n_features=6",
         "--set", "synth.signal_features=[0,1]", "--set", "realization_count=3",
         "--set", "search.grid_exponents=[-1,0,1]", "--set", "sweep.realizations=2"]


def tree(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()}


def digest(path):
    return {k: hashlib.sha256(v).hexdigest() for k, v in tree(path).items()}


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["--seed", "4", "--out", str(out), *SMALL, "synth"]) == 0
    return out


class TestSynth:
    def test_outputs(self, synth_dir):
        names = set(tree(synth_dir))
        assert {"fundamentals.csv", "prices.csv", "index.csv", "meta.csv", "announcements.csv",
                "config.json", "synth.manifest.json"} <= names

    def test_byte_identical_rerun(self, synth_dir, tmp_path):
        assert main(["--seed", "4", "--out", str(tmp_path), *SMALL, "synth"]) == 0
        assert tree(tmp_path) == tree(synth_dir)


class TestBacktest:
    def test_deterministic_across_runs_and_workers(self, synth_dir, tmp_path):
        cfg = str(synth_dir / "config.json")
        before = digest(synth_dir)
        runs = []
        for name, workers in (("a", 1), ("b", 1), ("c", 3)):
            out = tmp_path / name
            assert main(["--config", cfg, "--out", str(out), "--set", f"workers={workers}", "backtest"]) == 0
            runs.append(tree(out))
        assert runs[0] == runs[1] == runs[2]
        report = json.loads(runs[0]["report.json"])
        assert report["realization_count"] == 3
        assert digest(synth_dir) == before

    def test_seed_changes_result(self, synth_dir, tmp_path):
        cfg = str(synth_dir / "config.json")
        main(["--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1", "backtest"])
        main(["--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2", "backtest"])
        a = json.loads((tmp_path / "a" / "report.json").read_text())
        b = json.loads((tmp_path / "b" / "report.json").read_text())
        assert [r["seed"] for r in a["realizations"]] != [r["seed"] for r in b["realizations"]]


class TestTrainPredict:
    def test_round_trip(self, synth_dir, tmp_path):
        cfg = str(synth_dir / "config.json")
        assert main(["--config", cfg, "--out", str(tmp_path), "train"]) == 0
        model = tmp_path / "model.json"
        assert json.loads(model.read_text())["format"] == "fundsvm.model/1"
        assert len((tmp_path / "grid.csv").read_text().splitlines()) == 1 + 9
        assert main(["--config", cfg, "--out", str(tmp_path), "predict", "--model", str(model)]) == 0
        lines = (tmp_path / "predictions.csv").read_text().splitlines()
        assert lines[0] == "ticker,year,decision_value,label" and len(lines) == 31
        assert all(line.split(",")[1] == "2014" for line in lines[1:])

    def test_predict_without_model(self, synth_dir, tmp_path, capsys):
        code = main(["--config", str(synth_dir / "config.json"), "--out", str(tmp_path), "predict"])
        assert code == 2
        err = json.loads(capsys.readouterr().err.strip())
        assert err["error"] == "ConfigInvalid"
        assert not (tmp_path / "predictions.csv").exists()


class TestPreprocess:
    def test_dump_all_stages(self, synth_dir, tmp_path):
        assert main(["--config", str(synth_dir / "config.json"), "--out", str(tmp_path),
                     "preprocess", "--dump-stage", "all"]) == 0
        names = set(tree(tmp_path))
        for stage in ("drop_sparse", "base_year", "impute", "zscore", "smooth", "pca"):
            assert f"stage_{stage}.csv" in names
        log = json.loads((tmp_path / "transform_log.json").read_text())
        assert [r["stage"] for r in log][0] == "drop_sparse"

    def test_unknown_stage(self, synth_dir, tmp_path):
        assert main(["--config", str(synth_dir / "config.json"), "--out", str(tmp_path),
                     "preprocess", "--dump-stage", "nope"]) == 2


class TestSweep:
    def test_matches_module(self, synth_dir, tmp_path):
        cfg_path = synth_dir / "config.json"
        assert main(["--config", str(cfg_path), "--out", str(tmp_path), "sweep", "--ratios", "0.5,0.9"]) == 0
        cfg = RunConfig.load(cfg_path)
        rows = sweep_cardinality(load_pipeline_data(cfg), [0.5, 0.9], 2, cfg.master_seed, cfg.eval_config())
        assert (tmp_path / "sweep.csv").read_text() == sweep_csv(rows)


class TestErrors:
    @pytest.mark.parametrize("argv", [
        ["--set", "nope=1", "synth"],
        ["--set", "svm.box_constraint=-1", "synth"],
        ["--set", "svm", "synth"],
        ["backtest"],
    ])
    def test_config_errors(self, tmp_path, argv, capsys):
        assert main(["--out", str(tmp_path), *argv]) == 2
        assert "exit_code" in capsys.readouterr().err

    def test_data_error(self, synth_dir, tmp_path):
        bad = tmp_path / "bad"
        bad.mkdir()
        doc = json.loads((synth_dir / "config.json").read_text())
        for k, v in doc["paths"].items():
            doc["paths"][k] = str(synth_dir / v)
        (bad / "fundamentals.csv").write_text("ticker,year,feature,value\nA,2000,f,oops\n")
        doc["paths"]["fundamentals"] = "fundamentals.csv"
        (bad / "config.json").write_text(json.dumps(doc))
        assert main(["--config", str(bad / "config.json"), "backtest"]) == 3
