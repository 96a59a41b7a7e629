import json
import os
import xml.etree.ElementTree as ET

import pytest

from dynenet import cli
from dynenet.config import CONFIG_ENV, load_config
from dynenet.errors import InputError

QUICK = ["--set", "backtest.window_start=2013-03", "--set", "backtest.window_end=2013-04",
         "--set", "interpret.months=3", "--set", "interpret.n_trees=30", "--set", "interpret.k=2"]


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("fx")
    assert cli.main(["make-fixtures", "--out", str(d), "--countries", "2", "--months", "40"]) == 0
    return d


def run(fixture_dir, command, out, *extra):
    return cli.main([command, "-c", str(fixture_dir / "dynenet.ini"), "-o", str(out), *QUICK, *extra])


class TestErrors:
    def test_missing_metadata_exit_2(self, fixture_dir, tmp_path, capsys):
        code = cli.main(["ingest", "-c", str(fixture_dir / "dynenet.ini"), "-o", str(tmp_path),
                         "--set", f"paths.metadata={tmp_path / 'nope.csv'}"])
        assert code == 2
        assert "nope.csv" in capsys.readouterr().err

    def test_bad_override_exit_2(self, fixture_dir, tmp_path):
        assert run(fixture_dir, "forecast", tmp_path, "--set", "model.alpha=7") == 2
        assert run(fixture_dir, "forecast", tmp_path, "--set", "model.nonsense=1") == 2

    def test_malformed_panel_exit_2(self, fixture_dir, tmp_path, capsys):
        bad = tmp_path / "panel.csv"
        bad.write_text("country,month,fatalities\nNG,2015-01,x\n")
        assert run(fixture_dir, "ingest", tmp_path / "o", "--set", f"paths.panel={bad}") == 2


class TestPipeline:
    def test_ingest_idempotent(self, fixture_dir, tmp_path):
        assert run(fixture_dir, "ingest", tmp_path / "a") == 0
        report = json.loads((tmp_path / "a" / "validation.json").read_text())
        assert report["features"] == 753 and report["event_rejects"]
        # re-ingesting the written panel reproduces it byte for byte
        cfg = ["--set", f"paths.panel={tmp_path / 'a' / 'panel.csv'}",
               "--set", f"paths.metadata={tmp_path / 'a' / 'metadata.csv'}", "--set", "paths.events="]
        assert run(fixture_dir, "ingest", tmp_path / "b", *cfg) == 0
        for name in ("panel.csv", "metadata.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_features(self, fixture_dir, tmp_path):
        assert run(fixture_dir, "features", tmp_path) == 0
        header = (tmp_path / "event_indexes.csv").read_text().splitlines()[0].split(",")
        assert header[:2] == ["country", "month"] and len(header) == 102
        report = json.loads((tmp_path / "event_report.json").read_text())
        assert report["kept"] < report["parsed"]

    def test_forecast_outputs(self, fixture_dir, tmp_path):
        assert run(fixture_dir, "forecast", tmp_path) == 0
        rows = (tmp_path / "forecasts.csv").read_text().splitlines()
        assert rows[0] == "country,month,step,delta,method"
        report = json.loads((tmp_path / "run_report.json").read_text())
        truth = json.loads((fixture_dir / "truth.json").read_text())
        assert report["counts"] == truth["expected_counts"]
        assert len(rows) == 1 + 6 * (report["counts"]["dynenet"] + report["counts"]["fallback"])

    def test_backtest_outputs(self, fixture_dir, tmp_path):
        assert run(fixture_dir, "backtest", tmp_path, "--set", "backtest.variants=dynenet_full,lasso") == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["variants"] == ["dynenet_full", "lasso"]
        assert (tmp_path / "derived.csv").exists() and (tmp_path / "predictions.csv").exists()

    def test_interpret_outputs(self, fixture_dir, tmp_path):
        assert run(fixture_dir, "interpret", tmp_path) == 0
        svgs = sorted((tmp_path / "heatmaps").glob("*.svg"))
        assert svgs
        for path in svgs + [tmp_path / "mds.svg"]:
            assert ET.parse(path).getroot().tag.endswith("svg")
        assert (tmp_path / "clusters.csv").read_text().startswith("country,cluster\n")
        summary = json.loads((tmp_path / "interpret_summary.json").read_text())
        assert summary["k"] == 2

    def test_default_config(self, capsys):
        assert cli.main(["default-config"]) == 0
        assert "[model]" in capsys.readouterr().out


class TestConfig:
    def test_env_and_overrides(self, tmp_path, monkeypatch):
        path = tmp_path / "c.ini"
        path.write_text("[model]\nalpha = 0.25\n[run]\nseed = 4\n[paths]\npanel = data/p.csv\n")
        monkeypatch.setenv(CONFIG_ENV, str(path))
        cfg = load_config()
        assert cfg.forecast.alpha == 0.25 and cfg.seed == 4
        assert cfg.panel == os.path.join(str(tmp_path), "data", "p.csv")
        cfg = load_config(overrides=["model.alpha=1", "run.jobs=2"])
        assert cfg.forecast.alpha == 1.0 and cfg.jobs == 2 and cfg.seed == 4

    def test_defaults(self, monkeypatch):
        monkeypatch.delenv(CONFIG_ENV, raising=False)
        cfg = load_config()
        assert cfg.forecast.alpha == 0.5 and cfg.interpret.k == 8
        assert cfg.variants == ("dynenet_full", "dynenet_no_gdelt", "lasso")

    @pytest.mark.parametrize("override", ["model.alpha", "nosection.key=1", "backtest.window_start=2019-13",
                                          "backtest.variants=ridge", "interpret.importance=gini"])
    def test_invalid(self, override, monkeypatch):
        monkeypatch.delenv(CONFIG_ENV, raising=False)
        with pytest.raises(InputError):
            load_config(overrides=[override])
