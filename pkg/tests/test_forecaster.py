import json

import numpy as np
import pytest
from conftest import make_panel, planted_panel

from dynenet import forecaster as fc
from dynenet.panel import FeatureMeta, PanelDataset, compute_target


def one_country(F, feats=None, T=None):
    T = len(F)
    rng = np.random.default_rng(1)
    feats = feats or {"x1": rng.standard_normal(T), "x2": rng.standard_normal(T)}
    return make_panel({"NG": F}, {"NG": feats})


class TestFallback:
    def test_running_mean(self):
        assert fc.fallback_running_mean([1.0, 2.0, 3.0]) == 2.0
        assert fc.fallback_running_mean([]) == 0.0

    def test_all_zero_fatalities(self):
        m = fc.fit_country(one_country(np.zeros(48)), "NG", 2)
        assert m.method == fc.RUNNING_MEAN
        assert m.predict_latest() == 0.0
        assert "variance" in m.fallback.reason

    def test_short_history(self):
        F = np.arange(10) * 3
        m = fc.fit_country(one_country(F), "NG", 2)
        assert m.method == fc.RUNNING_MEAN
        expected = compute_target(one_country(F), "NG", 2).values.mean()
        assert m.predict_latest() == pytest.approx(expected, abs=1e-15)
        assert m.fallback.n_history == 8

    def test_constant_covariates(self):
        rng = np.random.default_rng(4)
        F = rng.integers(0, 50, 48)
        m = fc.fit_country(one_country(F, {"x": np.ones(48)}), "NG", 3)
        assert m.method == fc.RUNNING_MEAN

    def test_exactly_one_of(self):
        with pytest.raises(ValueError):
            fc.CountryModel("NG", 2, 0)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"alpha": 1.5}, {"cv_folds": 1}, {"min_months": 3}, {"deviance_floor": 2}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            fc.ForecastConfig(**kw)


class TestFit:
    def test_noiseless_linear_signal(self):
        # log1p(F) follows a walk whose k-step delta is exactly x1
        T, k = 80, 2
        rng = np.random.default_rng(9)
        x1 = rng.uniform(-0.5, 0.5, T)
        L = np.empty(T)
        L[0] = 6.0
        L[1] = 6.0
        for t in range(T - k):
            L[t + k] = L[t] + x1[t]
        F = np.expm1(L)
        # the counts must be integers: take the delta of the rounded series as truth
        F = np.round(F)
        y = np.log1p(F[k:]) - np.log1p(F[:-k])
        panel = one_country(F, {"x1": x1, "x2": rng.standard_normal(T)})
        m = fc.fit_country(panel, "NG", k, fc.ForecastConfig(deviance_floor=0.0))
        assert m.method == fc.DYNENET
        assert [n for n, _ in m.selected][0] == "x1"
        fitted = m.fit.predict(m.design.X)
        assert np.max(np.abs(fitted - y)) < 0.05

    def test_no_leakage(self):
        panel, _ = planted_panel(seed=5, n_countries=1, T=60)
        through = int(panel.months[40])
        a = fc.fit_country(panel, "C0", 3, through=through)
        # rewrite everything after the origin: the fit must not change
        fat = panel.fatalities.copy()
        fat[0, 41:] = 0
        vals = panel.values.copy()
        vals[0, 41:] = 123.0
        later = make_panel({"C0": fat[0]}, {"C0": {n: vals[0, :, j] for j, n in enumerate(panel.features)}},
                           meta=panel.feature_meta)
        b = fc.fit_country(later, "C0", 3, through=through)
        assert a.design.target_months.max() <= through
        assert a.predict_latest() == b.predict_latest()
        assert a.selected == b.selected

    def test_summary_serialisable(self):
        panel, _ = planted_panel(seed=5, n_countries=1, T=60)
        m = fc.fit_country(panel, "C0", 2)
        json.dumps(m.summary())


class TestForecastSet:
    def test_steps_and_cumulative(self):
        panel, _ = planted_panel(seed=6, n_countries=1, T=60)
        fs, models = fc.forecast_steps(panel, "C0")
        assert fs.steps == (2, 3, 4, 5, 6, 7)
        assert fs.months == tuple(panel.last_month + s for s in fs.steps)
        assert fs.cumulative_delta == pytest.approx(sum(m.predict_latest() for m in models), abs=1e-12)
        assert [r["step"] for r in fs.rows()] == list(fs.steps)


class TestFitAll:
    def panel(self):
        # 3 planted countries, one all-zero, one with too short a history
        base, _ = planted_panel(seed=8, n_countries=3, T=48, n_noise=2)
        fat = {c: base.fatalities[i] for i, c in enumerate(base.countries)}
        feats = {c: {n: base.values[i, :, j] for j, n in enumerate(base.features)} for i, c in enumerate(base.countries)}
        fat["Z0"] = np.zeros(48)
        short = np.full(48, np.nan)
        short[-8:] = [3, 5, 2, 8, 1, 4, 4, 6]
        fat["Z1"] = short
        rng = np.random.default_rng(2)
        for c in ("Z0", "Z1"):
            feats[c] = {n: rng.standard_normal(48) for n in base.features}
        return make_panel(fat, feats, meta=base.feature_meta)

    def test_counts(self):
        forecasts, models, report = fc.fit_all(self.panel())
        assert report.counts == {"dynenet": 3, "fallback": 2, "skipped": 0}
        assert report.fallback == ["Z0", "Z1"]
        assert len(forecasts) == 5 and len(models) == 30
        assert all(m == fc.RUNNING_MEAN for m in report.step_methods["Z0"])

    def test_missing_origin_skipped(self):
        panel = self.panel()
        present = panel.present.copy()
        present[0, -1] = False
        fat = panel.fatalities.copy()
        fat[0, -1] = np.nan
        p2 = make_panel({c: fat[i] for i, c in enumerate(panel.countries)},
                        {c: {n: panel.values[i, :, j] for j, n in enumerate(panel.features)}
                         for i, c in enumerate(panel.countries)}, meta=panel.feature_meta, present=present)
        _, _, report = fc.fit_all(p2)
        assert list(report.skipped) == ["C0"]

    def test_empty_panel(self):
        meta = {"x": FeatureMeta("WDI", "structural")}
        empty = PanelDataset((), np.arange(5), ("x",), meta, np.zeros((0, 5, 1)), np.zeros((0, 5)),
                             np.zeros((0, 5), bool))
        forecasts, models, report = fc.fit_all(empty)
        assert forecasts == [] and models == {} and report.counts == {"dynenet": 0, "fallback": 0, "skipped": 0}

    def test_deterministic(self, tmp_path):
        panel = self.panel()
        for name in ("a", "b"):
            fs, models, report = fc.fit_all(panel)
            fc.write_forecasts(fs, tmp_path / f"{name}.csv")
            fc.write_run_report(report, models, tmp_path / f"{name}.json", fc.ForecastConfig())
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
