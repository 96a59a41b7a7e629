import json
import math

import numpy as np
import pytest
from conftest import planted_panel
from oracles import sample_sd

from dynenet import evaluation as ev
from dynenet.errors import RangeError
from dynenet.forecaster import ForecastConfig


class TestMse:
    def test_hand(self):
        assert ev.mse([0, 0], [1, -1]) == 1.0
        assert ev.mse([3], [1]) == 4.0
        assert ev.mse([1.5, 2], [1.5, 2]) == 0.0

    def test_mismatch(self):
        with pytest.raises(ValueError):
            ev.mse([1, 2], [1])


class TestTadda:
    def test_penalty_active(self):
        assert ev.tadda([0.5], [-0.5], 0.2) == pytest.approx(1.5, abs=1e-12)

    def test_penalty_suppressed_within_eps(self):
        assert ev.tadda([0.05], [-0.05], 0.2) == pytest.approx(0.1, abs=1e-12)

    def test_perfect(self):
        assert ev.tadda([0.3, -0.2], [0.3, -0.2], 0.0) == 0.0

    def test_sign_of_zero_is_positive(self):
        # y = 0 counts as +, so a negative forecast beyond eps is penalised
        assert ev.tadda([0.0], [-1.0], 0.5) == pytest.approx(2.0)
        assert ev.tadda([0.0], [1.0], 0.5) == pytest.approx(1.0)
        assert ev.tadda([0.0], [-1.0], 0.5, three_way_sign=True) == pytest.approx(2.0)
        assert ev.tadda([0.0], [0.0], 0.0, three_way_sign=True) == 0.0

    def test_huge_eps_is_mae(self, rng):
        for _ in range(100):
            y, f = rng.standard_normal(20), rng.standard_normal(20)
            assert ev.tadda(y, f, 1e300) == pytest.approx(ev.mae(y, f), abs=1e-12)

    def test_negative_eps(self):
        with pytest.raises(ValueError):
            ev.tadda([1], [1], -0.1)


class TestEpsilon:
    def test_a_hand(self):
        assert ev.tadda_epsilon_a([0, 2]) == pytest.approx(math.sqrt(2), abs=1e-15)
        assert ev.tadda_epsilon_a([1, 2, 3]) == pytest.approx(1.0, abs=1e-15)
        assert ev.tadda_epsilon_a([4, 4, 4]) == 0.0

    def test_a_matches_oracle(self, rng):
        x = rng.standard_normal(37)
        assert ev.tadda_epsilon_a(x) == pytest.approx(sample_sd(x), rel=1e-12)

    def test_z(self):
        # standard normal table: z_0.995 = 2.5758
        assert ev.z_quantile() == pytest.approx(2.5758, abs=5e-5)

    def test_b_hand(self):
        x = np.tile([-1.0, 1.0], 50)  # n = 100
        sd = sample_sd(x)
        assert ev.tadda_epsilon_b(x) == pytest.approx(ev.z_quantile() * sd / 10, rel=1e-12)
        assert ev.tadda_epsilon_b([0, 2]) == pytest.approx(2.5758, abs=5e-5)
        assert ev.tadda_epsilon_b([3, 3]) == 0.0

    def test_too_few(self):
        for fn in (ev.tadda_epsilon_a, ev.tadda_epsilon_b):
            with pytest.raises(ValueError):
                fn([1.0])


class TestDerivedMetrics:
    def test_ratio_table_values(self):
        assert ev.efficiency_ratio(1.233, 1.620) == pytest.approx(0.761, abs=5e-4)
        assert round(ev.efficiency_ratio(0.977, 1.0), 3) == 0.977

    def test_dal_table_values(self):
        assert ev.data_ablation_loss(6.453, 6.566) == pytest.approx(-0.113, abs=5e-4)
        assert ev.data_ablation_loss(1.233, 1.155) == pytest.approx(0.078, abs=1e-12)

    def test_conventions(self):
        assert ev.efficiency_ratio(0.0, 0.0) == 1.0
        assert ev.efficiency_ratio(1.0, 0.0) == math.inf
        assert ev.efficiency_ratio(2.5, 2.5) == 1.0
        assert ev.data_ablation_loss(2.5, 2.5) == 0.0

    def test_mismatched_metric_values(self):
        a = ev.MetricValue("MSE", 2, "NG", 1.0)
        with pytest.raises(ValueError):
            ev.efficiency_ratio(a, ev.MetricValue("TADDA_A", 2, "NG", 1.0))
        with pytest.raises(ValueError):
            ev.data_ablation_loss(a, ev.MetricValue("MSE", 3, "NG", 1.0))

    def test_metric_value_nonnegative(self):
        with pytest.raises(ValueError):
            ev.MetricValue("MSE", 2, "NG", -1.0)


@pytest.fixture(scope="module")
def report():
    panel, _ = planted_panel(seed=3, n_countries=3, T=60, n_gdelt=4)
    last = panel.last_month
    return panel, ev.backtest(panel, (last - 2, last), steps=(2, 3), config=ForecastConfig())


class TestBacktest:
    def test_cells_and_variants(self, report):
        _, rep = report
        assert rep.variants == ev.VARIANTS
        assert len(rep.predictions) == 3 * 3 * 2 * 3
        for key in [("dynenet_full", "AVERAGE", 2, "MSE"), ("lasso", "C1", 3, "TADDA_B")]:
            assert rep.value(*key).value >= 0

    def test_no_leakage(self, report):
        _, rep = report
        for p in rep.predictions:
            assert p.trained_through == p.origin == p.month - p.step
            assert p.last_training_target <= p.origin < p.month

    def test_average_is_country_mean(self, report):
        _, rep = report
        per = [rep.value("dynenet_full", c, 2, "MSE").value for c in rep.countries]
        assert rep.value("dynenet_full", "AVERAGE", 2, "MSE").value == pytest.approx(np.mean(per), abs=1e-15)

    def test_metric_recomputes_from_predictions(self, report):
        _, rep = report
        cell = [p for p in rep.predictions if (p.variant, p.country, p.step) == ("lasso", "C0", 3)]
        y, f = [p.actual for p in cell], [p.predicted for p in cell]
        assert rep.value("lasso", "C0", 3, "MSE").value == ev.mse(y, f)
        eps = rep.epsilons[3]["TADDA_A"]
        pool = [p.actual for p in rep.predictions if p.step == 3 and p.variant == "dynenet_full"]
        assert eps == pytest.approx(sample_sd(pool), rel=1e-12)
        assert rep.value("lasso", "C0", 3, "TADDA_A").value == ev.tadda(y, f, eps)

    def test_no_gdelt_masks_gdelt_columns(self, report):
        panel, _ = report
        variants = ev.default_variants(ForecastConfig(), panel)
        masked = variants["dynenet_no_gdelt"].exclude
        assert set(masked) == {f for f in panel.features if f.startswith("gdelt_")} and len(masked) == 4
        assert variants["lasso"].alpha == 1.0

    def test_derived_recomputable(self, report, tmp_path):
        _, rep = report
        ev.write_metrics(rep, tmp_path / "m.csv")
        stored = ev.read_metrics(tmp_path / "m.csv")
        for row in rep.derived():
            key = (row["country"], row["step"], row["metric"])
            a, b, c = (stored[(v,) + key] for v in ("dynenet_full", "lasso", "dynenet_no_gdelt"))
            ratio = ev.efficiency_ratio(a, b)
            if math.isfinite(ratio):
                assert row["efficiency_ratio"] == pytest.approx(ratio, abs=1e-12)
            assert row["dal"] == pytest.approx(ev.data_ablation_loss(a, c), abs=1e-12)

    def test_writers(self, report, tmp_path):
        _, rep = report
        ev.write_derived(rep, tmp_path / "d.csv")
        ev.write_predictions(rep, tmp_path / "p.csv")
        ev.write_summary(rep, tmp_path / "s.json")
        summary = json.loads((tmp_path / "s.json").read_text())
        assert set(summary["efficiency_ratio_full_vs_lasso"]) == set(ev.METRICS)
        assert "country_mse_step3" in summary
        assert (tmp_path / "d.csv").read_text().startswith("country,step,metric,efficiency_ratio,dal\n")
        assert len((tmp_path / "p.csv").read_text().splitlines()) == 1 + len(rep.predictions)

    def test_same_config_variants_agree(self, report):
        panel, _ = report
        cfg = ForecastConfig(alpha=1.0)
        last = panel.last_month
        rep = ev.backtest(panel, (last, last), {"dynenet_full": cfg, "lasso": cfg}, steps=(2,), countries=["C0"])
        assert rep.value("dynenet_full", "C0", 2, "MSE").value == rep.value("lasso", "C0", 2, "MSE").value

    def test_window_checks(self, report):
        panel, _ = report
        with pytest.raises(RangeError):
            ev.backtest(panel, (panel.last_month, panel.last_month + 1))
        with pytest.raises(RangeError):
            ev.backtest(panel, (int(panel.months[10]), int(panel.months[12])))
        with pytest.raises(RangeError):
            ev.backtest(panel, (panel.last_month, panel.last_month - 1))


def test_noise_gdelt_ablation_rarely_hurts():
    # GDELT columns here are pure noise: removing them should not hurt on balance
    wins = 0
    for seed in range(20):
        panel, _ = planted_panel(seed=200 + seed, n_countries=1, T=60, n_noise=2, n_gdelt=10)
        last = panel.last_month
        variants = {k: v for k, v in ev.default_variants(ForecastConfig(), panel).items() if k != "lasso"}
        rep = ev.backtest(panel, (last - 5, last), variants, steps=(3,))
        full = rep.value("dynenet_full", "AVERAGE", 3, "MSE")
        ablated = rep.value("dynenet_no_gdelt", "AVERAGE", 3, "MSE")
        wins += ev.data_ablation_loss(full, ablated) >= 0
    assert wins >= 11
