import json

import numpy as np
import pytest

from dynenet import events as evt
from dynenet import fixtures as fx
from dynenet.panel import STEPS, compute_target, load_panel

SMALL = fx.FixtureSpec(n_countries=3, n_months=48)


@pytest.fixture(scope="module")
def written(tmp_path_factory):
    out = tmp_path_factory.mktemp("fx")
    truth = fx.make_fixtures(out, seed=5, spec=SMALL)
    return out, truth


def test_files_and_counts(written):
    out, truth = written
    panel = load_panel(out / "panel.csv", out / "metadata.csv")
    assert len(panel.features) == truth["n_base_features"] == 653
    assert len(panel.countries) == 3 + 2 + 1 + 1
    assert truth["expected_counts"] == {"dynenet": 3, "fallback": 3, "skipped": 1}
    assert json.loads((out / "truth.json").read_text()) == truth


def test_events_merge_to_753(written):
    out, truth = written
    panel = load_panel(out / "panel.csv", out / "metadata.csv")
    with open(out / "events.tsv") as fh:
        parsed = evt.parse_event_records(fh)
    assert parsed.n_rejected == SMALL.n_malformed
    merged = evt.merge_into_panel(panel, evt.build_monthly_indexes(evt.filter_root_dedupe(parsed.records)))
    assert len(merged.features) == 753


def test_deterministic(tmp_path):
    a = fx.make_fixtures(tmp_path / "a", seed=9, spec=SMALL)
    b = fx.make_fixtures(tmp_path / "b", seed=9, spec=SMALL)
    assert a == b
    for name in ("panel.csv", "metadata.csv", "events.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    c = fx.make_fixtures(tmp_path / "c", seed=10, spec=SMALL)
    assert (tmp_path / "a" / "panel.csv").read_bytes() != (tmp_path / "c" / "panel.csv").read_bytes()
    assert c != a


def test_step_coefficients_match_simulation():
    # iterate z forward and sum the one-step increments directly
    h, omega = fx._unit(SMALL.h_angle) * 0.1, 2 * np.pi / 25
    z0 = np.array([0.3, -0.8])
    R = fx.rotation(omega)
    for k in STEPS:
        z, total = z0.copy(), 0.0
        for _ in range(k):
            total += h @ z
            z = R @ z
        assert fx.step_coefficients(h, omega, k) @ z0 == pytest.approx(total, abs=1e-14)


def test_oracle_delta_tracks_target(written):
    out, truth = written
    panel = load_panel(out / "panel.csv", out / "metadata.csv")
    planted = [c for c, e in truth["countries"].items() if e["role"] == "planted"]
    for country in planted:
        t = compute_target(panel, country, 3)
        resid = [y - fx.oracle_delta(panel, truth, country, 3, int(m)) for y, m in zip(t.values, t.months)]
        assert np.var(resid) < 3 * truth["noise_variance"]
        signs = truth["countries"][country]["signs"]
        assert sorted(signs.values()) == [-1, 1]
    with pytest.raises(ValueError):
        fx.oracle_delta(panel, truth, [c for c, e in truth["countries"].items() if e["role"] == "zero"][0], 2,
                        panel.last_month)


def test_spec_checks():
    with pytest.raises(ValueError):
        fx.FixtureSpec(n_countries=60)
    with pytest.raises(ValueError):
        fx.FixtureSpec(n_months=6)
