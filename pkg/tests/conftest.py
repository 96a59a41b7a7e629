import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from dynenet.panel import FeatureMeta, PanelDataset, month_to_index  # noqa: E402

settings.register_profile(
    "default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_panel(fatalities, features, start="2010-01", meta=None, present=None):
    """Panel from ``{country: counts}`` and ``{country: {feature: series}}``."""
    countries = tuple(fatalities)
    names = tuple(next(iter(features.values())))
    T = len(next(iter(fatalities.values())))
    values = np.stack([np.column_stack([np.asarray(features[c][n], dtype=float) for n in names])
                       for c in countries])
    fat = np.array([np.asarray(fatalities[c], dtype=float) for c in countries])
    if present is None:
        present = ~np.isnan(fat)
    meta = meta or {n: FeatureMeta("WDI", "structural") for n in names}
    s = month_to_index(start)
    return PanelDataset(countries, np.arange(s, s + T), names, meta, values, fat, np.asarray(present))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def planted_panel(seed=0, n_countries=3, T=72, n_noise=6, n_gdelt=0, sigma=0.1):
    """Small panel: two rotating drivers per country plus iid noise columns.

    Returns ``(panel, truth)``; truth[country] holds h, omega and the
    per-step driver coefficients under ``beta``.
    """
    from dynenet.fixtures import FixtureSpec, _planted_fatalities, step_coefficients

    spec = FixtureSpec(sigma=sigma)
    rng = np.random.default_rng(seed)
    names = ["drv_a", "drv_b"] + [f"noise_{j}" for j in range(n_noise)] + [f"gdelt_{j:02d}_m" for j in range(n_gdelt)]
    meta = {n: FeatureMeta("GED", "violent-event") for n in names}
    for n in names:
        if n.startswith("gdelt_"):
            meta[n] = FeatureMeta("GDELT", "nonviolent-event")
    fat, feats, truth = {}, {}, {}
    for c in range(n_countries):
        country = f"C{c}"
        z, F, params = _planted_fatalities(rng, spec, T)
        cols = {"drv_a": z[:, 0], "drv_b": z[:, 1]}
        for n in names[2:]:
            cols[n] = rng.standard_normal(T)
        fat[country], feats[country] = F, cols
        truth[country] = {"h": params["h"], "omega": params["omega"],
                          "beta": {k: step_coefficients(params["h"], params["omega"], k) for k in range(2, 8)}}
    return make_panel(fat, feats, meta=meta), truth


# one PASS/FAIL line per acceptance criterion, shown at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
