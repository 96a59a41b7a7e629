"""Where does back-test error above the noise floor come from?

For a sample of planted countries, steps and origins, compare the squared
error of:
  dynenet      the model as configured
  ols_true     OLS on the two planted drivers only (oracle selection)
  en_true      the elastic net restricted to the two planted drivers
  oracle       the noise-free planted delta (irreducible noise only)
and report how many non-driver columns the full model selects.

    python3 scripts/mse_gap.py --seed 1 --countries 8 --origins 3
"""

import argparse
import tempfile

import numpy as np

from dynenet import events, fixtures, forecaster
from dynenet.panel import STEPS, build_design, load_panel


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--countries", type=int, default=8)
    ap.add_argument("--origins", type=int, default=3)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as out:
        truth = fixtures.make_fixtures(out, seed=args.seed)
        panel = load_panel(f"{out}/panel.csv", f"{out}/metadata.csv")
        with open(f"{out}/events.tsv") as fh:
            parsed = events.parse_event_records(fh)
    panel = events.merge_into_panel(panel, events.build_monthly_indexes(events.filter_root_dedupe(parsed.records)))
    planted = [c for c, e in truth["countries"].items() if e["role"] == "planted"][: args.countries]
    cfg = forecaster.ForecastConfig()
    last = panel.last_month
    err = {name: {k: [] for k in STEPS} for name in ("dynenet", "ols_true", "en_true", "oracle")}
    extra = {k: [] for k in STEPS}
    for country in planted:
        drivers = truth["countries"][country]["drivers"]
        c = panel.country_index(country)
        for k in STEPS:
            for j in range(args.origins):
                origin = last - k - j
                actual = panel.fatalities[c, panel.month_position(origin + k)]
                base = panel.fatalities[c, panel.month_position(origin)]
                y = np.log1p(actual) - np.log1p(base)
                model = forecaster.fit_country(panel, country, k, cfg, through=origin)
                err["dynenet"][k].append((model.predict_latest() - y) ** 2)
                extra[k].append(sum(name not in drivers for name, _ in model.selected))

                d = build_design(panel, country, k, cfg.missing_policy, through=origin, min_months=cfg.min_months)
                cols = [d.columns.index(n) for n in drivers]
                A = np.column_stack([np.ones(d.n_rows), d.X[:, cols]])
                coef = np.linalg.lstsq(A, d.y, rcond=None)[0]
                pred = coef[0] + d.x_latest[cols] @ coef[1:]
                err["ols_true"][k].append((pred - y) ** 2)

                keep = tuple(f for f in panel.features if f not in drivers)
                m2 = forecaster.fit_country(panel, country, k, forecaster.ForecastConfig(exclude=keep), through=origin)
                err["en_true"][k].append((m2.predict_latest() - y) ** 2)
                err["oracle"][k].append((fixtures.oracle_delta(panel, truth, country, k, origin) - y) ** 2)
    print("step " + " ".join(f"{name:>9}" for name in err) + "  extra_selected")
    for k in STEPS:
        print(f"s{k}   " + " ".join(f"{np.mean(err[name][k]):9.4f}" for name in err) + f"  {np.mean(extra[k]):.1f}")
    print("mean " + " ".join(f"{np.mean([v for s in err[name].values() for v in s]):9.4f}" for name in err))


if __name__ == "__main__":
    main()
