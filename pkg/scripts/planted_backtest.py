"""Planted-driver recovery and back-test MSE on a generated fixture.

    python3 scripts/planted_backtest.py --seed 1 --window 6
"""

import argparse
import tempfile
import time

import numpy as np

from dynenet import evaluation, events, fixtures, forecaster
from dynenet.panel import load_panel


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--window", type=int, default=6, help="back-test target months (ending at the last month)")
    ap.add_argument("--countries", type=int, default=30)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as out:
        truth = fixtures.make_fixtures(out, seed=args.seed, spec=fixtures.FixtureSpec(n_countries=args.countries))
        panel = load_panel(f"{out}/panel.csv", f"{out}/metadata.csv")
        with open(f"{out}/events.tsv") as fh:
            parsed = events.parse_event_records(fh)
    panel = events.merge_into_panel(panel, events.build_monthly_indexes(events.filter_root_dedupe(parsed.records)))
    print(f"features {len(panel.features)}")

    _, models, report = forecaster.fit_all(panel, jobs=args.jobs)
    print(f"fit_all {time.perf_counter() - t0:.0f}s counts {report.counts} expected {truth['expected_counts']}")
    hits = total = 0
    for (country, k), model in sorted(models.items()):
        entry = truth["countries"][country]
        if entry["role"] != "planted" or model.method != forecaster.DYNENET:
            continue
        sel = dict(model.selected)
        ok = all(d in sel and np.sign(sel[d]) == entry["signs"][d] for d in entry["drivers"])
        hits += ok
        total += 1
    print(f"recovery {hits}/{total} = {hits / total:.3f}")

    planted = [c for c, e in truth["countries"].items() if e["role"] == "planted"]
    last = panel.last_month
    t1 = time.perf_counter()
    bt = evaluation.backtest(panel, (last - args.window + 1, last), {"dynenet_full": forecaster.ForecastConfig()},
                             countries=planted, jobs=args.jobs)
    per_step = {k: bt.value("dynenet_full", "AVERAGE", k, "MSE").value for k in bt.steps}
    oracle = [(p.actual - fixtures.oracle_delta(panel, truth, p.country, p.step, p.origin)) ** 2
              for p in bt.predictions]
    print("backtest MSE by step " + " ".join(f"s{k}={v:.4f}" for k, v in per_step.items()))
    print(f"backtest MSE {np.mean(list(per_step.values())):.4f} (limit {1.5 * truth['noise_variance']:.4f}); "
          f"noise-free oracle {np.mean(oracle):.4f}; {len(bt.predictions)} predictions in "
          f"{time.perf_counter() - t1:.0f}s")
    print(f"total {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
