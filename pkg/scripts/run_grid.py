#!/usr/bin/env python3
"""Train and evaluate the full SFT/RL x ID/OOD grid, then print the headline table.

Runs both probe environments with the verification-budget presets from the
config file and leaves all artifacts (checkpoints, transcripts, metrics,
report.csv) under --out.

    python scripts/run_grid.py --config configs/desk.json --out runs/desk
"""

import argparse
import sys

from ruleshift.cli import experiment_config, load_config
from ruleshift.evalkit import read_report


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/desk.json")
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    args = ap.parse_args()

    from ruleshift.harness import run_experiment

    config = experiment_config(load_config(args.config), args.seed)
    csv_path = run_experiment(args.out, config)
    with open(csv_path, encoding="utf-8") as fh:
        rows = read_report(fh)

    viters = sorted({r.viter for r in rows})
    for env in ("gp", "nav"):
        sub = [r for r in rows if r.env == env and r.metric == "success_rate"]
        print(f"\n{env} success rate (value +/- stderr, by verification budget)")
        print("  condition " + "".join(f"{f'v={v}':>16}" for v in viters))
        for cond in ("SFT-ID", "SFT-OOD", "RL-ID", "RL-OOD"):
            cells = {r.viter: r for r in sub if r.condition == cond}
            line = "".join(
                f"{f'{cells[v].value:.3f}+/-{cells[v].stderr:.3f}':>16}" for v in viters
            )
            print(f"  {cond:<10}{line}")
        top = max(viters)
        for method in ("SFT", "RL"):
            by = {r.condition: r.value for r in sub if r.viter == top}
            drop = by[f"{method}-ID"] - by[f"{method}-OOD"]
            print(f"  {method} rule-shift drop at v={top}: {drop:+.3f}")

    print(f"\nreport: {csv_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
