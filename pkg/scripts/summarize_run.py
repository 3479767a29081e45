#!/usr/bin/env python3
"""Summarize a finished runs directory: compute accounting, loss curves, report.

    python scripts/summarize_run.py runs/desk
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ruleshift.evalkit import FlopsConfig, flops_rl, flops_sft, read_report, smooth


def _loss_curve(events, env: str, phase: str) -> np.ndarray:
    key = "loss" if phase == "sft" else "mean_return"
    vals = [e[key] for e in events if e.get("env") == env and e.get("phase") == phase]
    return np.array(vals, dtype=float)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("runs_dir")
    ap.add_argument("--window", type=int, default=9, help="smoothing window (odd)")
    args = ap.parse_args()
    runs = Path(args.runs_dir)

    accounting = json.loads((runs / "accounting.json").read_text(encoding="utf-8"))
    print("compute accounting")
    for env, acc in sorted(accounting.items()):
        n = acc["n"]
        sft = acc["sft"]
        x_sft = flops_sft(FlopsConfig(n=n, d_sft=sft["d_sft"]))
        print(
            f"  {env}: n={n} d_sft={sft['d_sft']} "
            f"(epochs={sft['epochs']}, exact_match={sft['exact_match']:.3f}) "
            f"-> {x_sft / 10**9:.4g} GFLOPs"
        )
        if "rl" in acc:
            rl = acc["rl"]
            x_rl = flops_rl(
                FlopsConfig(
                    n=n,
                    d_init=sft["d_sft"],
                    d_rl=rl["d_rl"],
                    e=rl["e"],
                    d_i=rl["d_i"],
                    d_o=rl["d_o"],
                    env=env,
                )
            )
            print(
                f"  {env}: d_rl={rl['d_rl']} e={rl['e']} "
                f"-> {x_rl / 10**9:.4g} GFLOPs total"
            )

    events = [
        json.loads(line)
        for line in (runs / "metrics.jsonl").read_text(encoding="utf-8").splitlines()
    ]
    print("\ntraining curves (smoothed)")
    for env in sorted(accounting):
        for phase, label in (("sft", "sft loss"), ("rl", "rl mean return")):
            curve = _loss_curve(events, env, phase)
            if curve.size == 0:
                continue
            if curve.size >= args.window:
                curve = smooth(curve, window_length=args.window)
            shown = ", ".join(f"{v:.4f}" for v in curve[:: max(1, len(curve) // 8)])
            print(f"  {env} {label}: {shown}")

    report = runs / "report.csv"
    if report.exists():
        with open(report, encoding="utf-8") as fh:
            rows = read_report(fh)
        print("\nreport")
        for r in rows:
            print(
                f"  {r.env:<4} {r.metric:<18} {r.condition:<8} v={r.viter:<3}"
                f" {r.value:.4f} +/- {r.stderr:.4f} (n={r.n})"
            )
    return 0


if __name__ == "__main__":
    sys.exit(main())
