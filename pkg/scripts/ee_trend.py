"""Median energy efficiency of the learned and model-based designs against N.

Runs the impaired and ideal grids from ``configs/`` and prints one table
row per (hardware, N).  Results are also written as CSV next to ``--out``.

    python scripts/ee_trend.py --trials 20 --out runs/ee
"""

import argparse
import dataclasses
from pathlib import Path

from irs_rc import harness
from irs_rc.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, help="override trials per grid point")
    ap.add_argument("--n-atoms", type=int, nargs="+", help="override the N grid")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="runs/ee")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"{'hardware':>9} {'N':>4} {'rc EE':>12} {'baseline EE':>12} {'ratio':>6}")
    for name in ("ee_impaired", "ee_ideal"):
        cfg = load_config(ROOT / "configs" / f"{name}.cfg")
        sweep = cfg.sweep
        if args.trials:
            sweep = dataclasses.replace(sweep, trials=args.trials)
        if args.n_atoms:
            sweep = dataclasses.replace(sweep, n_atoms=tuple(args.n_atoms))
        cfg = cfg.replace(sweep=sweep)
        rows = harness.run_sweep(cfg, threads=args.threads)
        raw = harness.rows_to_csv(rows, harness.RESULT_COLUMNS)
        summary = harness.summarize(harness.read_csv(raw))
        (out / f"{name}_results.csv").write_text(raw)
        (out / f"{name}_summary.csv").write_text(harness.rows_to_csv(summary, harness.SUMMARY_COLUMNS))
        ee = {(s["n_atoms"], s["method"]): s["median_ee_bits_per_joule"] for s in summary}
        for n in cfg.sweep.n_atoms:
            rc, mb = ee[(n, "rc")], ee[(n, "model_based")]
            print(f"{cfg.sweep.hardware[0]:>9} {n:>4} {rc:12.4g} {mb:12.4g} {mb / rc:6.3f}")


if __name__ == "__main__":
    main()
