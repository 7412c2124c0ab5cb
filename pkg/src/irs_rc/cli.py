"""Command-line entry point: ``irs-rc {simulate,train,sound,sweep,report}``."""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import harness
from .beamforming import write_loss_trace
from .config import ExperimentConfig, config_hash, load_config
from .errors import ConfigError
from .rng import derive_seed


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _point(cfg: ExperimentConfig, args) -> harness.GridPoint:
    p = harness.grid_points(cfg)[0]
    return dataclasses.replace(
        p,
        n_atoms=args.n_atoms if args.n_atoms is not None else p.n_atoms,
        snr_db=args.snr_db if args.snr_db is not None else p.snr_db,
        hardware=args.hardware or p.hardware,
        csi_error=args.csi_error if args.csi_error is not None else p.csi_error,
    )


def _outdir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = _load(args)
    point = _point(cfg, args)
    cfg = cfg.replace(sweep=dataclasses.replace(cfg.sweep, methods=(args.method,)))
    seed = derive_seed(cfg.seed, point.index, 0)
    row = harness.run_trial(cfg, point, 0, seed, config_hash(cfg))[0]
    for key in ("method", "n_atoms", "snr_db", "hardware", "csi_error", "ber", "sinr_db",
                "se_bps_hz", "ee_bits_per_joule"):
        print(f"{key}: {harness._fmt(row[key])}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    point = _point(cfg, args)
    setup = harness.setup_trial(cfg, point, derive_seed(cfg.seed, point.index, 0))
    _, _, res = harness.run_method(cfg, setup, "rc")
    path = _outdir(args) / "loss_trace.csv"
    with open(path, "w") as fh:
        write_loss_trace(res, fh)
    print(f"final loss {res.loss:.6g} (continuous {res.continuous_loss:.6g}); "
          f"converged={res.converged} {res.diagnostic}".rstrip())
    print(f"wrote {path}")
    return 0


def cmd_sound(args) -> int:
    cfg = _load(args)
    rows = harness.run_sounding_eval(cfg)
    out = _outdir(args)
    (out / "sounding.csv").write_text(harness.rows_to_csv(rows, harness.SOUNDING_COLUMNS))
    summary = harness.summarize_sounding(rows)
    (out / "sounding_summary.csv").write_text(
        harness.rows_to_csv(summary, harness.SOUNDING_SUMMARY_COLUMNS)
    )
    for r in summary:
        print(f"snr_db={r['snr_db']:g} sweep={r['sweep']} median_rel_error={r['median_rel_error']:.4g}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    rows = harness.run_sweep(cfg, threads=args.threads)
    raw = harness.rows_to_csv(rows, harness.RESULT_COLUMNS)
    summary = harness.summarize(harness.read_csv(raw))
    harness.check_summary(raw, summary)
    out = _outdir(args)
    (out / "results.csv").write_text(raw)
    (out / "summary.csv").write_text(harness.rows_to_csv(summary, harness.SUMMARY_COLUMNS))
    print(f"wrote {len(rows)} rows to {out / 'results.csv'} and {len(summary)} to {out / 'summary.csv'}")
    return 0


def cmd_report(args) -> int:
    rows = harness.read_csv(Path(args.csv).read_text())
    if rows and "median_ee_bits_per_joule" not in rows[0]:
        rows = harness.summarize(rows)
    text = harness.gnuplot_report(rows, y=args.metric)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irs-rc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, threads=False):
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory")
        if threads:
            p.add_argument("--threads", type=int, default=1, help="worker processes")

    def point_flags(p):
        p.add_argument("--n-atoms", type=int)
        p.add_argument("--snr-db", type=float)
        p.add_argument("--hardware", choices=harness.HARDWARE)
        p.add_argument("--csi-error", type=float)

    p = sub.add_parser("simulate", help="one link, one method; print metrics")
    common(p)
    point_flags(p)
    p.add_argument("--method", choices=harness.METHODS, default="rc")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train one link and dump the loss trace")
    common(p)
    point_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sound", help="round-robin sounding evaluation")
    common(p)
    p.set_defaults(func=cmd_sound)

    p = sub.add_parser("sweep", help="full grid to CSV")
    common(p, threads=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="gnuplot data blocks from a results or summary CSV")
    p.add_argument("csv")
    p.add_argument("--metric", default="median_ee_bits_per_joule")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
