"""Command line interface.

Subcommands:
  run        execute the sweep described by a JSON experiment spec
  calibrate  thresholds + fresh false-alarm check for the base config
  sweep      like run, but override the swept parameter from the flags
  validate   run the built-in oracle/property battery
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None,
                   help="override the spec's master seed")
    p.add_argument("--threads", type=int, default=1,
                   help="parallel workers over setups")
    p.add_argument("--out", type=str, default=None,
                   help="override the spec's output directory")
    p.add_argument("--no-plots", action="store_true",
                   help="skip figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cfisac",
        description="Cell-free massive MIMO ISAC detection simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment in a spec file")
    p_run.add_argument("spec", type=str)
    _add_common(p_run)

    p_cal = sub.add_parser("calibrate",
                           help="calibrate detection thresholds only")
    p_cal.add_argument("spec", type=str)
    _add_common(p_cal)

    p_sw = sub.add_parser("sweep", help="run with an overridden sweep")
    p_sw.add_argument("spec", type=str)
    p_sw.add_argument("--param", type=str, required=True)
    p_sw.add_argument("--values", type=str, required=True,
                      help="comma-separated sweep values")
    _add_common(p_sw)

    p_val = sub.add_parser("validate",
                           help="run the oracle/property suite")
    p_val.add_argument("--instances", type=int, default=20)
    return parser


def _load_spec_or_exit(path: str):
    from .config import load_spec

    if not Path(path).is_file():
        print(f"error: spec file not found: {path}", file=sys.stderr)
        raise SystemExit(2)
    try:
        return load_spec(path)
    except (json.JSONDecodeError, ValueError, TypeError, KeyError) as exc:
        print(f"error: invalid spec file {path}: {exc}", file=sys.stderr)
        raise SystemExit(2)


def _apply_overrides(spec, args):
    if args.seed is not None:
        spec.master_seed = args.seed
    if args.out is not None:
        spec.output_dir = args.out
    return spec


def cmd_run(args) -> int:
    from .harness import emit_results, run_experiment

    spec = _apply_overrides(_load_spec_or_exit(args.spec), args)
    report = run_experiment(spec, threads=args.threads)
    written = emit_results(report, spec.output_dir, spec.name,
                           plots=not args.no_plots)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    from .config import SWEEPABLE

    spec = _load_spec_or_exit(args.spec)
    if args.param not in SWEEPABLE:
        print(f"error: --param must be one of {SWEEPABLE}", file=sys.stderr)
        return 2
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        print("error: --values must be a comma-separated number list",
              file=sys.stderr)
        return 2
    if not values:
        print("error: --values is empty", file=sys.stderr)
        return 2
    spec.sweep_param = args.param
    spec.sweep_values = ([int(v) for v in values]
                         if args.param in ("R", "T", "S") else values)
    spec.name = f"{spec.name}_{args.param}"
    args2 = args
    args2.spec = args.spec
    return cmd_run_with_spec(spec, args2)


def cmd_run_with_spec(spec, args) -> int:
    from .harness import emit_results, run_experiment

    spec = _apply_overrides(spec, args)
    report = run_experiment(spec, threads=args.threads)
    written = emit_results(report, spec.output_dir, spec.name,
                           plots=not args.no_plots)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_calibrate(args) -> int:
    import numpy as np

    from .detection import (TrialEngine, SensingSetup, aggregate_pairs,
                            compute_weights, thresholds_from_samples)
    from .harness import build_setup
    from .rng import stream

    spec = _apply_overrides(_load_spec_or_exit(args.spec), args)
    cfg, ccp_cfg, det = spec.base, spec.ccp, spec.detector
    art = build_setup(cfg, ccp_cfg, spec.master_seed, 0)
    setup = SensingSetup.build(art.scenario, art.plan, art.precoders,
                               art.combiners)
    weights = compute_weights(art.scenario, art.plan, art.combiners,
                              det.v_exponent)
    engine = TrialEngine(setup, art.ccp_state.rho, det)
    calib = engine.run(stream(spec.master_seed, 0, "calibration"),
                       det.n_calib, views=("h0",))
    thr = thresholds_from_samples(
        aggregate_pairs(calib.h0, calib.pairs, weights, cfg.S), det.p_fa)
    fresh = engine.run(stream(spec.master_seed, 0, "trials"),
                       det.n_calib, views=("h0",))
    agg = aggregate_pairs(fresh.h0, fresh.pairs, weights, cfg.S)
    fa = np.mean(agg >= thr[None, :], axis=0)

    outdir = Path(spec.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / f"{spec.name}_thresholds.csv"
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["ssa", "threshold", "fresh_false_alarm", "target"])
        for s in range(cfg.S):
            w.writerow([s, repr(float(thr[s])), repr(float(fa[s])),
                        repr(det.p_fa)])
    print(f"wrote {path}")
    for s in range(cfg.S):
        print(f"SSA {s}: threshold {thr[s]:.6g}, fresh FA {fa[s]:.4f} "
              f"(target {det.p_fa})")
    return 0


def cmd_validate(args) -> int:
    from .validate import run_validation

    return 0 if run_validation(verbose=True) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": cmd_run, "calibrate": cmd_calibrate,
                "sweep": cmd_sweep, "validate": cmd_validate}
    try:
        return handlers[args.command](args)
    except SystemExit:
        raise
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
