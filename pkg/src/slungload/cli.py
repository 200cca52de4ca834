"""Command-line surface: run / campaign / certify / gates / metrics.

Exit codes: 0 all gates pass, 1 gate or acceptance failures, 2 run errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis, campaign
from .params import load_config


def _cmd_run(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfgs = campaign.variant_configs()
        if args.variant not in cfgs:
            print(f"unknown variant '{args.variant}'; available: "
                  f"{', '.join(sorted(cfgs))}", file=sys.stderr)
            return 2
        cfg = cfgs[args.variant]
    if args.full_rate:
        cfg.full_rate_csv = True
    out_dir = Path(args.out) / cfg.tag if args.out else None
    try:
        m = campaign.run(cfg, out_dir)
    except Exception as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(m, indent=2, sort_keys=True))
    if m.get("aborted"):
        return 2
    g = m["gates"]
    return 0 if (g["pass_h1a"] and g["pass_h1b"] and g["pass_h3"]) else 1


def _cmd_campaign(args):
    if args.summarize_only:
        summary = campaign.summarize_dir(Path(args.out))
    else:
        summary = campaign.run_campaign(Path(args.out), select=args.select,
                                        jobs=args.jobs)
    print(json.dumps(summary, indent=2, sort_keys=True))
    if summary["errors"]:
        return 2
    perf = summary.get("performance", {})
    if perf and not all(v["gates"]["all"] for v in perf.values()):
        return 1
    return 0


def _cmd_certify(args):
    cert = analysis.certificate()
    print(json.dumps(cert, indent=2, sort_keys=True))
    return 0


def _cmd_gates(args):
    run_dir = Path(args.run_dir)
    try:
        m = json.loads((run_dir / "metrics.json").read_text())
    except OSError as exc:
        print(f"cannot read metrics: {exc}", file=sys.stderr)
        return 2
    g = m["gates"]
    ok = True
    for name, val, thresh, passed in (
            ("H1a", f"{g['h1a_ms']:.1f} ms", "<= 40 ms", g["pass_h1a"]),
            ("H1b", f"{100 * g['h1b']:.2f} %", "<= 2.5 %", g["pass_h1b"]),
            ("H3", f"{100 * g['h3']:.2f} %", "<= 1.0 %", g["pass_h3"])):
        print(f"{name}: {val} ({thresh}) -> {'PASS' if passed else 'FAIL'}")
        ok = ok and passed
    return 0 if ok else 1


def _cmd_metrics(args):
    try:
        m = campaign.recompute_metrics(Path(args.run_dir))
    except Exception as exc:
        print(f"recompute failed: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(m, indent=2, sort_keys=True))
    if args.check:
        stored = json.loads((Path(args.run_dir) / "metrics.json").read_text())
        same = json.dumps(stored, sort_keys=True) == json.dumps(m, sort_keys=True)
        print(f"reproduction: {'MATCH' if same else 'MISMATCH'}",
              file=sys.stderr)
        return 0 if same else 1
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="slungload",
        description="Deterministic multi-UAV slung-load transport simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="execute a single run")
    p.add_argument("--variant", default="v1")
    p.add_argument("--config", help="JSON config file (overrides --variant)")
    p.add_argument("--out", help="artifact directory")
    p.add_argument("--full-rate", action="store_true",
                   help="write the CSV at full 1 kHz rate")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("campaign", help="run the full campaign matrix")
    p.add_argument("--out", required=True)
    p.add_argument("--select", nargs="*", help="glob patterns of run tags")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--summarize-only", action="store_true",
                   help="rebuild summary.json from existing run directories")
    p.set_defaults(fn=_cmd_campaign)

    p = sub.add_parser("certify", help="print the analytic certificate")
    p.set_defaults(fn=_cmd_certify)

    p = sub.add_parser("gates", help="print gate report for a run directory")
    p.add_argument("run_dir")
    p.set_defaults(fn=_cmd_gates)

    p = sub.add_parser("metrics", help="recompute metrics from stored traces")
    p.add_argument("run_dir")
    p.add_argument("--check", action="store_true",
                   help="verify against the stored metrics.json")
    p.set_defaults(fn=_cmd_metrics)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
