"""Command-line front end: design tables, run FER campaigns, emit plot data.

Exit codes: 0 success, 2 configuration problems, 3 table-design failure.
"""

from __future__ import annotations

import argparse
import sys

from .code import builtin_family, load_family
from .design import (
    DesignConfig,
    DesignFailure,
    design_tables,
    save_tables,
    write_design_report,
)
from .ib import ParameterError, ValidationError
from .sim import CampaignConfig, CampaignError, emit_csv, emit_plot_data, parse_csv, run_campaign

EXIT_CONFIG = 2
EXIT_DESIGN = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibldpc",
        description="lookup-table LDPC decoder design and FER simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="build the decoder-tables artifact")
    p.add_argument("--family", default="builtin",
                   help="family JSON path, or 'builtin' for the bundled K=1032 family")
    p.add_argument("--rates", default="1/2",
                   help="comma-separated code rates, e.g. 1/2,1/3,2/3")
    p.add_argument("--bits", type=int, default=4, help="message bit width (2..6)")
    p.add_argument("--iters", type=int, default=100, help="decoding iterations designed for")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--design-ebn0", default=None,
                   help="fix design points, e.g. '1/2=0.9,1/3=0.7' (otherwise searched)")
    p.add_argument("--out", required=True, help="output artifact path")
    p.add_argument("--report", default=None, help="also write the evolution trace CSV here")

    p = sub.add_parser("simulate", help="run a frame-error-rate campaign")
    p.add_argument("--config", required=True, help="campaign JSON")
    p.add_argument("--out", default=None, help="results CSV (overrides config csv_out)")
    p.add_argument("--plot-out", default=None, help="also write grouped plot JSON here")

    p = sub.add_parser("report", help="group a results CSV into plot JSON")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    return parser


def _cmd_design(args) -> int:
    try:
        family = builtin_family() if args.family == "builtin" else load_family(args.family)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load family: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    design_points = {}
    if args.design_ebn0:
        try:
            for part in args.design_ebn0.split(","):
                key, val = part.split("=")
                design_points[key.strip()] = float(val)
        except ValueError:
            print("error: --design-ebn0 expects rate=dB[,rate=dB...]", file=sys.stderr)
            return EXIT_CONFIG
    try:
        cfg = DesignConfig(bit_width=args.bits, max_iters=args.iters,
                           design_ebn0_db=design_points, seed=args.seed)
        rates = [family.rate_point_for(r.strip()) for r in args.rates.split(",")]
    except (ParameterError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        tables = design_tables(family, rates, cfg)
    except DesignFailure as exc:
        print(f"design failed: {exc}", file=sys.stderr)
        for i, v in enumerate(getattr(exc, "trace", []), start=1):
            print(f"  iteration {i}: {v:.6f} bits", file=sys.stderr)
        return EXIT_DESIGN
    save_tables(tables, args.out)
    if args.report:
        write_design_report(tables, args.report)
    for key in sorted(tables.rates):
        rt = tables.rates[key]
        print(f"rate {key}: design Eb/N0 {rt.design_ebn0_db:.2f} dB, "
              f"{len(rt.iterations)} iterations, tree depth {rt.max_depth}")
    print(f"wrote {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    try:
        with open(args.config) as f:
            text = f.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    import json

    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    csv_out = args.out or payload.pop("csv_out", None)
    plot_out = args.plot_out or payload.pop("plot_out", None)
    if not csv_out:
        print("error: no output path (--out or csv_out in the config)", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = CampaignConfig.from_json(json.dumps(payload))
        records = run_campaign(cfg)
    except (CampaignError, ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    emit_csv(records, csv_out)
    if plot_out:
        emit_plot_data(records, plot_out)
    print(f"wrote {csv_out} ({len(records)} points)")
    return 0


def _cmd_report(args) -> int:
    try:
        records = parse_csv(open(args.csv).read())
    except (OSError, CampaignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    emit_plot_data(records, args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "design":
        return _cmd_design(args)
    if args.command == "simulate":
        return _cmd_simulate(args)
    return _cmd_report(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
