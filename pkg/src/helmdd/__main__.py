"""Command line: ``python3 -m helmdd run|sweep --config scenario.json``."""
from __future__ import annotations

import argparse
import logging
import sys

from .bench import FORMATS, ScenarioConfig, emit_report, parse_list, run_scenario, sweep
from .errors import AssemblyError, ConfigurationError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario JSON file")
    common.add_argument("--format", choices=FORMATS, default=None, help="report format (default: config output.format)")
    common.add_argument("--out", default=None, help="write the report here instead of stdout")
    common.add_argument("--threads", type=int, default=1, help="worker threads over subdomains (0 = auto)")
    common.add_argument("--seed", type=int, default=None, help="reserved; every scenario is deterministic")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="helmdd", description="Two-level Schwarz preconditioners for Helmholtz")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="solve one scenario")
    sw = sub.add_parser("sweep", parents=[common], help="sweep thresholds or mode counts")
    g = sw.add_mutually_exclusive_group(required=True)
    g.add_argument("--tau", help="comma separated thresholds")
    g.add_argument("--nev", help="comma separated modes per subdomain")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 0:
            raise ConfigurationError("--threads must be >= 0")
        cfg = ScenarioConfig.load(args.config)
        if args.command == "run":
            reports = [run_scenario(cfg, args.threads)]
        else:
            taus = parse_list(args.tau) if args.tau else None
            nevs = parse_list(args.nev, int) if args.nev else None
            reports = sweep(cfg, taus, nevs, args.threads)
        fmt = args.format or cfg.output_format
        path = args.out or cfg.output_path
        text = emit_report(reports, fmt, path)
        if path is None:
            sys.stdout.write(text)
    except (ConfigurationError, AssemblyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
