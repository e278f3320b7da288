import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path

import yaml

from . import campaigns, reports, utils
from .catalog import load_catalog
from .errors import CatalogSchemaError, ReportError, SymkitError, UnknownCatalogIdError
from .transforms import load_transform_spec, run_transform_spec

LOGGER = logging.getLogger(__name__)

EXIT_USAGE = 2


def positive_int(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def positive_float(value: str) -> float:
    number = float(value)
    if not number > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return number


def add_campaign_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Run seed (default from config/defaults.yml).")
    parser.add_argument("--trials", type=positive_int, default=None, help="Jet points per parameter sample.")
    parser.add_argument("--rtol", type=positive_float, default=None, help="Relative tolerance of identity checks.")
    parser.add_argument("--jobs", type=positive_int, default=1, help="Items verified concurrently.")
    parser.add_argument("--format", default="text", help="Output format: text or json.")
    parser.add_argument("--no-save", action="store_true", help="Do not write the report to the run directory.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="symkit-dc", description="Symbolic verification of diffusion-convection symmetries")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # 'verify-algebra' command
    verify_parser = subparsers.add_parser("verify-algebra", help="Check catalog generators against their systems.")
    verify_parser.add_argument("selector", help="Algebra id, id prefix, glob pattern or 'all'.")
    add_campaign_options(verify_parser)

    # 'audit-solutions' command
    audit_parser = subparsers.add_parser("audit-solutions", help="Audit the exact solutions of an equation.")
    audit_parser.add_argument("equation", help="Equation id, e.g. fujita-storm.")
    add_campaign_options(audit_parser)

    # 'transform' command
    transform_parser = subparsers.add_parser("transform", help="Apply a transform spec file.")
    transform_parser.add_argument("spec", type=Path)
    transform_parser.add_argument("--format", default="text", help="Output format: text or json.")
    transform_parser.add_argument("--output", type=Path, default=None, help="Write the result to a file.")

    # 'verify-all' command
    all_parser = subparsers.add_parser("verify-all", help="Run the full verification campaign.")
    add_campaign_options(all_parser)

    # 'report' command
    report_parser = subparsers.add_parser("report", help="Render a saved report.")
    report_parser.add_argument("run", help="Report file name, its stem, or 'latest'.")
    report_parser.add_argument("--format", default="text", help="Output format: text or json.")
    return parser


def _check_format(fmt: str) -> None:
    if fmt not in reports.FORMATS:
        raise ReportError(f"unsupported format {fmt!r}; choose one of {', '.join(reports.FORMATS)}")


def run_campaign(args: argparse.Namespace) -> int:
    _check_format(args.format)
    options = campaigns.CampaignOptions.from_settings(args.seed, args.trials, args.rtol, args.jobs)
    if args.command == "verify-algebra":
        report = asyncio.run(campaigns.verify_algebras(args.selector, options))
    elif args.command == "audit-solutions":
        report = asyncio.run(campaigns.audit_solutions(args.equation, options))
    else:
        report = asyncio.run(campaigns.verify_all(options))
    if not args.no_save:
        reports.save_report(report)
    sys.stdout.write(reports.render(report, args.format))
    return report.exit_code()


def run_transform(args: argparse.Namespace) -> int:
    _check_format(args.format)
    spec = load_transform_spec(args.spec.read_text(encoding="utf-8"))
    result = run_transform_spec(spec, load_catalog())
    if args.format == "json":
        text = json.dumps(result, indent=2) + "\n"
    else:
        text = yaml.safe_dump(result, sort_keys=False, allow_unicode=True)
    if args.output is not None:
        args.output.write_text(text, encoding="utf-8")
        LOGGER.info(f"Wrote {args.output}")
    else:
        sys.stdout.write(text)
    return 0


def show_report(args: argparse.Namespace) -> int:
    _check_format(args.format)
    report = reports.load_report(args.run)
    sys.stdout.write(reports.render(report, args.format))
    return report.exit_code()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    utils.setup_logging(args.verbose)

    try:
        if args.command in ("verify-algebra", "audit-solutions", "verify-all"):
            return run_campaign(args)
        if args.command == "transform":
            return run_transform(args)
        return show_report(args)
    except (UnknownCatalogIdError, CatalogSchemaError, ReportError, FileNotFoundError) as e:
        LOGGER.error(str(e))
        return EXIT_USAGE
    except SymkitError as e:
        LOGGER.error(f"{type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
