#!/usr/bin/env python3
"""Regenerate the JSON schemas in docs/ from the pydantic models."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

SCRIPT_DIR = Path(__file__).resolve().parent
PROJECT_ROOT = SCRIPT_DIR.parent
SRC_DIR = PROJECT_ROOT / "src"
if str(SRC_DIR) not in sys.path:
    sys.path.insert(0, str(SRC_DIR))

from symkit_dc import config
from symkit_dc.catalog import CatalogFile
from symkit_dc.reports import VerificationReport
from symkit_dc.transforms import TransformSpec

LOGGER = logging.getLogger("export_schemas")

SCHEMAS = {
    config.CATALOG_SCHEMA: CatalogFile,
    config.TRANSFORM_SPEC_SCHEMA: TransformSpec,
    config.REPORT_SCHEMA: VerificationReport,
}


def configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def render_schema(model) -> str:
    return json.dumps(model.model_json_schema(), indent=2, sort_keys=True) + "\n"


def export(check: bool) -> int:
    stale = []
    for path, model in SCHEMAS.items():
        text = render_schema(model)
        if check:
            if not path.exists() or path.read_text(encoding="utf-8") != text:
                stale.append(path.name)
            continue
        path.write_text(text, encoding="utf-8")
        LOGGER.info("Wrote %s", path.relative_to(PROJECT_ROOT))
    if stale:
        LOGGER.error("Out of date: %s", ", ".join(stale))
        return 1
    return 0


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--check", action="store_true", help="Only report schemas that differ from the models.")
    parser.add_argument("--verbose", action="store_true")
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    configure_logging(args.verbose)
    return export(args.check)


if __name__ == "__main__":
    raise SystemExit(main())
