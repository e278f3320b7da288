"""Verification reports: the pydantic model, run-directory storage and rendering."""

import logging
import math
from pathlib import Path
from typing import Literal

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import utils
from .errors import ReportError

LOGGER = logging.getLogger(__name__)

Kind = Literal["generator", "solution", "resolver", "transformation-identity"]
Verdict = Literal["pass", "fail", "inconclusive", "out-of-scope"]
FORMATS = ("text", "json")


class ItemRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str
    kind: Kind
    verdict: Verdict
    label: str = ""
    worst: float | None = None
    worst_abs: float | None = None
    fd_worst: float | None = None
    witness: dict[str, float] = Field(default_factory=dict)
    points: int = 0
    singular: int = 0
    seed: int | None = None
    expected: str | None = None
    message: str | None = None

    @field_validator("worst", "worst_abs", "fd_worst", mode="before")
    @classmethod
    def _finite_or_none(cls, value):
        if value is None or not math.isfinite(float(value)):
            return None
        return float(value)

    @field_validator("witness", mode="before")
    @classmethod
    def _finite_witness(cls, value):
        return {k: float(v) for k, v in (value or {}).items() if math.isfinite(float(v))}


class RunMetadata(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: str
    selector: str | None = None
    seed: int
    trials: int
    rtol: float
    atol: float
    parameter_samples: int
    symmetry_pass: float
    symmetry_fail: float
    solution_pass: float
    catalog_version: int


class VerificationReport(BaseModel):
    """Run metadata plus one record per selected item, sorted by id."""

    model_config = ConfigDict(extra="forbid")

    metadata: RunMetadata
    records: list[ItemRecord] = Field(default_factory=list)

    @field_validator("records")
    @classmethod
    def _unique_sorted(cls, records: list[ItemRecord]) -> list[ItemRecord]:
        ids = [r.id for r in records]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise ValueError(f"duplicate record ids: {duplicates}")
        return sorted(records, key=lambda r: r.id)

    def counts(self) -> dict[str, int]:
        result = {verdict: 0 for verdict in Verdict.__args__}
        for record in self.records:
            result[record.verdict] += 1
        return result

    def exit_code(self) -> int:
        """0 all pass, 1 any fail, 3 when inconclusive verdicts are the only problem."""
        counts = self.counts()
        if counts["fail"]:
            return 1
        if counts["inconclusive"]:
            return 3
        return 0

    def to_json(self) -> str:
        return self.model_dump_json(indent=2) + "\n"


# --- Storage --- #
def save_report(report: VerificationReport, directory: Path | None = None) -> Path:
    """Write <timestamp>-<seed>.json into the run directory."""
    directory = utils.ensure_run_dir(directory)
    path = directory / f"{utils.run_timestamp()}-{report.metadata.seed}.json"
    path.write_text(report.to_json(), encoding="utf-8")
    LOGGER.info(f"Saved report with {len(report.records)} records to {path}")
    return path


def resolve_run(run_id: str, directory: Path | None = None) -> Path:
    """A run id is a report file name, its stem, or 'latest'."""
    runs = utils.list_runs(directory)
    if run_id == "latest":
        if not runs:
            raise ReportError("no saved runs in the run directory")
        return runs[-1]
    for path in runs:
        if run_id in (path.name, path.stem):
            return path
    raise ReportError(f"unknown run id {run_id!r}")


def load_report(run_id: str, directory: Path | None = None) -> VerificationReport:
    path = resolve_run(run_id, directory)
    try:
        return VerificationReport.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise ReportError(f"{path.name} is not a valid report: {exc.errors()[0]['msg']}") from exc


# --- Rendering --- #
def summary_table(report: VerificationReport) -> pd.DataFrame:
    """Counts per kind (rows) and verdict (columns), with totals."""
    frame = pd.DataFrame([{"kind": r.kind, "verdict": r.verdict} for r in report.records], columns=["kind", "verdict"])
    table = pd.crosstab(frame["kind"], frame["verdict"], margins=True, margins_name="total")
    columns = [v for v in Verdict.__args__ if v in table.columns] + ["total"]
    return table.reindex(columns=columns, fill_value=0)


def render_text(report: VerificationReport) -> str:
    meta = report.metadata
    counts = report.counts()
    lines = [
        f"command: {meta.command}" + (f" {meta.selector}" if meta.selector else ""),
        f"seed {meta.seed}, trials {meta.trials}, rtol {meta.rtol:g}, parameter samples {meta.parameter_samples}",
        f"{counts['pass']} pass / {counts['fail']} fail / {counts['inconclusive']} inconclusive / "
        f"{counts['out-of-scope']} out-of-scope",
        "",
    ]
    if report.records:
        lines.append(summary_table(report).to_string())
    problems = [r for r in report.records if r.verdict in ("fail", "inconclusive")]
    if problems:
        lines += ["", "not passing:"]
        for record in problems:
            detail = record.message or (f"residual {record.worst:.3g}" if record.worst is not None else "")
            witness = ", ".join(f"{k}={v:.6g}" for k, v in record.witness.items())
            lines.append(f"  [{record.verdict}] {record.id} {record.label} {detail}".rstrip())
            if witness:
                lines.append(f"      at {witness}")
    return "\n".join(lines) + "\n"


def render(report: VerificationReport, fmt: str = "text") -> str:
    if fmt == "json":
        return report.to_json()
    if fmt == "text":
        return render_text(report)
    raise ReportError(f"unsupported format {fmt!r}; choose one of {', '.join(FORMATS)}")
