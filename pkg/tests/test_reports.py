import math

import pytest
from pydantic import ValidationError

from symkit_dc import reports
from symkit_dc.errors import ReportError
from symkit_dc.reports import ItemRecord, RunMetadata, VerificationReport


@pytest.fixture
def metadata():
    """Metadata of a small verify-algebra run."""
    return RunMetadata(
        command="verify-algebra", selector="system-1/case-1", seed=1, trials=10, rtol=1e-9, atol=1e-11,
        parameter_samples=5, symmetry_pass=1e-8, symmetry_fail=1e-4, solution_pass=1e-10, catalog_version=1,
    )


def make_report(metadata, *verdicts):
    records = [
        ItemRecord(id=f"item-{i}", kind="generator", verdict=verdict, worst=0.5 if verdict == "fail" else 0.0,
                   witness={"x": 2.0} if verdict == "fail" else {})
        for i, verdict in enumerate(verdicts)
    ]
    return VerificationReport(metadata=metadata, records=list(reversed(records)))


# --- Model --- #
def test_records_are_sorted_and_unique(metadata):
    report = make_report(metadata, "pass", "pass", "fail")
    assert [r.id for r in report.records] == ["item-0", "item-1", "item-2"]
    duplicate = ItemRecord(id="same", kind="generator", verdict="pass")
    with pytest.raises(ValidationError):
        VerificationReport(metadata=metadata, records=[duplicate, duplicate])


def test_non_finite_values_become_null():
    record = ItemRecord(id="a", kind="solution", verdict="inconclusive", worst=math.nan, witness={"x": math.inf, "t": 1.0})
    assert record.worst is None
    assert record.witness == {"t": 1.0}


@pytest.mark.parametrize(
    "verdicts, code",
    [(("pass", "pass"), 0), (("pass", "fail"), 1), (("inconclusive", "fail"), 1),
     (("pass", "inconclusive"), 3), (("pass", "out-of-scope"), 0)],
)
def test_exit_codes(metadata, verdicts, code):
    assert make_report(metadata, *verdicts).exit_code() == code


# --- Storage --- #
def test_save_and_resolve_runs(metadata, run_dir):
    first = reports.save_report(make_report(metadata, "pass"))
    second = reports.save_report(make_report(metadata, "fail"))
    assert first.name.endswith("-1.json")
    assert reports.resolve_run("latest") == second
    assert reports.resolve_run(first.stem) == first
    assert reports.load_report(first.name).records[0].verdict == "pass"
    with pytest.raises(ReportError):
        reports.resolve_run("missing")


def test_invalid_report_file(run_dir):
    run_dir.mkdir(parents=True)
    (run_dir / "20240101T000000000000-1.json").write_text("{}", encoding="utf-8")
    with pytest.raises(ReportError):
        reports.load_report("latest")


# --- Rendering --- #
def test_summary_table(metadata):
    table = reports.summary_table(make_report(metadata, "pass", "pass", "fail"))
    assert table.loc["generator", "pass"] == 2
    assert table.loc["total", "total"] == 3


def test_render_text_lists_failures(metadata):
    text = reports.render(make_report(metadata, "pass", "fail"), "text")
    assert "1 pass / 1 fail" in text
    assert "[fail] item-1" in text
    assert "x=2" in text


def test_render_json_round_trips(metadata):
    report = make_report(metadata, "pass", "fail")
    assert VerificationReport.model_validate_json(reports.render(report, "json")) == report


def test_render_rejects_unknown_format(metadata):
    with pytest.raises(ReportError):
        reports.render(make_report(metadata, "pass"), "yaml")
