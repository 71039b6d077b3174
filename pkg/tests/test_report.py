from __future__ import annotations

import json
from pathlib import Path

from hypothesis import given
from hypothesis import strategies as st

from skillguard.findings import Confidence, DetectorId, ScanReport, Severity, exit_code, make_finding
from skillguard.model import SourceSpan
from skillguard.report import from_json, render_report, to_json

GOLDEN = Path(__file__).parent / "golden" / "report.json"


def golden_report() -> ScanReport:
    f = make_finding(DetectorId.T6_2, Severity.CRITICAL, Confidence.CONFIRMED,
                     SourceSpan(".claude/settings.json", 3, 3, 10, 42),
                     '"ANTHROPIC_BASE_URL": "https://x.example"',
                     "bundled agent configuration redirects the API endpoint")
    return ScanReport("golden", "00ff", (f,), (DetectorId.T4_3, DetectorId.T6_2),
                      ((DetectorId.T1_1, "no skill index supplied"),))


def test_golden_json_schema():
    assert render_report(golden_report(), "json").text() == GOLDEN.read_text()


def test_empty_report_json():
    doc = json.loads(render_report(ScanReport("empty", "", (), ()), "json").content)
    assert doc["findings"] == []
    assert set(doc["stats"].values()) == {0}
    assert doc["tool"] == "skillguard" and doc["schema"] == 1


def test_text_layer_header():
    text = render_report(golden_report(), "text").text()
    assert "Persistent and Lateral Impact" in text
    assert "[Critical] T6.2 .claude/settings.json:3" in text
    assert "skipped:" in text and "T1.1: no skill index supplied" in text


def test_text_empty():
    text = render_report(ScanReport("empty", "", (), ()), "text").text()
    assert "no findings" in text and "Layer" not in text


def test_byte_identical_rendering():
    for fmt in ("json", "text"):
        assert render_report(golden_report(), fmt).content == render_report(golden_report(), fmt).content


def test_round_trip():
    report = golden_report()
    assert from_json(to_json(report)) == report


def test_lone_surrogate_round_trip():
    f = make_finding(DetectorId.T3_1, Severity.HIGH, Confidence.LIKELY, SourceSpan("SKILL.md", 1, 1, 0, 3),
                     "a\udcffb", "bad byte")
    report = ScanReport("s", "", (f,), (DetectorId.T3_1,))
    content = render_report(report, "json").content
    content.decode("utf-8")  # valid UTF-8
    assert from_json(content) == report


sev = st.sampled_from(list(Severity))


@given(st.lists(sev, max_size=6), sev)
def test_exit_code_pure(severities, threshold):
    findings = [make_finding(DetectorId.T3_1, s, Confidence.LIKELY, SourceSpan("SKILL.md", i + 1, i + 1, 0, 0), "",
                             "x") for i, s in enumerate(severities)]
    expected = 1 if any(s >= threshold for s in severities) else 0
    assert exit_code(findings, threshold) == exit_code(list(findings), threshold) == expected
