"""Report rendering: canonical JSON and a grouped plain-text view."""

from __future__ import annotations

import json
from dataclasses import dataclass

from .findings import (LAYER_TITLES, Confidence, DetectorId, Finding, Phase, ScanReport, Severity)
from .model import SourceSpan

TOOL = "skillguard"
SCHEMA_VERSION = 1
FORMATS = ("json", "text")


@dataclass(frozen=True)
class RenderedReport:
    format: str
    content: bytes

    def text(self) -> str:
        return self.content.decode("utf-8")


# ── json ─────────────────────────────────────────────────────────────────────


def finding_to_dict(f: Finding) -> dict:
    return {
        "id": f.detector.value,
        "severity": f.severity.label,
        "confidence": f.confidence.value,
        "phase": f.phase.value,
        "file": f.span.file,
        "line": f.span.line_start,
        "line_end": f.span.line_end,
        "byte_start": f.span.byte_start,
        "byte_end": f.span.byte_end,
        "evidence": f.evidence,
        "message": f.message,
    }


def finding_from_dict(d: dict) -> Finding:
    span = SourceSpan(d["file"], d["line"], d.get("line_end", d["line"]), d.get("byte_start", 0), d.get("byte_end", 0))
    return Finding(DetectorId.parse(d["id"]), Severity.parse(d["severity"]), Confidence(d["confidence"]),
                   Phase(d["phase"]), span, d["evidence"], d["message"])


def report_to_dict(report: ScanReport) -> dict:
    return {
        "tool": TOOL,
        "schema": SCHEMA_VERSION,
        "package": {"name": report.package_name, "digest": report.digest},
        "findings": [finding_to_dict(f) for f in report.findings],
        "detectors_run": [d.value for d in report.detectors_run],
        "skipped": [{"id": d.value, "reason": why} for d, why in report.skipped],
        "stats": dict(report.stats),
    }


def to_json(report: ScanReport) -> str:
    return json.dumps(report_to_dict(report), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def from_json(text: str | bytes) -> ScanReport:
    doc = json.loads(text)
    if doc.get("tool") != TOOL or doc.get("schema") != SCHEMA_VERSION:
        raise ValueError("not a skillguard report of a supported schema")
    return ScanReport(
        package_name=doc["package"]["name"],
        digest=doc["package"]["digest"],
        findings=tuple(finding_from_dict(f) for f in doc["findings"]),
        detectors_run=tuple(DetectorId.parse(d) for d in doc.get("detectors_run", [])),
        skipped=tuple((DetectorId.parse(s["id"]), s["reason"]) for s in doc.get("skipped", [])),
        stats=dict(doc.get("stats", {})),
    )


# ── text ─────────────────────────────────────────────────────────────────────


def finding_line(f: Finding) -> str:
    line = f"  [{f.severity.label}] {f.detector.value} {f.span.file}:{f.span.line_start} {f.message}"
    if f.evidence:
        ev = f.evidence.replace("\r", "\\r").replace("\n", "\\n")
        line += f" | {ev}"
    return line


def to_text(report: ScanReport) -> str:
    out = [f"skillguard report: {report.package_name or '(unnamed)'}"]
    if report.digest:
        out.append(f"digest: {report.digest}")
    for layer in sorted(LAYER_TITLES):
        group = [f for f in report.findings if f.detector.layer == layer]
        if group:
            out.append("")
            out.append(LAYER_TITLES[layer])
            out.extend(finding_line(f) for f in group)
    if not report.findings:
        out.append("")
        out.append("no findings")
    if report.skipped:
        out.append("")
        out.append("skipped:")
        out.extend(f"  {d.value}: {why}" for d, why in report.skipped)
    out.append("")
    out.append("summary: " + ", ".join(f"{k} {v}" for k, v in report.stats.items()))
    return "\n".join(out) + "\n"


def render_report(report: ScanReport, fmt: str = "json") -> RenderedReport:
    if fmt == "json":
        text = to_json(report)
    elif fmt == "text":
        text = to_text(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    # Lone surrogates (undecodable source bytes) become \udcXX escapes so the
    # output stays valid UTF-8; json.loads maps them back on re-parse.
    return RenderedReport(fmt, text.encode("utf-8", "backslashreplace"))
