"""Finding, report and taxonomy types shared by every detector."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum, IntEnum

from .model import SourceSpan

MAX_EVIDENCE_BYTES = 512


class Severity(IntEnum):
    INFO = 0
    LOW = 1
    MEDIUM = 2
    HIGH = 3
    CRITICAL = 4

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "Severity":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown severity: {text!r}") from None

    def lowered(self) -> "Severity":
        return Severity(max(self - 1, Severity.INFO))


class Confidence(Enum):
    CONFIRMED = "Confirmed"
    LIKELY = "Likely"
    HEURISTIC = "Heuristic"


class Phase(Enum):
    CREATION = "Creation"
    DISTRIBUTION = "Distribution"
    DEPLOYMENT = "Deployment"
    EXECUTION = "Execution"


class DetectorId(Enum):
    T1_1 = "T1.1"
    T1_4 = "T1.4"
    T2_1 = "T2.1"
    T2_2 = "T2.2"
    T3_1 = "T3.1"
    T3_2 = "T3.2"
    T4_1 = "T4.1"
    T4_2 = "T4.2"
    T4_3 = "T4.3"
    T5_1 = "T5.1"
    T5_2 = "T5.2"
    T5_3 = "T5.3"
    T6_1 = "T6.1"
    T6_2 = "T6.2"
    T7_1 = "T7.1"

    @property
    def dotted(self) -> str:
        return self.value

    @property
    def phase(self) -> Phase:
        return PHASES[self]

    @property
    def layer(self) -> int:
        return LAYER_OF_CATEGORY[self.value.split(".")[0]]

    @classmethod
    def parse(cls, text: str) -> "DetectorId":
        key = text.strip().upper().replace(".", "_")
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown detector id: {text!r}") from None


# First listed phase of the taxonomy's phase column (Cr/Di/De/Ex).
PHASES: dict[DetectorId, Phase] = {
    DetectorId.T1_1: Phase.DISTRIBUTION,
    DetectorId.T1_4: Phase.CREATION,
    DetectorId.T2_1: Phase.DEPLOYMENT,
    DetectorId.T2_2: Phase.DEPLOYMENT,
    DetectorId.T3_1: Phase.CREATION,
    DetectorId.T3_2: Phase.EXECUTION,
    DetectorId.T4_1: Phase.CREATION,
    DetectorId.T4_2: Phase.CREATION,
    DetectorId.T4_3: Phase.CREATION,
    DetectorId.T5_1: Phase.EXECUTION,
    DetectorId.T5_2: Phase.EXECUTION,
    DetectorId.T5_3: Phase.EXECUTION,
    DetectorId.T6_1: Phase.EXECUTION,
    DetectorId.T6_2: Phase.EXECUTION,
    DetectorId.T7_1: Phase.EXECUTION,
}

LAYER_OF_CATEGORY = {"T1": 1, "T2": 1, "T3": 2, "T4": 2, "T5": 2, "T6": 3, "T7": 3}
LAYER_TITLES = {
    1: "Layer 1: Delivery and Trust Establishment",
    2: "Layer 2: Runtime Attack",
    3: "Layer 3: Persistent and Lateral Impact",
}


def clip_evidence(text: str) -> str:
    """Trim text to the evidence budget without splitting a UTF-8 sequence."""
    raw = text.encode("utf-8", "surrogateescape")
    if len(raw) <= MAX_EVIDENCE_BYTES:
        return text
    cut = raw[:MAX_EVIDENCE_BYTES]
    while cut and (cut[-1] & 0xC0) == 0x80:
        cut = cut[:-1]
    if cut and cut[-1] >= 0xC0:
        cut = cut[:-1]
    return cut.decode("utf-8", "surrogateescape")


@dataclass(frozen=True)
class Finding:
    detector: DetectorId
    severity: Severity
    confidence: Confidence
    phase: Phase
    span: SourceSpan
    evidence: str
    message: str

    def sort_key(self) -> tuple:
        return (
            self.span.file.encode("utf-8", "surrogateescape"),
            self.span.byte_start,
            self.detector.value,
            self.span.byte_end,
            self.message,
            self.evidence,
            -self.severity,
        )


def make_finding(detector: DetectorId, severity: Severity, confidence: Confidence,
                 span: SourceSpan, evidence: str, message: str) -> Finding:
    """Build a Finding whose phase follows the detector's taxonomy entry.

    Evidence longer than the budget is clipped and the span shrunk to match.
    """
    clipped = clip_evidence(evidence)
    if clipped != evidence:
        nbytes = len(clipped.encode("utf-8", "surrogateescape"))
        lines = clipped.count("\n")
        span = SourceSpan(span.file, span.line_start, span.line_start + lines,
                          span.byte_start, span.byte_start + nbytes)
    return Finding(detector, severity, confidence, detector.phase, span, clipped, message)


@dataclass(frozen=True)
class ScanReport:
    package_name: str
    digest: str
    findings: tuple[Finding, ...]
    detectors_run: tuple[DetectorId, ...]
    skipped: tuple[tuple[DetectorId, str], ...] = ()
    stats: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.stats:
            object.__setattr__(self, "stats", severity_counts(self.findings))

    def max_severity(self) -> Severity | None:
        return max((f.severity for f in self.findings), default=None)

    def ids(self) -> set[DetectorId]:
        return {f.detector for f in self.findings}


def severity_counts(findings) -> dict[str, int]:
    counts = Counter(f.severity for f in findings)
    return {s.label: counts.get(s, 0) for s in sorted(Severity, reverse=True)}


def sort_findings(findings) -> tuple[Finding, ...]:
    return tuple(sorted(set(findings), key=Finding.sort_key))


def exit_code(findings, threshold: Severity) -> int:
    return 1 if any(f.severity >= threshold for f in findings) else 0
