"""skillguard: static scanner, supply-chain verifier and trust manager for Agent Skills."""

from __future__ import annotations

__version__ = "0.1.0"

from .findings import Confidence, DetectorId, Finding, Phase, ScanReport, Severity  # noqa: E402
from .model import SkillPackage, load_package  # noqa: E402
from .policy import PolicyConfig, load_policy  # noqa: E402
from .report import render_report  # noqa: E402
from .scanner import scan_package  # noqa: E402

__all__ = [
    "Confidence", "DetectorId", "Finding", "Phase", "ScanReport", "Severity",
    "SkillPackage", "load_package", "PolicyConfig", "load_policy", "render_report", "scan_package",
]
