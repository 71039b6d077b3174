"""Scan orchestration: run every enabled detector and build a ScanReport."""

from __future__ import annotations

import posixpath
from dataclasses import replace
from typing import Callable

from . import detectors as det
from .capabilities import MalformedManifest, check_scope, malformed_manifest_finding, manifest_for
from .deps import dependency_findings, extract_dependencies
from .findings import (Confidence, DetectorId, Finding, ScanReport, Severity, make_finding, sort_findings)
from .model import SKILL_FILE, SkillPackage, SourceSpan
from .monitor import Watchlist
from .policy import PolicyConfig
from .registry import RegistrySource, verify_all
from .trust import Modified, TrustLockfile, verify
from .typosquat import SkillIndex, check_name, check_shadowing

T = DetectorId

GROUPS: dict[str, frozenset[DetectorId]] = {
    "injection": frozenset({T.T3_1, T.T3_2}),
    "execution": frozenset({T.T4_1, T.T4_3}),
    "exfiltration": frozenset({T.T5_1, T.T5_2, T.T5_3}),
    "persistence": frozenset({T.T6_1, T.T6_2}),
    "propagation": frozenset({T.T7_1}),
    "consent": frozenset({T.T2_1}),
    "dependencies": frozenset({T.T4_2}),
    "registry": frozenset({T.T1_4}),
    "typosquat": frozenset({T.T1_1}),
    "trust": frozenset({T.T2_2}),
}


def publisher_of(pkg: SkillPackage) -> str | None:
    return pkg.metadata.extra("publisher") or pkg.metadata.extra("author")


def _value_span(pkg: SkillPackage, key: str) -> tuple[SourceSpan, str]:
    span = pkg.frontmatter_spans.get(key) or SourceSpan(SKILL_FILE, 1, 1, 0, 0)
    return span, pkg.skill_md[span.byte_start:span.byte_end].decode("utf-8", "surrogateescape")


def _failure(detector: DetectorId, group: str, exc: Exception) -> Finding:
    return make_finding(detector, Severity.INFO, Confidence.HEURISTIC, SourceSpan(SKILL_FILE, 1, 1, 0, 0), "",
                        f"{group} detector failed internally: {type(exc).__name__}: {exc}")


def nested_skill_findings(pkg: SkillPackage) -> list[Finding]:
    out = []
    for f in pkg.supplementary:
        if posixpath.basename(f.path) == SKILL_FILE:
            out.append(make_finding(T.T3_1, Severity.INFO, Confidence.HEURISTIC, SourceSpan(f.path, 1, 1, 0, 0), "",
                                    "nested SKILL.md is loaded as a supplementary file; its instructions "
                                    "reach the agent only through this skill"))
    return out


def scan_package(pkg: SkillPackage, policy: PolicyConfig | None = None, index: SkillIndex | None = None,
                 lockfile: TrustLockfile | None = None, registry: RegistrySource | None = None,
                 publisher: str | None = None) -> ScanReport:
    """Run the detector suite.  Detectors missing their optional input are reported as skipped."""
    policy = policy or PolicyConfig()
    enabled = policy.enabled_detectors
    engine = det.engine_for(tuple(policy.memory_files), tuple(policy.config_globs),
                            tuple(policy.base_url_keys), tuple(policy.credential_paths))
    watch = Watchlist.from_policy(policy)
    sources = det.sources_for(pkg)
    bundled = [det.doc_source(f.path, f.content) for f in pkg.supplementary
               if watch.is_config(f.path) and det.is_text(f.content)]
    publisher = publisher if publisher is not None else publisher_of(pkg)

    skipped: list[tuple[DetectorId, str]] = []
    if index is None:
        skipped.append((T.T1_1, "no skill index supplied"))
    if lockfile is None:
        skipped.append((T.T2_2, "no trust lockfile supplied"))
    if policy.offline:
        skipped.append((T.T1_4, "offline"))
    elif registry is None:
        skipped.append((T.T1_4, "no registry configured"))
    skipped = [(d, why) for d, why in skipped if d in enabled]
    skipped_ids = {d for d, _ in skipped}

    deps_cache: list = []

    def deps():
        if not deps_cache:
            deps_cache.append(extract_dependencies(pkg))
        return deps_cache[0]

    def consent() -> list[Finding]:
        out = []
        try:
            manifest = manifest_for(pkg)
        except MalformedManifest as exc:
            manifest = None
            out.append(malformed_manifest_finding(pkg, exc))
        out += det.detect_consent_gap(pkg.metadata, sources, manifest, engine)
        if manifest is not None:
            out += check_scope(pkg, manifest, engine, deps())
        return out

    def registry_check() -> list[Finding]:
        return [f for _, f in verify_all(deps(), registry) if f is not None]

    def typosquat() -> list[Finding]:
        span, text = _value_span(pkg, "name")
        out = [f for _, f in check_name(pkg.metadata, publisher, index, policy, span, text)]
        dspan, dtext = _value_span(pkg, "description")
        out += check_shadowing(pkg.metadata, publisher, index, policy, span=dspan, evidence=dtext)
        return out

    def trust() -> list[Finding]:
        status = verify(pkg, lockfile)
        return [status.finding] if isinstance(status, Modified) else []

    runners: list[tuple[str, Callable[[], list[Finding]]]] = [
        ("injection", lambda: det.detect_injection(sources, engine) + nested_skill_findings(pkg)),
        ("execution", lambda: det.detect_execution_risks(sources, engine)),
        ("exfiltration", lambda: det.detect_exfiltration(sources + bundled, engine)),
        ("persistence", lambda: det.detect_persistence(sources, engine, bundled)),
        ("propagation", lambda: det.detect_propagation(sources, engine)),
        ("consent", consent),
        ("dependencies", lambda: dependency_findings(pkg, deps())),
        ("registry", registry_check),
        ("typosquat", typosquat),
        ("trust", trust),
    ]

    findings: list[Finding] = []
    for group, run in runners:
        ids = GROUPS[group]
        active = (ids & enabled) - skipped_ids
        if not active:
            continue
        try:
            produced = run()
        except Exception as exc:  # a broken detector must not sink the scan
            produced = [_failure(min(active, key=lambda d: d.value), group, exc)]
        findings.extend(f for f in produced if f.detector in enabled and f.detector not in skipped_ids)

    findings = [_override(f, policy) for f in findings]
    return ScanReport(
        package_name=pkg.metadata.name,
        digest=pkg.digest.combined,
        findings=sort_findings(findings),
        detectors_run=tuple(sorted(enabled, key=lambda d: d.value)),
        skipped=tuple(sorted(skipped, key=lambda e: e[0].value)),
    )


def _override(f: Finding, policy: PolicyConfig) -> Finding:
    sev = policy.override_for(f.detector)
    return f if sev is None else replace(f, severity=sev)
