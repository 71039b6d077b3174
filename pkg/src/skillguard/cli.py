"""Command-line entry point.

Exit codes: 0 when no finding reaches the fail threshold, 1 when one does,
2 for usage and I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .capabilities import MalformedManifest, generate_policy, manifest_for
from .deps import extract_dependencies
from .findings import ScanReport, exit_code, sort_findings
from .model import SkillError, load_package
from .monitor import (Watchlist, baseline, check, default_baseline_path, parse_snapshot, serialize_snapshot)
from .policy import PolicyConfig, PolicyError, load_policy
from .registry import RegistrySource, parse_fixture, source_from_policy, verify_all
from .report import render_report
from .scanner import publisher_of, scan_package
from .trust import (LockfileError, Modified, Trusted, approve, consent_delta, default_lockfile_path,
                    load_lockfile, save_lockfile, verify_tree)
from .typosquat import IndexFormatError, check_name, check_shadowing, load_index

USAGE_ERROR = 2


class UsageError(Exception):
    pass


# ── argument parsing ─────────────────────────────────────────────────────────


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--policy", metavar="FILE", default=default, help="policy JSON file")
    parser.add_argument("--format", choices=("json", "text"), default=argparse.SUPPRESS if suppress else "text",
                        help="report format (default text)")
    parser.add_argument("--offline", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="skip every network-dependent check")
    parser.add_argument("--lockfile", metavar="PATH", default=default, help="trust lockfile path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skillguard", description="Security scanner for Agent Skill packages.")
    parser.add_argument("--version", action="version", version=f"skillguard {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("scan", parents=[common], help="run the full detector suite on a skill directory")
    p.add_argument("dir")
    p.add_argument("--index", metavar="FILE", help="JSONL index of known skills (enables T1.1)")
    p.add_argument("--registry-fixture", metavar="FILE", help="offline registry name list (enables T1.4)")
    p.add_argument("--publisher", help="publisher of the scanned skill")
    p.set_defaults(func=cmd_scan)

    trust = sub.add_parser("trust", help="version-bound approval").add_subparsers(dest="action", metavar="ACTION")
    trust.required = True
    p = trust.add_parser("approve", parents=[common], help="record the current content as approved")
    p.add_argument("dir")
    p.add_argument("--note", default="")
    p.set_defaults(func=cmd_trust_approve)
    p = trust.add_parser("verify", parents=[common], help="compare a skill with its approved record")
    p.add_argument("dir")
    p.set_defaults(func=cmd_trust_verify)

    mon = sub.add_parser("monitor", help="memory and config integrity").add_subparsers(dest="action", metavar="ACTION")
    mon.required = True
    p = mon.add_parser("baseline", parents=[common], help="snapshot watched files under a workspace")
    p.add_argument("dir")
    p.add_argument("--baseline", metavar="FILE", help="snapshot path (default beside the workspace)")
    p.set_defaults(func=cmd_monitor_baseline)
    p = mon.add_parser("check", parents=[common], help="compare a workspace with its snapshot")
    p.add_argument("dir")
    p.add_argument("--baseline", metavar="FILE")
    p.set_defaults(func=cmd_monitor_check)

    reg = sub.add_parser("registry", help="dependency existence").add_subparsers(dest="action", metavar="ACTION")
    reg.required = True
    p = reg.add_parser("check", parents=[common], help="check every declared dependency exists")
    p.add_argument("dir")
    p.add_argument("--registry-fixture", metavar="FILE")
    p.set_defaults(func=cmd_registry_check)

    sq = sub.add_parser("squat", help="name confusability").add_subparsers(dest="action", metavar="ACTION")
    sq.required = True
    p = sq.add_parser("check", parents=[common], help="compare the skill name with an index")
    p.add_argument("dir")
    p.add_argument("--index", metavar="FILE", required=True)
    p.add_argument("--publisher")
    p.set_defaults(func=cmd_squat_check)

    pol = sub.add_parser("policy", help="policy inspection").add_subparsers(dest="action", metavar="ACTION")
    pol.required = True
    p = pol.add_parser("show", parents=[common], help="print the effective policy")
    p.add_argument("dir", nargs="?", help="also derive the sandbox policy for this skill")
    p.set_defaults(func=cmd_policy_show)
    return parser


# ── helpers ──────────────────────────────────────────────────────────────────


def _policy(args) -> PolicyConfig:
    policy = load_policy(args.policy)
    if args.offline and not policy.offline:
        policy = policy.with_changes(offline=True)
    return policy


def _registry(args, policy: PolicyConfig) -> RegistrySource | None:
    if policy.offline:
        return None
    fixture = getattr(args, "registry_fixture", None)
    if fixture:
        return RegistrySource(mode="fixture", fixture=parse_fixture(Path(fixture).read_text(encoding="utf-8")))
    return source_from_policy(policy)


def _lockfile_path(args, root: str) -> Path:
    return Path(args.lockfile) if args.lockfile else default_lockfile_path(root)


def _emit(text: str | bytes) -> None:
    data = text if isinstance(text, bytes) else text.encode("utf-8", "backslashreplace")
    sys.stdout.buffer.write(data)
    sys.stdout.flush()


def _emit_report(report: ScanReport, args, policy: PolicyConfig) -> int:
    _emit(render_report(report, args.format).content)
    return exit_code(report.findings, policy.fail_threshold)


def _report(name: str, digest: str, findings, detectors=(), skipped=()) -> ScanReport:
    return ScanReport(name, digest, sort_findings(findings), tuple(detectors), tuple(skipped))


# ── commands ─────────────────────────────────────────────────────────────────


def cmd_scan(args) -> int:
    policy = _policy(args)
    pkg = load_package(args.dir)
    index = load_index(args.index) if args.index else None
    lock_path = _lockfile_path(args, args.dir)
    lockfile = load_lockfile(lock_path) if (args.lockfile or lock_path.exists()) else None
    report = scan_package(pkg, policy, index=index, lockfile=lockfile, registry=_registry(args, policy),
                          publisher=args.publisher)
    return _emit_report(report, args, policy)


def cmd_trust_approve(args) -> int:
    pkg = load_package(args.dir)
    try:
        caps = manifest_for(pkg)
    except MalformedManifest:
        caps = None
    path = _lockfile_path(args, args.dir)
    save_lockfile(approve(pkg, caps, args.note, load_lockfile(path)), path)
    _emit(f"approved {pkg.metadata.name} {pkg.digest.combined}\nlockfile: {path}\n")
    return 0


def cmd_trust_verify(args) -> int:
    policy = _policy(args)
    path = _lockfile_path(args, args.dir)
    status = verify_tree(args.dir, load_lockfile(path))
    if isinstance(status, Trusted):
        doc = {"status": "trusted", "name": status.record.name, "digest": status.record.combined}
        code = 0
    elif isinstance(status, Modified):
        d = status.diff
        doc = {"status": "modified", "name": status.record.name, "added": list(d.added), "removed": list(d.removed),
               "modified": list(d.modified), "body_change_ratio": round(d.body_change_ratio, 6),
               "script_changed": d.script_changed, "decision": str(consent_delta(d, policy))}
        code = 1
    else:
        # An unapproved skill is not trusted; the gate fails closed.
        doc = {"status": "unknown", "name": None}
        code = 1
    if args.format == "json":
        _emit(json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
    else:
        lines = [f"{k}: {v}" for k, v in doc.items() if v not in (None, [], "")]
        _emit("\n".join(lines) + "\n")
    return code


def _snapshot_path(args) -> Path:
    return Path(args.baseline) if args.baseline else default_baseline_path(args.dir)


def cmd_monitor_baseline(args) -> int:
    policy = _policy(args)
    if not Path(args.dir).is_dir():
        raise UsageError(f"not a directory: {args.dir}")
    snap = baseline(args.dir, Watchlist.from_policy(policy))
    path = _snapshot_path(args)
    path.write_text(serialize_snapshot(snap), encoding="utf-8")
    _emit(f"baseline of {len(snap.entries)} watched paths written to {path}\n")
    return 0


def cmd_monitor_check(args) -> int:
    policy = _policy(args)
    path = _snapshot_path(args)
    snap = parse_snapshot(path.read_text(encoding="utf-8"))
    findings = check(args.dir, snap, Watchlist.from_policy(policy))
    return _emit_report(_report(Path(args.dir).resolve().name, "", findings), args, policy)


def cmd_registry_check(args) -> int:
    from .findings import DetectorId

    policy = _policy(args)
    pkg = load_package(args.dir)
    source = _registry(args, policy)
    if source is None:
        why = "offline" if policy.offline else "no registry configured"
        report = _report(pkg.metadata.name, pkg.digest.combined, [], [DetectorId.T1_4], [(DetectorId.T1_4, why)])
        return _emit_report(report, args, policy)
    results = verify_all(extract_dependencies(pkg), source)
    findings = [f for _, f in results if f is not None]
    return _emit_report(_report(pkg.metadata.name, pkg.digest.combined, findings, [DetectorId.T1_4]), args, policy)


def cmd_squat_check(args) -> int:
    from .findings import DetectorId
    from .scanner import _value_span

    policy = _policy(args)
    pkg = load_package(args.dir)
    index = load_index(args.index)
    publisher = args.publisher if args.publisher is not None else publisher_of(pkg)
    span, text = _value_span(pkg, "name")
    findings = [f for _, f in check_name(pkg.metadata, publisher, index, policy, span, text)]
    dspan, dtext = _value_span(pkg, "description")
    findings += check_shadowing(pkg.metadata, publisher, index, policy, span=dspan, evidence=dtext)
    return _emit_report(_report(pkg.metadata.name, pkg.digest.combined, findings, [DetectorId.T1_1]), args, policy)


def cmd_policy_show(args) -> int:
    policy = _policy(args)
    doc = policy.to_dict()
    if args.dir:
        pkg = load_package(args.dir)
        sandbox = generate_policy(manifest_for(pkg), policy)
        doc = {"policy": doc, "sandbox": sandbox.to_dict(), "warnings": list(sandbox.warnings)}
    _emit(json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n")
    return 0


# ── dispatch ─────────────────────────────────────────────────────────────────


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage to stderr
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    try:
        return args.func(args)
    except (SkillError, PolicyError, LockfileError, IndexFormatError, UsageError, OSError, ValueError) as exc:
        print(f"skillguard: error: {exc}", file=sys.stderr)
        return USAGE_ERROR


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
