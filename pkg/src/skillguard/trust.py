"""Version-bound trust: a lockfile that ties approval to exact package content.

Each approved Skill gets a record holding its combined digest, every
per-file digest and the approved instructions body.  ``verify`` compares a
package against its record; ``consent_delta`` decides whether a change can
be accepted without asking the user again.

Hard rules come first and no policy value can relax them: a modified
script, an added file or a removed file always requires re-approval.  Only
then is the body change ratio compared against the configured threshold.
"""

from __future__ import annotations

import json
import os
import re
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .findings import Confidence, DetectorId, Finding, Severity, make_finding
from .model import SKILL_FILE, ContentDigest, SkillPackage, SourceSpan, classify, digest_files, read_tree
from .policy import PolicyConfig

LOCKFILE_NAME = "skillguard.lock"
LOCKFILE_VERSION = 1


class LockfileError(ValueError):
    pass


# ── records and lockfile ─────────────────────────────────────────────────────


@dataclass(frozen=True)
class TrustRecord:
    name: str
    combined: str
    files: tuple[tuple[str, str], ...]
    approved_at: int
    capabilities: tuple[str, ...] = ()
    note: str = ""
    body: str = ""  # approved instructions body, needed for the delta ratio

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "combined": self.combined,
            "files": [{"path": p, "sha256": h} for p, h in sorted(self.files, key=lambda e: e[0].encode("utf-8"))],
            "approved_at": self.approved_at,
            "capabilities": list(self.capabilities),
            "note": self.note,
            "body": self.body,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrustRecord":
        try:
            files = tuple(sorted(((str(f["path"]), str(f["sha256"])) for f in d["files"]),
                                 key=lambda e: e[0].encode("utf-8")))
            approved = d["approved_at"]
            if isinstance(approved, bool) or not isinstance(approved, int):
                raise LockfileError("approved_at must be an integer")
            return cls(str(d["name"]), str(d["combined"]), files, approved,
                       tuple(str(c) for c in d.get("capabilities", [])), str(d.get("note", "")),
                       str(d.get("body", "")))
        except (KeyError, TypeError) as exc:
            raise LockfileError(f"malformed trust record: {exc}") from None


@dataclass(frozen=True)
class TrustLockfile:
    records: tuple[TrustRecord, ...] = ()
    version: int = LOCKFILE_VERSION

    def __post_init__(self) -> None:
        names = [r.name for r in self.records]
        if len(names) != len(set(names)):
            raise LockfileError("duplicate skill name in lockfile")
        object.__setattr__(self, "records", tuple(sorted(self.records, key=lambda r: r.name.encode("utf-8"))))

    def get(self, name: str) -> TrustRecord | None:
        for r in self.records:
            if r.name == name:
                return r
        return None

    def with_record(self, record: TrustRecord) -> "TrustLockfile":
        others = tuple(r for r in self.records if r.name != record.name)
        return TrustLockfile(others + (record,), self.version)


def serialize(lockfile: TrustLockfile) -> str:
    doc = {"version": lockfile.version, "skills": [r.to_dict() for r in lockfile.records]}
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def parse_lockfile(text: str) -> TrustLockfile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise LockfileError(f"lockfile is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("version") != LOCKFILE_VERSION:
        raise LockfileError(f"unsupported lockfile version: {doc.get('version') if isinstance(doc, dict) else doc!r}")
    skills = doc.get("skills", [])
    if not isinstance(skills, list):
        raise LockfileError("'skills' must be a list")
    return TrustLockfile(tuple(TrustRecord.from_dict(s) for s in skills), LOCKFILE_VERSION)


def default_lockfile_path(root: str | os.PathLike) -> Path:
    """Beside the skill root, so writing it never changes the package digest."""
    return Path(root).resolve().parent / LOCKFILE_NAME


def load_lockfile(path: str | os.PathLike) -> TrustLockfile:
    p = Path(path)
    if not p.exists():
        return TrustLockfile()
    return parse_lockfile(p.read_text(encoding="utf-8"))


def save_lockfile(lockfile: TrustLockfile, path: str | os.PathLike) -> None:
    p = Path(path)
    tmp = p.with_name(p.name + ".tmp")
    tmp.write_text(serialize(lockfile), encoding="utf-8")
    os.replace(tmp, p)


def approve(pkg: SkillPackage, caps=None, note: str = "", lockfile: TrustLockfile | None = None,
            now: int | None = None) -> TrustLockfile:
    """Insert or replace the record for this package."""
    lockfile = lockfile or TrustLockfile()
    record = TrustRecord(
        name=pkg.metadata.name,
        combined=pkg.digest.combined,
        files=pkg.digest.per_file,
        approved_at=int(time.time()) if now is None else int(now),
        capabilities=tuple(caps.capability_ids()) if caps is not None else (),
        note=note,
        body=pkg.body,
    )
    return lockfile.with_record(record)


# ── diffs ────────────────────────────────────────────────────────────────────


def tokens(text: str) -> list[str]:
    return text.split()


def body_change_ratio(old: str, new: str) -> float:
    """(tokens added + tokens removed) / max(1, tokens in the approved body), capped at 1."""
    a, b = Counter(tokens(old)), Counter(tokens(new))
    changed = sum((a - b).values()) + sum((b - a).values())
    return min(1.0, changed / max(1, sum(a.values())))


@dataclass(frozen=True)
class DiffReport:
    added: tuple[str, ...] = ()
    removed: tuple[str, ...] = ()
    modified: tuple[str, ...] = ()
    body_change_ratio: float = 0.0
    script_changed: bool = False

    @property
    def empty(self) -> bool:
        return not (self.added or self.removed or self.modified)


def diff_files(record: TrustRecord, digest: ContentDigest, body: str,
               extensions: dict[str, str] | None = None) -> DiffReport:
    old = dict(record.files)
    new = dict(digest.per_file)
    key = lambda p: p.encode("utf-8")  # noqa: E731
    added = tuple(sorted(set(new) - set(old), key=key))
    removed = tuple(sorted(set(old) - set(new), key=key))
    modified = tuple(sorted((p for p in set(old) & set(new) if old[p] != new[p]), key=key))
    script_changed = any(classify(p, extensions) is not None for p in modified)
    return DiffReport(added, removed, modified, body_change_ratio(record.body, body), script_changed)


@dataclass(frozen=True)
class AutoAccept:
    diff: DiffReport

    def __str__(self) -> str:
        return "auto-accept"


@dataclass(frozen=True)
class RequireReapproval:
    reasons: tuple[str, ...]

    def __str__(self) -> str:
        return "re-approval required: " + "; ".join(self.reasons)


ConsentDecision = AutoAccept | RequireReapproval


def consent_delta(diff: DiffReport, policy: PolicyConfig | None = None) -> ConsentDecision:
    threshold = (policy or PolicyConfig()).body_delta_threshold
    reasons = []
    if diff.added:
        reasons.append("added file")
    if diff.removed:
        reasons.append("removed file")
    if diff.script_changed:
        reasons.append("script changed")
    if diff.body_change_ratio > threshold:
        reasons.append(f"body delta {diff.body_change_ratio:.2f} > {threshold:.2f}")
    return RequireReapproval(tuple(reasons)) if reasons else AutoAccept(diff)


# ── verification ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Trusted:
    record: TrustRecord

    def __str__(self) -> str:
        return "trusted"


@dataclass(frozen=True)
class Modified:
    record: TrustRecord
    diff: DiffReport
    finding: Finding = field(compare=False)

    def __str__(self) -> str:
        return "modified"


@dataclass(frozen=True)
class Unknown:
    def __str__(self) -> str:
        return "unknown (no trust record)"


TrustStatus = Trusted | Modified | Unknown

_NAME_LINE = re.compile(rb"^name\s*:\s*['\"]?([^'\"\r\n#]+?)['\"]?\s*$", re.MULTILINE)


def _tolerant_name(skill_md: bytes) -> str | None:
    m = _NAME_LINE.search(skill_md)
    return m.group(1).decode("utf-8", "replace").strip() if m else None


def _tolerant_body(skill_md: bytes) -> str:
    """Body text even when the frontmatter no longer parses."""
    text = skill_md.decode("utf-8", "replace")
    lines = text.split("\n")
    if lines and lines[0].lstrip("﻿").rstrip() == "---":
        for i in range(1, len(lines)):
            if lines[i].rstrip() == "---":
                return "\n".join(lines[i + 1:])
    return text


def _find_record(lockfile: TrustLockfile, names) -> TrustRecord | None:
    for n in names:
        if n:
            rec = lockfile.get(n)
            if rec is not None:
                return rec
    return None


def _match_by_content(lockfile: TrustLockfile, digest: ContentDigest) -> TrustRecord | None:
    """Record this tree most plausibly came from when its name no longer resolves.

    A tampered name line must not turn Modified into Unknown.  Prefer the one
    record with the same file list; otherwise the one sharing the most
    unchanged files.  Ties resolve to nothing.
    """
    paths = {p for p, _ in digest.per_file}
    same = [r for r in lockfile.records if {p for p, _ in r.files} == paths]
    if len(same) == 1:
        return same[0]
    current = set(digest.per_file)
    scored = sorted(((len(current & set(r.files)), r) for r in lockfile.records), key=lambda e: -e[0])
    if scored and scored[0][0] > 0 and (len(scored) == 1 or scored[1][0] < scored[0][0]):
        return scored[0][1]
    return None


def _modified(record: TrustRecord, diff: DiffReport) -> Modified:
    changed = diff.modified + diff.added
    path = changed[0] if changed else SKILL_FILE
    parts = [f"{label} {', '.join(paths)}" for label, paths in
             (("modified", diff.modified), ("added", diff.added), ("removed", diff.removed)) if paths]
    msg = (f"content of '{record.name}' changed since approval ({'; '.join(parts)}); "
           f"body delta {diff.body_change_ratio:.2f}")
    finding = make_finding(DetectorId.T2_2, Severity.HIGH, Confidence.CONFIRMED,
                           SourceSpan(path, 1, 1, 0, 0), "", msg)
    return Modified(record, diff, finding)


def verify(pkg: SkillPackage, lockfile: TrustLockfile) -> TrustStatus:
    record = _find_record(lockfile, (pkg.metadata.name, pkg.root.name))
    if record is None:
        return Unknown()
    if record.combined == pkg.digest.combined:
        return Trusted(record)
    return _modified(record, diff_files(record, pkg.digest, pkg.body))


def verify_tree(root: str | os.PathLike, lockfile: TrustLockfile) -> TrustStatus:
    """Verify a directory without requiring SKILL.md to parse.

    A tampered package may no longer be loadable, which must still count as
    Modified rather than as an error.
    """
    root = Path(root)
    files = read_tree(root)
    skill_md = files.get(SKILL_FILE, b"")
    digest = digest_files(files)
    record = _find_record(lockfile, (_tolerant_name(skill_md), root.resolve().name))
    if record is None:
        record = _match_by_content(lockfile, digest)
    if record is None:
        return Unknown()
    if record.combined == digest.combined:
        return Trusted(record)
    return _modified(record, diff_files(record, digest, _tolerant_body(skill_md)))

