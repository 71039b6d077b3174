"""Integrity monitoring of agent memory and configuration files.

``baseline`` hashes every watched file under a directory and, for JSON
config documents, records a key-level fingerprint.  ``check`` re-reads the
tree and reports what changed.  Watched files that do not exist yet are
recorded as absent so that their later creation is caught too.
"""

from __future__ import annotations

import hashlib
import json
import os
import posixpath
import time
from dataclasses import dataclass, field
from pathlib import Path

from .capabilities import glob_match
from .findings import Confidence, DetectorId, Finding, Severity, make_finding
from .model import SourceSpan
from .rules import DEFAULT_CONFIG_GLOBS, DEFAULT_MEMORY_FILES

BASELINE_NAME = "skillguard.baseline.json"
SNAPSHOT_VERSION = 1

DEFAULT_SENSITIVE_KEYS = ("ANTHROPIC_BASE_URL",)
SENSITIVE_SUFFIX = "_BASE_URL"
DEFAULT_HOOK_KEYS = ("hooks",)
AUTO_APPROVE_KEYS = frozenset({"enableAllProjectMcpServers", "enabledMcpjsonServers", "autoApprove",
                               "auto_approve", "alwaysAllow", "dangerouslySkipPermissions"})
SKIP_DIRS = frozenset({".git", "node_modules", "__pycache__"})

PRESENT, ABSENT, UNREADABLE = "present", "absent", "unreadable"


# ── watchlist ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Watchlist:
    memory_files: frozenset[str] = frozenset(DEFAULT_MEMORY_FILES)
    config_globs: frozenset[str] = frozenset(DEFAULT_CONFIG_GLOBS)
    sensitive_keys: frozenset[str] = frozenset(DEFAULT_SENSITIVE_KEYS)
    hook_keys: frozenset[str] = frozenset(DEFAULT_HOOK_KEYS)

    def merged(self, memory_files=(), config_globs=(), sensitive_keys=(), hook_keys=()) -> "Watchlist":
        """Extend the lists.  Merging is additive: defaults can never be removed."""
        return Watchlist(self.memory_files | set(memory_files), self.config_globs | set(config_globs),
                         self.sensitive_keys | set(sensitive_keys), self.hook_keys | set(hook_keys))

    @classmethod
    def from_policy(cls, policy) -> "Watchlist":
        return cls().merged(policy.memory_files, policy.config_globs,
                            tuple(policy.sensitive_keys) + tuple(policy.base_url_keys))

    def is_sensitive(self, key: str) -> bool:
        return key in self.sensitive_keys or key.endswith(SENSITIVE_SUFFIX)

    def is_memory(self, path: str) -> bool:
        return posixpath.basename(path) in self.memory_files

    def is_config(self, path: str) -> bool:
        parts = path.split("/")
        for g in self.config_globs:
            if "/" not in g.rstrip("/"):
                if glob_match(g, parts[-1]):
                    return True
                continue
            # a glob with a directory part may match at any depth
            if any(glob_match(g, "/".join(parts[k:])) for k in range(len(parts))):
                return True
        return False

    def watches(self, path: str) -> bool:
        return self.is_memory(path) or self.is_config(path)

    def literal_paths(self) -> list[str]:
        """Root-level files to record as absent when missing."""
        out = set(self.memory_files)
        out.update(g for g in self.config_globs if not any(c in g for c in "*?[") and "/" not in g)
        return sorted(out, key=lambda p: p.encode("utf-8"))


# ── snapshot ─────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Entry:
    path: str
    status: str
    sha256: str = ""
    size: int = 0


@dataclass(frozen=True)
class ConfigFingerprint:
    keys: tuple[str, ...] = ()
    sensitive: tuple[tuple[str, str], ...] = ()  # (dotted path, canonical JSON value)
    hooks: tuple[str, ...] = ()  # canonical JSON of each hook entry
    auto_approve: tuple[tuple[str, str], ...] = ()
    parsed: bool = True

    def to_dict(self) -> dict:
        return {"keys": list(self.keys), "sensitive": dict(self.sensitive), "hooks": list(self.hooks),
                "auto_approve": dict(self.auto_approve), "parsed": self.parsed}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfigFingerprint":
        return cls(tuple(d.get("keys", [])), tuple(sorted(d.get("sensitive", {}).items())),
                   tuple(d.get("hooks", [])), tuple(sorted(d.get("auto_approve", {}).items())),
                   bool(d.get("parsed", True)))


@dataclass(frozen=True)
class BaselineSnapshot:
    entries: tuple[Entry, ...]
    configs: tuple[tuple[str, ConfigFingerprint], ...] = ()
    taken_at: int = field(default=0, compare=False)

    def entry(self, path: str) -> Entry | None:
        for e in self.entries:
            if e.path == path:
                return e
        return None

    def fingerprint(self, path: str) -> ConfigFingerprint | None:
        for p, fp in self.configs:
            if p == path:
                return fp
        return None

    def to_dict(self) -> dict:
        return {
            "version": SNAPSHOT_VERSION,
            "taken_at": self.taken_at,
            "entries": [{"path": e.path, "status": e.status, "sha256": e.sha256, "size": e.size}
                        for e in self.entries],
            "configs": {p: fp.to_dict() for p, fp in self.configs},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineSnapshot":
        if d.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {d.get('version')!r}")
        entries = tuple(Entry(e["path"], e["status"], e.get("sha256", ""), int(e.get("size", 0)))
                        for e in d["entries"])
        configs = tuple(sorted(((p, ConfigFingerprint.from_dict(fp)) for p, fp in d.get("configs", {}).items()),
                               key=lambda e: e[0].encode("utf-8")))
        return cls(entries, configs, int(d.get("taken_at", 0)))


def serialize_snapshot(snap: BaselineSnapshot) -> str:
    return json.dumps(snap.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def parse_snapshot(text: str) -> BaselineSnapshot:
    return BaselineSnapshot.from_dict(json.loads(text))


def _walk(root: Path) -> list[str]:
    out = []
    for dirpath, dirnames, filenames in os.walk(root, followlinks=False):
        dirnames[:] = sorted(d for d in dirnames if d not in SKIP_DIRS)
        rel_dir = os.path.relpath(dirpath, root).replace(os.sep, "/")
        for name in filenames:
            full = os.path.join(dirpath, name)
            if os.path.islink(full):
                continue
            out.append(name if rel_dir == "." else f"{rel_dir}/{name}")
    return out


def _canon(value) -> str:
    return json.dumps(value, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def fingerprint(data: bytes, watch: Watchlist) -> ConfigFingerprint:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, ValueError):
        return ConfigFingerprint(parsed=False)
    if not isinstance(doc, dict):
        return ConfigFingerprint(parsed=False)
    sensitive, hooks, auto = [], [], []

    def visit(node, path: str) -> None:
        if isinstance(node, dict):
            for k, v in node.items():
                dotted = f"{path}.{k}" if path else str(k)
                if watch.is_sensitive(str(k)):
                    sensitive.append((dotted, _canon(v)))
                if k in AUTO_APPROVE_KEYS:
                    auto.append((dotted, _canon(v)))
                if k in watch.hook_keys:
                    hooks.extend(_hook_entries(dotted, v))
                visit(v, dotted)
        elif isinstance(node, list):
            for i, v in enumerate(node):
                visit(v, f"{path}[{i}]")

    visit(doc, "")
    return ConfigFingerprint(tuple(sorted(doc)), tuple(sorted(sensitive)), tuple(sorted(set(hooks))),
                             tuple(sorted(auto)))


def _hook_entries(path: str, value) -> list[str]:
    if isinstance(value, dict):
        out = []
        for event, items in value.items():
            if isinstance(items, list):
                out.extend(_canon({"at": path, "event": event, "entry": it}) for it in items)
            else:
                out.append(_canon({"at": path, "event": event, "entry": items}))
        return out
    if isinstance(value, list):
        return [_canon({"at": path, "entry": it}) for it in value]
    return [_canon({"at": path, "entry": value})]


def baseline(root: str | os.PathLike, watch: Watchlist | None = None, now: int | None = None) -> BaselineSnapshot:
    watch = watch or Watchlist()
    root = Path(root)
    paths = {p for p in _walk(root) if watch.watches(p)} | set(watch.literal_paths())
    entries, configs = [], []
    for rel in sorted(paths, key=lambda p: p.encode("utf-8")):
        full = root / rel
        if not full.is_file() or full.is_symlink():
            entries.append(Entry(rel, ABSENT))
            continue
        try:
            data = full.read_bytes()
        except OSError:
            entries.append(Entry(rel, UNREADABLE))
            continue
        entries.append(Entry(rel, PRESENT, hashlib.sha256(data).hexdigest(), len(data)))
        if watch.is_config(rel):
            configs.append((rel, fingerprint(data, watch)))
    return BaselineSnapshot(tuple(entries), tuple(configs), int(time.time()) if now is None else now)


# ── check ────────────────────────────────────────────────────────────────────


def _finding(detector: DetectorId, severity: Severity, path: str, evidence: str, message: str,
             confidence: Confidence = Confidence.CONFIRMED) -> Finding:
    return make_finding(detector, severity, confidence, SourceSpan(path, 1, 1, 0, 0), evidence, message)


def _config_escalations(path: str, old: ConfigFingerprint | None, new: ConfigFingerprint) -> list[Finding]:
    out = []
    if not new.parsed:
        return out
    old = old if old is not None and old.parsed else ConfigFingerprint()
    for entry in sorted(set(new.hooks) - set(old.hooks)):
        out.append(_finding(DetectorId.T6_2, Severity.CRITICAL, path, entry,
                            f"new hook entry in {path}; hooks run shell commands without a trust prompt"))
    old_sens, new_sens = dict(old.sensitive), dict(new.sensitive)
    for key in sorted(set(old_sens) | set(new_sens)):
        before, after = old_sens.get(key, "unset"), new_sens.get(key, "unset")
        if before != after:
            out.append(_finding(DetectorId.T6_2, Severity.CRITICAL, path, f"{key}: {before} -> {after}",
                                f"sensitive key {key} changed in {path}; agent traffic may be redirected"))
    old_auto = dict(old.auto_approve)
    for key, value in new.auto_approve:
        if _truthy(value) and not _truthy(old_auto.get(key, "false")):
            out.append(_finding(DetectorId.T6_2, Severity.HIGH, path, f"{key}: {old_auto.get(key, 'unset')} -> {value}",
                                f"auto-approve flag {key} enabled in {path}"))
    return out


def _truthy(canon: str) -> bool:
    try:
        return bool(json.loads(canon))
    except ValueError:
        return False


def check(root: str | os.PathLike, snapshot: BaselineSnapshot, watch: Watchlist | None = None) -> list[Finding]:
    """Findings for every watched file that differs from the snapshot."""
    watch = watch or Watchlist()
    current = baseline(root, watch, now=0)
    old_entries = {e.path: e for e in snapshot.entries}
    new_entries = {e.path: e for e in current.entries}
    findings = []
    for path in sorted(set(old_entries) | set(new_entries), key=lambda p: p.encode("utf-8")):
        old = old_entries.get(path, Entry(path, ABSENT))
        new = new_entries.get(path, Entry(path, ABSENT))
        if new.status == UNREADABLE:
            findings.append(_finding(DetectorId.T6_1 if watch.is_memory(path) else DetectorId.T6_2,
                                     Severity.INFO, path, "", f"watched file {path} could not be read",
                                     Confidence.HEURISTIC))
            continue
        if (old.status, old.sha256) == (new.status, new.sha256):
            continue
        if old.status != PRESENT and new.status == PRESENT:
            change = "created"
        elif new.status != PRESENT:
            change = "deleted"
        else:
            change = "modified"
        evidence = f"sha256 {old.sha256 or old.status} -> {new.sha256 or new.status}"
        if watch.is_memory(path):
            sev = Severity.MEDIUM if change == "deleted" else Severity.HIGH
            findings.append(_finding(DetectorId.T6_1, sev, path, evidence, f"agent memory file {path} was {change}"))
        if watch.is_config(path):
            new_fp = current.fingerprint(path)
            note = "" if new_fp is None or new_fp.parsed else " (not valid JSON; compared by hash only)"
            findings.append(_finding(DetectorId.T6_2, Severity.HIGH, path, evidence,
                                     f"agent configuration {path} was {change}{note}"))
            if new_fp is not None:
                findings.extend(_config_escalations(path, snapshot.fingerprint(path), new_fp))
    return findings


def default_baseline_path(root: str | os.PathLike) -> Path:
    """Stored beside the watched directory so it is never watched itself."""
    return Path(root).resolve().parent / BASELINE_NAME
