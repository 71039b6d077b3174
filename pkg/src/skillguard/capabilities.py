"""Capability manifests and derived sandbox policies.

A Skill may declare its intended scope in a ``capabilities`` frontmatter
field, written as semicolon separated clauses::

    capabilities: read=./**; write=./out/**; net=api.example.com; exec=no; eco=python-pypi

Values inside a clause are comma separated.  The manifest is checked against
what the package actually references, and turned into a descriptive sandbox
policy document.  Nothing here enforces anything at run time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from urllib.parse import urlsplit

from .findings import Confidence, DetectorId, Finding, Severity, make_finding
from .model import SKILL_FILE, SkillError, SkillMetadata, SkillPackage, SourceSpan, TextFile
from .policy import PolicyConfig
from .rules import ActionClass, DEFAULT_CONFIG_GLOBS

MANIFEST_KEY = "capabilities"
CLAUSES = ("read", "write", "net", "exec", "eco")
ECOSYSTEM_NAMES = ("python-pypi", "node-npm", "shell-tool")

ISOLATED, SCOPED, BROAD = "Isolated", "Scoped", "Broad"
TIER_ORDER = {ISOLATED: 0, SCOPED: 1, BROAD: 2}

_HOST_RE = re.compile(r"^(?:\*|(?:\*\.)?[a-z0-9](?:[a-z0-9-]*[a-z0-9])?(?:\.[a-z0-9](?:[a-z0-9-]*[a-z0-9])?)*"
                      r"(?::\d{1,5})?)$")
_TRUE = {"yes", "true", "1", "on", "allow"}
_FALSE = {"no", "false", "0", "off", "deny"}


class MalformedManifest(SkillError):
    pass


# ── globs ────────────────────────────────────────────────────────────────────


def normalize_glob(glob: str) -> str:
    g = glob.strip().replace("\\", "/")
    while g.startswith("./"):
        g = g[2:]
    return g or "."


@lru_cache(maxsize=256)
def glob_regex(glob: str) -> re.Pattern:
    """Translate a path glob: ``**`` spans directories, ``*`` and ``?`` do not."""
    g = normalize_glob(glob)
    if g == ".":
        return re.compile(r"\A(?:\.)?\Z")
    out, i = [], 0
    while i < len(g):
        if g.startswith("**/", i):
            out.append(r"(?:[^/]*/)*")
            i += 3
        elif g.startswith("**", i):
            out.append(r".*")
            i += 2
        elif g[i] == "*":
            out.append(r"[^/]*")
            i += 1
        elif g[i] == "?":
            out.append(r"[^/]")
            i += 1
        else:
            out.append(re.escape(g[i]))
            i += 1
    return re.compile(r"\A" + "".join(out) + r"\Z")


def glob_match(glob: str, path: str) -> bool:
    p = path.replace("\\", "/")
    while p.startswith("./"):
        p = p[2:]
    return bool(glob_regex(glob).match(p))


def _check_glob(glob: str, span: SourceSpan | None) -> str:
    g = glob.strip()
    if not g:
        raise MalformedManifest("empty path glob in capabilities", span)
    if g.startswith(("/", "~", "\\")) or re.match(r"^[A-Za-z]:", g):
        raise MalformedManifest(f"capability globs must be relative, got {g!r}", span)
    if ".." in g.replace("\\", "/").split("/"):
        raise MalformedManifest(f"capability globs may not contain '..', got {g!r}", span)
    return g


# ── manifest ─────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class CapabilityManifest:
    read: tuple[str, ...] = ()
    write: tuple[str, ...] = ()
    network: tuple[str, ...] = ()  # allowlisted hostnames, "*" for any
    subprocess: bool = False
    ecosystems: frozenset[str] | None = None  # None: no restriction declared

    @property
    def is_empty(self) -> bool:
        return not (self.read or self.write or self.network or self.subprocess or self.ecosystems)

    def allows_host(self, host: str) -> bool:
        host = host.lower()
        for h in self.network:
            if h == "*" or h == host:
                return True
            if h.startswith("*.") and host.endswith(h[1:]):
                return True
            if ":" in h and h.split(":")[0] == host:
                return True
        return False

    def covers_path(self, path: str) -> bool:
        return any(glob_match(g, path) for g in self.read + self.write)

    def covers_config_write(self, config_globs=DEFAULT_CONFIG_GLOBS) -> bool:
        samples = []
        for g in config_globs:
            g = normalize_glob(g)
            samples.append(g.replace("**", "settings.json").replace("*", "x"))
        return any(glob_match(w, s) for w in self.write for s in samples)

    def capability_ids(self) -> list[str]:
        """Flat, sorted capability identifiers recorded in trust records."""
        ids = [f"read:{g}" for g in self.read] + [f"write:{g}" for g in self.write]
        ids += [f"net:{h}" for h in self.network]
        if self.subprocess:
            ids.append("exec")
        ids += [f"eco:{e}" for e in sorted(self.ecosystems or ())]
        return sorted(ids)

    def to_clauses(self) -> str:
        parts = []
        if self.read:
            parts.append("read=" + ",".join(self.read))
        if self.write:
            parts.append("write=" + ",".join(self.write))
        if self.network:
            parts.append("net=" + ",".join(self.network))
        if self.subprocess:
            parts.append("exec=yes")
        if self.ecosystems:
            parts.append("eco=" + ",".join(sorted(self.ecosystems)))
        return "; ".join(parts)


def parse_clauses(text: str, span: SourceSpan | None = None) -> CapabilityManifest:
    """Parse the clause string; raises MalformedManifest on any unknown or unsafe clause."""
    values: dict[str, list[str]] = {k: [] for k in CLAUSES}
    for raw in text.split(";"):
        clause = raw.strip()
        if not clause:
            continue
        key, sep, value = clause.partition("=")
        key = key.strip().lower()
        if not sep or key not in CLAUSES:
            raise MalformedManifest(f"unknown capability clause {clause!r}", span)
        items = [v.strip() for v in value.split(",") if v.strip()]
        if not items:
            raise MalformedManifest(f"capability clause {key!r} has no value", span)
        values[key].extend(items)

    read = tuple(_check_glob(g, span) for g in values["read"])
    write = tuple(_check_glob(g, span) for g in values["write"])
    hosts = []
    for h in values["net"]:
        h = h.lower()
        if not _HOST_RE.match(h):
            raise MalformedManifest(f"invalid network host {h!r}", span)
        hosts.append(h)
    subprocess = False
    for v in values["exec"]:
        if v.lower() in _TRUE:
            subprocess = True
        elif v.lower() not in _FALSE:
            raise MalformedManifest(f"exec must be yes or no, got {v!r}", span)
    ecosystems = None
    if values["eco"]:
        bad = [e for e in values["eco"] if e not in ECOSYSTEM_NAMES]
        if bad:
            raise MalformedManifest(f"unknown ecosystem {bad[0]!r}", span)
        ecosystems = frozenset(values["eco"])
    return CapabilityManifest(read, write, tuple(hosts), subprocess, ecosystems)


def parse_manifest(extras, span: SourceSpan | None = None) -> CapabilityManifest | None:
    """Manifest from frontmatter extras (a mapping, pair tuple or SkillMetadata)."""
    if isinstance(extras, SkillMetadata):
        extras = extras.extras_map
    elif not isinstance(extras, dict):
        extras = dict(extras)
    if MANIFEST_KEY not in extras:
        return None
    return parse_clauses(extras[MANIFEST_KEY], span)


def manifest_for(pkg: SkillPackage) -> CapabilityManifest | None:
    return parse_manifest(pkg.metadata, pkg.frontmatter_spans.get(MANIFEST_KEY))


# ── scope check ──────────────────────────────────────────────────────────────

URL_RE = re.compile(r"https?://[^\s'\"<>)\]`]+", re.IGNORECASE)
PATH_RE = re.compile(r"(?<![\w:/.$%{}\\-])(?:~/|\.{1,2}/|/)[\w.@~+-]+(?:/[\w.@~*+-]*)*")
_SEND_RE = re.compile(r"\b(?:send|post|put|upload|transmit|submit|forward)\b", re.IGNORECASE)
_IGNORED_PATHS = re.compile(r"^/dev/(?:null|stdin|stdout|stderr|tty)$")


def _scope_sources(pkg: SkillPackage) -> list[tuple[TextFile, bool]]:
    out = [(pkg.body_view(), False)]
    for s in pkg.scripts:
        if b"\x00" not in s.content[:8192]:
            out.append((TextFile(s.path, s.content), True))
    return out


def check_scope(pkg: SkillPackage, manifest: CapabilityManifest, engine=None,
                deps=None) -> list[Finding]:
    """Findings (T2.1) for references that fall outside the declared scope."""
    from .detectors import DEFAULT_ENGINE
    from .rules import SCRIPTS

    engine = engine or DEFAULT_ENGINE
    findings: list[Finding] = []
    for tf, is_script in _scope_sources(pkg):
        for i, line in enumerate(tf.lines):
            if is_script and i == 0 and line.startswith("#!"):
                continue
            for m in URL_RE.finditer(line):
                try:
                    host = urlsplit(m.group(0)).hostname
                except ValueError:
                    host = None
                if not host or manifest.allows_host(host):
                    continue
                action = ActionClass.NETWORK_SEND if _SEND_RE.search(line) else ActionClass.NETWORK_FETCH
                findings.append(make_finding(
                    DetectorId.T2_1, Severity.HIGH, Confidence.LIKELY, tf.span(i, m.start(), m.end()),
                    m.group(0), f"undeclared network host {host} ({action.value}); not in the manifest allowlist"))
            for m in PATH_RE.finditer(line):
                path = m.group(0).rstrip(".")
                if _IGNORED_PATHS.match(path) or manifest.covers_path(path):
                    continue
                findings.append(make_finding(
                    DetectorId.T2_1, Severity.MEDIUM, Confidence.HEURISTIC, tf.span(i, m.start(), m.start() + len(path)),
                    path, f"path {path} is outside the declared read/write scope"))
        if is_script and not manifest.subprocess:
            eco = next((s.ecosystem for s in pkg.scripts if s.path == tf.path), None)
            for h in engine.scan(tf, SCRIPTS, eco, ("consent.subprocess", "consent.shell-exec")):
                findings.append(make_finding(
                    DetectorId.T2_1, Severity.HIGH, Confidence.LIKELY, tf.span(h.line, h.start, h.end), h.text,
                    f"subprocess spawn ({ActionClass.SUBPROCESS.value}) while the manifest declares exec=no"))
    if manifest.ecosystems is not None and deps:
        for d in deps:
            if d.ecosystem not in manifest.ecosystems:
                findings.append(make_finding(
                    DetectorId.T2_1, Severity.MEDIUM, Confidence.LIKELY, d.span, d.text or d.name,
                    f"dependency {d.name} uses undeclared ecosystem {d.ecosystem}"))
    return findings


def malformed_manifest_finding(pkg: SkillPackage, exc: MalformedManifest) -> Finding:
    span = exc.diagnostic.span or pkg.frontmatter_spans.get(MANIFEST_KEY) or SourceSpan(SKILL_FILE, 1, 1, 0, 0)
    evidence = pkg.skill_md[span.byte_start:span.byte_end].decode("utf-8", "surrogateescape")
    return make_finding(DetectorId.T2_1, Severity.MEDIUM, Confidence.CONFIRMED, span, evidence,
                        f"malformed capability manifest ignored: {exc}")


# ── sandbox policy ───────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Mount:
    glob: str
    mode: str  # "ro" | "rw"


@dataclass(frozen=True)
class SandboxPolicy:
    tier: str
    mounts: tuple[Mount, ...] = ()
    network_mode: str = "deny"  # "deny" | "allowlist" | "any"
    hosts: tuple[str, ...] = ()
    subprocess: bool = False
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {
            "tier": self.tier,
            "mounts": [{"glob": m.glob, "mode": m.mode} for m in self.mounts],
            "network": {"mode": self.network_mode, "hosts": list(self.hosts)},
            "subprocess": self.subprocess,
        }


ISOLATED_POLICY = SandboxPolicy(ISOLATED)


def generate_policy(manifest: CapabilityManifest | None, policy: PolicyConfig | None = None) -> SandboxPolicy:
    """Derive the isolation tier from the declared scope."""
    policy = policy or PolicyConfig()
    if manifest is None or manifest.is_empty:
        return ISOLATED_POLICY
    modes: dict[str, str] = {}
    for g in manifest.read:
        modes.setdefault(g, "ro")
    for g in manifest.write:
        modes[g] = "rw"
    mounts = tuple(Mount(g, modes[g]) for g in sorted(modes))
    hosts = tuple(sorted(set(manifest.network)))
    net_mode = "any" if "*" in hosts else "allowlist" if hosts else "deny"
    if net_mode == "any":
        hosts = ()
    warnings = []
    subprocess = manifest.subprocess
    tier = SCOPED
    if manifest.subprocess and manifest.network:
        if policy.allow_broad:
            tier = BROAD
        else:
            subprocess = False
            warnings.append("manifest requests subprocess and network access; Broad tier is not permitted by "
                            "policy, subprocess denied")
    return SandboxPolicy(tier, mounts, net_mode, hosts, subprocess, tuple(warnings))
