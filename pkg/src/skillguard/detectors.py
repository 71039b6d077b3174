"""Text detectors for the static taxonomy scenarios.

Each detector takes the package's scannable sources (instructions body,
supplementary documents, bundled scripts) and returns findings.  Natural
language detectors (T2.1, T3.x, T7.1) are Heuristic by construction;
script and watchlist detectors are Likely.
"""

from __future__ import annotations

import posixpath
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

from .findings import Confidence, DetectorId, Finding, Severity, make_finding
from .model import SKILL_FILE, SkillMetadata, SkillPackage, SourceSpan, TextFile
from .rules import (BODY, SCRIPTS, SUPPLEMENTARY, ActionClass, Hit, RuleEngine, builtin_rules)

DOC_EXTENSIONS = {".md", ".markdown", ".mdx", ".txt", ".rst"}

FETCH_FOLLOW_WINDOW = 3
FETCH_EXECUTE_WINDOW = 5
ENCODED_EXEC_WINDOW = 3
MASS_ENCRYPT_WINDOW = 10
WATCH_WRITE_WINDOW = 3
PROPAGATION_WINDOW = 2


@dataclass(frozen=True)
class Source:
    text: TextFile
    target: str
    ecosystem: str | None = None

    @property
    def path(self) -> str:
        return self.text.path


@lru_cache(maxsize=32)
def engine_for(memory_files: tuple[str, ...] = (), config_globs: tuple[str, ...] = (),
               base_url_keys: tuple[str, ...] = (), credential_paths: tuple[str, ...] = ()) -> RuleEngine:
    return RuleEngine(builtin_rules(memory_files, config_globs, base_url_keys, credential_paths))


DEFAULT_ENGINE = engine_for()


def is_text(data: bytes) -> bool:
    return b"\x00" not in data[:8192]


def body_source(text: str, path: str = SKILL_FILE) -> Source:
    """Wrap a bare instructions body (no frontmatter) as a scannable source."""
    return Source(TextFile(path, text.encode("utf-8")), BODY)


def script_source(path: str, text: str | bytes, ecosystem: str | None = None) -> Source:
    from .model import classify

    data = text.encode("utf-8") if isinstance(text, str) else text
    return Source(TextFile(path, data), SCRIPTS, ecosystem or classify(path) or "python")


def doc_source(path: str, text: str | bytes) -> Source:
    data = text.encode("utf-8") if isinstance(text, str) else text
    return Source(TextFile(path, data), SUPPLEMENTARY)


def sources_for(pkg: SkillPackage) -> list[Source]:
    out = [Source(pkg.body_view(), BODY)]
    for f in pkg.supplementary:
        ext = posixpath.splitext(f.path)[1].lower()
        if ext in DOC_EXTENSIONS and is_text(f.content):
            out.append(Source(TextFile(f.path, f.content), SUPPLEMENTARY))
    for s in pkg.scripts:
        if is_text(s.content):
            out.append(Source(TextFile(s.path, s.content), SCRIPTS, s.ecosystem))
    return out


# ── helpers ──────────────────────────────────────────────────────────────────


def _hits(engine: RuleEngine, src: Source, *names: str) -> list[Hit]:
    return engine.scan(src.text, src.target, src.ecosystem, names)


def _by_rule(hits: Iterable[Hit], name: str) -> list[Hit]:
    return [h for h in hits if h.rule.name == name]


def _near(hit: Hit, others: Sequence[Hit], window: int, forward_only: bool = False) -> Hit | None:
    for o in others:
        delta = o.line - hit.line
        if forward_only:
            if delta < 0 or delta > window or (delta == 0 and o.start < hit.end and o is not hit
                                                and o.start < hit.start):
                continue
            return o
        if abs(delta) <= window:
            return o
    return None


def hit_finding(src: Source, hit: Hit, detector: DetectorId, severity: Severity,
                confidence: Confidence, message: str) -> Finding:
    span = src.text.span(hit.line, hit.start, hit.end)
    return make_finding(detector, severity, confidence, span, hit.text, message)


def _rule_finding(src: Source, hit: Hit, message: str | None = None,
                  severity: Severity | None = None) -> Finding:
    r = hit.rule
    return hit_finding(src, hit, r.id, severity if severity is not None else r.severity, r.confidence,
                       message or r.doc)


# ── T3 prompt injection ──────────────────────────────────────────────────────


def detect_injection(sources: Sequence[Source], engine: RuleEngine = DEFAULT_ENGINE) -> list[Finding]:
    """Override, concealment and covert-send directives (T3.1); fetch-and-follow (T3.2)."""
    findings = []
    for src in sources:
        if src.target not in (BODY, SUPPLEMENTARY):
            continue
        hits = _hits(engine, src, "injection.override", "injection.conceal", "injection.covert-send",
                     "injection.fetch-follow", "injection.url")
        for h in hits:
            if h.rule.id is DetectorId.T3_1:
                findings.append(_rule_finding(src, h, f"{h.rule.pattern_class} directive: {h.rule.doc}"))
        urls = _by_rule(hits, "injection.url")
        for h in _by_rule(hits, "injection.fetch-follow"):
            url = _near(h, urls, FETCH_FOLLOW_WINDOW)
            if url is not None:
                findings.append(_rule_finding(
                    src, h, f"directive to follow instructions from fetched content ({url.text})"))
    return findings


# ── T4 code execution ────────────────────────────────────────────────────────

_OUTPUT_RE = re.compile(r"(?:\s-o\s*|\s-O\s+|--output(?:-document)?[=\s]|>\s*)(['\"]?)([^\s'\"|;&]+)\1")


def _saved_path(line: str) -> str | None:
    m = _OUTPUT_RE.search(line)
    if m and m.group(2) not in ("-",):
        return m.group(2)
    url = re.search(r"https?://\S+", line)
    if url:
        tail = url.group(0).rstrip("'\")").rsplit("/", 1)[-1]
        return tail or None
    return None


def _fetch_then_execute(src: Source, downloads: Sequence[Hit], chmods: Sequence[Hit]) -> list[tuple[Hit, str]]:
    out = []
    lines = src.text.lines
    for d in downloads:
        follow = _near(d, chmods, FETCH_EXECUTE_WINDOW, forward_only=True)
        if follow is not None:
            out.append((d, f"download followed by '{follow.text}'"))
            continue
        saved = _saved_path(lines[d.line])
        if not saved:
            continue
        base = posixpath.basename(saved)
        # The saved file must sit in command position, optionally behind an
        # interpreter; a mere argument (``jq . data.json``) is not execution.
        invoke = re.compile(r"(?:^|[;&|`(])\s*(?:\$\s+)?(?:sudo\s+)?"
                            r"(?:(?:sh|bash|zsh|source|\.|python3?|node|perl|ruby)\s+)?"
                            r"(?:[\w./~$-]*/)?" + re.escape(base) + r"(?=$|[\s;&|`)])")
        for j in range(d.line + 1, min(len(lines), d.line + FETCH_EXECUTE_WINDOW + 1)):
            if invoke.search(lines[j]):
                out.append((d, f"downloaded file '{base}' is executed on line {src.text.line_no(j)}"))
                break
    return out


def detect_execution_risks(sources: Sequence[Source], engine: RuleEngine = DEFAULT_ENGINE) -> list[Finding]:
    """Remote code fetch in instructions (T4.3) and malicious script behaviour (T4.1)."""
    findings = []
    for src in sources:
        if src.target in (BODY, SUPPLEMENTARY):
            hits = _hits(engine, src, "exec.pipe-shell", "exec.download", "exec.chmod", "exec.encoded-eval")
            piped = {h.line for h in _by_rule(hits, "exec.pipe-shell")}
            for h in hits:
                if h.rule.standalone:
                    findings.append(_rule_finding(src, h, f"remote code fetch: {h.rule.doc}"))
            downloads = [h for h in _by_rule(hits, "exec.download") if h.line not in piped]
            for d, why in _fetch_then_execute(src, downloads, _by_rule(hits, "exec.chmod")):
                findings.append(hit_finding(src, d, DetectorId.T4_3, Severity.HIGH, Confidence.LIKELY,
                                            f"fetch-then-execute: {why}"))
        elif src.target == SCRIPTS:
            hits = _hits(engine, src, "script.pipe-shell", "script.download", "script.exec", "script.encoded",
                         "script.home-dir", "script.iterate", "script.cipher-rename")
            piped = {h.line for h in _by_rule(hits, "script.pipe-shell")}
            for h in _by_rule(hits, "script.pipe-shell"):
                findings.append(_rule_finding(src, h, "script pipes a network download into a shell"))
            execs = _by_rule(hits, "script.exec")
            for d in _by_rule(hits, "script.download"):
                if d.line in piped:
                    continue
                e = _near(d, [x for x in execs if (x.line, x.start) >= (d.line, d.start)],
                          FETCH_EXECUTE_WINDOW, forward_only=True)
                if e is not None:
                    findings.append(hit_finding(src, d, DetectorId.T4_1, Severity.CRITICAL, Confidence.LIKELY,
                                                f"download followed by execution ('{e.text}')"))
            for enc in _by_rule(hits, "script.encoded"):
                e = _near(enc, execs, ENCODED_EXEC_WINDOW)
                if e is not None:
                    findings.append(hit_finding(src, enc, DetectorId.T4_1, Severity.HIGH, Confidence.LIKELY,
                                                f"decoded payload is executed ('{e.text}')"))
            homes = _by_rule(hits, "script.home-dir")
            iters = _by_rule(hits, "script.iterate")
            for c in _by_rule(hits, "script.cipher-rename"):
                home = _near(c, homes, MASS_ENCRYPT_WINDOW)
                walk = _near(c, iters, MASS_ENCRYPT_WINDOW)
                if home is not None and walk is not None:
                    findings.append(hit_finding(src, c, DetectorId.T4_1, Severity.HIGH, Confidence.HEURISTIC,
                                                "encrypt/rename call inside a loop over user directories"))
    return findings


# ── T5 data exfiltration ─────────────────────────────────────────────────────


def _has_network(engine: RuleEngine, src: Source) -> Hit | None:
    names = ("exfil.http-client",) if src.target == SCRIPTS else ("exfil.send-url", "exec.pipe-shell",
                                                                   "exec.download")
    hits = _hits(engine, src, *names)
    return hits[0] if hits else None


def detect_exfiltration(sources: Sequence[Source], engine: RuleEngine = DEFAULT_ENGINE) -> list[Finding]:
    """Credential paths (T5.1), environment dumps (T5.2) and codebase archiving (T5.3)."""
    findings = []
    for src in sources:
        hits = _hits(engine, src, "exfil.sensitive-path", "exfil.env-dump", "exfil.codebase", "persist.base-url")
        if not hits:
            continue
        net = _has_network(engine, src)
        where = f"outbound network on line {src.text.line_no(net.line)}" if net else ""
        for h in _by_rule(hits, "exfil.sensitive-path"):
            if net is not None:
                findings.append(_rule_finding(src, h, f"credential location read with {where}", Severity.HIGH))
            else:
                findings.append(_rule_finding(src, h, "reference to a credential location", Severity.MEDIUM))
        if net is not None:
            for h in _by_rule(hits, "exfil.env-dump"):
                findings.append(_rule_finding(src, h, f"whole environment enumerated with {where}"))
            for h in _by_rule(hits, "exfil.codebase"):
                findings.append(_rule_finding(src, h, f"project tree read or archived with {where}"))
        for h in _by_rule(hits, "persist.base-url"):
            findings.append(hit_finding(src, h, DetectorId.T5_1, Severity.HIGH, Confidence.LIKELY,
                                        "API base URL redirected; requests carry the user's API key"))
    return findings


# ── T6 persistence ───────────────────────────────────────────────────────────

_WRITE_OPS = ("persist.write-op", "persist.shell-write")


def _watch_writes(engine: RuleEngine, src: Source, ref_rule: str) -> list[tuple[Hit, Hit]]:
    hits = _hits(engine, src, ref_rule, *_WRITE_OPS)
    writes = [h for h in hits if h.rule.name in _WRITE_OPS]
    out = []
    for ref in _by_rule(hits, ref_rule):
        w = _near(ref, writes, WATCH_WRITE_WINDOW)
        if w is not None:
            out.append((ref, w))
    return out


def config_writes(engine: RuleEngine, src: Source) -> list[tuple[Hit, Hit]]:
    return _watch_writes(engine, src, "persist.config-ref") if src.target == SCRIPTS else []


def detect_persistence(sources: Sequence[Source], engine: RuleEngine = DEFAULT_ENGINE,
                       bundled_configs: Sequence[Source] = ()) -> list[Finding]:
    """Memory-file writes (T6.1), config writes and base-URL overrides (T6.2)."""
    findings = []
    for src in sources:
        if src.target in (BODY, SUPPLEMENTARY):
            for h in _hits(engine, src, "persist.memory-directive", "persist.config-directive"):
                findings.append(_rule_finding(src, h))
        elif src.target == SCRIPTS:
            for ref, w in _watch_writes(engine, src, "persist.memory-ref"):
                findings.append(hit_finding(src, ref, DetectorId.T6_1, Severity.HIGH, Confidence.LIKELY,
                                            f"script writes agent memory file ({w.text.strip()})"))
            writes = config_writes(engine, src)
            if writes:
                extra = _hits(engine, src, "persist.hooks", "persist.auto-approve")
                hooks = _by_rule(extra, "persist.hooks")
                auto = _by_rule(extra, "persist.auto-approve")
                for ref, w in writes:
                    if hooks:
                        sev, msg = Severity.CRITICAL, "script writes hook entries into agent configuration"
                    elif auto:
                        sev, msg = Severity.HIGH, "script pre-approves tools in agent configuration"
                    else:
                        sev, msg = Severity.HIGH, "script writes agent configuration"
                    findings.append(hit_finding(src, ref, DetectorId.T6_2, sev, Confidence.LIKELY, msg))
        for h in _hits(engine, src, "persist.base-url"):
            findings.append(_rule_finding(src, h, "assignment to an API base-URL override key"))
    for src in bundled_configs:
        hits = _hits(engine, Source(src.text, SCRIPTS, "json"), "persist.hooks", "persist.auto-approve")
        sev = Severity.CRITICAL if _by_rule(hits, "persist.hooks") else Severity.HIGH
        first = src.text.lines[0] if src.text.lines else ""
        span = src.text.span(0, 0, len(first)) if src.text.lines else SourceSpan(src.path, 1, 1, 0, 0)
        findings.append(make_finding(DetectorId.T6_2, sev, Confidence.LIKELY, span, first,
                                     "package ships an agent configuration file"))
    return findings


# ── T7 propagation ───────────────────────────────────────────────────────────


def detect_propagation(sources: Sequence[Source], engine: RuleEngine = DEFAULT_ENGINE) -> list[Finding]:
    """Directives to embed instructions into messages for other agents (T7.1)."""
    findings = []
    for src in sources:
        if src.target not in (BODY, SUPPLEMENTARY):
            continue
        hits = _hits(engine, src, "propagation.delegate", "propagation.embed")
        delegates = _by_rule(hits, "propagation.delegate")
        for h in _by_rule(hits, "propagation.embed"):
            d = _near(h, delegates, PROPAGATION_WINDOW)
            if d is not None:
                findings.append(hit_finding(src, h, DetectorId.T7_1, Severity.MEDIUM, Confidence.HEURISTIC,
                                            f"instructions embedded into messages for another agent ({d.text})"))
    return findings


# ── T2.1 consent gap ─────────────────────────────────────────────────────────

NETWORK, CREDENTIALS, SUBPROCESS, CONFIG = "network", "credential-read", "subprocess", "config-write"

ACTION_OF_CLASS = {
    NETWORK: ActionClass.NETWORK_SEND,
    CREDENTIALS: ActionClass.FILE_READ,
    SUBPROCESS: ActionClass.SUBPROCESS,
    CONFIG: ActionClass.CONFIG_WRITE,
}

DESCRIPTION_KEYWORDS = {
    NETWORK: {"download", "upload", "fetch", "network", "http", "https", "url", "web", "internet", "online",
              "remote", "api", "cloud", "sync", "send", "server", "webhook", "email", "post", "publish"},
    CREDENTIALS: {"credential", "ssh", "key", "token", "secret", "password", "wallet", "login", "auth",
                  "authentication", "keychain", "vault", "keystore"},
    SUBPROCESS: {"run", "execute", "command", "shell", "terminal", "process", "subprocess", "launch", "cli",
                 "install", "build", "compile", "test", "invoke", "automate"},
    CONFIG: {"config", "configure", "configuration", "settings", "setup", "preference", "hook"},
}
_SUFFIXES = ("", "s", "es", "ing", "ed", "er", "ers", "d")


def described_classes(description: str) -> set[str]:
    words = set(re.findall(r"[a-z0-9]+", description.lower()))
    found = set()
    for cls, stems in DESCRIPTION_KEYWORDS.items():
        for w in words:
            if any(w == s + suf for s in stems for suf in _SUFFIXES if w.startswith(s)):
                found.add(cls)
                break
    return found


def declared_classes(manifest) -> set[str]:
    if manifest is None:
        return set()
    out = set()
    if manifest.network:
        out.add(NETWORK)
    if manifest.subprocess:
        out.add(SUBPROCESS)
    if manifest.covers_config_write():
        out.add(CONFIG)
    return out


def action_hits(sources: Sequence[Source], engine: RuleEngine = DEFAULT_ENGINE) -> dict[str, list[tuple[Source, Hit]]]:
    """First occurrence of each high-risk action class, per file."""
    out: dict[str, list[tuple[Source, Hit]]] = {NETWORK: [], CREDENTIALS: [], SUBPROCESS: [], CONFIG: []}
    for src in sources:
        found: dict[str, Hit] = {}
        if src.target == SCRIPTS:
            net = _hits(engine, src, "exfil.http-client", "script.download", "script.pipe-shell")
            sub = _hits(engine, src, "consent.subprocess", "consent.shell-exec")
            cfg = [ref for ref, _ in config_writes(engine, src)]
        else:
            net = _hits(engine, src, "exfil.send-url", "exec.download", "exec.pipe-shell")
            sub = []
            cfg = _hits(engine, src, "persist.config-directive")
        cfg += _hits(engine, src, "persist.base-url")
        cred = _hits(engine, src, "exfil.sensitive-path")
        for cls, hs in ((NETWORK, net), (CREDENTIALS, cred), (SUBPROCESS, sub), (CONFIG, cfg)):
            if hs:
                found[cls] = min(hs, key=lambda h: (h.line, h.start))
        for cls, h in found.items():
            out[cls].append((src, h))
    return out


def detect_consent_gap(metadata: SkillMetadata, sources: Sequence[Source], manifest=None,
                       engine: RuleEngine = DEFAULT_ENGINE) -> list[Finding]:
    """High-risk actions that neither the description nor the manifest mention (T2.1)."""
    covered = described_classes(metadata.description) | declared_classes(manifest)
    present = action_hits(sources, engine)
    undeclared = [c for c in (NETWORK, CREDENTIALS, SUBPROCESS, CONFIG) if present[c] and c not in covered]
    severity = Severity.HIGH if len(undeclared) >= 2 else Severity.MEDIUM
    findings = []
    for cls in undeclared:
        for src, h in present[cls]:
            findings.append(hit_finding(
                src, h, DetectorId.T2_1, severity, Confidence.HEURISTIC,
                f"undeclared {cls} action ({ACTION_OF_CLASS[cls].value}); undeclared classes: "
                f"{', '.join(undeclared)}"))
    return findings
