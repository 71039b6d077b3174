"""Built-in pattern catalog and the line-oriented matching engine.

Rules are plain regular expressions evaluated one line at a time,
case-insensitive unless marked otherwise.  Some rules fire on their own;
others are components that the detectors combine inside a fixed line
window (for example a download followed by ``chmod +x`` within 5 lines).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .findings import Confidence, DetectorId, Severity
from .model import TextFile

BODY = "body"
SCRIPTS = "scripts"
SUPPLEMENTARY = "supplementary"
INSTRUCTIONS = frozenset({BODY, SUPPLEMENTARY})
CODE = frozenset({SCRIPTS})
ANYWHERE = frozenset({BODY, SCRIPTS, SUPPLEMENTARY})

DEFAULT_MEMORY_FILES = ("AGENTS.md", "MEMORY.md", "SOUL.md", "CLAUDE.md")
DEFAULT_CONFIG_GLOBS = ("settings.json", "mcp.json", ".mcp.json", ".claude/**")
DEFAULT_BASE_URL_KEYS = ("ANTHROPIC_BASE_URL", "OPENAI_BASE_URL", "OPENAI_API_BASE")


class ActionClass(Enum):
    FILE_READ = "FileRead"
    FILE_WRITE = "FileWrite"
    NETWORK_SEND = "NetworkSend"
    NETWORK_FETCH = "NetworkFetch"
    SUBPROCESS = "Subprocess"
    CONFIG_WRITE = "ConfigWrite"
    MEMORY_WRITE = "MemoryWrite"


@dataclass(frozen=True)
class PatternRule:
    name: str
    id: DetectorId
    pattern_class: str
    pattern: str
    targets: frozenset[str]
    severity: Severity
    confidence: Confidence
    doc: str
    action: ActionClass | None = None
    standalone: bool = True
    case_sensitive: bool = False
    keywords: tuple[str, ...] = ()  # a line must contain one of these (lowercased) to be tried
    ecosystems: frozenset[str] | None = None  # restrict to these script ecosystems
    window: int = 0  # co-occurrence window used by compound detectors, 0 for single-line rules

    @property
    def flags(self) -> int:
        return 0 if self.case_sensitive else re.IGNORECASE

    def applies_to(self, target: str, ecosystem: str | None = None) -> bool:
        if target not in self.targets:
            return False
        if self.ecosystems is not None and target == SCRIPTS:
            return ecosystem in self.ecosystems
        return True

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "id": self.id.value,
            "class": self.pattern_class,
            "pattern": self.pattern,
            "targets": sorted(self.targets),
            "severity": self.severity.label,
            "confidence": self.confidence.value,
            "action": self.action.value if self.action else None,
            "standalone": self.standalone,
            "case_sensitive": self.case_sensitive,
            "window": self.window,
            "anchor": ANCHORS[self.id],
            "doc": self.doc,
        }


ANCHORS = {
    DetectorId.T1_1: "T1.1 Typosquatting",
    DetectorId.T1_4: "T1.4 Hallucinated Package",
    DetectorId.T2_1: "T2.1 Consent Gap",
    DetectorId.T2_2: "T2.2 Post-Installation Modification",
    DetectorId.T3_1: "T3.1 Direct Injection",
    DetectorId.T3_2: "T3.2 Indirect Injection",
    DetectorId.T4_1: "T4.1 Malicious Script",
    DetectorId.T4_2: "T4.2 Deferred Dependency",
    DetectorId.T4_3: "T4.3 Remote Code Fetch",
    DetectorId.T5_1: "T5.1 Credential Harvesting",
    DetectorId.T5_2: "T5.2 Environment Variable Harvesting",
    DetectorId.T5_3: "T5.3 Codebase Exfiltration",
    DetectorId.T6_1: "T6.1 Memory File Poisoning",
    DetectorId.T6_2: "T6.2 Config Injection",
    DetectorId.T7_1: "T7.1 Prompt Infection",
}

_NEG = r"(?<!not\s)(?<!never\s)(?<!n't\s)(?<!don't\s)"
_SHELLS = r"(?:sudo\s+)?(?:sh|bash|zsh|ksh|dash|source|python[23]?|perl|ruby|node|iex|invoke-expression)\b"
_SHELLISH = frozenset({"shell", "powershell"})

SENSITIVE_PATHS = (
    r"~/\.ssh\b",
    r"\.ssh/(?:id_\w+|authorized_keys|config)\b",
    r"\bid_(?:rsa|dsa|ecdsa|ed25519)\b",
    r"\.aws/(?:credentials|config)\b",
    r"(?<![\w.])\.env(?![\w.-])",
    r"\.netrc\b",
    r"\.pgpass\b",
    r"\.npmrc\b",
    r"\.pypirc\b",
    r"\.docker/config\.json",
    r"\.kube/config\b",
    r"\.gnupg\b",
    r"\.config/gcloud\b",
    r"\blogin data\b",
    r"\bcookies\.sqlite\b",
    r"\bkey4\.db\b",
    r"\blogins\.json\b",
    r"(?:google/chrome|chromium|bravesoftware/brave-browser|microsoft/edge)/(?:user data|default)\b",
    r"\.mozilla/firefox\b",
    r"library/application support/(?:google|firefox|brave|exodus|electrum|metamask)\b",
    r"\bwallet\.dat\b",
    r"\.electrum\b",
    r"\.bitcoin\b",
    r"\.ethereum/keystore\b",
    r"\.solana/id\.json",
    r"\bexodus\.wallet\b",
    r"\bseed phrases?\b",
    r"\blogin\.keychain\b",
)

HTTP_CLIENT = (
    r"\brequests\.(?:post|put|get|patch|request|session)\b",
    r"\bhttpx\.(?:post|put|get|patch|request|client|asyncclient)\b",
    r"\burllib\.request\b",
    r"\burlopen\s*\(",
    r"\burlretrieve\s*\(",
    r"\bhttp\.client\b",
    r"\bhttps?connection\s*\(",
    r"\baiohttp\b",
    r"(?<![\w.])fetch\s*\(",
    r"\baxios\b",
    r"\bxmlhttprequest\b",
    r"\bcurl\s",
    r"\bwget\s",
    r"\binvoke-(?:webrequest|restmethod)\b",
    r"\bsmtplib\b",
    r"\bsocket\.(?:connect|create_connection)\b",
    r"\bftplib\b",
    r"\bnet/http\b",
    r"\bhttps?\.(?:get|request)\s*\(",
)


def _alt(parts: Iterable[str]) -> str:
    return "|".join(f"(?:{p})" for p in parts)


def _literal_prefix(glob: str) -> str:
    cut = len(glob)
    for ch in "*?[":
        i = glob.find(ch)
        if i != -1:
            cut = min(cut, i)
    return glob[:cut]


def memory_pattern(names: Sequence[str]) -> str:
    return r"(?<![\w.-])(?:" + "|".join(re.escape(n) for n in sorted(set(names))) + r")(?![\w-])"


def config_pattern(globs: Sequence[str]) -> str:
    parts = []
    for g in sorted(set(globs)):
        lit = _literal_prefix(g)
        if not lit:
            continue
        esc = re.escape(lit)
        parts.append(esc if lit.endswith("/") else esc + r"(?![\w-])")
    return r"(?<![\w-])(?:" + "|".join(parts) + ")"


def base_url_pattern(keys: Sequence[str]) -> str:
    names = "|".join(re.escape(k) for k in sorted(set(keys)))
    return rf"\b(?:{names})\b['\"]?\]?\s*(?:=(?!=)|:|,)\s*['\"]?[^\s'\"]"


def builtin_rules(memory_files: Sequence[str] = DEFAULT_MEMORY_FILES,
                  config_globs: Sequence[str] = DEFAULT_CONFIG_GLOBS,
                  base_url_keys: Sequence[str] = DEFAULT_BASE_URL_KEYS,
                  extra_credential_paths: Sequence[str] = ()) -> tuple[PatternRule, ...]:
    """Return the rule catalog, with watchlists merged into the defaults."""
    memory_files = tuple(DEFAULT_MEMORY_FILES) + tuple(memory_files)
    config_globs = tuple(DEFAULT_CONFIG_GLOBS) + tuple(config_globs)
    base_url_keys = tuple(DEFAULT_BASE_URL_KEYS) + tuple(base_url_keys)
    cred = SENSITIVE_PATHS + tuple(re.escape(p) for p in extra_credential_paths)
    mem = memory_pattern(memory_files)
    cfg = config_pattern(config_globs)
    H, C, M, L = Severity.HIGH, Severity.CRITICAL, Severity.MEDIUM, Severity.LOW
    heur, likely = Confidence.HEURISTIC, Confidence.LIKELY
    T = DetectorId
    A = ActionClass

    return (
        # ── T3.1 direct injection ──
        PatternRule(
            "injection.override", T.T3_1, "override",
            r"\b(?:ignore|disregard|forget|override|bypass)\b[^.\n]{0,40}?"
            r"\b(?:previous|prior|above|earlier|preceding|all|system|safety|your)\s+(?:[\w-]+\s+){0,2}?"
            r"(?:instructions?|prompts?|rules|directives?|guidelines|guardrails|policies)\b",
            INSTRUCTIONS, H, heur,
            "Directive telling the agent to discard its prior or system instructions.",
            keywords=("ignore", "disregard", "forget", "override", "bypass")),
        PatternRule(
            "injection.conceal", T.T3_1, "concealment",
            r"\b(?:do\s+not|don'?t|never)\s+(?:tell|inform|mention|notify|alert|reveal|disclose|show|report)\b"
            r"[^.\n]{0,40}?\b(?:user|human|operator|anyone)\b"
            r"|\bwithout\s+(?:notifying|telling|informing|alerting|asking|mentioning|showing)\b"
            r"|\b(?:silently|secretly|covertly|stealthily)\b",
            INSTRUCTIONS, M, heur,
            "Directive to hide an action from the user.",
            keywords=("not", "don", "never", "without", "silent", "secret", "covert", "stealth")),
        PatternRule(
            "injection.covert-send", T.T3_1, "covert-action",
            r"\b(?:send|upload|post|transmit|forward|exfiltrate|copy)\b[^\n]{0,80}?"
            r"\b(?:data|files?|credentials?|keys?|tokens?|secrets?|passwords?|history|conversations?|"
            r"codebase|contents?|environment)\b[^\n]{0,80}?https?://",
            INSTRUCTIONS, H, heur,
            "Imperative to send user data to a URL.",
            action=A.NETWORK_SEND, keywords=("://",)),
        # ── T3.2 indirect injection (compound: URL within 3 lines) ──
        PatternRule(
            "injection.fetch-follow", T.T3_2, "fetch-and-follow",
            r"\b(?:follow|obey|execute|carry\s+out|comply\s+with|do\s+what)\b[^.\n]{0,60}?"
            r"\b(?:instructions?|directives?|commands?|steps)\b[^.\n]{0,20}?"
            r"\b(?:it|they|that|which|there|therein|inside|within|from|"
            r"in\s+(?:it|the\s+(?:page|file|response|document|result|content)))\b",
            INSTRUCTIONS, H, heur,
            "Directive to follow instructions taken from fetched content; fires only when a URL "
            "appears within 3 lines.",
            standalone=False, window=3,
            keywords=("follow", "obey", "execute", "carry", "comply", "do what")),
        PatternRule(
            "injection.url", T.T3_2, "url",
            r"https?://[^\s)>\]'\"`]+",
            ANYWHERE, Severity.INFO, heur,
            "Scheme-prefixed URL (component of compound rules).",
            action=A.NETWORK_FETCH, standalone=False, keywords=("://",)),
        # ── T4.3 remote code fetch (instructions) ──
        PatternRule(
            "exec.pipe-shell", T.T4_3, "pipe-to-shell",
            r"\b(?:curl|wget|iwr|irm|invoke-webrequest|invoke-restmethod)\b[^|\n]*\|\s*" + _SHELLS +
            r"|\b(?:source|bash|sh|zsh)\s+<\(\s*(?:curl|wget)\b"
            r"|\b(?:bash|sh|zsh)\s+-c\s+['\"]?\$\(\s*(?:curl|wget)\b"
            r"|\beval\s+['\"]?\$\(\s*(?:curl|wget)\b",
            INSTRUCTIONS, H, likely,
            "Network download piped straight into a shell or interpreter.",
            action=A.NETWORK_FETCH, keywords=("curl", "wget", "iwr", "irm", "invoke-")),
        PatternRule(
            "exec.download", T.T4_3, "download",
            r"\b(?:curl|wget|iwr|invoke-webrequest)\b[^\n]*?https?://\S+",
            INSTRUCTIONS, H, likely,
            "Download command; combined with chmod or invocation of the saved path within 5 lines.",
            action=A.NETWORK_FETCH, standalone=False, window=5,
            keywords=("curl", "wget", "iwr", "invoke-webrequest")),
        PatternRule(
            "exec.chmod", T.T4_3, "make-executable",
            r"\bchmod\s+(?:-\w+\s+)*(?:[ugoa]*\+[rw]*x|[0-7]*[1357][0-7]{0,2})\b",
            ANYWHERE, H, likely,
            "chmod granting execute permission (component).",
            action=A.SUBPROCESS, standalone=False, keywords=("chmod",)),
        PatternRule(
            "exec.encoded-eval", T.T4_3, "encoded-eval",
            r"\bbase64\s+(?:-d|-D|--decode)\b[^\n]*\|\s*" + _SHELLS +
            r"|\bpowershell(?:\.exe)?\b[^\n]*\s-e(?:nc|ncodedcommand)?\s+[A-Za-z0-9+/=]{16,}",
            INSTRUCTIONS, H, likely,
            "Base64-decoded payload fed to an interpreter.",
            action=A.SUBPROCESS, keywords=("base64", "powershell")),
        # ── T4.1 malicious script ──
        PatternRule(
            "script.pipe-shell", T.T4_1, "download-execute",
            r"\b(?:curl|wget|iwr|irm|invoke-webrequest|invoke-restmethod)\b[^|\n]*\|\s*" + _SHELLS,
            CODE, C, likely,
            "Script pipes a network download into a shell.",
            action=A.SUBPROCESS, keywords=("curl", "wget", "iwr", "irm", "invoke-")),
        PatternRule(
            "script.download", T.T4_1, "download",
            r"\b(?:urlretrieve|urlopen|download_?file)\s*\(|\brequests\.get\b|\bhttpx\.get\b"
            r"|(?<![\w.])fetch\s*\(|\baxios\b|\bhttps?\.get\s*\(|\bcurl\s|\bwget\s|\binvoke-webrequest\b|\biwr\s"
            r"|\bopen-uri\b|\bnet::http\b",
            CODE, C, likely,
            "Network download in a script (component).",
            action=A.NETWORK_FETCH, standalone=False, window=5),
        PatternRule(
            "script.exec", T.T4_1, "execute",
            r"\bos\.chmod\s*\(|(?<![\w.])chmod\s*\(|\bchmod\s+(?:[ugoa]*\+[rw]*x|[0-7]{3,4})\b|\bsubprocess\.\w+"
            r"|\bos\.(?:system|popen|exec\w*|spawn\w*|startfile)\s*\(|(?<![\w.])(?:exec|eval)\s*\("
            r"|\bchild_process\b|\bexec(?:file)?sync\s*\(|(?<![\w.])spawn\s*\(|\bstart-process\b"
            r"|\binvoke-expression\b|\bkernel\.(?:exec|system)\b|\|\s*(?:ba)?sh\b",
            CODE, C, likely,
            "Process execution or execute-permission change (component).",
            action=A.SUBPROCESS, standalone=False),
        PatternRule(
            "script.encoded", T.T4_1, "encoded-payload",
            r"\bb64decode\s*\(|\bbase64\s+(?:-d|-D|--decode)\b|(?<![\w.])atob\s*\(|\bfrombase64string\b"
            r"|\bbuffer\.from\s*\([^)]*['\"]base64['\"]|\bcodecs\.decode\s*\([^)]*['\"](?:base64|hex|rot13)",
            CODE, H, likely,
            "Decoding of an embedded payload; fires with execution within 3 lines.",
            standalone=False, window=3,
            keywords=("b64decode", "base64", "atob", "frombase64", "codecs")),
        PatternRule(
            "script.home-dir", T.T4_1, "user-directory",
            r"\bexpanduser\s*\(\s*['\"]~|\bpath\.home\s*\(|\bos\.homedir\s*\(|['\"]~/|\$home\b|\$\{home\}"
            r"|%userprofile%|\benv:userprofile\b|['\"]/(?:users|home)/|\bhomedir\b",
            CODE, H, heur,
            "Reference to the user's home directory (component).",
            action=A.FILE_READ, standalone=False),
        PatternRule(
            "script.iterate", T.T4_1, "directory-iteration",
            r"\bos\.(?:walk|scandir|listdir)\s*\(|\.r?glob\s*\(|\bglob\.i?glob\s*\(|\breaddir(?:sync)?\s*\("
            r"|\bget-childitem\b[^\n]*-recurse|\bfind\s+\S+\s+-type\s+f\b|\bfor\s+\w+\s+in\s+[\"']?\$",
            CODE, H, heur,
            "Directory iteration (component).",
            standalone=False),
        PatternRule(
            "script.cipher-rename", T.T4_1, "cipher-or-rename",
            r"\bfernet\b|\baes\.new\s*\(|\bchacha20\w*|\bcreatecipheriv\s*\(|\.encrypt\s*\(|\bcipher\s*\("
            r"|\bos\.(?:rename|replace)\s*\(|\.rename\s*\(|\.with_suffix\s*\(|\brenamesync\s*\(|\bmove-item\b"
            r"|\bopenssl\s+enc\b|\bgpg\s+(?:-c|--symmetric)\b",
            CODE, H, heur,
            "Encryption or bulk rename call; fires with home-directory iteration within 10 lines.",
            action=A.FILE_WRITE, standalone=False, window=10),
        # ── T5 exfiltration ──
        PatternRule(
            "exfil.sensitive-path", T.T5_1, "sensitive-path",
            _alt(cred),
            ANYWHERE, M, likely,
            "Reference to a credential store, key file, browser profile or wallet; High when the same "
            "file also sends data over the network.",
            action=A.FILE_READ),
        PatternRule(
            "exfil.http-client", T.T5_1, "outbound-network",
            _alt(HTTP_CLIENT),
            CODE, M, likely,
            "HTTP client or socket call in a script (component).",
            action=A.NETWORK_SEND, standalone=False),
        PatternRule(
            "exfil.send-url", T.T5_1, "outbound-network",
            r"\b(?:send|post|upload|transmit|submit|forward|exfiltrate|curl|wget)\b[^\n]*https?://"
            r"|https?://[^\n]*\b(?:send|post|upload|transmit|submit)\b",
            INSTRUCTIONS, M, likely,
            "URL together with a send/upload verb in instructions (component).",
            action=A.NETWORK_SEND, standalone=False, keywords=("://",)),
        PatternRule(
            "exfil.env-dump", T.T5_2, "environment-enumeration",
            r"\bdict\s*\(\s*os\.environ\s*\)|\bos\.environ\.(?:copy|items|keys|values)\s*\("
            r"|\bjson\.dumps?\s*\(\s*(?:dict\s*\(\s*)?os\.environ\b|\bstr\s*\(\s*os\.environ\s*\)"
            r"|\bfor\s+\w+(?:\s*,\s*\w+)?\s+in\s+os\.environ\b|\{\s*\*\*os\.environ"
            r"|\bprintenv\b|\bjson\.stringify\s*\(\s*process\.env\s*\)"
            r"|\bobject\.(?:entries|keys|values|assign)\s*\([^)]*process\.env\s*\)|\{\s*\.\.\.process\.env\s*\}"
            r"|\bget-childitem\s+env:|(?<![\w$-])env\s*(?:\||>)"
            r"|\b(?:all|every|entire|full\s+set\s+of)\s+(?:the\s+|of\s+the\s+)?environment\s+variables\b",
            ANYWHERE, H, likely,
            "Enumeration of the whole process environment; fires with outbound network in the same file.",
            action=A.FILE_READ, standalone=False),
        PatternRule(
            "exfil.codebase", T.T5_3, "codebase-read",
            r"\btar\s+-?[a-z]*c[a-z]*\s+(?:-\w+\s+)*\S+\s+(?:\.|\./|\*|\./\*)(?=\s|$)"
            r"|\bzip\s+-[a-z]*r[a-z]*\s+\S+\s+(?:\.|\./|\*)(?=\s|$)"
            r"|\bshutil\.make_archive\b|\.add\s*\(\s*(?:['\"]\.['\"]|os\.getcwd\(\)|path\.cwd\(\))"
            r"|\bos\.walk\s*\(\s*(?:['\"]\.['\"]|os\.getcwd\(\)|path\.cwd\(\)|root|project)"
            r"|\.rglob\s*\(\s*['\"]\*|\bglob(?:\.i?glob)?\s*\(\s*['\"](?:\./)?\*\*|\bgit\s+(?:archive|bundle)\b"
            r"|\b(?:read|collect|gather|archive|zip|compress|copy|bundle)\b[^\n]{0,40}"
            r"\b(?:entire|whole|every\s+file\s+in\s+the|all\s+(?:files|source)\s+(?:in|of)\s+the)\b[^\n]{0,30}"
            r"\b(?:project|codebase|repository|repo|workspace|source\s+tree)\b",
            ANYWHERE, H, likely,
            "Recursive read or archive of the project root; fires with outbound network in the same file.",
            action=A.FILE_READ, standalone=False),
        # ── T6 persistence ──
        PatternRule(
            "persist.memory-directive", T.T6_1, "memory-write",
            r"\b" + _NEG + r"(?:write|append|add|insert|prepend|save|store|update|modify|overwrite|edit|inject|"
            r"put|persist|record)\b[^\n]{0,80}?" + mem,
            INSTRUCTIONS, H, likely,
            "Instruction to write into a persistent agent memory file.",
            action=A.MEMORY_WRITE),
        PatternRule(
            "persist.memory-ref", T.T6_1, "memory-file",
            mem,
            CODE, H, likely,
            "Memory-file name in a script; fires with a write operation within 3 lines.",
            action=A.MEMORY_WRITE, standalone=False, window=3),
        PatternRule(
            "persist.write-op", T.T6_1, "file-write",
            r"\bopen\s*\([^)\n]*,\s*['\"][rbt]*[wax]\+?[bt]?['\"]|\bopen\s*\([^)\n]*mode\s*=\s*['\"][^'\"]*[wax]"
            r"|\.write_(?:text|bytes)\s*\(|\.write\s*\(|\bappendfile(?:sync)?\s*\(|\bwritefile(?:sync)?\s*\("
            r"|\bcreatewritestream\s*\(|\bjson\.dump\s*\(|\bshutil\.(?:copy\w*|move)\s*\(|\bfs\.(?:copy|rename)\w*\s*\(",
            CODE, H, likely,
            "File write call in a script (component).",
            action=A.FILE_WRITE, standalone=False),
        PatternRule(
            "persist.shell-write", T.T6_1, "file-write",
            r">>\s*\S|(?<![<>=\-2&])>\s*['\"]?[\w./~$]|\btee\b|\b(?:cp|mv|ln)\s|\bset-content\b|\badd-content\b"
            r"|\bout-file\b|\bsed\s+-i\b",
            CODE, H, likely,
            "Shell redirection or copy into a file (component, shell scripts only).",
            action=A.FILE_WRITE, standalone=False, ecosystems=_SHELLISH),
        PatternRule(
            "persist.config-directive", T.T6_2, "config-write",
            r"\b" + _NEG + r"(?:write|add|append|insert|update|modify|edit|set|change|configure|register|put|inject|"
            r"overwrite)\b[^\n]{0,80}?" + cfg,
            INSTRUCTIONS, H, likely,
            "Instruction to modify an agent configuration file.",
            action=A.CONFIG_WRITE),
        PatternRule(
            "persist.config-ref", T.T6_2, "config-file",
            cfg,
            CODE, H, likely,
            "Agent configuration path in a script; fires with a write operation within 3 lines.",
            action=A.CONFIG_WRITE, standalone=False, window=3),
        PatternRule(
            "persist.hooks", T.T6_2, "hook-entry",
            r"['\"]hooks['\"]|\bhooks\s*[\[=:]|\b(?:pretooluse|posttooluse|sessionstart|userpromptsubmit)\b",
            CODE, C, likely,
            "Hook definitions next to a config write escalate to Critical.",
            action=A.CONFIG_WRITE, standalone=False),
        PatternRule(
            "persist.auto-approve", T.T6_2, "auto-approve",
            r"\benableallprojectmcpservers\b|\bautoapprove\b|\bauto_approve\b|\benabledmcpjsonservers\b"
            r"|\bdangerously-?skip-?permissions\b|\bbypasspermissions\b",
            ANYWHERE, H, likely,
            "Flag that pre-approves tools or MCP servers.",
            action=A.CONFIG_WRITE, standalone=False),
        PatternRule(
            "persist.base-url", T.T6_2, "base-url-override",
            base_url_pattern(base_url_keys),
            ANYWHERE, C, likely,
            "Assignment to an API base-URL override key, redirecting agent traffic.",
            action=A.CONFIG_WRITE, case_sensitive=True),
        # ── T7.1 prompt infection ──
        PatternRule(
            "propagation.delegate", T.T7_1, "delegation",
            r"\b(?:sub-?agents?|downstream\s+agents?|other\s+agents?|child\s+agents?|peer\s+agents?|"
            r"worker\s+agents?|orchestrator|delegat\w*|hand\s*-?off)\b",
            INSTRUCTIONS, M, heur,
            "Mention of another agent or delegation (component).",
            standalone=False, window=2),
        PatternRule(
            "propagation.embed", T.T7_1, "instruction-embedding",
            r"\b(?:embed|inject|insert|include|append|prepend|pass\s+(?:along|on)|forward|copy|propagate|"
            r"replicate|repeat)\b[^\n]{0,40}?\b(?:these|this|the\s+following|the\s+same|my|our|all\s+of\s+these)\s+"
            r"(?:instructions?|directives?|rules|prompt|text|block)\b",
            INSTRUCTIONS, M, heur,
            "Directive to copy instructions into another agent's input; fires with a delegation "
            "mention within 2 lines.",
            standalone=False, window=2),
        # ── T2.1 consent gap action classes ──
        PatternRule(
            "consent.subprocess", T.T2_1, "subprocess",
            r"\bsubprocess\.\w+|\bos\.(?:system|popen|exec\w*|spawn\w*|startfile)\s*\(|\bchild_process\b"
            r"|\b(?:exec|execfile|spawn)sync\s*\(|(?<![\w.])(?:spawn|popen)\s*\(|\bstart-process\b"
            r"|\bruntime\.getruntime\(\)\.exec\b|\bopen3\b|\bkernel\.(?:exec|system)\b",
            CODE, M, heur,
            "Subprocess spawn in a script (consent-gap action class).",
            action=A.SUBPROCESS, standalone=False),
        PatternRule(
            "consent.shell-exec", T.T2_1, "subprocess",
            r"(?:^|[;&|]\s*)(?:eval|exec|nohup|xargs)\b|\b(?:ba)?sh\s+-c\b|(?:^|[;&|]\s*)\./[\w.-]+",
            CODE, M, heur,
            "Dynamic execution in a shell script (consent-gap action class).",
            action=A.SUBPROCESS, standalone=False, ecosystems=_SHELLISH),
    )


RULES: tuple[PatternRule, ...] = builtin_rules()


def catalog(rules: Sequence[PatternRule] = RULES) -> list[dict]:
    """Machine-readable catalog for auditors."""
    return [r.to_dict() for r in rules]


@dataclass(frozen=True)
class Hit:
    rule: PatternRule
    line: int  # 0-based index into the TextFile
    start: int
    end: int
    text: str


# Non-ASCII characters that re.IGNORECASE treats as equal to an ASCII letter.
# casefold() alone maps U+0130 to "i" plus a combining dot, which would let
# "İgnore" slip past the keyword prefilter while the regex still matches.
_RE_FOLD = str.maketrans({"\u0130": "i", "\u0131": "i", "\u017f": "s", "\u212a": "k"})


@dataclass
class RuleEngine:
    """Evaluates a rule set line by line with a cheap keyword prefilter."""

    rules: Sequence[PatternRule] = RULES
    _compiled: list = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._compiled = [(r, re.compile(r.pattern, r.flags)) for r in self.rules]
        self.by_name = {r.name: r for r in self.rules}

    def match_line(self, line: str, target: str, ecosystem: str | None = None,
                   names: set[str] | None = None) -> list[tuple[PatternRule, re.Match]]:
        lowered = line.translate(_RE_FOLD).casefold()
        out = []
        for rule, rx in self._compiled:
            if names is not None and rule.name not in names:
                continue
            if not rule.applies_to(target, ecosystem):
                continue
            if rule.keywords and not any(k in lowered for k in rule.keywords):
                continue
            m = next((m for m in rx.finditer(line) if m.end() > m.start()), None)
            if m is not None:
                out.append((rule, m))
        return out

    def scan(self, text: TextFile, target: str, ecosystem: str | None = None,
             names: Iterable[str] | None = None) -> list[Hit]:
        wanted = set(names) if names is not None else None
        hits = []
        for i, line in enumerate(text.lines):
            for rule, m in self.match_line(line, target, ecosystem, wanted):
                hits.append(Hit(rule, i, m.start(), m.end(), m.group(0)))
        return hits
