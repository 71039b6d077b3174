"""Dependency extraction and pinning classification.

Dependencies are pulled from four places: PEP 723 inline metadata blocks in
Python scripts, ``requirements*.txt`` files, ``package.json`` dependency maps
and install commands (``pip install``, ``npm install``, ``npx``,
``uv run --with`` and a few system package managers) written in scripts or
in the instructions body.

Pinning is decided by grammar alone, never by asking a registry: a
dependency is Pinned only when its constraint names exactly one version.
"""

from __future__ import annotations

import json
import posixpath
import re
from dataclasses import dataclass
from typing import Iterator

from packaging.requirements import InvalidRequirement, Requirement

from .findings import Confidence, DetectorId, Finding, Severity, make_finding
from .model import SKILL_FILE, ParseDiagnostic, SkillError, SkillPackage, SourceSpan, TextFile

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

PYPI = "python-pypi"
NPM = "node-npm"
SHELL_TOOL = "shell-tool"
ECOSYSTEMS = (PYPI, NPM, SHELL_TOOL)

PEP723 = "pep723-block"
REQUIREMENTS = "requirements-file"
MANIFEST = "package-manifest"
INLINE = "inline-install-command"
BODY_COMMAND = "body-command"
ORIGINS = (PEP723, REQUIREMENTS, MANIFEST, INLINE, BODY_COMMAND)

# origins resolved automatically at run time by the agent's tooling
RUNTIME_ORIGINS = frozenset({PEP723, INLINE, BODY_COMMAND})

LOCKFILES = {
    PYPI: frozenset({"uv.lock", "poetry.lock", "Pipfile.lock", "pylock.toml", "pdm.lock"}),
    NPM: frozenset({"package-lock.json", "npm-shrinkwrap.json", "yarn.lock", "pnpm-lock.yaml", "bun.lockb"}),
    SHELL_TOOL: frozenset(),
}

NPM_DEP_KEYS = ("dependencies", "devDependencies", "optionalDependencies", "peerDependencies")


class MalformedPep723(SkillError):
    pass


@dataclass(frozen=True)
class DependencyRef:
    ecosystem: str
    name: str
    constraint: str
    span: SourceSpan
    origin: str
    text: str = ""  # verbatim declaration at span

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("dependency name must be non-empty")
        if self.ecosystem not in ECOSYSTEMS:
            raise ValueError(f"unknown ecosystem {self.ecosystem!r}")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")


# ── Pin status ───────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Pinned:
    version: str

    def __str__(self) -> str:
        return f"pinned to {self.version}"


@dataclass(frozen=True)
class Unpinned:
    constraint: str

    def __str__(self) -> str:
        return f"unpinned ({self.constraint})"


@dataclass(frozen=True)
class Floating:
    def __str__(self) -> str:
        return "floating (no version constraint)"


PinStatus = Pinned | Unpinned | Floating

_PY_EXACT = re.compile(r"^\s*(===?)\s*([^\s,;*]+)\s*$")
_NPM_EXACT = re.compile(
    r"^\s*[=v]?\s*(\d+\.\d+\.\d+(?:-[0-9A-Za-z-]+(?:\.[0-9A-Za-z-]+)*)?(?:\+[0-9A-Za-z-]+(?:\.[0-9A-Za-z-]+)*)?)\s*$")
_NPM_FLOATING = {"", "*", "x", "X", "latest"}


def pin_status(ecosystem: str, constraint: str) -> PinStatus:
    """Classify a raw constraint string by the exact-pin grammar of its ecosystem."""
    c = constraint.strip()
    if ecosystem == SHELL_TOOL:
        return Floating()
    if ecosystem == NPM:
        if c in _NPM_FLOATING:
            return Floating()
        m = _NPM_EXACT.match(c)
        return Pinned(m[1]) if m else Unpinned(c)
    if not c:
        return Floating()
    if "," in c:
        return Unpinned(c)
    m = _PY_EXACT.match(c)
    if m and (m[1] == "===" or not m[2].endswith(".*")):
        return Pinned(m[2])
    return Unpinned(c)


def lockfiles_present(pkg: SkillPackage) -> set[str]:
    """Ecosystems for which the package ships a lockfile."""
    names = {posixpath.basename(p) for p in pkg.files()}
    return {eco for eco, locks in LOCKFILES.items() if names & locks}


def check_pinning(dep: DependencyRef, lockfile_present: bool = False) -> tuple[PinStatus, Finding | None]:
    """Pin status plus a T4.2 finding for anything that is not Pinned."""
    status = pin_status(dep.ecosystem, dep.constraint)
    if isinstance(status, Pinned):
        return status, None
    severity = Severity.HIGH if dep.origin in RUNTIME_ORIGINS else Severity.MEDIUM
    note = ""
    if lockfile_present:
        severity = severity.lowered()
        note = "; a lockfile is present but the runtime may not honor it"
    msg = f"{dep.ecosystem} dependency '{dep.name}' is {status} via {dep.origin}{note}"
    return status, make_finding(DetectorId.T4_2, severity, Confidence.LIKELY, dep.span,
                                dep.text or dep.name, msg)


# ── Python requirement strings ───────────────────────────────────────────────

_PY_NAME = re.compile(r"^[A-Za-z0-9](?:[A-Za-z0-9._-]*[A-Za-z0-9])?")


def parse_python_requirement(text: str) -> tuple[str, str] | None:
    """(name, constraint) for a PEP 508 string, or None when unparsable."""
    try:
        req = Requirement(text)
    except InvalidRequirement:
        return None
    if req.url:
        return req.name, f"@ {req.url}"
    return req.name, str(req.specifier)


# ── PEP 723 blocks ───────────────────────────────────────────────────────────

_PEP723_OPEN = re.compile(r"^# /// (?P<type>[a-zA-Z0-9-]+)$")
_PEP723_CLOSE = "# ///"


@dataclass(frozen=True)
class Pep723Block:
    type: str
    first: int  # 0-based index of the opening line
    last: int  # 0-based index of the closing line
    content: str


def find_pep723_blocks(tf: TextFile) -> list[Pep723Block]:
    """Locate ``# /// TYPE`` ... ``# ///`` blocks; raises MalformedPep723 if unbalanced."""
    blocks = []
    lines = tf.lines
    i = 0
    while i < len(lines):
        m = _PEP723_OPEN.match(lines[i].rstrip())
        if not m:
            i += 1
            continue
        close = None
        j = i + 1
        while j < len(lines):
            line = lines[j].rstrip()
            if not (line == "#" or line.startswith("# ")):
                break
            if line == _PEP723_CLOSE:
                close = j  # the last delimiter of the comment run closes the block
            j += 1
        if close is None:
            raise MalformedPep723(f"'# /// {m['type']}' block is not closed by '# ///'",
                                  tf.span(i, 0, len(lines[i])))
        content = [ln[2:] for ln in (lines[k].rstrip() for k in range(i + 1, close))]
        blocks.append(Pep723Block(m["type"], i, close, "\n".join(content)))
        i = close + 1
    return blocks


def _locate_strings(tf: TextFile, first: int, last: int, values: list[str]) -> Iterator[tuple[int, int, int]]:
    """Yield (line index, start, end) of each quoted value, in order of appearance."""
    cursor = (first, 0)
    for value in values:
        found = None
        for li in range(cursor[0], last + 1):
            line = tf.lines[li]
            col = cursor[1] if li == cursor[0] else 0
            for q in ('"', "'"):
                k = line.find(q + value + q, col)
                if k != -1 and (found is None or (li, k) < (found[0], found[1] - 1)):
                    found = (li, k + 1, k + 1 + len(value))
            if found is not None:
                break
        if found is None:
            yield (first, 0, len(tf.lines[first]))
            continue
        cursor = (found[0], found[2] + 1)
        yield found


def pep723_dependencies(tf: TextFile) -> list[DependencyRef]:
    blocks = [b for b in find_pep723_blocks(tf) if b.type == "script"]
    if len(blocks) > 1:
        raise MalformedPep723("multiple '# /// script' blocks", tf.span(blocks[1].first, 0, 0))
    if not blocks:
        return []
    block = blocks[0]
    try:
        meta = tomllib.loads(block.content)
    except tomllib.TOMLDecodeError as exc:
        raise MalformedPep723(f"invalid TOML in script metadata: {exc}",
                              tf.span(block.first, 0, len(tf.lines[block.first]))) from None
    raw = meta.get("dependencies", [])
    if not isinstance(raw, list) or not all(isinstance(d, str) for d in raw):
        raise MalformedPep723("'dependencies' must be a list of strings",
                              tf.span(block.first, 0, len(tf.lines[block.first])))
    out = []
    for spec, (li, s, e) in zip(raw, _locate_strings(tf, block.first, block.last, raw)):
        parsed = parse_python_requirement(spec)
        if parsed is None:
            continue
        name, constraint = parsed
        out.append(DependencyRef(PYPI, name, constraint, tf.span(li, s, e), PEP723, tf.lines[li][s:e]))
    return out


# ── requirements files and package.json ─────────────────────────────────────

_REQ_FILE = re.compile(r"^requirements[\w.-]*\.txt$", re.IGNORECASE)


def is_requirements_file(path: str) -> bool:
    return bool(_REQ_FILE.match(posixpath.basename(path)))


def requirements_dependencies(tf: TextFile) -> list[DependencyRef]:
    out = []
    for i, line in enumerate(tf.lines):
        text = re.split(r"(?:^|\s)#", line, maxsplit=1)[0].rstrip()
        stripped = text.lstrip()
        if not stripped or stripped.startswith("-"):
            continue
        parsed = parse_python_requirement(stripped)
        if parsed is None:
            continue
        name, constraint = parsed
        start = len(text) - len(stripped)
        out.append(DependencyRef(PYPI, name, constraint, tf.span(i, start, len(text)), REQUIREMENTS, stripped))
    return out


def package_json_dependencies(tf: TextFile) -> list[DependencyRef]:
    try:
        doc = json.loads(tf.data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return []
    if not isinstance(doc, dict):
        return []
    out = []
    used: set[tuple[int, int]] = set()
    for key in NPM_DEP_KEYS:
        deps = doc.get(key)
        if not isinstance(deps, dict):
            continue
        for name, constraint in deps.items():
            if not isinstance(constraint, str) or not name:
                continue
            rx = re.compile(re.escape(json.dumps(name)) + r"\s*:\s*" + re.escape(json.dumps(constraint)))
            loc = None
            for i, line in enumerate(tf.lines):
                for m in rx.finditer(line):
                    if (i, m.start()) not in used:
                        loc = (i, m.start(), m.end())
                        break
                if loc:
                    break
            if loc is None:
                continue
            used.add(loc[:2])
            i, s, e = loc
            out.append(DependencyRef(NPM, name, constraint, tf.span(i, s, e), MANIFEST, tf.lines[i][s:e]))
    return out


# ── install commands ─────────────────────────────────────────────────────────

_CMD = re.compile(
    r"(?<![\w./-])(?:"
    r"(?P<pip>(?:python3?\s+-m\s+)?pip3?\s+install|uv\s+pip\s+install|uv\s+add|poetry\s+add|pipx\s+(?:install|run))"
    r"|(?P<uvrun>uv\s+run|uv\s+tool\s+run)"
    r"|(?P<uvx>uvx)"
    r"|(?P<npm>npm\s+(?:install|i|add)|yarn\s+(?:global\s+)?add|pnpm\s+(?:add|install|i))"
    r"|(?P<npx>npx|pnpm\s+dlx|bunx)"
    r"|(?P<tool>brew\s+install|apt(?:-get)?\s+(?:-\S+\s+)*install|go\s+install|cargo\s+install)"
    r")(?=\s|$)")
_PROMPT = re.compile(r"(?: {4,}|\t|\s*\$\s+)(?:sudo\s+)?")
_TOKEN = re.compile(r"\s*(?:\"([^\"\n]*)\"|'([^'\n]*)'|([^\s;&|<>`'\"()]+))")

_PIP_VALUE_FLAGS = {"-r", "--requirement", "-c", "--constraint", "-e", "--editable", "-i", "--index-url",
                    "--extra-index-url", "-f", "--find-links", "-t", "--target", "--python", "--prefix",
                    "--root", "--platform", "--python-version", "--index", "--group", "--optional"}
_UV_RUN_VALUE_FLAGS = {"--python", "-p", "--project", "--directory", "--env-file", "--index", "--from",
                       "--with-requirements", "--with-editable", "--extra", "--group"}
_NPM_VALUE_FLAGS = {"--registry", "--prefix", "-w", "--workspace", "--cache", "--tag"}
_NPM_NAME = re.compile(r"^(?:@[a-z0-9][a-z0-9._~-]*/)?[a-z0-9][a-z0-9._~-]*$", re.IGNORECASE)
_TOOL_NAME = re.compile(r"^[A-Za-z0-9][\w.+/@-]*$")
_NOT_A_PACKAGE = re.compile(r"^(?:\.|~|\$|/)|://|\.(?:py|txt|whl|tar\.gz|tgz|zip|toml|cfg|json|lock)$",
                            re.IGNORECASE)


@dataclass(frozen=True)
class _Token:
    text: str
    start: int
    end: int


def _tokens(line: str, pos: int, stop: int) -> list[_Token]:
    out = []
    while pos < stop:
        m = _TOKEN.match(line, pos, stop)
        if not m or m.end() == pos:
            break
        grp = 1 if m.group(1) is not None else 2 if m.group(2) is not None else 3
        out.append(_Token(m.group(grp), m.start(grp), m.end(grp)))
        pos = m.end()
    return out


def _split_at(token: str) -> tuple[str, str]:
    """'name@ver' -> (name, ver); scoped npm names keep their leading '@'."""
    k = token.find("@", 1)
    return (token, "") if k == -1 else (token[:k], token[k + 1:])


def _py_ref(tok: _Token, allow_at: bool = False) -> tuple[str, str] | None:
    text = tok.text
    if not text or _NOT_A_PACKAGE.search(text) or not _PY_NAME.match(text):
        return None
    if allow_at and "@" in text and " @ " not in text:
        name, ver = _split_at(text)
        text = f"{name}=={ver}" if ver and ver != "latest" else name
    return parse_python_requirement(text)


def _npm_ref(tok: _Token) -> tuple[str, str] | None:
    if not tok.text or _NOT_A_PACKAGE.search(tok.text):
        return None
    name, ver = _split_at(tok.text)
    if not _NPM_NAME.match(name):
        return None
    return name, ver


def _command_refs(kind: str, toks: list[_Token]) -> list[tuple[str, str, str, _Token]]:
    """(ecosystem, name, constraint, token) for each package named by a command."""
    out = []

    def add_py(tok: _Token, allow_at: bool = False) -> None:
        for piece in _comma_pieces(tok):
            ref = _py_ref(piece, allow_at)
            if ref:
                out.append((PYPI, ref[0], ref[1], piece))

    i = 0
    from_given = False
    if kind == "pip":
        while i < len(toks):
            t = toks[i].text
            if t.startswith("-"):
                i += 2 if t in _PIP_VALUE_FLAGS else 1
                continue
            add_py(toks[i])
            i += 1
    elif kind in ("uvrun", "uvx"):
        while i < len(toks):
            t = toks[i].text
            if t in ("--with", "-w") and i + 1 < len(toks):
                add_py(toks[i + 1], allow_at=True)
                i += 2
            elif t.startswith("--with="):
                tok = toks[i]
                add_py(_Token(t[7:], tok.start + 7, tok.end), allow_at=True)
                i += 1
            elif kind == "uvx" and t == "--from" and i + 1 < len(toks):
                add_py(toks[i + 1], allow_at=True)
                from_given = True
                i += 2
            elif t.startswith("-"):
                i += 2 if t in _UV_RUN_VALUE_FLAGS else 1
            else:
                if kind == "uvx" and not from_given:
                    add_py(toks[i], allow_at=True)
                break
    elif kind == "npm":
        while i < len(toks):
            t = toks[i].text
            if t.startswith("-"):
                i += 2 if t in _NPM_VALUE_FLAGS else 1
                continue
            ref = _npm_ref(toks[i])
            if ref:
                out.append((NPM, ref[0], ref[1], toks[i]))
            i += 1
    elif kind == "npx":
        explicit = False
        while i < len(toks):
            t = toks[i].text
            if t in ("-p", "--package") and i + 1 < len(toks):
                ref = _npm_ref(toks[i + 1])
                if ref:
                    out.append((NPM, ref[0], ref[1], toks[i + 1]))
                explicit = True
                i += 2
            elif t.startswith("--package="):
                tok = _Token(t[10:], toks[i].start + 10, toks[i].end)
                ref = _npm_ref(tok)
                if ref:
                    out.append((NPM, ref[0], ref[1], tok))
                explicit = True
                i += 1
            elif t.startswith("-"):
                i += 1
            else:
                if not explicit:
                    ref = _npm_ref(toks[i])
                    if ref:
                        out.append((NPM, ref[0], ref[1], toks[i]))
                break
    elif kind == "tool":
        for tok in toks:
            if tok.text.startswith("-"):
                continue
            if _NOT_A_PACKAGE.search(tok.text) or not _TOOL_NAME.match(tok.text):
                continue
            name, ver = _split_at(tok.text)
            out.append((SHELL_TOOL, name, ver, tok))
    return out


def _comma_pieces(tok: _Token) -> list[_Token]:
    """Split 'a,b>=1,<2' into requirements; commas before an operator stay inside a specifier."""
    pieces, pos = [], tok.start
    for part in re.split(r",(?=[A-Za-z0-9])", tok.text):
        if part:
            pieces.append(_Token(part, pos, pos + len(part)))
        pos += len(part) + 1
    return pieces


def _code_regions(lines: list[str], prose: bool) -> Iterator[tuple[int, int, int]]:
    """(line index, start, end) regions where commands are looked for.

    Scripts are searched in full.  In Markdown only fenced blocks, inline
    code spans, indented code lines and ``$``-prompted lines count, so that
    prose such as "pip install the tool" is not parsed.
    """
    fence = False
    for i, line in enumerate(lines):
        if not prose:
            yield i, 0, len(line)
            continue
        stripped = line.lstrip()
        if stripped.startswith(("```", "~~~")):
            fence = not fence
            continue
        prompt = _PROMPT.match(line)
        if fence or (prompt and _CMD.match(line, prompt.end())):
            yield i, 0, len(line)
            continue
        for m in re.finditer(r"`([^`\n]+)`", line):
            yield i, m.start(1), m.end(1)


def command_dependencies(tf: TextFile, origin: str) -> list[DependencyRef]:
    out = []
    seen: set[tuple[int, int]] = set()
    for i, start, stop in _code_regions(tf.lines, prose=origin == BODY_COMMAND):
        line = tf.lines[i]
        for m in _CMD.finditer(line, start, stop):
            kind = m.lastgroup
            for eco, name, constraint, tok in _command_refs(kind, _tokens(line, m.end(), stop)):
                if (i, tok.start) in seen:
                    continue
                seen.add((i, tok.start))
                out.append(DependencyRef(eco, name, constraint, tf.span(i, tok.start, tok.end), origin,
                                         line[tok.start:tok.end]))
    return out


# ── package level ────────────────────────────────────────────────────────────


def extract_dependencies(pkg: SkillPackage, diagnostics: list[ParseDiagnostic] | None = None) -> list[DependencyRef]:
    """Every dependency declared anywhere in the package, in file order."""
    deps: list[DependencyRef] = []
    deps += command_dependencies(pkg.body_view(), BODY_COMMAND)
    for f in pkg.supplementary:
        tf = TextFile(f.path, f.content)
        base = posixpath.basename(f.path)
        if is_requirements_file(f.path):
            deps += requirements_dependencies(tf)
        elif base == "package.json":
            deps += package_json_dependencies(tf)
        elif posixpath.splitext(base)[1].lower() in (".md", ".markdown", ".mdx"):
            deps += command_dependencies(tf, BODY_COMMAND)
    for s in pkg.scripts:
        tf = TextFile(s.path, s.content)
        if s.ecosystem == "python":
            try:
                deps += pep723_dependencies(tf)
            except MalformedPep723 as exc:
                if diagnostics is not None:
                    diagnostics.append(ParseDiagnostic("warning", str(exc), exc.diagnostic.span))
        deps += command_dependencies(tf, INLINE)
    order = {p: k for k, p in enumerate(sorted(pkg.files(), key=lambda p: p.encode("utf-8")))}
    deps.sort(key=lambda d: (order.get(d.span.file, len(order)), d.span.byte_start))
    return deps


def dependency_findings(pkg: SkillPackage, deps: list[DependencyRef]) -> list[Finding]:
    locked = lockfiles_present(pkg)
    out = []
    for dep in deps:
        _, finding = check_pinning(dep, dep.ecosystem in locked)
        if finding is not None:
            out.append(finding)
    return out


__all__ = [
    "DependencyRef", "Pinned", "Unpinned", "Floating", "PinStatus", "MalformedPep723",
    "extract_dependencies", "check_pinning", "pin_status", "dependency_findings", "lockfiles_present",
    "PYPI", "NPM", "SHELL_TOOL", "SKILL_FILE",
]
