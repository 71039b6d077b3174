"""Skill package model: frontmatter parsing, directory loading and content digests.

A Skill is a directory whose ``SKILL.md`` carries a small frontmatter block
(``name`` and ``description``) followed by a Markdown instructions body.
Everything else in the directory is either a bundled script (classified by
extension) or a supplementary file.

The combined digest is an interop contract.  For every file, sorted by the
UTF-8 bytes of its relative POSIX path, the canonical stream contains::

    len(path) || path || len(hash) || hash

where lengths are 8-byte big-endian unsigned integers, ``path`` is the UTF-8
encoded relative path and ``hash`` is the raw 32-byte SHA-256 of the file.
The combined digest is the SHA-256 of that stream, hex encoded.
"""

from __future__ import annotations

import hashlib
import os
import posixpath
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

SKILL_FILE = "SKILL.md"
MAX_NAME_LENGTH = 64

NAME_RE = re.compile(r"[a-z0-9][a-z0-9-]*")
_KEY_RE = re.compile(r"([A-Za-z_][A-Za-z0-9_.-]*)\s*:(?:\s+(.*)|\s*)$")

SCRIPT_EXTENSIONS: dict[str, str] = {
    ".py": "python",
    ".sh": "shell",
    ".bash": "shell",
    ".js": "node",
    ".mjs": "node",
    ".ts": "node",
    ".ps1": "powershell",
    ".rb": "ruby",
}


# ── Diagnostics and errors ───────────────────────────────────────────────────


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line_start: int
    line_end: int
    byte_start: int
    byte_end: int

    def __post_init__(self) -> None:
        if self.line_start > self.line_end or self.byte_start > self.byte_end:
            raise ValueError(f"inverted span: {self!r}")


@dataclass(frozen=True)
class ParseDiagnostic:
    severity: str  # "error" | "warning"
    message: str
    span: SourceSpan | None = None


class SkillError(Exception):
    """Base class for package load failures.  Carries a ParseDiagnostic."""

    def __init__(self, message: str, span: SourceSpan | None = None):
        super().__init__(message)
        self.diagnostic = ParseDiagnostic("error", message, span)


class FrontmatterError(SkillError):
    pass


class MissingFrontmatter(FrontmatterError):
    pass


class MissingRequiredField(FrontmatterError):
    def __init__(self, field_name: str, span: SourceSpan | None = None):
        super().__init__(f"missing required frontmatter field: {field_name}", span)
        self.field = field_name


class DuplicateKey(FrontmatterError):
    pass


class MalformedYaml(FrontmatterError):
    pass


class InvalidName(FrontmatterError):
    pass


class MissingSkillMd(SkillError):
    pass


class PathEscape(SkillError):
    pass


# ── Text helpers ─────────────────────────────────────────────────────────────


class TextFile:
    """Line view over raw bytes that maps character offsets back to bytes.

    Decoding uses ``surrogateescape`` so that ``encode`` reproduces the
    original bytes exactly, even for invalid UTF-8.
    """

    def __init__(self, path: str, data: bytes, first_line: int = 1, base_byte: int = 0):
        self.path = path
        self.data = data
        self.first_line = first_line
        self.base_byte = base_byte
        self.lines: list[str] = []
        self.offsets: list[int] = []
        for off, raw in _split_lines(data):
            self.offsets.append(base_byte + off)
            self.lines.append(raw.decode("utf-8", "surrogateescape").removesuffix("\r"))

    def line_no(self, index: int) -> int:
        return self.first_line + index

    def byte_offset(self, index: int, col: int) -> int:
        prefix = self.lines[index][:col]
        return self.offsets[index] + len(prefix.encode("utf-8", "surrogateescape"))

    def span(self, index: int, start: int, end: int, end_index: int | None = None) -> SourceSpan:
        end_index = index if end_index is None else end_index
        return SourceSpan(
            self.path,
            self.line_no(index),
            self.line_no(end_index),
            self.byte_offset(index, start),
            self.byte_offset(end_index, end),
        )


def _split_lines(data: bytes) -> list[tuple[int, bytes]]:
    """Return (byte offset, line bytes without terminator) pairs."""
    out = []
    pos = 0
    for raw in data.split(b"\n"):
        out.append((pos, raw))
        pos += len(raw) + 1
    if data.endswith(b"\n"):
        out.pop()
    return out


# ── Frontmatter ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SkillMetadata:
    name: str
    description: str
    extras: tuple[tuple[str, str], ...] = ()

    def extra(self, key: str, default: str | None = None) -> str | None:
        for k, v in self.extras:
            if k == key:
                return v
        return default

    @property
    def extras_map(self) -> dict[str, str]:
        return dict(self.extras)


@dataclass(frozen=True)
class Frontmatter:
    """Result of parsing a SKILL.md document."""

    metadata: SkillMetadata
    body: str
    body_byte: int  # offset of the body within the file
    body_line: int  # 1-based line number of the first body line
    spans: dict[str, SourceSpan] = field(default_factory=dict, compare=False)


def _unquote(value: str, span: SourceSpan) -> str:
    if len(value) >= 2 and value[0] == value[-1] == "'":
        return value[1:-1].replace("''", "'")
    if len(value) >= 2 and value[0] == value[-1] == '"':
        inner = value[1:-1]
        return re.sub(r'\\(["\\nt])', lambda m: {"n": "\n", "t": "\t"}.get(m[1], m[1]), inner)
    if value[:1] in ("'", '"'):
        raise MalformedYaml("unterminated quoted scalar", span)
    return value


def parse_frontmatter_ex(text: str, path: str = SKILL_FILE) -> Frontmatter:
    """Parse SKILL.md text, keeping source spans for each frontmatter value."""
    data = text.encode("utf-8", "surrogateescape")
    lines = _split_lines(data)
    start = 0
    if lines and lines[0][1].startswith(b"\xef\xbb\xbf"):
        lines[0] = (3, lines[0][1][3:])
    if not lines or lines[0][1].rstrip() != b"---":
        raise MissingFrontmatter("SKILL.md must start with a '---' frontmatter delimiter",
                                 SourceSpan(path, 1, 1, 0, 0))
    close = next((i for i in range(1, len(lines)) if lines[i][1].rstrip() == b"---"), None)
    if close is None:
        raise MissingFrontmatter("frontmatter block is not closed by a '---' line",
                                 SourceSpan(path, 1, 1, 0, len(lines[0][1])))

    values: dict[str, str] = {}
    order: list[str] = []
    spans: dict[str, SourceSpan] = {}
    i = start + 1
    while i < close:
        off, raw = lines[i]
        line = raw.decode("utf-8", "surrogateescape").rstrip("\r")
        lspan = SourceSpan(path, i + 1, i + 1, off, off + len(raw))
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            i += 1
            continue
        if line[0] in " \t":
            raise MalformedYaml("unexpected indented line in frontmatter", lspan)
        if stripped.startswith("- "):
            raise MalformedYaml("block sequences are not supported in frontmatter", lspan)
        m = _KEY_RE.match(line.rstrip())
        if not m:
            raise MalformedYaml(f"expected 'key: value', got {stripped[:40]!r}", lspan)
        key, value = m[1], (m[2] or "").strip()
        if key in values:
            raise DuplicateKey(f"duplicate frontmatter key: {key}", lspan)
        if value.startswith(("[", "{", "&", "*", "!")):
            raise MalformedYaml(f"only scalar strings are supported (key {key!r})", lspan)

        # continuation lines: indented, following a key
        j = i + 1
        cont: list[tuple[int, bytes]] = []
        while j < close and lines[j][1][:1] in (b" ", b"\t"):
            cont.append(lines[j])
            j += 1

        vstart = off + len(line[: m.start(2)].encode("utf-8", "surrogateescape")) if m[2] else off + len(raw)
        if value in ("|", ">", "|-", ">-", "|+", ">+"):
            if not cont:
                raise MalformedYaml(f"empty block scalar for key {key!r}", lspan)
            parts = [c.decode("utf-8", "surrogateescape").strip() for _, c in cont]
            value = "\n".join(parts) if value[0] == "|" else " ".join(p for p in parts if p)
            vstart = cont[0][0] + len(cont[0][1]) - len(cont[0][1].lstrip())
        elif cont:
            if not value:
                raise MalformedYaml(f"nested collections are not supported (key {key!r})", lspan)
            for _, c in cont:
                piece = c.decode("utf-8", "surrogateescape").strip()
                if piece:
                    value = f"{value} {piece}"
        vend = (cont[-1][0] + len(cont[-1][1].rstrip())) if cont else off + len(raw.rstrip())
        vline_end = j if cont else i + 1
        vspan = SourceSpan(path, i + 1, vline_end, min(vstart, vend), vend)
        value = _unquote(value, vspan) if not cont else value
        values[key] = value
        order.append(key)
        spans[key] = vspan
        i = j

    for required in ("name", "description"):
        if not values.get(required, "").strip():
            raise MissingRequiredField(required, spans.get(required, SourceSpan(path, 1, close + 1, 0, lines[close][0])))

    name = values["name"].strip()
    if len(name) > MAX_NAME_LENGTH or not NAME_RE.fullmatch(name.lower()):
        raise InvalidName(f"invalid skill name {name!r}: expected [a-z0-9][a-z0-9-]* up to "
                          f"{MAX_NAME_LENGTH} characters", spans["name"])

    extras = tuple((k, values[k]) for k in order if k not in ("name", "description"))
    meta = SkillMetadata(name=name, description=values["description"].strip(), extras=extras)
    body_off = lines[close][0] + len(lines[close][1]) + 1
    body_off = min(body_off, len(data))
    body = data[body_off:].decode("utf-8", "surrogateescape")
    return Frontmatter(meta, body, body_off, close + 2, spans)


def parse_frontmatter(text: str) -> tuple[SkillMetadata, str]:
    """Split SKILL.md text into its metadata and instructions body.

    Only a small, safe subset of YAML is accepted: one ``key: value`` scalar
    per line, optional quoting, folded continuation lines and ``|``/``>``
    block scalars.  Flow and block collections raise :class:`MalformedYaml`.
    """
    fm = parse_frontmatter_ex(text)
    return fm.metadata, fm.body


# ── Package ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class FileEntry:
    path: str
    content: bytes


@dataclass(frozen=True)
class ScriptFile:
    path: str
    content: bytes
    ecosystem: str


@dataclass(frozen=True)
class ContentDigest:
    per_file: tuple[tuple[str, str], ...]
    combined: str

    def file_hash(self, path: str) -> str | None:
        for p, h in self.per_file:
            if p == path:
                return h
        return None


@dataclass(frozen=True)
class SkillPackage:
    root: Path
    metadata: SkillMetadata
    body: str
    supplementary: tuple[FileEntry, ...]
    scripts: tuple[ScriptFile, ...]
    digest: ContentDigest
    skill_md: bytes = field(repr=False, default=b"")
    body_byte: int = 0
    body_line: int = 1
    frontmatter_spans: dict[str, SourceSpan] = field(default_factory=dict, compare=False, repr=False)
    diagnostics: tuple[ParseDiagnostic, ...] = field(default=(), compare=False)

    def files(self) -> dict[str, bytes]:
        """Every loaded file keyed by relative path, SKILL.md included."""
        out = {SKILL_FILE: self.skill_md}
        out.update((f.path, f.content) for f in self.supplementary)
        out.update((s.path, s.content) for s in self.scripts)
        return out

    def body_view(self) -> TextFile:
        return TextFile(SKILL_FILE, self.skill_md[self.body_byte:], self.body_line, self.body_byte)


def classify(path: str, extensions: dict[str, str] | None = None) -> str | None:
    """Ecosystem tag for a script path, or None for supplementary files."""
    ext = posixpath.splitext(path)[1].lower()
    return (extensions or SCRIPT_EXTENSIONS).get(ext)


def file_sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def combine_digest(per_file: Iterable[tuple[str, str]]) -> str:
    h = hashlib.sha256()
    for path, hexhash in per_file:
        p = path.encode("utf-8")
        d = bytes.fromhex(hexhash)
        h.update(struct.pack(">Q", len(p)))
        h.update(p)
        h.update(struct.pack(">Q", len(d)))
        h.update(d)
    return h.hexdigest()


def digest_files(files: dict[str, bytes]) -> ContentDigest:
    per_file = tuple(sorted(((p, file_sha256(b)) for p, b in files.items()),
                            key=lambda e: e[0].encode("utf-8")))
    return ContentDigest(per_file, combine_digest(per_file))


def canonical_digest(pkg: SkillPackage) -> ContentDigest:
    """Digest over SKILL.md, supplementary files and scripts."""
    return digest_files(pkg.files())


Lister = Callable[[Path], Iterable[str]]


def walk_files(root: Path, warnings: list[ParseDiagnostic] | None = None) -> list[str]:
    """Relative POSIX paths of regular files under root.  Symlinks are skipped."""
    out: list[str] = []
    stack = [(root, "")]
    while stack:
        directory, prefix = stack.pop()
        with os.scandir(directory) as it:
            for entry in it:
                rel = f"{prefix}{entry.name}"
                if entry.is_symlink():
                    if warnings is not None:
                        warnings.append(ParseDiagnostic("warning", f"symbolic link skipped: {rel}",
                                                        SourceSpan(rel, 1, 1, 0, 0)))
                    continue
                if entry.is_dir(follow_symlinks=False):
                    stack.append((Path(entry.path), rel + "/"))
                elif entry.is_file(follow_symlinks=False):
                    out.append(rel)
    return out


def safe_relpath(rel: str) -> str:
    """Normalize a relative path, raising PathEscape if it leaves the root."""
    rel = rel.replace("\\", "/")
    if rel.startswith("/") or re.match(r"^[A-Za-z]:", rel) or rel.startswith("~"):
        raise PathEscape(f"absolute path in package: {rel}", SourceSpan(rel, 1, 1, 0, 0))
    parts = rel.split("/")
    if ".." in parts:
        raise PathEscape(f"path escapes package root: {rel}", SourceSpan(rel, 1, 1, 0, 0))
    norm = posixpath.normpath(rel)
    if norm in (".", "") or norm.startswith("../"):
        raise PathEscape(f"invalid package path: {rel}", SourceSpan(rel, 1, 1, 0, 0))
    return norm


def read_tree(root: str | os.PathLike, lister: Lister | None = None,
              warnings: list[ParseDiagnostic] | None = None) -> dict[str, bytes]:
    """Read every file of a directory into memory, validating each path first."""
    root = Path(root)
    if not root.is_dir():
        raise MissingSkillMd(f"not a directory: {root}")
    listing = lister(root) if lister is not None else walk_files(root, warnings)
    rels = [safe_relpath(r) for r in listing]
    resolved_root = root.resolve()
    files: dict[str, bytes] = {}
    for rel in rels:
        target = root / rel
        if target.is_symlink():
            if warnings is not None:
                warnings.append(ParseDiagnostic("warning", f"symbolic link skipped: {rel}"))
            continue
        if not target.resolve().is_relative_to(resolved_root):
            raise PathEscape(f"path escapes package root: {rel}", SourceSpan(rel, 1, 1, 0, 0))
        files[rel] = target.read_bytes()
    return files


def digest_tree(root: str | os.PathLike, lister: Lister | None = None) -> ContentDigest:
    """Digest a directory without parsing SKILL.md (used for tamper checks)."""
    return digest_files(read_tree(root, lister))


def load_package(root: str | os.PathLike, lister: Lister | None = None,
                 extensions: dict[str, str] | None = None) -> SkillPackage:
    """Load a Skill directory.

    ``lister`` replaces filesystem enumeration; it must yield paths relative
    to ``root``.  Every path is validated before anything is read.
    """
    root = Path(root)
    warnings: list[ParseDiagnostic] = []
    if not root.is_dir():
        raise MissingSkillMd(f"{root} is not a directory")
    files = read_tree(root, lister, warnings)
    if SKILL_FILE not in files:
        raise MissingSkillMd(f"{SKILL_FILE} not found in {root}")
    raw = files[SKILL_FILE]
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedYaml(f"{SKILL_FILE} is not valid UTF-8: {exc.reason}",
                            SourceSpan(SKILL_FILE, 1, 1, exc.start, exc.end)) from None
    fm = parse_frontmatter_ex(text)

    supplementary: list[FileEntry] = []
    scripts: list[ScriptFile] = []
    for rel in sorted(files, key=lambda p: p.encode("utf-8")):
        if rel == SKILL_FILE:
            continue
        eco = classify(rel, extensions)
        if eco is None:
            supplementary.append(FileEntry(rel, files[rel]))
        else:
            scripts.append(ScriptFile(rel, files[rel], eco))

    return SkillPackage(
        root=root,
        metadata=fm.metadata,
        body=fm.body,
        supplementary=tuple(supplementary),
        scripts=tuple(scripts),
        digest=digest_files(files),
        skill_md=raw,
        body_byte=fm.body_byte,
        body_line=fm.body_line,
        frontmatter_spans=fm.spans,
        diagnostics=tuple(warnings),
    )
