"""Typosquat and description-shadowing checks against an index of known Skills."""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

from .findings import Confidence, DetectorId, Finding, Severity, make_finding
from .model import SKILL_FILE, SkillMetadata, SourceSpan
from .policy import PolicyConfig

SEPARATOR = "-"
CONFUSABLES = (("0", "o"), ("1", "l"), ("5", "s"), ("rn", "m"))

# Short English function words; they carry no selection signal.
DEFAULT_STOPWORDS = frozenset("""
a an and are as at be by for from has have if in into is it its of on or that the this to use used
using when where which while will with you your
""".split())


class IndexFormatError(ValueError):
    """Raised for malformed index documents."""


# ── index ────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SkillIndexEntry:
    name: str
    publisher: str
    popularity: int
    description: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            raise IndexFormatError("index entry name must be non-empty")
        if isinstance(self.popularity, bool) or not isinstance(self.popularity, int) or self.popularity < 0:
            raise IndexFormatError(f"popularity must be a non-negative integer ({self.name})")


@dataclass(frozen=True)
class SkillIndex:
    entries: tuple[SkillIndexEntry, ...] = ()

    def __post_init__(self) -> None:
        seen = set()
        for e in self.entries:
            key = (e.publisher, e.name)
            if key in seen:
                raise IndexFormatError(f"duplicate index entry {e.name!r} for publisher {e.publisher!r}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def parse_index(text: str) -> SkillIndex:
    """One JSON object per line: name, publisher, popularity, description."""
    entries = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IndexFormatError(f"line {n}: {exc}") from None
        if not isinstance(obj, dict):
            raise IndexFormatError(f"line {n}: expected a JSON object")
        try:
            entries.append(SkillIndexEntry(str(obj["name"]), str(obj.get("publisher", "")),
                                           obj.get("popularity", 0), str(obj.get("description", ""))))
        except KeyError as exc:
            raise IndexFormatError(f"line {n}: missing field {exc}") from None
    return SkillIndex(tuple(entries))


def load_index(path: str | os.PathLike) -> SkillIndex:
    return parse_index(Path(path).read_text(encoding="utf-8"))


# ── normalization and distance ───────────────────────────────────────────────


def normalize_with_trace(name: str) -> tuple[str, list[str]]:
    """Canonical form of a name plus the list of transforms that changed it."""
    trace = []
    out = name.lower()
    if out != name:
        trace.append("lowercase")
    sep = re.sub(r"[-_.]+", SEPARATOR, out)
    if sep != out:
        trace.append("separators")
        out = sep
    for src, dst in CONFUSABLES:
        if src in out:
            out = out.replace(src, dst)
            trace.append(f"{src}->{dst}")
    return out, trace


def normalize_name(name: str) -> str:
    return normalize_with_trace(name)[0]


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit insert, delete and substitute costs (two-row DP)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def normalized_distance(a: str, b: str) -> float:
    longest = max(len(a), len(b))
    return levenshtein(a, b) / longest if longest else 0.0


@dataclass(frozen=True)
class SimilarityVerdict:
    entry: SkillIndexEntry
    distance: float
    raw_distance: int
    trace: tuple[str, ...] = field(default=())


def _publisher_differs(candidate: str | None, entry: SkillIndexEntry) -> bool:
    # An unknown candidate publisher cannot prove self-publication.
    return candidate is None or candidate != entry.publisher


def check_name(candidate: SkillMetadata, publisher: str | None, index: SkillIndex,
               policy: PolicyConfig | None = None, span: SourceSpan | None = None,
               evidence: str | None = None) -> list[tuple[SimilarityVerdict, Finding]]:
    """Index entries the candidate name is confusable with (T1.1)."""
    policy = policy or PolicyConfig()
    cand, cand_trace = normalize_with_trace(candidate.name)
    span = span or SourceSpan(SKILL_FILE, 1, 1, 0, 0)
    out = []
    for entry in index:
        if entry.popularity < policy.popularity_floor or not _publisher_differs(publisher, entry):
            continue
        other, other_trace = normalize_with_trace(entry.name)
        raw = levenshtein(cand, other)
        longest = max(len(cand), len(other))
        dist = raw / longest if longest else 0.0
        if dist > policy.typosquat_threshold:
            continue
        trace = tuple(f"candidate:{t}" for t in cand_trace) + tuple(f"indexed:{t}" for t in other_trace)
        verdict = SimilarityVerdict(entry, dist, raw, trace)
        if raw == 0:
            severity = Severity.CRITICAL
            msg = (f"name normalizes to the same form as popular skill {entry.name!r} "
                   f"by {entry.publisher!r} ({entry.popularity} installs)")
        else:
            severity = Severity.HIGH
            msg = (f"name is {raw} edit(s) from popular skill {entry.name!r} by {entry.publisher!r} "
                   f"(normalized distance {dist:.3f}, {entry.popularity} installs)")
        finding = make_finding(DetectorId.T1_1, severity, Confidence.LIKELY, span,
                               evidence if evidence is not None else candidate.name, msg)
        out.append((verdict, finding))
    return out


# ── description shadowing ────────────────────────────────────────────────────


def words(text: str, stopwords=DEFAULT_STOPWORDS) -> set[str]:
    return {w for w in re.findall(r"[a-z0-9]+", text.lower()) if w not in stopwords}


def shadow_score(a: str, b: str, stopwords=DEFAULT_STOPWORDS) -> float:
    """Jaccard similarity of the two descriptions' word sets."""
    wa, wb = words(a, stopwords), words(b, stopwords)
    if not wa and not wb:
        return 1.0
    return len(wa & wb) / len(wa | wb)


def check_shadowing(candidate: SkillMetadata, publisher: str | None, index: SkillIndex,
                    policy: PolicyConfig | None = None, popularity: int = 0,
                    span: SourceSpan | None = None, evidence: str | None = None) -> list[Finding]:
    """Info findings for descriptions that closely copy a more popular entry."""
    policy = policy or PolicyConfig()
    span = span or SourceSpan(SKILL_FILE, 1, 1, 0, 0)
    out = []
    for entry in index:
        if entry.popularity <= popularity:
            continue
        if entry.name == candidate.name and not _publisher_differs(publisher, entry):
            continue
        score = shadow_score(candidate.description, entry.description)
        if score > policy.shadow_threshold:
            out.append(make_finding(
                DetectorId.T1_1, Severity.INFO, Confidence.HEURISTIC, span,
                evidence if evidence is not None else candidate.description,
                f"description overlaps {score:.2f} with more popular skill {entry.name!r}; "
                f"may be positioned to win selection"))
    return out
