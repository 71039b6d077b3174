"""Package existence checks against registries (hallucinated dependencies).

Two modes: ``fixture`` answers from a local list of known names and never
touches the network; ``live`` issues one metadata GET per (ecosystem, name)
and caches the verdict.  Only an HTTP 404 (or absence from the fixture) is
treated as Missing.  Every transport problem, odd status code or garbled
body becomes Unknown, because a false Missing would accuse a benign Skill.
"""

from __future__ import annotations

import json
import re
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .deps import NPM, PYPI, SHELL_TOOL, DependencyRef
from .findings import Confidence, DetectorId, Finding, Severity, make_finding

DEFAULT_ENDPOINTS = {
    PYPI: "https://pypi.org/pypi/{name}/json",
    NPM: "https://registry.npmjs.org/{name}",
}
USER_AGENT = "skillguard/0.1 (+existence check)"

Transport = Callable[[str, float], tuple[int, bytes]]


# ── verdicts ─────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Exists:
    first_published: str | None = None

    def __str__(self) -> str:
        return "exists" + (f" (first published {self.first_published})" if self.first_published else "")


@dataclass(frozen=True)
class Missing:
    def __str__(self) -> str:
        return "missing"


@dataclass(frozen=True)
class Unknown:
    reason: str

    def __str__(self) -> str:
        return f"unknown ({self.reason})"


RegistryVerdict = Exists | Missing | Unknown


# ── transport ────────────────────────────────────────────────────────────────


def urllib_transport(url: str, timeout: float) -> tuple[int, bytes]:
    req = urllib.request.Request(url, headers={"User-Agent": USER_AGENT, "Accept": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, b""
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, TimeoutError) or "timed out" in str(exc.reason):
            raise TimeoutError(str(exc.reason)) from None
        raise


class TokenBucket:
    """Simple token bucket; ``acquire`` blocks until a token is available."""

    def __init__(self, rate: float, capacity: float | None = None,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self.tokens = self.capacity
        self.clock = clock
        self.sleep = sleep
        self.stamp = clock()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self.lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.stamp) * self.rate)
                self.stamp = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            self.sleep(wait)


# ── source ───────────────────────────────────────────────────────────────────


def canonical_name(ecosystem: str, name: str) -> str:
    if ecosystem == PYPI:
        return re.sub(r"[-_.]+", "-", name).lower()
    if ecosystem == NPM:
        return name.lower()
    return name


def parse_fixture(text: str) -> dict[str, frozenset[str]]:
    """Fixture document: one ``ecosystem name`` pair per line, ``#`` comments."""
    out: dict[str, set[str]] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"registry fixture line {n}: expected 'ecosystem name'")
        eco, name = parts
        out.setdefault(eco, set()).add(canonical_name(eco, name))
    return {k: frozenset(v) for k, v in out.items()}


@dataclass
class RegistrySource:
    mode: str = "fixture"
    endpoints: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_ENDPOINTS))
    fixture: dict[str, frozenset[str]] = field(default_factory=dict)
    ttl: float = 3600.0
    timeout_ms: int = 5000
    max_parallel: int = 8
    rate: float = 5.0
    transport: Transport = urllib_transport
    clock: Callable[[], float] = time.monotonic

    def __post_init__(self) -> None:
        if self.mode not in ("fixture", "live"):
            raise ValueError(f"registry mode must be 'fixture' or 'live', got {self.mode!r}")
        self.fixture = {k: frozenset(canonical_name(k, n) for n in v) for k, v in self.fixture.items()}
        self._cache: dict[tuple[str, str], tuple[RegistryVerdict, float]] = {}
        self._inflight: dict[tuple[str, str], Future] = {}
        self._lock = threading.Lock()
        self._buckets: dict[str, TokenBucket] = {}
        self.requests = 0  # network requests issued, for tests and stats

    @classmethod
    def from_fixture_text(cls, text: str, **kw) -> "RegistrySource":
        return cls(mode="fixture", fixture=parse_fixture(text), **kw)

    def url_for(self, ecosystem: str, name: str) -> str | None:
        template = self.endpoints.get(ecosystem)
        if template is None:
            return None
        quoted = urllib.parse.quote(name, safe="@")
        if "{name}" in template:
            return template.replace("{name}", quoted)
        return template.rstrip("/") + "/" + quoted

    def _bucket(self, ecosystem: str) -> TokenBucket:
        with self._lock:
            if ecosystem not in self._buckets:
                self._buckets[ecosystem] = TokenBucket(self.rate, clock=self.clock)
            return self._buckets[ecosystem]

    def lookup(self, ecosystem: str, name: str) -> RegistryVerdict:
        if ecosystem == SHELL_TOOL:
            return Unknown("unsupported")
        key = (ecosystem, canonical_name(ecosystem, name))
        if self.mode == "fixture":
            known = self.fixture.get(ecosystem)
            if known is None:
                return Unknown("unsupported")
            return Exists() if key[1] in known else Missing()
        if ecosystem not in self.endpoints:
            return Unknown("unsupported")

        with self._lock:
            hit = self._cache.get(key)
            if hit is not None and hit[1] > self.clock():
                return hit[0]
            fut = self._inflight.get(key)
            owner = fut is None
            if owner:
                fut = Future()
                self._inflight[key] = fut
        if not owner:
            return fut.result()
        try:
            verdict = self._fetch(ecosystem, name)
        except Exception as exc:  # never let a lookup escape as anything but Unknown
            verdict = Unknown(f"error: {type(exc).__name__}")
        with self._lock:
            self._cache[key] = (verdict, self.clock() + self.ttl)
            del self._inflight[key]
        fut.set_result(verdict)
        return verdict

    def _fetch(self, ecosystem: str, name: str) -> RegistryVerdict:
        url = self.url_for(ecosystem, name)
        if url is None:
            return Unknown("unsupported")
        self._bucket(ecosystem).acquire()
        with self._lock:
            self.requests += 1
        try:
            status, body = self.transport(url, self.timeout_ms / 1000.0)
        except TimeoutError:
            return Unknown("timeout")
        except Exception as exc:
            return Unknown(f"transport error: {type(exc).__name__}")
        return interpret(ecosystem, status, body)


def interpret(ecosystem: str, status: int, body: bytes) -> RegistryVerdict:
    """Map an HTTP response to a verdict.  Only 404 means Missing."""
    if status == 404:
        return Missing()
    if status != 200:
        return Unknown(f"http {status}")
    try:
        doc = json.loads(body)
    except (ValueError, TypeError):
        return Unknown("malformed response")
    if not isinstance(doc, dict):
        return Unknown("malformed response")
    return Exists(first_published(ecosystem, doc))


def first_published(ecosystem: str, doc: dict) -> str | None:
    try:
        if ecosystem == NPM:
            t = doc.get("time", {})
            return t.get("created") if isinstance(t, dict) else None
        if ecosystem == PYPI:
            stamps = [f.get("upload_time_iso_8601") or f.get("upload_time")
                      for files in (doc.get("releases") or {}).values() if isinstance(files, list)
                      for f in files if isinstance(f, dict)]
            stamps = [s for s in stamps if isinstance(s, str)]
            return min(stamps) if stamps else None
    except AttributeError:
        return None
    return None


# ── findings ─────────────────────────────────────────────────────────────────


def verdict_finding(dep: DependencyRef, verdict: RegistryVerdict) -> Finding | None:
    evidence = dep.text or dep.name
    if isinstance(verdict, Missing):
        return make_finding(DetectorId.T1_4, Severity.HIGH, Confidence.LIKELY, dep.span, evidence,
                            f"{dep.ecosystem} package '{dep.name}' does not exist on the registry; "
                            f"anyone can register it later")
    if isinstance(verdict, Unknown):
        return make_finding(DetectorId.T1_4, Severity.INFO, Confidence.HEURISTIC, dep.span, evidence,
                            f"existence of {dep.ecosystem} package '{dep.name}' not verified ({verdict.reason})")
    return None


def verify_existence(dep: DependencyRef, source: RegistrySource) -> tuple[RegistryVerdict, Finding | None]:
    verdict = source.lookup(dep.ecosystem, dep.name)
    return verdict, verdict_finding(dep, verdict)


def verify_all(deps: Iterable[DependencyRef], source: RegistrySource) -> list[tuple[RegistryVerdict, Finding | None]]:
    """Verify many dependencies, in parallel up to ``source.max_parallel``; results keep input order."""
    deps = list(deps)
    if source.mode == "fixture" or len(deps) <= 1:
        return [verify_existence(d, source) for d in deps]
    with ThreadPoolExecutor(max_workers=max(1, source.max_parallel)) as pool:
        return list(pool.map(lambda d: verify_existence(d, source), deps))


def source_from_policy(policy, transport: Transport | None = None) -> RegistrySource | None:
    """Build a source from policy settings; None when no registry is configured."""
    from pathlib import Path

    endpoints = dict(DEFAULT_ENDPOINTS)
    endpoints.update(dict(policy.registry_endpoints))
    if policy.registry_mode == "fixture":
        if not policy.registry_fixture:
            return None
        text = Path(policy.registry_fixture).read_text(encoding="utf-8")
        return RegistrySource(mode="fixture", fixture=parse_fixture(text), endpoints=endpoints)
    kw = {"transport": transport} if transport is not None else {}
    return RegistrySource(mode="live", endpoints=endpoints, **kw)
