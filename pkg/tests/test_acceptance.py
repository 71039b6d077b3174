"""Acceptance criteria 1 to 8.

Each test prints a single PASS or FAIL line (visible even under output
capture) and then asserts the criterion at its stated tolerance.
"""

from __future__ import annotations

import io
import json
import random
import shutil
import time
from contextlib import redirect_stdout
from pathlib import Path

import pytest

from conftest import FIXTURES, INDEX, REGISTRY, skill_md, write_skill
from skillguard.cli import dispatch
from skillguard.deps import PYPI, pin_status, Pinned
from skillguard.findings import DetectorId, Severity
from skillguard.model import load_package
from skillguard.registry import Exists, Missing, RegistrySource, Unknown
from skillguard.rules import BODY, RULES, SCRIPTS, SUPPLEMENTARY
from skillguard.scanner import scan_package
from skillguard.registry import parse_fixture
from skillguard.trust import AutoAccept, RequireReapproval, approve, consent_delta, verify
from skillguard.typosquat import levenshtein, load_index

from test_deps import _count, gen_python_constraint
from test_monitor import run_mutation_trials
from test_rules import ECOSYSTEMS, engine_hits, gen_lines, oracle_hits
from test_trust import word_diff_oracle
from test_typosquat import dp_oracle, random_name

EXPECTED = json.loads((FIXTURES / "incidents" / "expected.json").read_text())


@pytest.fixture
def report(capsys):
    def emit(n: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    return emit


def cli(argv) -> tuple[int, bytes]:
    """Run the CLI in-process and return (exit code, stdout bytes)."""
    buf = io.BytesIO()
    wrapper = io.TextIOWrapper(buf, encoding="utf-8")
    with redirect_stdout(wrapper):
        code = dispatch([str(a) for a in argv])
        wrapper.flush()
    return code, buf.getvalue()


def scan_ids(path: Path, *extra) -> set[str]:
    _, out = cli(["scan", path, "--format", "json", *extra])
    return {f["id"] for f in json.loads(out)["findings"]}


# ── 1. incident corpus mapping ───────────────────────────────────────────────


def test_criterion_1_incident_mapping(report):
    misses, slowest = [], 0.0
    for name, entry in sorted(EXPECTED.items()):
        extra = ["--index", FIXTURES / entry["index"]] if "index" in entry else []
        t0 = time.perf_counter()
        got = scan_ids(FIXTURES / "incidents" / name, *extra)
        slowest = max(slowest, time.perf_counter() - t0)
        if got != set(entry["ids"]):
            misses.append((name, sorted(got), entry["ids"]))
    ok = not misses and slowest < 1.0
    report(1, ok, f"{len(EXPECTED) - len(misses)}/{len(EXPECTED)} incident fixtures exact, slowest {slowest:.3f}s")
    assert ok, misses


# ── 2. taxonomy positive/negative coverage ───────────────────────────────────


def scenario_fires(detector: str, root: Path) -> bool:
    return detector in scan_ids(root, "--index", INDEX, "--registry-fixture", REGISTRY)


def trust_scenario(tmp_path: Path) -> tuple[bool, bool]:
    """T2.2: an approved-then-modified copy fires, an approved unchanged copy does not."""
    pos = shutil.copytree(FIXTURES / "scenarios" / "t2-2", tmp_path / "pos" / "t2-2")
    neg = shutil.copytree(FIXTURES / "scenarios" / "t2-2", tmp_path / "neg" / "t2-2")
    for root in (pos, neg):
        assert cli(["trust", "approve", root])[0] == 0
    with open(pos / "scripts" / "notes.py", "a") as fh:
        fh.write("# trailing change\n")
    return "T2.2" in scan_ids(pos), "T2.2" in scan_ids(neg)


# Benign packages that are themselves the indexed originals are scanned as
# their own publisher; anyone else publishing them would be a squat.
INDEX_ORIGINALS = {"pdf-processing": "anthropic", "csv-analyzer": "datakit"}


def test_criterion_2_taxonomy_coverage(report, tmp_path):
    failures = []
    for d in DetectorId:
        if d == DetectorId.T2_2:
            pos_fires, neg_fires = trust_scenario(tmp_path)
        else:
            slug = d.value.lower().replace(".", "-")
            pos_fires = scenario_fires(d.value, FIXTURES / "scenarios" / f"{slug}-pos")
            neg_fires = scenario_fires(d.value, FIXTURES / "scenarios" / f"{slug}-neg")
        if not pos_fires or neg_fires:
            failures.append((d.value, pos_fires, neg_fires))
    benign = sorted(p for p in (FIXTURES / "benign").iterdir() if p.is_dir())
    high = 0
    for root in benign:
        owner = ["--publisher", INDEX_ORIGINALS[root.name]] if root.name in INDEX_ORIGINALS else []
        _, out = cli(["scan", root, "--format", "json", "--index", INDEX, "--registry-fixture", REGISTRY, *owner])
        high += sum(Severity.parse(f["severity"]) >= Severity.HIGH for f in json.loads(out)["findings"])
    ok = not failures and high == 0 and len(benign) >= 11
    report(2, ok, f"{15 - len(failures)}/15 scenarios pos+neg, {len(benign)} benign packages, {high} findings >= High")
    assert ok, failures


# ── 3. tamper detection ──────────────────────────────────────────────────────


def test_criterion_3_tamper_detection(report, tmp_path):
    sources = sorted(p for p in (FIXTURES / "benign").iterdir() if p.is_dir())
    sources += sorted(p for p in (FIXTURES / "incidents").iterdir() if p.is_dir())
    roots = []
    for src in sources:
        root = shutil.copytree(src, tmp_path / src.name)
        assert cli(["trust", "approve", root])[0] == 0
        roots.append(root)
    rng = random.Random(3)
    modified = 0
    for _ in range(1000):
        root = rng.choice(roots)
        files = sorted(p for p in root.rglob("*") if p.is_file())
        target = rng.choice(files)
        original = target.read_bytes()
        i = rng.randrange(len(original))
        target.write_bytes(original[:i] + bytes([original[i] ^ rng.randint(1, 255)]) + original[i + 1:])
        code, out = cli(["trust", "verify", root, "--format", "json"])
        modified += code == 1 and json.loads(out)["status"] == "modified"
        target.write_bytes(original)
    trusted = 0
    for k in range(100):
        code, out = cli(["trust", "verify", roots[k % len(roots)], "--format", "json"])
        trusted += code == 0 and json.loads(out)["status"] == "trusted"
    ok = modified == 1000 and trusted == 100
    report(3, ok, f"{modified}/1000 mutations Modified, {trusted}/100 unchanged Trusted")
    assert ok


# ── 4. delta-consent hard rules ──────────────────────────────────────────────


def test_criterion_4_delta_consent(report, tmp_path):
    rng = random.Random(4)
    vocab = [f"word{i}" for i in range(300)]
    violations = 0
    kinds = {"script": 0, "added": 0, "body": 0}
    for case in range(200):
        words = rng.sample(vocab, rng.randint(20, 80))
        root = write_skill(tmp_path / f"c{case}" / "demo", {
            "SKILL.md": skill_md("demo", body=" ".join(words) + "\n"),
            "scripts/tool.py": "print('ok')\n",
        })
        lock = approve(load_package(root), now=1)
        kind = rng.choice(list(kinds))
        kinds[kind] += 1
        new_words = list(words)
        if kind == "script":
            (root / "scripts" / "tool.py").write_text("print('changed')\n")
        elif kind == "added":
            (root / "scripts" / f"extra{case}.py").write_text("print(1)\n")
        for i in rng.sample(range(len(new_words)), rng.choice([0, 0, 1, 2, 3, 5, 10])):
            new_words[i] = f"fresh{i}"
        (root / "SKILL.md").write_text(skill_md("demo", body=" ".join(new_words) + "\n"))
        status = verify(load_package(root), lock)
        if kind == "body" and new_words == words:
            continue  # unchanged package: Trusted, nothing to decide
        decision = consent_delta(status.diff)
        if kind in ("script", "added"):
            violations += not isinstance(decision, RequireReapproval)
        else:
            ratio = word_diff_oracle(" ".join(words), " ".join(new_words))
            violations += status.diff.body_change_ratio != ratio
            violations += isinstance(decision, RequireReapproval) != (ratio > 0.05)
            violations += isinstance(decision, AutoAccept) == (ratio > 0.05)
    ok = violations == 0
    report(4, ok, f"200 diff cases {kinds}, {violations} violations")
    assert ok


# ── 5. oracle equivalences ───────────────────────────────────────────────────


def test_criterion_5_oracles(report):
    rng = random.Random(5)
    edit_bad = 0
    for _ in range(1000):
        a, b = random_name(rng), random_name(rng)
        edit_bad += levenshtein(a, b) != dp_oracle(a, b)
    rule_bad = 0
    for rule in RULES:
        lines = gen_lines(rng, 500)
        for target in (BODY, SUPPLEMENTARY, SCRIPTS):
            for eco in (ECOSYSTEMS if target == SCRIPTS else (None,)):
                rule_bad += engine_hits(rule, lines, target, eco) != oracle_hits(rule, lines, target, eco)
    pin_bad = 0
    for _ in range(200):
        clauses = gen_python_constraint(rng)
        text = ", ".join(op + t for op, t in clauses)
        pin_bad += isinstance(pin_status(PYPI, text), Pinned) != (_count(clauses) == 1)
    ok = edit_bad == rule_bad == pin_bad == 0
    report(5, ok, f"edit distance {1000 - edit_bad}/1000, rules {len(RULES)}x500 lines mismatches {rule_bad}, "
                  f"pin status {200 - pin_bad}/200")
    assert ok


# ── 6. registry failure isolation ────────────────────────────────────────────


def test_criterion_6_registry_isolation(report):
    rng = random.Random(6)

    def faulty(url, timeout):
        kind = rng.choice(["timeout", "5xx", "malformed"])
        if kind == "timeout":
            raise TimeoutError("injected")
        if kind == "5xx":
            return rng.choice([500, 502, 503, 504]), b""
        return 200, rng.choice([b"", b"{", b"null", b"[]", b"\xff"])

    missing = unknown = 0
    for i in range(100):
        verdict = RegistrySource(mode="live", transport=faulty, rate=1e9).lookup(PYPI, f"pkg{i}")
        missing += isinstance(verdict, Missing)
        unknown += isinstance(verdict, Unknown)

    def no_network(url, timeout):
        raise AssertionError("network used in fixture mode")

    fixture = parse_fixture(REGISTRY.read_text())
    names = ["requests", "pandas", "surely-not-a-real-package", "Pillow"]
    runs = {tuple(RegistrySource(mode="fixture", fixture=fixture, transport=no_network).lookup(PYPI, n)
                  for n in names) for _ in range(100)}
    ok = missing == 0 and unknown == 100 and len(runs) == 1
    report(6, ok, f"{missing} Missing in 100 fault trials, fixture verdicts identical across 100 runs: {len(runs) == 1}")
    assert ok
    assert next(iter(runs))[0] == Exists() and next(iter(runs))[2] == Missing()


# ── 7. integrity monitor completeness ────────────────────────────────────────


def test_criterion_7_monitor(report, tmp_path):
    detected = run_mutation_trials(tmp_path, 500, seed=7)
    ws = tmp_path / "ws"
    from skillguard.monitor import baseline, check

    clean = check(ws, baseline(ws, now=0))
    ok = detected == 500 and clean == []
    report(7, ok, f"{detected}/500 mutations detected, clean check {len(clean)} findings")
    assert ok


# ── 8. determinism and throughput ────────────────────────────────────────────


def build_corpus(dest: Path, n: int = 100) -> list[Path]:
    sources = sorted(p for group in ("benign", "incidents", "scenarios")
                     for p in (FIXTURES / group).iterdir() if p.is_dir())
    roots = []
    for i in range(n):
        src = sources[i % len(sources)]
        root = shutil.copytree(src, dest / f"{i:03d}" / src.name)
        roots.append(root)
    return roots


def test_criterion_8_determinism_throughput(report, tmp_path):
    roots = build_corpus(tmp_path)
    args = ["--index", INDEX, "--registry-fixture", REGISTRY, "--format", "json"]
    t0 = time.perf_counter()
    first = [cli(["scan", r, *args])[1] for r in roots]
    elapsed = time.perf_counter() - t0
    second = [cli(["scan", r, *args])[1] for r in roots]
    identical = first == second
    ok = identical and elapsed < 5.0
    report(8, ok, f"100 packages scanned in {elapsed:.2f}s, byte-identical rerun: {identical}")
    assert ok
