from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import PDF_SKILL, skill_md, write_skill
from skillguard.capabilities import (
    BROAD, ISOLATED, SCOPED, TIER_ORDER, CapabilityManifest, MalformedManifest, check_scope, generate_policy,
    glob_match, manifest_for, parse_clauses, parse_manifest,
)
from skillguard.findings import DetectorId, Severity
from skillguard.model import load_package
from skillguard.policy import PolicyConfig
from skillguard.rules import ActionClass, builtin_rules


# ── parse_manifest ───────────────────────────────────────────────────────────


def test_read_write_manifest():
    m = parse_manifest({"capabilities": "read=./**; write=./out/**"})
    assert (len(m.read), len(m.write), m.network, m.subprocess) == (1, 1, (), False)


def test_absent_key():
    assert parse_manifest({"license": "MIT"}) is None


@pytest.mark.parametrize("text", ["read=/etc/**", "write=../x/**", "bogus=1", "net=", "exec=maybe", "eco=cargo",
                                  "net=Bad_Host!"])
def test_malformed(text):
    with pytest.raises(MalformedManifest):
        parse_clauses(text)


def test_hostnames_lowercased():
    assert parse_clauses("net=API.Example.com").network == ("api.example.com",)


def test_clause_round_trip():
    m = parse_clauses("read=./**,./data/*.csv; write=./out/**; net=a.example; exec=yes; eco=python-pypi")
    assert parse_clauses(m.to_clauses()) == m


def test_malformed_manifest_in_scan_is_medium(tmp_path):
    from skillguard.scanner import scan_package

    root = write_skill(tmp_path / "demo", {"SKILL.md": skill_md("demo", extra="capabilities: read=/etc/**\n")})
    report = scan_package(load_package(root))
    t21 = [f for f in report.findings if f.detector == DetectorId.T2_1]
    assert [f.severity for f in t21] == [Severity.MEDIUM]


# ── check_scope ──────────────────────────────────────────────────────────────


def test_pdf_skill_body_with_url_and_empty_manifest(tmp_path):
    body = PDF_SKILL.joinpath("SKILL.md").read_text().split("---\n", 2)[2]
    body += "\nExample source: https://files.example.com/report.pdf\n"
    root = write_skill(tmp_path / "pdf-processing", {"SKILL.md": skill_md(
        "pdf-processing", "Extract text and tables from PDF files.", body, "capabilities: read=./**\n")})
    pkg = load_package(root)
    findings = check_scope(pkg, manifest_for(pkg))
    hosts = [f for f in findings if f.severity == Severity.HIGH]
    assert len(hosts) == 1 and "files.example.com" in hosts[0].message


def test_in_scope_read(tmp_path):
    root = write_skill(tmp_path / "demo", {
        "SKILL.md": skill_md("demo", extra="capabilities: read=./**\n"),
        "scripts/run.py": "data = open('./input.pdf', 'rb').read()\n",
    })
    pkg = load_package(root)
    assert check_scope(pkg, manifest_for(pkg)) == []


def test_empty_package_no_findings(tmp_path):
    root = write_skill(tmp_path / "demo", {"SKILL.md": skill_md("demo", body="")})
    pkg = load_package(root)
    assert check_scope(pkg, CapabilityManifest()) == []


def test_out_of_scope_path_is_medium(tmp_path):
    root = write_skill(tmp_path / "demo", {
        "SKILL.md": skill_md("demo", extra="capabilities: read=./data/**\n"),
        "scripts/run.py": "open('/etc/passwd').read()\n",
    })
    pkg = load_package(root)
    sev = [f.severity for f in check_scope(pkg, manifest_for(pkg))]
    assert sev == [Severity.MEDIUM]


def test_subprocess_without_exec_is_high(tmp_path):
    root = write_skill(tmp_path / "demo", {
        "SKILL.md": skill_md("demo", extra="capabilities: read=./**\n"),
        "scripts/run.py": "import subprocess\nsubprocess.run(['ls'])\n",
    })
    pkg = load_package(root)
    assert any(f.severity == Severity.HIGH and "subprocess" in f.message for f in check_scope(pkg, manifest_for(pkg)))
    m = parse_clauses("read=./**; exec=yes")
    assert check_scope(pkg, m) == []


hosts = st.from_regex(r"[a-z]{1,8}\.(?:example|test)\.(?:com|org)", fullmatch=True)


@given(st.lists(hosts, min_size=1, max_size=4))
def test_allowlisted_hosts_never_flagged(tmp_path_factory, hostlist):
    root = tmp_path_factory.mktemp("s") / "demo"
    body = "\n".join(f"Fetch https://{h}/data.json first." for h in hostlist) + "\n"
    write_skill(root, {"SKILL.md": skill_md("demo", body=body)})
    manifest = CapabilityManifest(read=("./**",), network=tuple(sorted(set(hostlist))))
    assert check_scope(load_package(root), manifest) == []


# ── generate_policy ──────────────────────────────────────────────────────────


def test_absent_is_isolated():
    assert generate_policy(None).tier == ISOLATED
    assert generate_policy(None, PolicyConfig(allow_broad=True)).tier == ISOLATED
    assert generate_policy(CapabilityManifest()).to_dict() == {
        "tier": "Isolated", "mounts": [], "network": {"mode": "deny", "hosts": []}, "subprocess": False}


def test_pdf_skill_style_manifest_scoped_one_host():
    m = parse_clauses("read=./**; write=./out/**; net=files.example.com")
    sp = generate_policy(m)
    # hand-applied rule table: relative globs only -> Scoped; one host -> allowlist of one
    assert sp.to_dict() == {
        "tier": "Scoped",
        "mounts": [{"glob": "./**", "mode": "ro"}, {"glob": "./out/**", "mode": "rw"}],
        "network": {"mode": "allowlist", "hosts": ["files.example.com"]},
        "subprocess": False,
    }


def test_exec_plus_any_network_restrictive():
    sp = generate_policy(parse_clauses("exec=yes; net=*"))
    assert sp.tier == SCOPED and sp.subprocess is False and sp.warnings


def test_exec_plus_network_broad_when_permitted():
    sp = generate_policy(parse_clauses("exec=yes; net=*"), PolicyConfig(allow_broad=True))
    assert sp.tier == BROAD and sp.subprocess is True and sp.network_mode == "any"


CLAUSE_POOL = ["read=./**", "write=./out/**", "net=a.example.com", "net=*", "exec=yes", "eco=python-pypi"]


@given(st.lists(st.sampled_from(CLAUSE_POOL), max_size=5), st.sampled_from(CLAUSE_POOL), st.booleans())
def test_adding_clause_never_tightens(clauses, extra, broad):
    policy = PolicyConfig(allow_broad=broad)
    before = generate_policy(parse_clauses("; ".join(clauses)) if clauses else None, policy)
    after = generate_policy(parse_clauses("; ".join(clauses + [extra])), policy)
    assert TIER_ORDER[after.tier] >= TIER_ORDER[before.tier]


def test_glob_matching():
    assert glob_match("./**", "./input.pdf")
    assert glob_match("./out/**", "out/a/b.txt")
    assert not glob_match("./out/**", "./in/a.txt")


def test_every_rule_action_is_an_action_class():
    for rule in builtin_rules():
        assert rule.action is None or isinstance(rule.action, ActionClass)
