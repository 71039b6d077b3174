from __future__ import annotations

import json

import pytest

from skillguard.findings import DetectorId, Severity
from skillguard.policy import POLICY_ENV, PolicyConfig, PolicyError, load_policy


def test_defaults():
    p = PolicyConfig()
    assert p.fail_threshold == Severity.HIGH
    assert p.body_delta_threshold == 0.05 and p.typosquat_threshold == 0.2
    assert p.enabled_detectors == frozenset(DetectorId) and len(p.enabled_detectors) == 15


def test_unknown_key_rejected():
    with pytest.raises(PolicyError, match="unknown policy keys"):
        PolicyConfig.from_dict({"enabled_detector": ["T3.1"]})


@pytest.mark.parametrize("doc", [
    {"body_delta_threshold": 1.5},
    {"typosquat_threshold": -0.1},
    {"fail_threshold": "Severe"},
    {"enabled_detectors": ["T9.9"]},
    {"offline": "yes"},
    {"registry_mode": "carrier-pigeon"},
    {"severity_overrides": ["T3.1"]},
])
def test_invalid_values(doc):
    with pytest.raises(PolicyError):
        PolicyConfig.from_dict(doc)


def test_parse_fields():
    p = PolicyConfig.from_dict({"enabled_detectors": ["T3.1", "T4_3"], "severity_overrides": {"T3.1": "Low"},
                                "fail_threshold": "medium", "memory_files": ["NOTES.md"]})
    assert p.enabled_detectors == {DetectorId.T3_1, DetectorId.T4_3}
    assert p.override_for(DetectorId.T3_1) == Severity.LOW
    assert p.fail_threshold == Severity.MEDIUM
    assert PolicyConfig.from_dict(p.to_dict()) == p


def test_env_fallback(tmp_path, monkeypatch):
    path = tmp_path / "policy.json"
    path.write_text(json.dumps({"offline": True}))
    monkeypatch.setenv(POLICY_ENV, str(path))
    assert load_policy().offline is True
    monkeypatch.delenv(POLICY_ENV)
    assert load_policy() == PolicyConfig()


def test_invalid_json_file(tmp_path):
    path = tmp_path / "policy.json"
    path.write_text("{")
    with pytest.raises(PolicyError):
        load_policy(path)
