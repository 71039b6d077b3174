"""Scan policy: which detectors run, thresholds, watchlist extensions.

Policy files are flat JSON objects.  Unknown keys are rejected so a typo
cannot silently disable a detector.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

from .findings import DetectorId, Severity

POLICY_ENV = "SKILLGUARD_POLICY"


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    enabled_detectors: frozenset[DetectorId] = frozenset(DetectorId)
    severity_overrides: tuple[tuple[DetectorId, Severity], ...] = ()
    fail_threshold: Severity = Severity.HIGH
    body_delta_threshold: float = 0.05
    typosquat_threshold: float = 0.2
    popularity_floor: int = 100
    shadow_threshold: float = 0.6
    memory_files: tuple[str, ...] = ()
    config_globs: tuple[str, ...] = ()
    sensitive_keys: tuple[str, ...] = ()
    base_url_keys: tuple[str, ...] = ()
    credential_paths: tuple[str, ...] = ()
    registry_mode: str = "fixture"
    registry_endpoints: tuple[tuple[str, str], ...] = ()
    registry_fixture: str | None = None
    offline: bool = False
    allow_broad: bool = False

    def __post_init__(self) -> None:
        for name in ("body_delta_threshold", "typosquat_threshold", "shadow_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise PolicyError(f"{name} must be within [0, 1], got {value}")
        if self.popularity_floor < 0:
            raise PolicyError("popularity_floor must be non-negative")
        if self.registry_mode not in ("fixture", "live"):
            raise PolicyError(f"registry_mode must be 'fixture' or 'live', got {self.registry_mode!r}")
        if not isinstance(self.fail_threshold, Severity):
            raise PolicyError("fail_threshold must be a severity")

    def override_for(self, detector: DetectorId) -> Severity | None:
        for d, s in self.severity_overrides:
            if d == detector:
                return s
        return None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PolicyConfig":
        if not isinstance(data, dict):
            raise PolicyError("policy document must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise PolicyError(f"unknown policy keys: {', '.join(unknown)}")
        kw: dict[str, Any] = {}
        try:
            for key, value in data.items():
                if key == "enabled_detectors":
                    kw[key] = frozenset(DetectorId.parse(v) for v in _list(key, value))
                elif key == "severity_overrides":
                    kw[key] = tuple(sorted(((DetectorId.parse(k), Severity.parse(v))
                                            for k, v in _dict(key, value).items()),
                                           key=lambda e: e[0].value))
                elif key == "fail_threshold":
                    kw[key] = Severity.parse(value)
                elif key in ("body_delta_threshold", "typosquat_threshold", "shadow_threshold"):
                    if isinstance(value, bool) or not isinstance(value, (int, float)):
                        raise PolicyError(f"{key} must be a number")
                    kw[key] = float(value)
                elif key == "popularity_floor":
                    if isinstance(value, bool) or not isinstance(value, int):
                        raise PolicyError(f"{key} must be an integer")
                    kw[key] = value
                elif key in ("memory_files", "config_globs", "sensitive_keys", "base_url_keys",
                             "credential_paths"):
                    kw[key] = tuple(str(v) for v in _list(key, value))
                elif key == "registry_endpoints":
                    kw[key] = tuple(sorted((str(k), str(v)) for k, v in _dict(key, value).items()))
                elif key in ("offline", "allow_broad"):
                    if not isinstance(value, bool):
                        raise PolicyError(f"{key} must be true or false")
                    kw[key] = value
                else:
                    kw[key] = value
        except ValueError as exc:
            raise PolicyError(str(exc)) from None
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        return {
            "enabled_detectors": sorted(d.value for d in self.enabled_detectors),
            "severity_overrides": {d.value: s.label for d, s in self.severity_overrides},
            "fail_threshold": self.fail_threshold.label,
            "body_delta_threshold": self.body_delta_threshold,
            "typosquat_threshold": self.typosquat_threshold,
            "popularity_floor": self.popularity_floor,
            "shadow_threshold": self.shadow_threshold,
            "memory_files": list(self.memory_files),
            "config_globs": list(self.config_globs),
            "sensitive_keys": list(self.sensitive_keys),
            "base_url_keys": list(self.base_url_keys),
            "credential_paths": list(self.credential_paths),
            "registry_mode": self.registry_mode,
            "registry_endpoints": dict(self.registry_endpoints),
            "registry_fixture": self.registry_fixture,
            "offline": self.offline,
            "allow_broad": self.allow_broad,
        }

    def with_changes(self, **changes: Any) -> "PolicyConfig":
        return replace(self, **changes)


def _list(key: str, value: Any) -> list:
    if not isinstance(value, list):
        raise PolicyError(f"{key} must be a list")
    return value


def _dict(key: str, value: Any) -> dict:
    if not isinstance(value, dict):
        raise PolicyError(f"{key} must be an object")
    return value


def load_policy(path: str | os.PathLike | None = None) -> PolicyConfig:
    """Load a policy file, falling back to $SKILLGUARD_POLICY, then defaults."""
    if path is None:
        path = os.environ.get(POLICY_ENV) or None
    if path is None:
        return PolicyConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PolicyError(f"policy file {path} is not valid JSON: {exc}") from None
    return PolicyConfig.from_dict(data)
