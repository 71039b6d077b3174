from __future__ import annotations

import shutil
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
PDF_SKILL = FIXTURES / "benign" / "pdf-processing"
INDEX = FIXTURES / "index.jsonl"
REGISTRY = FIXTURES / "registry.txt"


def write_skill(root: Path, files: dict[str, str | bytes]) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for rel, content in files.items():
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(content, str):
            p.write_text(content, encoding="utf-8")
        else:
            p.write_bytes(content)
    return root


def skill_md(name: str = "demo", description: str = "Demo skill.", body: str = "## Instructions\n",
             extra: str = "") -> str:
    return f"---\nname: {name}\ndescription: {description}\n{extra}---\n{body}"


def copy_fixture(src: Path, dest_parent: Path, name: str | None = None) -> Path:
    dest = dest_parent / (name or src.name)
    shutil.copytree(src, dest)
    return dest


@pytest.fixture
def pdf_skill(tmp_path):
    return copy_fixture(PDF_SKILL, tmp_path)
