from __future__ import annotations

import hashlib
from pathlib import Path

import pytest

BUGGY_FUNCTION = "def add_one(x):\n    return x - 1\n"
GOOD_PATCH = "def add_one(x):\n    return x + 1"


def build_planted_project(root: Path) -> Path:
    """Checkout with a planted off-by-one bug and one failing, one passing test."""
    project = root / "project"
    (project / "tests").mkdir(parents=True)
    (project / "calculator.py").write_text(BUGGY_FUNCTION, encoding="utf-8")
    (project / "tests" / "test_calculator.py").write_text(
        "from calculator import add_one\n"
        "\n"
        "\n"
        "def test_add_one():\n"
        "    assert add_one(3) == 4\n"
        "\n"
        "\n"
        "def test_type():\n"
        "    assert isinstance(add_one(0), int)\n",
        encoding="utf-8",
    )
    return project


def tree_digest(root: Path) -> str:
    """Order-stable content hash of every file under root."""
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode("utf-8"))
        digest.update(path.read_bytes())
    return digest.hexdigest()


@pytest.fixture
def planted_project(tmp_path) -> Path:
    return build_planted_project(tmp_path)
