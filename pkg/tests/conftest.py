from __future__ import annotations

from pathlib import Path

import pytest

from visurvey.definition import StudyDefinition, parse_study_definition

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def study_fixture_path() -> Path:
    return FIXTURES / "yadl_study.json"


@pytest.fixture(scope="session")
def study_bytes(study_fixture_path: Path) -> bytes:
    return study_fixture_path.read_bytes()


@pytest.fixture(scope="session")
def study(study_bytes: bytes) -> StudyDefinition:
    return parse_study_definition(study_bytes)
