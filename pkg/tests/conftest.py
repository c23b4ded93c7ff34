import os
from pathlib import Path

import pytest

from fmar.ingest import RatingDataset, RatingRecord

ROOT = Path(__file__).resolve().parents[1]


def movielens_path() -> Path | None:
    candidates = [os.environ.get("FMAR_DATA"), ROOT / "data" / "ml-100k" / "u.data"]
    for c in candidates:
        if c and Path(c).is_file():
            return Path(c)
    return None


@pytest.fixture(scope="session")
def ml100k_path():
    path = movielens_path()
    if path is None:
        pytest.skip("MovieLens 100K not found; run scripts/fetch_movielens.py or set FMAR_DATA")
    return path


def make_dataset(triples) -> RatingDataset:
    return RatingDataset(RatingRecord(u, i, r, 0) for u, i, r in triples)


@pytest.fixture
def toy_ratings(tmp_path):
    """Four users whose favorable items are {1,2}, {1,3}, {1,2,3}, {2,3}."""
    triples = [
        (1, 1, 5), (1, 2, 4), (1, 4, 2),
        (2, 1, 4), (2, 3, 5),
        (3, 1, 5), (3, 2, 5), (3, 3, 4), (3, 4, 1),
        (4, 2, 4), (4, 3, 4), (4, 4, 3),
    ]
    path = tmp_path / "toy.data"
    path.write_text("".join(f"{u}\t{i}\t{r}\t{n}\n" for n, (u, i, r) in enumerate(triples)))
    return path


ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[criterion]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")
