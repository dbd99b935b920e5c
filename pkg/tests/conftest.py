import csv
from pathlib import Path

import pytest

from rlvae.chemgraph import parse_smiles

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"


def read_corpus(name: str) -> list[dict]:
    with (DATA / name).open() as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="session")
def sample_rows():
    return read_corpus("qm9like_sample.csv")


@pytest.fixture(scope="session")
def sample_graphs(sample_rows):
    return [parse_smiles(r["smiles"]) for r in sample_rows]


@pytest.fixture(scope="session")
def small_graphs():
    return [parse_smiles(r["smiles"]) for r in read_corpus("qm9like_small.csv")]


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
