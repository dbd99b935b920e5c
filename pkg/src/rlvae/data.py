"""Molecule list ingestion, charge filtering and ten-fold splitting."""

from __future__ import annotations

import csv
import io
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rlvae.chemgraph import GraphError, MolGraph, SmilesError, parse_smiles, write_canonical_smiles

N_FOLDS = 10
TUNE_FOLD = 8
TEST_FOLD = 9
MANIFEST_FIELDS = ["id", "canonical_smiles", "fold", "role"]

_DROP_REASON = {"element": "unsupported", "isotope": "unsupported", "stereo": "stereo", "charge": "charge"}
_CHARGED = re.compile(r"\[[^\]]*[+-][^\]]*\]")


class DataError(ValueError):
    """Unreadable input or nothing left after filtering."""


def role_of(fold: int) -> str:
    if fold == TUNE_FOLD:
        return "tune"
    if fold == TEST_FOLD:
        return "test"
    return "train"


@dataclass(frozen=True)
class Record:
    id: str
    smiles: str
    canonical: str
    fold: int

    @property
    def role(self) -> str:
        return role_of(self.fold)

    def graph(self) -> MolGraph:
        return parse_smiles(self.canonical)


@dataclass
class Dataset:
    records: list[Record]
    dropped: Counter = field(default_factory=Counter)
    seed: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def split(self, role: str) -> list[Record]:
        if role == "all":
            return list(self.records)
        if role not in ("train", "tune", "test"):
            raise ValueError(f"unknown split {role!r}")
        return [r for r in self.records if r.role == role]

    def fold_sizes(self) -> list[int]:
        c = Counter(r.fold for r in self.records)
        return [c.get(k, 0) for k in range(N_FOLDS)]

    def manifest_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for r in self.records:
            w.writerow([r.id, r.canonical, r.fold, r.role])
        return buf.getvalue()

    def write_manifest(self, path: str | Path) -> None:
        Path(path).write_text(self.manifest_csv(), encoding="utf-8")


def read_smiles_lines(path: str | Path) -> list[tuple[str, str]]:
    """(id, smiles) pairs from a CSV with an ``id,smiles`` header or a SMILES-per-line file.

    Plain lines may carry an id after the SMILES (whitespace separated);
    otherwise the 1-based line number is used.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    first = lines[0].strip().lower() if lines else ""
    if "," in first and "smiles" in first.split(","):
        reader = csv.DictReader(io.StringIO(text))
        cols = {c.strip().lower(): c for c in reader.fieldnames or []}
        sc = cols["smiles"]
        ic = cols.get("id")
        return [((row[ic] if ic else str(n)).strip(), (row[sc] or "").strip()) for n, row in enumerate(reader, 1)]
    out = []
    for n, line in enumerate(lines, 1):
        parts = line.split()
        if not parts:
            continue
        out.append((parts[1] if len(parts) > 1 else str(n), parts[0]))
    return out


def assign_folds(n: int, seed: int) -> np.ndarray:
    """Seeded shuffle of positions 0..n-1, then folds dealt round-robin (sizes differ by at most 1)."""
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % N_FOLDS
    return folds


def ingest(
    path: str | Path,
    seed: int = 0,
    *,
    max_heavy_atoms: int | None = None,
    limit: int | None = None,
    strip_stereo: bool = False,
) -> Dataset:
    """Filter, canonicalize, deduplicate and fold-split a molecule list.

    Dropped lines are counted under ``charge``, ``parse``, ``unsupported``
    (elements or isotopes outside the vocabulary), ``stereo`` (unless
    ``strip_stereo``), ``too_large`` and ``duplicate``. Survivors keep
    input order; ``limit`` keeps the first N of them before folds are dealt.
    """
    dropped: Counter = Counter()
    kept: list[tuple[str, str, str]] = []
    seen: set[str] = set()
    for mid, smi in read_smiles_lines(path):
        if _CHARGED.search(smi):
            dropped["charge"] += 1
            continue
        try:
            g = parse_smiles(smi, strip=strip_stereo)
            can = write_canonical_smiles(g)
        except SmilesError as exc:
            dropped[_DROP_REASON.get(exc.reason, "parse")] += 1
            continue
        except GraphError:
            dropped["parse"] += 1
            continue
        if max_heavy_atoms is not None and sum(1 for e in g.atoms if e != "H") > max_heavy_atoms:
            dropped["too_large"] += 1
            continue
        if can in seen:
            dropped["duplicate"] += 1
            continue
        seen.add(can)
        kept.append((mid, smi, can))
        if limit is not None and len(kept) >= limit:
            break
    if not kept:
        raise DataError(f"no usable molecules in {path}")
    folds = assign_folds(len(kept), seed)
    records = [Record(mid, smi, can, int(f)) for (mid, smi, can), f in zip(kept, folds)]
    return Dataset(records, dropped, seed)


def load_manifest(path: str | Path) -> Dataset:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != MANIFEST_FIELDS:
        raise DataError(f"{path} is not a fold manifest (header {reader.fieldnames})")
    recs = [Record(r["id"], r["canonical_smiles"], r["canonical_smiles"], int(r["fold"])) for r in reader]
    if not recs:
        raise DataError(f"{path} is empty")
    return Dataset(recs)


def load_molecules(path: str | Path, role: str = "all", strip_stereo: bool = False) -> tuple[list[str], list[MolGraph]]:
    """(ids, graphs) from a manifest (filtered by role) or from a raw SMILES list."""
    text_head = Path(path).read_text(encoding="utf-8").split("\n", 1)[0].strip()
    if text_head.split(",") == MANIFEST_FIELDS:
        recs = load_manifest(path).split(role)
        return [r.id for r in recs], [r.graph() for r in recs]
    pairs = read_smiles_lines(path)
    ids, graphs = [], []
    for mid, smi in pairs:
        try:
            graphs.append(parse_smiles(smi, strip=strip_stereo))
        except (SmilesError, GraphError) as exc:
            raise DataError(f"molecule {mid}: {exc}") from exc
        ids.append(mid)
    if not graphs:
        raise DataError(f"no molecules in {path}")
    return ids, graphs
