"""Generate the QM9-like SMILES corpora shipped in ``data/``.

QM9 itself is not redistributed here. This script grows random small
molecules over {C, N, O, F} with RDKit (independently of the rlvae code),
applies GDB-style stability filters and writes them as randomized SMILES so
the corpus exercises the whole reader grammar.

    python scripts/make_corpus.py --out data/

Outputs:
    qm9like_sample.csv  2000 molecules, 1-9 heavy atoms (id,smiles)
    qm9like_small.csv   molecules with at most 5 heavy atoms (id,smiles)

To use real QM9 instead, extract one SMILES per line from the public
distribution (the ``SMILES1`` field of each xyz record) and pass that file
to ``rlvae ingest``.
"""

from __future__ import annotations

import argparse
import csv
import random
from pathlib import Path

from rdkit import Chem, RDLogger

RDLogger.DisableLog("rdApp.*")

ELEMENTS = ["C", "N", "O", "F"]
WEIGHTS = [0.66, 0.14, 0.17, 0.03]
VALENCE = {"C": 4, "N": 3, "O": 2, "F": 1}
BOND = {1: Chem.BondType.SINGLE, 2: Chem.BondType.DOUBLE, 3: Chem.BondType.TRIPLE}
AROMATIC_CORES = [
    "c1ccccc1", "c1ccncc1", "c1cc[nH]c1", "c1ccoc1", "c1cnc[nH]1", "c1cn[nH]c1",
    "c1cocn1", "c1conc1", "c1cncnc1", "c1cnccn1", "c1nc[nH]n1", "c1nnc[nH]1",
    "c1nocn1", "c1nnco1", "O=c1cccc[nH]1", "O=c1cc[nH]cc1", "c1ncncn1",
]


def _free(mol: Chem.RWMol, idx: int) -> int:
    atom = mol.GetAtomWithIdx(idx)
    used = sum(int(b.GetBondTypeAsDouble()) for b in atom.GetBonds())
    return VALENCE[atom.GetSymbol()] - used


def _stable(mol: Chem.Mol) -> bool:
    ri = mol.GetRingInfo()
    for bond in mol.GetBonds():
        a, b = bond.GetBeginAtom().GetSymbol(), bond.GetEndAtom().GetSymbol()
        if a != "C" and b != "C" and not bond.GetIsAromatic():
            if {a, b} != {"N"} or bond.GetBondType() != Chem.BondType.SINGLE:
                return False
        if bond.GetBondType() == Chem.BondType.TRIPLE and bond.IsInRing():
            return False
        if bond.GetBondType() == Chem.BondType.DOUBLE and ri.NumBondRings(bond.GetIdx()) and ri.MinBondRingSize(bond.GetIdx()) < 5:
            return False
    for atom in mol.GetAtoms():
        doubles = sum(1 for b in atom.GetBonds() if b.GetBondType() == Chem.BondType.DOUBLE)
        if doubles > 1:
            return False
        if atom.GetFormalCharge() or atom.GetNumRadicalElectrons():
            return False
    return True


def grow(rng: random.Random, size: int) -> str | None:
    if rng.random() < 0.15 and size >= 5:
        mol = Chem.RWMol(Chem.MolFromSmiles(rng.choice(AROMATIC_CORES)))
        Chem.Kekulize(mol, clearAromaticFlags=True)
    else:
        mol = Chem.RWMol()
        mol.AddAtom(Chem.Atom(rng.choices(ELEMENTS, WEIGHTS)[0]))
    tries = 0
    while mol.GetNumAtoms() < size and tries < 200:
        tries += 1
        n = mol.GetNumAtoms()
        if n >= 3 and rng.random() < 0.2:
            i, j = rng.sample(range(n), 2)
            if mol.GetBondBetweenAtoms(i, j) is not None:
                continue
            path = Chem.GetShortestPath(mol, i, j)
            if not 3 <= len(path) <= 6 or _free(mol, i) < 1 or _free(mol, j) < 1:
                continue
            mol.AddBond(i, j, Chem.BondType.SINGLE)
            continue
        i = rng.randrange(n)
        fv = _free(mol, i)
        if fv < 1:
            continue
        element = rng.choices(ELEMENTS, WEIGHTS)[0]
        order = rng.choices([1, 2, 3], [0.78, 0.16, 0.06])[0]
        order = min(order, fv, VALENCE[element])
        j = mol.AddAtom(Chem.Atom(element))
        mol.AddBond(i, j, BOND[order])
    try:
        out = mol.GetMol()
        Chem.SanitizeMol(out)
    except Exception:
        return None
    if not _stable(out) or out.GetNumAtoms() > size:
        return None
    return Chem.MolToSmiles(out)


def build(rng: random.Random, n: int, sizes: list[int], size_weights: list[float], max_tries: int) -> list[str]:
    seen: dict[str, None] = {}
    tries = 0
    while len(seen) < n and tries < max_tries:
        tries += 1
        smi = grow(rng, rng.choices(sizes, size_weights)[0])
        if smi and smi not in seen:
            seen[smi] = None
    return list(seen)


def randomized(rng: random.Random, smiles: str) -> str:
    mol = Chem.MolFromSmiles(smiles)
    perm = list(range(mol.GetNumAtoms()))
    rng.shuffle(perm)
    mol = Chem.RenumberAtoms(mol, perm)
    if rng.random() < 0.3:
        Chem.Kekulize(mol, clearAromaticFlags=True)
        return Chem.MolToSmiles(mol, canonical=False, kekuleSmiles=True)
    return Chem.MolToSmiles(mol, canonical=False)


def write(path: Path, smiles: list[str], prefix: str, rng: random.Random) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "smiles"])
        for k, s in enumerate(smiles):
            w.writerow([f"{prefix}{k:05d}", randomized(rng, s)])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("data"))
    ap.add_argument("--seed", type=int, default=2019)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)
    sizes = list(range(1, 10))
    sample = build(rng, 2000, sizes, [1, 2, 3, 4, 6, 8, 10, 14, 20], 400000)
    write(args.out / "qm9like_sample.csv", sample, "q", rng)
    small = build(rng, 600, [1, 2, 3, 4, 5], [1, 3, 6, 10, 14], 400000)
    write(args.out / "qm9like_small.csv", small, "s", rng)
    print(f"sample={len(sample)} small={len(small)}")


if __name__ == "__main__":
    main()
