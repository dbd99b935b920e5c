"""Molecular graphs, SMILES, canonicalization and aromaticity."""

from rlvae.chemgraph.aromatic import KekulizeError, aromatize, kekulize, perceive_aromaticity
from rlvae.chemgraph.canon import canonical_order, canonical_ranks
from rlvae.chemgraph.graph import (
    AROMATIC,
    DOUBLE,
    ELEMENTS,
    EMPTY,
    MAX_VALENCE,
    SINGLE,
    TRIPLE,
    GraphError,
    MolGraph,
    atom_type_counts,
)
from rlvae.chemgraph.smiles import (
    SmilesError,
    canonical_smiles,
    parse_smiles,
    strip_stereo,
    write_canonical_smiles,
    write_smiles,
)


def free_valence(g: MolGraph, atom: int) -> int:
    return g.free_valence(atom)


__all__ = [
    "AROMATIC", "DOUBLE", "ELEMENTS", "EMPTY", "MAX_VALENCE", "SINGLE", "TRIPLE",
    "GraphError", "KekulizeError", "MolGraph", "SmilesError",
    "aromatize", "atom_type_counts", "canonical_order", "canonical_ranks", "canonical_smiles",
    "free_valence", "kekulize", "parse_smiles", "perceive_aromaticity", "strip_stereo",
    "write_canonical_smiles", "write_smiles",
]
