"""Kekulization and aromaticity perception.

The aromaticity model only considers simple rings of size 5 and 6. A ring is
aromatic when every atom is sp2-consistent and the pi-electron count obeys
4n+2, with contributions:

* atom whose double bond is a ring bond (of any ring): 1
* atom whose double bond is acyclic (exocyclic C=O, C=C): 0
* N or O with only single bonds (lone pair donor): 2

Kekulé structures differ only by swapping doubles around cycles, so the set
of acyclic double bonds, and therefore every contribution above, is the same
for all Kekulé forms of a molecule.
"""

from __future__ import annotations

from rlvae.chemgraph.canon import refined_ranks
from rlvae.chemgraph.graph import AROMATIC, DOUBLE, MAX_VALENCE, SINGLE, TRIPLE, GraphError, MolGraph


class KekulizeError(GraphError):
    """The aromatic system admits no alternating single/double assignment."""


def kekulize(g: MolGraph) -> MolGraph:
    """Replace aromatic bonds with a deterministic single/double assignment."""
    if not g.has_aromatic:
        return g
    adj = g.adjacency
    need: dict[int, bool] = {}
    for a in range(g.n_atoms):
        arom = 0
        other = 0
        for o in adj[a].values():
            if o == AROMATIC:
                arom += 1
            else:
                other += o
        if arom == 0:
            continue
        spare = MAX_VALENCE[g.atoms[a]] - g.hcounts[a] - other - arom
        if spare not in (0, 1):
            raise KekulizeError(f"aromatic atom {a} ({g.atoms[a]}) has inconsistent valence")
        need[a] = spare == 1
    ranks = refined_ranks(g)
    cand = {
        a: sorted(
            (b for b, o in adj[a].items() if o == AROMATIC and need.get(b)),
            key=lambda b: (ranks[b], b),
        )
        for a, flag in need.items()
        if flag
    }
    match: dict[int, int] = {}

    def solve() -> bool:
        open_atoms = [a for a in cand if a not in match]
        if not open_atoms:
            return True
        # Most constrained atom first; ties by rank then index.
        a = min(
            open_atoms,
            key=lambda x: (sum(1 for b in cand[x] if b not in match), ranks[x], x),
        )
        for b in cand[a]:
            if b in match:
                continue
            match[a] = b
            match[b] = a
            if solve():
                return True
            del match[a]
            del match[b]
        return False

    if not solve():
        raise KekulizeError("aromatic system cannot be kekulized")
    bonds = []
    for i, j, o in g.bonds:
        if o == AROMATIC:
            o = DOUBLE if match.get(i) == j else SINGLE
        bonds.append((i, j, o))
    return _same_topology(g, MolGraph(g.atoms, bonds, g.hcounts))


def _same_topology(src: MolGraph, out: MolGraph) -> MolGraph:
    """Carry cached ring membership over to a graph that only differs in bond orders."""
    out._ring_atoms = src._ring_atoms
    out._ring_bonds = src._ring_bonds
    return out


def small_rings(g: MolGraph, sizes: tuple[int, ...] = (5, 6)) -> list[tuple[int, ...]]:
    """Simple cycles with the given sizes, each listed once in a fixed rotation."""
    ring_bonds = g.ring_bonds
    if not ring_bonds:
        return []
    adj = g.adjacency
    max_size = max(sizes)
    rings = []
    for s in sorted(g.ring_atoms):
        stack = [(s, (s,))]
        while stack:
            a, path = stack.pop()
            for b in adj[a]:
                if (min(a, b), max(a, b)) not in ring_bonds:
                    continue
                if b == s and len(path) in sizes and path[1] < path[-1]:
                    rings.append(path)
                elif b > s and b not in path and len(path) < max_size:
                    stack.append((b, path + (b,)))
    rings.sort()
    return rings


def perceive_aromaticity(g: MolGraph) -> MolGraph:
    """Mark 4n+2 five- and six-membered rings aromatic (idempotent)."""
    k = kekulize(g)
    rings = small_rings(k)
    if not rings:
        return k
    adj = k.adjacency
    ring_bonds = k.ring_bonds
    contrib: dict[int, int | None] = {}
    for a in {x for ring in rings for x in ring}:
        orders = adj[a]
        doubles = [b for b, o in orders.items() if o == DOUBLE]
        if any(o == TRIPLE for o in orders.values()) or len(doubles) > 1:
            contrib[a] = None
        elif doubles:
            b = doubles[0]
            contrib[a] = 1 if (min(a, b), max(a, b)) in ring_bonds else 0
        elif k.atoms[a] in ("N", "O"):
            contrib[a] = 2
        else:
            contrib[a] = None
    aromatic_bonds: set[tuple[int, int]] = set()
    for ring in rings:
        values = [contrib[a] for a in ring]
        if None in values or sum(values) % 4 != 2:
            continue
        for x in range(len(ring)):
            a, b = ring[x], ring[x - 1]
            aromatic_bonds.add((min(a, b), max(a, b)))
    if not aromatic_bonds:
        return k
    bonds = [(i, j, AROMATIC if (i, j) in aromatic_bonds else o) for i, j, o in k.bonds]
    return _same_topology(k, MolGraph(k.atoms, bonds, k.hcounts, check=False))


aromatize = perceive_aromaticity
