"""Molecular graph value type and the valence model.

Hydrogens are implicit: every atom carries an ``hcount`` and there are no
formal charges or radicals. Explicit ``H`` nodes are allowed (the decoder can
add them) and are treated like any other atom with maximum valence 1.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

ELEMENTS = ("H", "C", "N", "O", "F")
MAX_VALENCE = {"H": 1, "C": 4, "N": 3, "O": 2, "F": 1}
ELEMENT_INDEX = {e: i for i, e in enumerate(ELEMENTS)}

SINGLE, DOUBLE, TRIPLE, AROMATIC = 1, 2, 3, 4
BOND_ORDERS = (SINGLE, DOUBLE, TRIPLE, AROMATIC)
BOND_NAMES = {SINGLE: "single", DOUBLE: "double", TRIPLE: "triple", AROMATIC: "aromatic"}


class GraphError(ValueError):
    """Raised when a graph violates the MolGraph invariants."""


class MolGraph:
    """Immutable attributed molecular graph.

    Args:
        atoms: element symbol per atom, in stable index order.
        bonds: ``(i, j, order)`` triples; order is one of ``BOND_ORDERS``.
        hcounts: implicit hydrogen count per atom. May be omitted only for
            graphs without aromatic bonds, in which case every atom is
            saturated with hydrogens.
        check: validate the invariants on construction.
    """

    __slots__ = ("atoms", "bonds", "hcounts", "_adj", "_ring_atoms", "_ring_bonds", "_key")

    def __init__(
        self,
        atoms: Sequence[str],
        bonds: Iterable[tuple[int, int, int]] = (),
        hcounts: Sequence[int] | None = None,
        check: bool = True,
    ):
        self.atoms = tuple(atoms)
        norm = []
        for i, j, order in bonds:
            if i > j:
                i, j = j, i
            norm.append((i, j, order))
        norm.sort()
        self.bonds = tuple(norm)
        self._adj = None
        self._ring_atoms = None
        self._ring_bonds = None
        self._key = None
        if hcounts is None:
            if any(o == AROMATIC for _, _, o in self.bonds):
                raise GraphError("hydrogen counts are required for graphs with aromatic bonds")
            sums = [0] * len(self.atoms)
            for i, j, o in self.bonds:
                sums[i] += o
                sums[j] += o
            try:
                hcounts = [MAX_VALENCE[e] - s for e, s in zip(self.atoms, sums)]
            except KeyError as exc:
                raise GraphError(f"unsupported element {exc.args[0]!r}") from None
        self.hcounts = tuple(hcounts)
        if check:
            self.validate()

    # -- structure ---------------------------------------------------------

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def adjacency(self) -> list[dict[int, int]]:
        """Per-atom mapping neighbor -> bond order."""
        if self._adj is None:
            adj: list[dict[int, int]] = [{} for _ in self.atoms]
            for i, j, o in self.bonds:
                adj[i][j] = o
                adj[j][i] = o
            self._adj = adj
        return self._adj

    def bond_order(self, i: int, j: int) -> int | None:
        return self.adjacency[i].get(j)

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def heavy_degree(self, i: int) -> int:
        return sum(1 for j in self.adjacency[i] if self.atoms[j] != "H")

    def is_aromatic_atom(self, i: int) -> bool:
        return any(o == AROMATIC for o in self.adjacency[i].values())

    @property
    def has_aromatic(self) -> bool:
        return any(o == AROMATIC for _, _, o in self.bonds)

    def key(self) -> tuple:
        """Hashable labeled-graph identity (not canonical)."""
        if self._key is None:
            self._key = (self.atoms, self.bonds, self.hcounts)
        return self._key

    def __eq__(self, other: object) -> bool:
        return isinstance(other, MolGraph) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"MolGraph(atoms={''.join(self.atoms) or '-'}, bonds={len(self.bonds)})"

    # -- valence -----------------------------------------------------------

    def free_valence(self, i: int) -> int:
        """Remaining bonding capacity of atom ``i`` (requires a kekulized graph)."""
        if not 0 <= i < len(self.atoms):
            raise IndexError(f"atom index {i} out of range")
        total = 0
        for o in self.adjacency[i].values():
            if o == AROMATIC:
                raise GraphError("free_valence requires a kekulized graph")
            total += o
        return MAX_VALENCE[self.atoms[i]] - total

    def validate(self) -> None:
        n = len(self.atoms)
        seen = set()
        # Aromatic bonds count 1 here; each aromatic atom may owe one more
        # unit to its (unassigned) kekulé double bond.
        total = [0] * n
        for e in self.atoms:
            if e not in MAX_VALENCE:
                raise GraphError(f"unsupported element {e!r}")
        for i, j, o in self.bonds:
            if i == j:
                raise GraphError(f"self-loop on atom {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"bond ({i}, {j}) references a missing atom")
            if o not in BOND_NAMES:
                raise GraphError(f"unsupported bond order {o!r}")
            if (i, j) in seen:
                raise GraphError(f"duplicate bond between {i} and {j}")
            seen.add((i, j))
            w = 1 if o == AROMATIC else o
            total[i] += w
            total[j] += w
        if len(self.hcounts) != n:
            raise GraphError("hcounts length does not match atoms")
        for i, e in enumerate(self.atoms):
            h = self.hcounts[i]
            used = total[i] + h
            cap = MAX_VALENCE[e]
            if h < 0 or used > cap:
                raise GraphError(f"valence exceeded on atom {i} ({e})")
            if self.is_aromatic_atom(i):
                if used < cap - 1:
                    raise GraphError(f"unsaturated aromatic atom {i} ({e})")
            elif used != cap:
                raise GraphError(f"unsaturated atom {i} ({e}): radicals are not representable")
        if not self.is_connected():
            raise GraphError("graph is disconnected")

    # -- topology ----------------------------------------------------------

    def is_connected(self) -> bool:
        n = len(self.atoms)
        if n <= 1:
            return True
        return len(self.component_of(0)) == n

    def component_of(self, start: int) -> list[int]:
        adj = self.adjacency
        seen = {start}
        stack = [start]
        while stack:
            a = stack.pop()
            for b in adj[a]:
                if b not in seen:
                    seen.add(b)
                    stack.append(b)
        return sorted(seen)

    def components(self) -> list[list[int]]:
        """Connected components, each sorted, ordered by smallest atom index."""
        seen: set[int] = set()
        out = []
        for i in range(len(self.atoms)):
            if i not in seen:
                comp = self.component_of(i)
                seen.update(comp)
                out.append(comp)
        return out

    def _compute_rings(self) -> None:
        # A bond is in a ring iff it is not a bridge (iterative Tarjan).
        n = len(self.atoms)
        adj = self.adjacency
        disc = [-1] * n
        low = [0] * n
        bridges = set()
        timer = 0
        for root in range(n):
            if disc[root] != -1:
                continue
            disc[root] = low[root] = timer
            timer += 1
            stack = [(root, -1, iter(adj[root]))]
            while stack:
                v, parent, it = stack[-1]
                advanced = False
                for w in it:
                    if w == parent:
                        continue
                    if disc[w] == -1:
                        disc[w] = low[w] = timer
                        timer += 1
                        stack.append((w, v, iter(adj[w])))
                        advanced = True
                        break
                    low[v] = min(low[v], disc[w])
                if not advanced:
                    stack.pop()
                    if stack:
                        u = stack[-1][0]
                        low[u] = min(low[u], low[v])
                        if low[v] > disc[u]:
                            bridges.add((min(u, v), max(u, v)))
        ring_bonds = frozenset((i, j) for i, j, _ in self.bonds if (i, j) not in bridges)
        ring_atoms = set()
        for i, j in ring_bonds:
            ring_atoms.add(i)
            ring_atoms.add(j)
        self._ring_bonds = ring_bonds
        self._ring_atoms = frozenset(ring_atoms)

    @property
    def ring_atoms(self) -> frozenset[int]:
        if self._ring_atoms is None:
            self._compute_rings()
        return self._ring_atoms

    @property
    def ring_bonds(self) -> frozenset[tuple[int, int]]:
        if self._ring_bonds is None:
            self._compute_rings()
        return self._ring_bonds

    def distances_from(self, start: int) -> list[int]:
        """BFS topological distances from ``start``; -1 where unreachable."""
        adj = self.adjacency
        dist = [-1] * len(self.atoms)
        dist[start] = 0
        frontier = [start]
        while frontier:
            nxt = []
            for a in frontier:
                for b in adj[a]:
                    if dist[b] < 0:
                        dist[b] = dist[a] + 1
                        nxt.append(b)
            frontier = nxt
        return dist

    # -- derived graphs ----------------------------------------------------

    def subgraph(self, keep: Sequence[int]) -> "MolGraph":
        """Induced subgraph on ``keep`` (relabelled in the given order), kekulé only."""
        remap = {old: new for new, old in enumerate(keep)}
        bonds = [(remap[i], remap[j], o) for i, j, o in self.bonds if i in remap and j in remap]
        return MolGraph([self.atoms[i] for i in keep], bonds)

    def permute(self, perm: Sequence[int]) -> "MolGraph":
        """Relabel atoms: old atom ``i`` becomes new atom ``perm[i]``."""
        n = len(self.atoms)
        atoms = [""] * n
        hs = [0] * n
        for old, new in enumerate(perm):
            atoms[new] = self.atoms[old]
            hs[new] = self.hcounts[old]
        bonds = [(perm[i], perm[j], o) for i, j, o in self.bonds]
        return MolGraph(atoms, bonds, hs, check=False)


EMPTY = MolGraph([], [])


def atom_type_counts(g: MolGraph) -> Counter:
    """Atom counts per element, implicit hydrogens counted under ``H``."""
    counts: Counter = Counter(g.atoms)
    h = sum(g.hcounts)
    if h:
        counts["H"] += h
    return counts
