"""Canonical atom ranking.

Morgan-style refinement from (element, degree, H count, ring flag) produces a
stable partition; remaining ties are broken by an exhaustive individualize and
refine search that keeps the labeling with the smallest certificate. Branches
that are images of already explored ones under a discovered automorphism are
skipped, so symmetric molecules stay cheap.
"""

from __future__ import annotations

from rlvae import _kernels
from rlvae.chemgraph.graph import ELEMENT_INDEX, MolGraph


def initial_invariants(g: MolGraph) -> list[int]:
    ring = g.ring_atoms
    adj = g.adjacency
    return [
        (ELEMENT_INDEX[e] << 12) | (len(adj[i]) << 7) | (g.hcounts[i] << 2) | (1 if i in ring else 0)
        for i, e in enumerate(g.atoms)
    ]


def _csr(g: MolGraph):
    ptr = [0]
    idx = []
    w = []
    for nb in g.adjacency:
        for j, o in sorted(nb.items()):
            idx.append(j)
            w.append(o)
        ptr.append(len(idx))
    return ptr, idx, w


def dense_ranks(values: list) -> list[int]:
    order = sorted(set(values))
    lookup = {v: r for r, v in enumerate(order)}
    return [lookup[v] for v in values]


def refined_ranks(g: MolGraph) -> list[int]:
    """Stable partition ranks (ties possible) after neighborhood refinement."""
    ptr, idx, w = _csr(g)
    return _kernels.refine_ranks(dense_ranks(initial_invariants(g)), ptr, idx, w)


def _certificate(g: MolGraph, order: list[int]) -> tuple:
    pos = [0] * len(order)
    for p, a in enumerate(order):
        pos[a] = p
    atoms = tuple((ELEMENT_INDEX[g.atoms[a]], g.hcounts[a]) for a in order)
    edges = sorted(
        (pos[i], pos[j], o) if pos[i] < pos[j] else (pos[j], pos[i], o) for i, j, o in g.bonds
    )
    return atoms, tuple(edges)


def _orbit_roots(autos: list[list[int]], fixed: list[int], n: int) -> list[int]:
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for gamma in autos:
        if all(gamma[p] == p for p in fixed):
            for a in range(n):
                ra, rb = find(a), find(gamma[a])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    return [find(a) for a in range(n)]


def canonical_order(g: MolGraph) -> list[int]:
    """Atom indices listed in canonical order (relabeling-invariant up to automorphism)."""
    n = g.n_atoms
    if n == 0:
        return []
    ptr, idx, w = _csr(g)
    refine = _kernels.refine_ranks
    start = refine(dense_ranks(initial_invariants(g)), ptr, idx, w)
    best: list = [None, None]  # certificate, order
    autos: list[list[int]] = []

    def search(ranks: list[int], path: list[int]) -> None:
        if len(set(ranks)) == n:
            order = sorted(range(n), key=ranks.__getitem__)
            cert = _certificate(g, order)
            if best[0] is None or cert < best[0]:
                best[0], best[1] = cert, order
            elif cert == best[0]:
                gamma = [0] * n
                for a, b in zip(best[1], order):
                    gamma[a] = b
                autos.append(gamma)
            return
        counts: dict[int, int] = {}
        for r in ranks:
            counts[r] = counts.get(r, 0) + 1
        cell = min(r for r, c in counts.items() if c > 1)
        members = [a for a in range(n) if ranks[a] == cell]
        explored: list[int] = []
        for v in members:
            if explored:
                roots = _orbit_roots(autos, path, n)
                if any(roots[u] == roots[v] for u in explored):
                    continue
            child = [2 * r for r in ranks]
            child[v] -= 1
            search(refine(dense_ranks(child), ptr, idx, w), path + [v])
            explored.append(v)

    search(start, [])
    return best[1]


def canonical_ranks(g: MolGraph) -> list[int]:
    """rank[atom] = position of the atom in the canonical order."""
    order = canonical_order(g)
    ranks = [0] * len(order)
    for p, a in enumerate(order):
        ranks[a] = p
    return ranks
