"""Sparse count fingerprints, Tversky similarity and the reconstruction reward.

Feature identifiers are 64-bit values from a seeded splitmix64 chain
(``hash_seq``), so they are stable across platforms and backends. All
structural fingerprints use heavy atoms only and are computed on the
aromatized form of the graph.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

from rlvae import _kernels
from rlvae.chemgraph import AROMATIC, MolGraph, aromatize, atom_type_counts
from rlvae.chemgraph.graph import ELEMENT_INDEX

SparseFingerprint = Counter

_MORGAN_SEED = 0x5EED0001
_PATH_SEED = 0x5EED0002
_PAIR_SEED = 0x5EED0003
_BOND_CODE = {1: 1, 2: 2, 3: 3, AROMATIC: 4}

DEFAULT_TVERSKY_PAIRS = ((0.5, 0.5), (0.95, 0.05), (0.05, 0.95))


@dataclass(frozen=True)
class SimilarityConfig:
    tversky_pairs: tuple[tuple[float, float], ...] = DEFAULT_TVERSKY_PAIRS
    morgan_radius: int = 3
    path_max_len: int = 7

    def __post_init__(self):
        for a, b in self.tversky_pairs:
            if a < 0 or b < 0:
                raise ValueError("Tversky weights must be non-negative")


class _HeavyGraph:
    """Heavy-atom CSR view of an aromatized graph (neighbors sorted by index)."""

    __slots__ = ("g", "heavy", "ptr", "nbr", "code", "eid")

    def __init__(self, g: MolGraph):
        self.g = g
        self.heavy = [i for i, e in enumerate(g.atoms) if e != "H"]
        pos = {a: k for k, a in enumerate(self.heavy)}
        adj = g.adjacency
        edge_index: dict[tuple[int, int], int] = {}
        ptr, nbr, code, eid = [0], [], [], []
        for a in self.heavy:
            for b in sorted(adj[a]):
                if b in pos:
                    key = (min(a, b), max(a, b))
                    if key not in edge_index:
                        edge_index[key] = len(edge_index)
                    nbr.append(pos[b])
                    code.append(_BOND_CODE[adj[a][b]])
                    eid.append(edge_index[key])
            ptr.append(len(nbr))
        self.ptr, self.nbr, self.code, self.eid = ptr, nbr, code, eid


def _view(g: MolGraph, aromatized: bool) -> _HeavyGraph:
    return _HeavyGraph(g if aromatized else aromatize(g))


def _morgan_invariants(hg: _HeavyGraph) -> list[tuple]:
    g = hg.g
    adj = g.adjacency
    ring = g.ring_atoms
    inv = []
    for a in hg.heavy:
        h = g.hcounts[a] + sum(1 for j in adj[a] if g.atoms[j] == "H")
        inv.append((ELEMENT_INDEX[g.atoms[a]], g.heavy_degree(a), h, int(a in ring), int(g.is_aromatic_atom(a))))
    return inv


def _path_labels(hg: _HeavyGraph) -> list[int]:
    g = hg.g
    return [ELEMENT_INDEX[g.atoms[a]] * 2 + int(g.is_aromatic_atom(a)) for a in hg.heavy]


def _pair_types(hg: _HeavyGraph) -> list[int]:
    g = hg.g
    adj = g.adjacency
    types = []
    for a in hg.heavy:
        pi = 1 if g.is_aromatic_atom(a) else 0
        for o in adj[a].values():
            if o == 2:
                pi += 1
            elif o == 3:
                pi += 2
        types.append((ELEMENT_INDEX[g.atoms[a]] << 8) | (g.heavy_degree(a) << 4) | pi)
    return types


def _morgan(hg: _HeavyGraph, radius: int) -> Counter:
    if not hg.heavy:
        return Counter()
    return Counter(_kernels.morgan_ids(_morgan_invariants(hg), hg.ptr, hg.nbr, hg.code, hg.eid, radius, _MORGAN_SEED))


def _paths(hg: _HeavyGraph, max_len: int) -> Counter:
    return Counter(_kernels.path_ids(_path_labels(hg), hg.ptr, hg.nbr, hg.code, max_len, _PATH_SEED))


def _pairs(hg: _HeavyGraph) -> Counter:
    if len(hg.heavy) < 2:
        return Counter()
    return Counter(_kernels.pair_ids(_pair_types(hg), hg.ptr, hg.nbr, _PAIR_SEED))


def morgan_fingerprint(g: MolGraph, radius: int = 3, *, aromatized: bool = False) -> Counter:
    """ECFP-style circular environments up to ``radius`` with counts.

    Atom invariants: element, heavy degree, attached hydrogens, ring
    membership, aromaticity. Environments covering a bond set already seen
    (at this or an earlier radius) are dropped, as in standard ECFP.
    """
    return _morgan(_view(g, aromatized), radius)


def path_fingerprint(g: MolGraph, max_len: int = 7, *, aromatized: bool = False) -> Counter:
    """Linear simple paths of 0..max_len bonds, labeled in the smaller direction."""
    return _paths(_view(g, aromatized), max_len)


def count_paths(g: MolGraph, max_len: int) -> int:
    return sum(path_fingerprint(g, max_len).values())


def atom_pair_fingerprint(g: MolGraph, *, aromatized: bool = False) -> Counter:
    """(typecode, typecode, topological distance) for every heavy-atom pair.

    The typecode packs element, heavy degree and pi-electron count.
    """
    return _pairs(_view(g, aromatized))


def _overlap(a: Counter, b: Counter) -> tuple[int, int, int]:
    if len(a) > len(b):
        a, b = b, a
        swap = True
    else:
        swap = False
    inter = sum(min(c, b[k]) for k, c in a.items() if k in b)
    sa, sb = sum(a.values()), sum(b.values())
    return (inter, sb, sa) if swap else (inter, sa, sb)


def _tversky_from(inter: int, size_a: int, size_b: int, alpha: float, beta: float) -> float:
    if size_a == 0 and size_b == 0:
        return 1.0
    # the two difference terms are summed first so swapping (a, alpha) with (b, beta) is exact
    denom = inter + (alpha * (size_a - inter) + beta * (size_b - inter))
    if denom == 0:
        return 0.0
    return inter / denom


def tversky(a: Counter, b: Counter, alpha: float, beta: float) -> float:
    """Count-based Tversky index; both empty gives 1.0."""
    return _tversky_from(*_overlap(a, b), alpha, beta)


def tanimoto(a: Counter, b: Counter) -> float:
    return tversky(a, b, 1.0, 1.0)


def dice(a: Counter, b: Counter) -> float:
    return tversky(a, b, 0.5, 0.5)


def count_similarity(ca: Counter, cb: Counter) -> float:
    keys = set(ca) | set(cb)
    hi = sum(max(ca[k], cb[k]) for k in keys)
    if hi == 0:
        return 1.0
    return sum(min(ca[k], cb[k]) for k in keys) / hi


def atom_count_similarity(a: MolGraph, b: MolGraph) -> float:
    """Tanimoto over per-element atom counts (hydrogens included)."""
    return count_similarity(atom_type_counts(a), atom_type_counts(b))


@dataclass(frozen=True)
class Profile:
    """Everything the reward needs about one molecule."""

    morgan: Counter
    path: Counter
    pair: Counter
    counts: Counter = field(default_factory=Counter)


def profile(g: MolGraph, cfg: SimilarityConfig = SimilarityConfig()) -> Profile:
    hg = _HeavyGraph(aromatize(g) if g.n_atoms else g)
    return Profile(_morgan(hg, cfg.morgan_radius), _paths(hg, cfg.path_max_len), _pairs(hg), atom_type_counts(g))


@lru_cache(maxsize=50_000)
def _cached_profile(key: tuple, cfg: SimilarityConfig) -> Profile:
    atoms, bonds, hcounts = key
    return profile(MolGraph(atoms, bonds, hcounts, check=False), cfg)


def cached_profile(g: MolGraph, cfg: SimilarityConfig = SimilarityConfig()) -> Profile:
    return _cached_profile(g.key(), cfg)


def _mean_tversky(a: Counter, b: Counter, pairs) -> float:
    ov = _overlap(a, b)
    return sum(_tversky_from(*ov, al, be) for al, be in pairs) / len(pairs)


def similarity_components(pa: Profile, pb: Profile, cfg: SimilarityConfig = SimilarityConfig()) -> dict[str, float]:
    pairs = cfg.tversky_pairs
    return {
        "morgan": _mean_tversky(pa.morgan, pb.morgan, pairs),
        "path": _mean_tversky(pa.path, pb.path, pairs),
        "pair": _mean_tversky(pa.pair, pb.pair, pairs),
        "atom_count": count_similarity(pa.counts, pb.counts),
    }


def reward_from_profiles(ps: Profile, py: Profile, cfg: SimilarityConfig = SimilarityConfig()) -> float:
    comps = similarity_components(ps, py, cfg)
    return (comps["morgan"] + comps["path"] + comps["pair"] + comps["atom_count"]) / 4.0


def reward(s: MolGraph, y: MolGraph, cfg: SimilarityConfig = SimilarityConfig()) -> float:
    """Mean of the Morgan, path and atom-pair Tversky averages and atom-count similarity."""
    return reward_from_profiles(cached_profile(s, cfg), cached_profile(y, cfg), cfg)
