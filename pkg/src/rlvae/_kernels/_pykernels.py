"""Pure-Python/numpy reference kernels.

Each function here has a compiled twin in ``_ckernels.pyx`` with identical
results (bit-identical for the integer kernels).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def refine_ranks(ranks: list[int], ptr: list[int], idx: list[int], w: list[int]) -> list[int]:
    """Iterate neighborhood refinement until the partition stops splitting."""
    n = len(ranks)
    n_classes = len(set(ranks))
    while n_classes < n:
        sigs = []
        for a in range(n):
            nb = sorted((ranks[idx[k]], w[k]) for k in range(ptr[a], ptr[a + 1]))
            sigs.append((ranks[a], tuple(nb)))
        order = sorted(set(sigs))
        lookup = {s: r for r, s in enumerate(order)}
        ranks = [lookup[s] for s in sigs]
        if len(order) == n_classes:
            break
        n_classes = len(order)
    return ranks


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def hash_seq(values, seed: int) -> int:
    """Order-sensitive 64-bit hash of a sequence of non-negative ints."""
    h = splitmix64(seed & MASK64)
    for v in values:
        h = splitmix64(h ^ (v & MASK64))
    return h


def segment_sum(values: np.ndarray, segments: np.ndarray, n_segments: int) -> np.ndarray:
    """Sum rows of ``values`` into ``n_segments`` buckets, in row order."""
    out = np.zeros((n_segments,) + values.shape[1:], dtype=values.dtype)
    np.add.at(out, segments, values)
    return out


def all_pairs_distances(n: int, ptr, idx) -> np.ndarray:
    dist = np.full((n, n), -1, dtype=np.int32)
    for s in range(n):
        dist[s, s] = 0
        frontier = [s]
        d = 0
        while frontier:
            d += 1
            nxt = []
            for a in frontier:
                for k in range(ptr[a], ptr[a + 1]):
                    b = idx[k]
                    if dist[s, b] < 0:
                        dist[s, b] = d
                        nxt.append(b)
            frontier = nxt
    return dist


def morgan_ids(inv, ptr, nbr, code, eid, radius: int, seed: int) -> list[int]:
    """Circular-environment identifiers (with multiplicity) on a CSR graph.

    ``inv`` holds one invariant row per atom; ``code``/``eid`` give the bond
    code and bond index of each CSR entry. Environments whose bond set was
    already seen, or did not grow, are dropped.
    """
    n = len(ptr) - 1
    ids = [hash_seq(inv[a], seed) for a in range(n)]
    out = list(ids)
    envs = [0] * n
    seen: set[int] = set()
    for it in range(1, radius + 1):
        new_ids = [0] * n
        new_envs = [0] * n
        for a in range(n):
            nb = sorted((code[k], ids[nbr[k]]) for k in range(ptr[a], ptr[a + 1]))
            flat = [it, ids[a]]
            for c, i in nb:
                flat.append(c)
                flat.append(i)
            new_ids[a] = hash_seq(flat, seed)
            env = envs[a]
            for k in range(ptr[a], ptr[a + 1]):
                env |= (1 << eid[k]) | envs[nbr[k]]
            new_envs[a] = env
        for a in sorted(range(n), key=lambda x: (bin(new_envs[x]).count("1"), new_ids[x])):
            env = new_envs[a]
            if env == 0 or env == envs[a] or env in seen:
                continue
            seen.add(env)
            out.append(new_ids[a])
        ids, envs = new_ids, new_envs
    return out


def path_ids(labels, ptr, nbr, code, max_len: int, seed: int) -> list[int]:
    """Identifiers of all simple paths with 0..max_len bonds, each counted once."""
    n = len(ptr) - 1
    out = [hash_seq((labels[a],), seed) for a in range(n)]
    for start in range(n):
        stack = [(start, (start,), (labels[start],))]
        while stack:
            a, path, seq = stack.pop()
            for k in range(ptr[a], ptr[a + 1]):
                b = nbr[k]
                if b in path:
                    continue
                p2 = path + (b,)
                s2 = seq + (code[k], labels[b])
                if start < b:
                    rev = s2[::-1]
                    out.append(hash_seq(min(s2, rev), seed))
                if len(p2) <= max_len:
                    stack.append((b, p2, s2))
    return out


def pair_ids(types, ptr, nbr, seed: int) -> list[int]:
    """(type, type, topological distance) identifiers for every atom pair."""
    n = len(ptr) - 1
    dist = all_pairs_distances(n, ptr, nbr)
    out = []
    for x in range(n):
        for y in range(x + 1, n):
            ta, tb = types[x], types[y]
            if ta > tb:
                ta, tb = tb, ta
            out.append(hash_seq((ta, tb, int(dist[x, y])), seed))
    return out
