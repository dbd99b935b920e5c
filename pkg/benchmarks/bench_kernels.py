"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--molecules 500]

Each kernel runs on inputs derived from the bundled molecule sample; the
table reports the best-of-N wall time per backend and the speedup. Outputs of
the two backends are also compared so a silent divergence cannot hide
behind a fast number.
"""

from __future__ import annotations

import argparse
import csv
import time
from collections import Counter
from pathlib import Path

import numpy as np

from rlvae._kernels import _pykernels

try:
    from rlvae._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None

from rlvae.chemgraph import aromatize, parse_smiles
from rlvae.chemgraph.canon import _csr, initial_invariants
from rlvae.fingerprints import _MORGAN_SEED, _PAIR_SEED, _PATH_SEED, _HeavyGraph, _morgan_invariants, _pair_types, _path_labels

DATA = Path(__file__).resolve().parents[1] / "data" / "qm9like_sample.csv"


def load(n: int):
    with DATA.open() as fh:
        mols = [parse_smiles(r["smiles"]) for r in csv.DictReader(fh)][:n]
    heavy = [_HeavyGraph(aromatize(g)) for g in mols]
    return mols, heavy


def workloads(mols, heavy):
    rank_in = []
    for g in mols:
        ptr, idx, w = _csr(g)
        inv = initial_invariants(g)
        order = {v: k for k, v in enumerate(sorted(set(inv)))}
        rank_in.append(([order[v] for v in inv], ptr, idx, w))
    x = np.random.default_rng(0).standard_normal((20000, 64)).astype(np.float32)
    seg = np.sort(np.random.default_rng(1).integers(0, 2000, 20000))

    def morgan(k):
        return [Counter(k.morgan_ids(_morgan_invariants(h), h.ptr, h.nbr, h.code, h.eid, 3, _MORGAN_SEED)) for h in heavy]

    def paths(k):
        return [Counter(k.path_ids(_path_labels(h), h.ptr, h.nbr, h.code, 7, _PATH_SEED)) for h in heavy]

    def pairs(k):
        return [Counter(k.pair_ids(_pair_types(h), h.ptr, h.nbr, _PAIR_SEED)) for h in heavy]

    def ranks(k):
        return [k.refine_ranks(*a) for a in rank_in]

    def segsum(k):
        return k.segment_sum(x, seg, 2000)

    return {"refine_ranks": ranks, "morgan_ids": morgan, "path_ids": paths, "pair_ids": pairs, "segment_sum": segsum}


def best_time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def same(a, b) -> bool:
    if isinstance(a, np.ndarray):
        return bool(np.allclose(a, b, rtol=1e-5, atol=1e-5))
    return a == b


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--molecules", type=int, default=500)
    args = ap.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    mols, heavy = load(args.molecules)
    print(f"{'kernel':<14}{'python ms':>12}{'cython ms':>12}{'speedup':>10}  match")
    for name, fn in workloads(mols, heavy).items():
        tp = best_time(lambda: fn(_pykernels), args.repeat)
        tc = best_time(lambda: fn(_ckernels), args.repeat)
        ok = same(fn(_pykernels), fn(_ckernels))
        print(f"{name:<14}{tp * 1e3:>12.2f}{tc * 1e3:>12.2f}{tp / tc:>10.1f}  {'yes' if ok else 'NO'}")


if __name__ == "__main__":
    main()
