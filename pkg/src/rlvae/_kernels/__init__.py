"""Hot kernels: compiled Cython extension with a pure-Python fallback.

The compiled module is used when it was built and ``RLVAE_PURE_PYTHON`` is
unset. ``BACKEND`` reports which implementation is active.
"""

import os

from rlvae._kernels import _pykernels

if os.environ.get("RLVAE_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from rlvae._kernels import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

refine_ranks = _impl.refine_ranks
hash_seq = _impl.hash_seq
segment_sum = _impl.segment_sum
all_pairs_distances = _impl.all_pairs_distances
morgan_ids = _impl.morgan_ids
path_ids = _impl.path_ids
pair_ids = _impl.pair_ids
splitmix64 = _pykernels.splitmix64

__all__ = ["BACKEND", "refine_ranks", "hash_seq", "segment_sum", "all_pairs_distances", "morgan_ids", "path_ids", "pair_ids"]
