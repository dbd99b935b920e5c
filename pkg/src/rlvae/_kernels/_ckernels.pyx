# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; results match ``_pykernels`` exactly."""

import numpy as np

from libc.stdint cimport int64_t, uint64_t

from rlvae._kernels import _pykernels

_PYMASK = (1 << 64) - 1


cdef inline uint64_t _mix(uint64_t x) noexcept nogil:
    x = x + <uint64_t>0x9E3779B97F4A7C15
    x = (x ^ (x >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    x = (x ^ (x >> 27)) * <uint64_t>0x94D049BB133111EB
    return x ^ (x >> 31)


cdef inline uint64_t _hash(const uint64_t* vals, Py_ssize_t n, uint64_t seed) noexcept nogil:
    cdef uint64_t h = _mix(seed)
    cdef Py_ssize_t k
    for k in range(n):
        h = _mix(h ^ vals[k])
    return h


def hash_seq(values, seed):
    cdef uint64_t h = _mix(<uint64_t>(seed & _PYMASK))
    for v in values:
        h = _mix(h ^ <uint64_t>(v & _PYMASK))
    return h


cdef int64_t[::1] _i64(seq):
    return np.ascontiguousarray(np.asarray(seq, dtype=np.int64).reshape(-1))


# -- canonical refinement ----------------------------------------------------------


cdef int _cmp_sig(Py_ssize_t a, Py_ssize_t b, const int64_t* ranks, const int64_t* ptr,
                  const int64_t* nb_rank, const int64_t* nb_w) noexcept nogil:
    """Compare (rank, sorted neighbor (rank, w) list) signatures lexicographically."""
    if ranks[a] != ranks[b]:
        return -1 if ranks[a] < ranks[b] else 1
    cdef Py_ssize_t la = ptr[a + 1] - ptr[a]
    cdef Py_ssize_t lb = ptr[b + 1] - ptr[b]
    cdef Py_ssize_t k, m = la if la < lb else lb
    cdef Py_ssize_t ia, ib
    for k in range(m):
        ia = ptr[a] + k
        ib = ptr[b] + k
        if nb_rank[ia] != nb_rank[ib]:
            return -1 if nb_rank[ia] < nb_rank[ib] else 1
        if nb_w[ia] != nb_w[ib]:
            return -1 if nb_w[ia] < nb_w[ib] else 1
    if la != lb:
        return -1 if la < lb else 1
    return 0


def refine_ranks(ranks_in, ptr_in, idx_in, w_in):
    cdef int64_t[::1] ranks = _i64(ranks_in).copy()
    cdef int64_t[::1] ptr = _i64(ptr_in)
    cdef int64_t[::1] idx = _i64(idx_in)
    cdef int64_t[::1] w = _i64(w_in)
    cdef Py_ssize_t n = ranks.shape[0]
    if n == 0:
        return []
    cdef int64_t[::1] nb_rank = np.zeros(max(idx.shape[0], 1), dtype=np.int64)
    cdef int64_t[::1] nb_w = np.zeros(max(idx.shape[0], 1), dtype=np.int64)
    cdef int64_t[::1] order = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] new_ranks = np.zeros(n, dtype=np.int64)
    cdef Py_ssize_t a, k, j, i, lo, hi, n_classes, n_new
    cdef int64_t tr, tw, cur
    # Class count of the input partition.
    seen = set(ranks_in)
    n_classes = len(seen)
    while n_classes < n:
        with nogil:
            # Neighbor (rank, w) lists sorted per atom (insertion sort, short lists).
            for a in range(n):
                lo = ptr[a]
                hi = ptr[a + 1]
                for k in range(lo, hi):
                    nb_rank[k] = ranks[idx[k]]
                    nb_w[k] = w[k]
                for k in range(lo + 1, hi):
                    tr = nb_rank[k]
                    tw = nb_w[k]
                    j = k - 1
                    while j >= lo and (nb_rank[j] > tr or (nb_rank[j] == tr and nb_w[j] > tw)):
                        nb_rank[j + 1] = nb_rank[j]
                        nb_w[j + 1] = nb_w[j]
                        j -= 1
                    nb_rank[j + 1] = tr
                    nb_w[j + 1] = tw
            # Sort atoms by signature.
            for a in range(n):
                order[a] = a
            for k in range(1, n):
                cur = order[k]
                j = k - 1
                while j >= 0 and _cmp_sig(order[j], cur, &ranks[0], &ptr[0], &nb_rank[0], &nb_w[0]) > 0:
                    order[j + 1] = order[j]
                    j -= 1
                order[j + 1] = cur
            n_new = 0
            for k in range(n):
                if k > 0 and _cmp_sig(order[k - 1], order[k], &ranks[0], &ptr[0], &nb_rank[0], &nb_w[0]) != 0:
                    n_new += 1
                new_ranks[order[k]] = n_new
            n_new += 1
            for a in range(n):
                ranks[a] = new_ranks[a]
        if n_new == n_classes:
            break
        n_classes = n_new
    return [int(ranks[a]) for a in range(n)]


# -- numeric helpers ---------------------------------------------------------------


ctypedef fused real:
    float
    double


def _segment_sum_2d(real[:, ::1] values, const int64_t[::1] seg, real[:, ::1] out):
    cdef Py_ssize_t r, c, s
    cdef Py_ssize_t ncol = values.shape[1]
    with nogil:
        for r in range(values.shape[0]):
            s = seg[r]
            for c in range(ncol):
                out[s, c] += values[r, c]


def segment_sum(values, segments, n_segments):
    values = np.asarray(values)
    if values.ndim != 2 or values.dtype not in (np.float32, np.float64):
        return _pykernels.segment_sum(values, segments, n_segments)
    values = np.ascontiguousarray(values)
    out = np.zeros((n_segments, values.shape[1]), dtype=values.dtype)
    _segment_sum_2d(values, _i64(segments), out)
    return out


cdef void _bfs_all(Py_ssize_t n, const int64_t* ptr, const int64_t* nbr, int* dist, int* queue) noexcept nogil:
    cdef Py_ssize_t s, head, tail, a, k, b
    for s in range(n * n):
        dist[s] = -1
    for s in range(n):
        dist[s * n + s] = 0
        queue[0] = <int>s
        head = 0
        tail = 1
        while head < tail:
            a = queue[head]
            head += 1
            for k in range(ptr[a], ptr[a + 1]):
                b = nbr[k]
                if dist[s * n + b] < 0:
                    dist[s * n + b] = dist[s * n + a] + 1
                    queue[tail] = <int>b
                    tail += 1


def all_pairs_distances(Py_ssize_t n, ptr_in, idx_in):
    cdef int64_t[::1] ptr = _i64(ptr_in)
    cdef int64_t[::1] nbr = _i64(idx_in) if len(idx_in) else np.zeros(1, dtype=np.int64)
    out = np.empty((n, n), dtype=np.int32)
    cdef int[:, ::1] d = out
    cdef int[::1] queue = np.zeros(max(n, 1), dtype=np.int32)
    if n:
        with nogil:
            _bfs_all(n, &ptr[0], &nbr[0], &d[0, 0], &queue[0])
    return out


# -- fingerprints ------------------------------------------------------------------


cdef inline int _popcount(uint64_t x) noexcept nogil:
    cdef int c = 0
    while x:
        x &= x - 1
        c += 1
    return c


def morgan_ids(inv, ptr_in, nbr_in, code_in, eid_in, int radius, seed):
    cdef Py_ssize_t n = len(ptr_in) - 1
    if n <= 0:
        return []
    if len(eid_in) and max(eid_in) >= 64:
        return _pykernels.morgan_ids(inv, ptr_in, nbr_in, code_in, eid_in, radius, seed)
    cdef int64_t[::1] ptr = _i64(ptr_in)
    cdef Py_ssize_t m = max(len(nbr_in), 1)
    cdef int64_t[::1] nbr = _i64(nbr_in) if len(nbr_in) else np.zeros(1, dtype=np.int64)
    cdef int64_t[::1] code = _i64(code_in) if len(code_in) else np.zeros(1, dtype=np.int64)
    cdef int64_t[::1] eid = _i64(eid_in) if len(eid_in) else np.zeros(1, dtype=np.int64)
    cdef uint64_t s = <uint64_t>(seed & _PYMASK)
    cdef uint64_t[::1] ids = np.zeros(n, dtype=np.uint64)
    cdef uint64_t[::1] new_ids = np.zeros(n, dtype=np.uint64)
    cdef uint64_t[::1] envs = np.zeros(n, dtype=np.uint64)
    cdef uint64_t[::1] new_envs = np.zeros(n, dtype=np.uint64)
    cdef uint64_t[::1] seen = np.zeros(n * radius + 1, dtype=np.uint64)
    cdef int64_t[::1] order = np.zeros(n, dtype=np.int64)
    cdef uint64_t[::1] flat = np.zeros(2 * m + 2 * n + 2, dtype=np.uint64)
    cdef uint64_t[::1] pc = np.zeros(m, dtype=np.uint64)
    cdef uint64_t[::1] pi = np.zeros(m, dtype=np.uint64)
    cdef Py_ssize_t a, k, j, lo, hi, it, n_seen = 0, nf, deg, q
    cdef uint64_t tc, ti, env
    cdef int64_t cur
    cdef bint dup
    cdef uint64_t row[16]
    out = []
    for a in range(n):
        vals = inv[a]
        for k in range(len(vals)):
            row[k] = <uint64_t>(vals[k] & _PYMASK)
        ids[a] = _hash(row, len(vals), s)
        out.append(ids[a])
    emitted = np.zeros(n * radius, dtype=np.uint64)
    cdef uint64_t[::1] em = emitted
    cdef Py_ssize_t n_em = 0
    with nogil:
        for it in range(1, radius + 1):
            for a in range(n):
                lo = ptr[a]
                hi = ptr[a + 1]
                deg = hi - lo
                for k in range(deg):
                    pc[k] = <uint64_t>code[lo + k]
                    pi[k] = ids[nbr[lo + k]]
                for k in range(1, deg):
                    tc = pc[k]
                    ti = pi[k]
                    j = k - 1
                    while j >= 0 and (pc[j] > tc or (pc[j] == tc and pi[j] > ti)):
                        pc[j + 1] = pc[j]
                        pi[j + 1] = pi[j]
                        j -= 1
                    pc[j + 1] = tc
                    pi[j + 1] = ti
                flat[0] = <uint64_t>it
                flat[1] = ids[a]
                nf = 2
                for k in range(deg):
                    flat[nf] = pc[k]
                    flat[nf + 1] = pi[k]
                    nf += 2
                new_ids[a] = _hash(&flat[0], nf, s)
                env = envs[a]
                for k in range(lo, hi):
                    env = env | ((<uint64_t>1) << eid[k]) | envs[nbr[k]]
                new_envs[a] = env
            for a in range(n):
                order[a] = a
            for k in range(1, n):
                cur = order[k]
                j = k - 1
                while j >= 0 and (
                    _popcount(new_envs[order[j]]) > _popcount(new_envs[cur])
                    or (_popcount(new_envs[order[j]]) == _popcount(new_envs[cur]) and new_ids[order[j]] > new_ids[cur])
                ):
                    order[j + 1] = order[j]
                    j -= 1
                order[j + 1] = cur
            for k in range(n):
                a = order[k]
                env = new_envs[a]
                if env == 0 or env == envs[a]:
                    continue
                dup = False
                for q in range(n_seen):
                    if seen[q] == env:
                        dup = True
                        break
                if dup:
                    continue
                seen[n_seen] = env
                n_seen += 1
                em[n_em] = new_ids[a]
                n_em += 1
            for a in range(n):
                ids[a] = new_ids[a]
                envs[a] = new_envs[a]
    out.extend(emitted[:n_em].tolist())
    return out


cdef struct PathCtx:
    const int64_t* ptr
    const int64_t* nbr
    const int64_t* code
    const uint64_t* labels
    int max_len
    int start
    uint64_t seed
    int* path
    char* in_path
    uint64_t* seq
    uint64_t* tmp
    uint64_t* out
    Py_ssize_t n_out
    Py_ssize_t cap


cdef int _emit(PathCtx* c, Py_ssize_t length) noexcept nogil:
    # Compare forward and reversed label sequences; hash the smaller.
    cdef Py_ssize_t k
    cdef int use_rev = 0
    for k in range(length):
        if c.seq[k] != c.seq[length - 1 - k]:
            use_rev = 1 if c.seq[length - 1 - k] < c.seq[k] else 0
            break
    if use_rev:
        for k in range(length):
            c.tmp[k] = c.seq[length - 1 - k]
        h = _hash(c.tmp, length, c.seed)
    else:
        h = _hash(c.seq, length, c.seed)
    if c.n_out >= c.cap:
        return -1
    c.out[c.n_out] = h
    c.n_out += 1
    return 0


cdef int _dfs(PathCtx* c, int a, int n_atoms) noexcept nogil:
    cdef Py_ssize_t k
    cdef int b
    for k in range(c.ptr[a], c.ptr[a + 1]):
        b = <int>c.nbr[k]
        if c.in_path[b]:
            continue
        c.path[n_atoms] = b
        c.seq[2 * n_atoms - 1] = <uint64_t>c.code[k]
        c.seq[2 * n_atoms] = c.labels[b]
        if c.start < b:
            if _emit(c, 2 * n_atoms + 1) < 0:
                return -1
        if n_atoms + 1 <= c.max_len:
            c.in_path[b] = 1
            if _dfs(c, b, n_atoms + 1) < 0:
                return -1
            c.in_path[b] = 0
    return 0


def path_ids(labels_in, ptr_in, nbr_in, code_in, int max_len, seed):
    cdef Py_ssize_t n = len(ptr_in) - 1
    cdef uint64_t s = <uint64_t>(seed & _PYMASK)
    cdef int64_t[::1] ptr = _i64(ptr_in)
    cdef int64_t[::1] nbr = _i64(nbr_in) if len(nbr_in) else np.zeros(1, dtype=np.int64)
    cdef int64_t[::1] code = _i64(code_in) if len(code_in) else np.zeros(1, dtype=np.int64)
    cdef uint64_t[::1] labels = np.asarray(labels_in, dtype=np.uint64)
    cdef int[::1] path = np.zeros(n + 1, dtype=np.int32)
    cdef char[::1] in_path = np.zeros(n, dtype=np.int8)
    cdef uint64_t[::1] seq = np.zeros(2 * n + 2, dtype=np.uint64)
    cdef uint64_t[::1] tmp = np.zeros(2 * n + 2, dtype=np.uint64)
    cdef uint64_t[::1] buf
    cdef PathCtx c
    cdef Py_ssize_t a, cap = 4096
    cdef int rc = 0
    out = [hash_seq((labels_in[a],), seed) for a in range(n)]
    while True:
        arr = np.zeros(cap, dtype=np.uint64)
        buf = arr
        c.ptr = &ptr[0]
        c.nbr = &nbr[0]
        c.code = &code[0]
        c.labels = &labels[0]
        c.max_len = max_len
        c.seed = s
        c.path = &path[0]
        c.in_path = &in_path[0]
        c.seq = &seq[0]
        c.tmp = &tmp[0]
        c.out = &buf[0]
        c.n_out = 0
        c.cap = cap
        with nogil:
            for a in range(n):
                c.start = <int>a
                c.path[0] = <int>a
                c.seq[0] = c.labels[a]
                c.in_path[a] = 1
                rc = _dfs(&c, <int>a, 1)
                c.in_path[a] = 0
                if rc < 0:
                    break
        if rc == 0:
            break
        # Buffer overflow: reset marks and retry with more room.
        for a in range(n):
            in_path[a] = 0
        cap *= 4
    out.extend(arr[: c.n_out].tolist())
    return out


def pair_ids(types_in, ptr_in, nbr_in, seed):
    cdef Py_ssize_t n = len(ptr_in) - 1
    if n < 2:
        return []
    dist_arr = all_pairs_distances(n, ptr_in, nbr_in)
    cdef int[:, ::1] dist = dist_arr
    cdef int64_t[::1] types = _i64(types_in)
    cdef uint64_t s = <uint64_t>(seed & _PYMASK)
    arr = np.zeros(n * (n - 1) // 2, dtype=np.uint64)
    cdef uint64_t[::1] out = arr
    cdef uint64_t v[3]
    cdef Py_ssize_t x, y, k = 0
    cdef int64_t ta, tb
    with nogil:
        for x in range(n):
            for y in range(x + 1, n):
                ta = types[x]
                tb = types[y]
                if ta > tb:
                    ta, tb = tb, ta
                v[0] = <uint64_t>ta
                v[1] = <uint64_t>tb
                v[2] = <uint64_t>(<int64_t>dist[x, y])
                out[k] = _hash(v, 3, s)
                k += 1
    return arr.tolist()
