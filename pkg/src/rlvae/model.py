"""MPNN encoders, variational sampling, KL divergence and the value head.

Both encoders share one architecture with separate weights:

    h0_v  = W_node[element(v)]                           (no bias)
    m_v   = sum over edges u-v of (h_u + W_edge[bond(u, v)])
    h_v  <- GRU_l(h_v, m_v)                              l = 1..n_layers
    r     = sum_v sigmoid(gate(h_v)) * lin(h_v)

The target encoder has two readouts (mu and log standard deviation), the
state encoder one. The value head is a single hidden ReLU layer over
``[f_state(s), z, t1, t2]``; its first weight matrix is stored in three
blocks so the latent projection can be shared across many states.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from rlvae.chemgraph import AROMATIC, MolGraph, canonical_ranks
from rlvae.chemgraph.graph import ELEMENT_INDEX, ELEMENTS
from rlvae.mdp import Action, ActionList, Kind
from rlvae.nn import tensor as T
from rlvae.nn.params import Params, glorot, gru_cell, init_gru, init_linear, linear
from rlvae.nn.tensor import Tensor

N_ELEMENTS = len(ELEMENTS)
N_BONDS = 4
BOND_INDEX = {1: 0, 2: 1, 3: 2, AROMATIC: 3}
LOGSD_CLAMP = (-10.0, 10.0)


@dataclass(frozen=True)
class ModelConfig:
    node_dim: int = 128
    latent_dim: int = 256
    hidden_dim: int = 256
    n_layers: int = 2
    max_steps: int = 20

    def to_dict(self) -> dict:
        return asdict(self)


# -- graph batches ---------------------------------------------------------------


class GraphBatch:
    """Several graphs packed into one disjoint union.

    Edges are stored in both directions. Nodes need not be grouped by graph;
    ``node_graph`` maps each node to its graph.
    """

    def __init__(self, elem, src, dst, bond, node_graph, n_graphs: int):
        self.elem = np.asarray(elem, dtype=np.intp)
        self.src = np.asarray(src, dtype=np.intp)
        self.dst = np.asarray(dst, dtype=np.intp)
        self.bond = np.asarray(bond, dtype=np.intp)
        self.node_graph = np.asarray(node_graph, dtype=np.intp)
        self.n_graphs = n_graphs
        n = len(self.elem)
        # CSR/CSC built directly from sorted index arrays (no COO conversion).
        by_dst = np.argsort(self.dst, kind="stable")
        indptr = np.zeros(n + 1, dtype=np.intp)
        np.cumsum(np.bincount(self.dst, minlength=n), out=indptr[1:])
        ones_e = np.ones(len(self.src), dtype=np.float32)
        self.adjacency = sp.csr_matrix((ones_e, self.src[by_dst], indptr), shape=(n, n))
        self.edge_counts = sp.csr_matrix((ones_e, self.bond[by_dst], indptr), shape=(n, N_BONDS))
        ones_n = np.ones(n, dtype=np.float32)
        self.node_onehot = sp.csr_matrix((ones_n, self.elem, np.arange(n + 1)), shape=(n, N_ELEMENTS))
        self.pool = sp.csc_matrix((ones_n, self.node_graph, np.arange(n + 1)), shape=(n_graphs, n))

    @property
    def n_nodes(self) -> int:
        return len(self.elem)


def graph_arrays(g: MolGraph, canonical: bool = False):
    """(elements, src, dst, bond) arrays for one graph; both edge directions."""
    if canonical and g.n_atoms > 1:
        g = g.permute(canonical_ranks(g))
    elem = [ELEMENT_INDEX[e] for e in g.atoms]
    src, dst, bond = [], [], []
    for i, j, o in g.bonds:
        b = BOND_INDEX[o]
        src += (i, j)
        dst += (j, i)
        bond += (b, b)
    return elem, src, dst, bond


def batch_graphs(graphs: Sequence[MolGraph], canonical: bool = False) -> GraphBatch:
    elem, src, dst, bond, gid = [], [], [], [], []
    offset = 0
    for k, g in enumerate(graphs):
        e, s, d, b = graph_arrays(g, canonical)
        elem += e
        src += [x + offset for x in s]
        dst += [x + offset for x in d]
        bond += b
        gid += [k] * len(e)
        offset += len(e)
    return GraphBatch(elem, src, dst, bond, gid, len(graphs))


_ARRAY_CACHE: dict = {}
_ARRAY_CACHE_MAX = 100_000


def _memo(key, build):
    hit = _ARRAY_CACHE.get(key)
    if hit is None:
        if len(_ARRAY_CACHE) >= _ARRAY_CACHE_MAX:
            _ARRAY_CACHE.clear()
        hit = _ARRAY_CACHE[key] = build()
    return hit


def _parent_arrays(s: MolGraph):
    def build():
        n = s.n_atoms
        elem = np.fromiter((ELEMENT_INDEX[e] for e in s.atoms), dtype=np.intp, count=n)
        if s.bonds:
            bonds = np.asarray(s.bonds, dtype=np.intp)
            u, v, o = bonds[:, 0], bonds[:, 1], bonds[:, 2]
            b = np.where(o == AROMATIC, 3, o - 1)
        else:
            u = v = b = np.zeros(0, dtype=np.intp)
        return elem, u, v, b

    return _memo(("graph", s.key()), build)


def _action_arrays(actions: Sequence[Action]):
    """(kind, i, j, order, element index) columns; stored on cached action lists."""
    hit = getattr(actions, "arrays", None)
    if hit is not None:
        return hit
    K = len(actions)
    cols = np.array(
        [(a.kind, a.i, a.j, a.order, ELEMENT_INDEX.get(a.element, -1)) for a in actions], dtype=np.intp
    ).reshape(K, 5)
    out = tuple(np.ascontiguousarray(cols[:, c]) for c in range(5))
    if isinstance(actions, ActionList):
        actions.arrays = out
    return out


def successor_batch(items: Sequence[tuple[MolGraph, Sequence[Action]]]) -> GraphBatch:
    """Pack the successors of several parents without materializing them.

    Supports the grow-only actions (no_op, add_atom, add_bond). Graph ``k`` of
    the batch is the k-th (parent, action) pair in iteration order.
    """
    elems, srcs, dsts, bonds, gids = [], [], [], [], []
    node_off = 0
    graph_off = 0
    for s, actions in items:
        K = len(actions)
        n = s.n_atoms
        pe, pu, pv, pb = _parent_arrays(s)
        kinds, ai, aj, order, new_elem = _action_arrays(actions)
        if np.any(kinds > Kind.ADD_BOND):
            raise ValueError("successor_batch supports grow-only actions")
        base = node_off + n * np.arange(K)
        # Copies of the parent.
        elems.append(np.tile(pe, K))
        gids.append(np.repeat(graph_off + np.arange(K), n))
        if len(pu):
            U = (base[:, None] + pu[None, :]).ravel()
            V = (base[:, None] + pv[None, :]).ravel()
            B = np.tile(pb, K)
            srcs += [U, V]
            dsts += [V, U]
            bonds += [B, B]
        # New atoms go after all parent copies.
        add = np.flatnonzero(kinds == Kind.ADD_ATOM)
        new_ids = node_off + n * K + np.arange(len(add))
        elems.append(new_elem[add])
        gids.append(graph_off + add)
        attached = add[ai[add] >= 0]
        if len(attached):
            new_att = new_ids[ai[add] >= 0]
            a_nodes = base[attached] + ai[attached]
            b_idx = order[attached] - 1
            srcs += [a_nodes, new_att]
            dsts += [new_att, a_nodes]
            bonds += [b_idx, b_idx]
        nb = np.flatnonzero(kinds == Kind.ADD_BOND)
        if len(nb):
            x = base[nb] + ai[nb]
            y = base[nb] + aj[nb]
            b_idx = order[nb] - 1
            srcs += [x, y]
            dsts += [y, x]
            bonds += [b_idx, b_idx]
        node_off += n * K + len(add)
        graph_off += K

    def cat(parts):
        return np.concatenate(parts) if parts else np.zeros(0, dtype=np.intp)

    return GraphBatch(cat(elems), cat(srcs), cat(dsts), cat(bonds), cat(gids), graph_off)


# -- parameters ------------------------------------------------------------------


def _init_encoder(p: Params, rng, prefix: str, cfg: ModelConfig, readouts: Sequence[str]) -> None:
    d = cfg.node_dim
    p[f"{prefix}.node.w"] = glorot(rng, N_ELEMENTS, d)
    p[f"{prefix}.edge.w"] = glorot(rng, N_BONDS, d)
    for layer in range(cfg.n_layers):
        init_gru(p, rng, f"{prefix}.gru{layer}", d)
    for r in readouts:
        init_linear(p, rng, f"{prefix}.{r}.lin", d, cfg.latent_dim)
        init_linear(p, rng, f"{prefix}.{r}.gate", d, cfg.latent_dim)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> Params:
    p = Params()
    _init_encoder(p, rng, "target", cfg, ("mu", "logsd"))
    _init_encoder(p, rng, "state", cfg, ("out",))
    L, H = cfg.latent_dim, cfg.hidden_dim
    w1 = glorot(rng, 2 * L + 2, H)
    p["value.w_state"] = np.ascontiguousarray(w1[:L])
    p["value.w_latent"] = np.ascontiguousarray(w1[L : 2 * L])
    p["value.w_time"] = np.ascontiguousarray(w1[2 * L :])
    p["value.b1"] = np.zeros(H, dtype=np.float32)
    p["value.w2"] = glorot(rng, H, 1)
    p["value.b2"] = np.zeros(1, dtype=np.float32)
    return p


def value_head_names() -> list[str]:
    return ["value.w_state", "value.w_latent", "value.w_time", "value.b1", "value.w2", "value.b2"]


# -- forward passes --------------------------------------------------------------


def _spmm(m: sp.csr_matrix, x: Tensor) -> Tensor:
    """Sparse (constant) times dense Tensor."""

    def bw(g):
        x._accumulate(np.asarray(m.T @ g, dtype=x.data.dtype))

    return T._make(np.asarray(m @ x.data, dtype=x.data.dtype), (x,), bw)


def _sp_const(m: sp.csr_matrix, w: Tensor) -> Tensor:
    """Sparse constant times a parameter matrix (one-hot lookups)."""
    return _spmm(m, w)


def encode_nodes(p: dict[str, Tensor], prefix: str, batch: GraphBatch, n_layers: int) -> Tensor:
    h = _sp_const(batch.node_onehot, p[f"{prefix}.node.w"])
    edge_in = _sp_const(batch.edge_counts, p[f"{prefix}.edge.w"])
    for layer in range(n_layers):
        m = T.add(_spmm(batch.adjacency, h), edge_in)
        h = gru_cell(p, f"{prefix}.gru{layer}", h, m)
    return h


def readout(p: dict[str, Tensor], name: str, h: Tensor, batch: GraphBatch) -> Tensor:
    gated = T.mul(T.sigmoid(linear(p, f"{name}.gate", h)), linear(p, f"{name}.lin", h))
    return _spmm(batch.pool, gated)


def state_embed(p: dict[str, Tensor], batch: GraphBatch, cfg: ModelConfig) -> Tensor:
    h = encode_nodes(p, "state", batch, cfg.n_layers)
    return readout(p, "state.out", h, batch)


def target_dist(p: dict[str, Tensor], batch: GraphBatch, cfg: ModelConfig) -> tuple[Tensor, Tensor]:
    h = encode_nodes(p, "target", batch, cfg.n_layers)
    return readout(p, "target.mu", h, batch), readout(p, "target.logsd", h, batch)


def time_features(t, max_steps: int) -> np.ndarray:
    """(t1, t2) = (2(T - t)/T - 1, 1[t == T-1]) per step; shape (..., 2)."""
    t = np.asarray(t)
    if np.any(t < 0) or np.any(t >= max_steps):
        raise ValueError(f"step index out of range [0, {max_steps})")
    t1 = 2.0 * (max_steps - t) / max_steps - 1.0
    t2 = (t == max_steps - 1).astype(np.float64)
    return np.stack([t1, t2], axis=-1).astype(np.float32)


def value_head(p: dict[str, Tensor], fs: Tensor, zproj: Tensor, tf: np.ndarray) -> Tensor:
    """V for rows of state embeddings ``fs``; ``zproj`` = z @ w_latent per row (or broadcast)."""
    pre = T.add(T.add(T.matmul(fs, p["value.w_state"]), zproj), T.matmul(Tensor(tf.astype(fs.data.dtype)), p["value.w_time"]))
    hidden = T.relu(T.add(pre, p["value.b1"]))
    out = T.add(T.matmul(hidden, p["value.w2"]), p["value.b2"])
    return T.reshape(out, (out.shape[0],))


def kl_terms(mu: Tensor, logsd: Tensor) -> Tensor:
    """Per-row KL(N(mu, sigma^2) || N(0, I)) = 0.5 sum(mu^2 + sigma^2 - 1 - 2 log sigma)."""
    ls = T.clip(logsd, *LOGSD_CLAMP)
    var = T.exp(T.mul(ls, 2.0))
    inner = T.sub(T.add(T.square(mu), var), T.add(T.mul(ls, 2.0), 1.0))
    return T.mul(T.sum_rows(inner), 0.5)


def sample_from(mu: Tensor, logsd: Tensor, eta: np.ndarray) -> Tensor:
    """Reparameterized z = mu + exp(clamp(logsd)) * eta."""
    sd = T.exp(T.clip(logsd, *LOGSD_CLAMP))
    return T.add(mu, T.mul(sd, Tensor(eta.astype(mu.data.dtype))))


# -- single-graph public API -----------------------------------------------------


@dataclass
class EmbeddingDistribution:
    mu: np.ndarray
    logsd: np.ndarray


def encode_graph(g: MolGraph, params: Params, mode: str = "target", cfg: ModelConfig | None = None):
    """Encode one molecule; node order is canonical so the result is label-independent."""
    cfg = cfg or config_from_params(params)
    batch = batch_graphs([g], canonical=True)
    p = params.frozen()
    if mode == "target":
        mu, ls = target_dist(p, batch, cfg)
        return EmbeddingDistribution(mu.data[0].copy(), ls.data[0].copy())
    if mode == "state":
        return state_embed(p, batch, cfg).data[0].copy()
    raise ValueError(f"unknown encoder mode {mode!r}")


def sample_embedding(d: EmbeddingDistribution, rng: np.random.Generator) -> np.ndarray:
    eta = rng.standard_normal(d.mu.shape).astype(np.float32)
    return sample_from(Tensor(d.mu), Tensor(d.logsd), eta).data


def kl_divergence(d: EmbeddingDistribution) -> float:
    mu = np.asarray(d.mu, dtype=np.float64)[None]
    ls = np.asarray(d.logsd, dtype=np.float64)[None]
    return float(kl_terms(Tensor(mu), Tensor(ls)).data[0])


def value(s: MolGraph, z: np.ndarray, t: int, params: Params, cfg: ModelConfig | None = None) -> float:
    cfg = cfg or config_from_params(params)
    if not 0 <= t < cfg.max_steps:
        raise ValueError(f"t={t} outside [0, {cfg.max_steps})")
    p = params.frozen()
    fs = state_embed(p, batch_graphs([s], canonical=True), cfg)
    zproj = T.matmul(Tensor(np.asarray(z, dtype=np.float32)[None]), p["value.w_latent"])
    return float(value_head(p, fs, zproj, time_features([t], cfg.max_steps)).data[0])


def config_from_params(params: Params, max_steps: int = 20) -> ModelConfig:
    node_dim = params["state.node.w"].shape[1]
    latent_dim, hidden = params["value.w_latent"].shape
    n_layers = sum(1 for k in params if k.startswith("state.gru") and k.endswith(".wx"))
    return ModelConfig(node_dim, latent_dim, hidden, n_layers, max_steps)


class ValueEvaluator:
    """Batched V(successor, z, t) for decoding with fixed parameters."""

    def __init__(self, params: Params, cfg: ModelConfig):
        self.params = params
        self.cfg = cfg
        self.p = params.frozen()

    def latent_projection(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float32) @ self.params["value.w_latent"]

    def successor_values(self, items, zprojs: Sequence[np.ndarray], ts: Sequence[int]) -> list[np.ndarray]:
        """Values of every successor of every (state, actions) item."""
        if not items:
            return []
        batch = successor_batch(items)
        fs = state_embed(self.p, batch, self.cfg)
        counts = [len(a) for _, a in items]
        zp = np.repeat(np.stack(zprojs), counts, axis=0)
        tf = time_features(np.repeat(np.asarray(ts), counts), self.cfg.max_steps)
        v = value_head(self.p, fs, Tensor(zp), tf).data
        return np.split(v, np.cumsum(counts)[:-1])
