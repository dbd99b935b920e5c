"""Reconstruction evaluation, latent perturbation sweep and 2-D latent exploration."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from rlvae import fingerprints
from rlvae.chemgraph import MolGraph, write_canonical_smiles
from rlvae.editdist import SearchResult, mdp_edit_distance
from rlvae.mdp import DECODER, MdpConfig, check_state, rollout_batch
from rlvae.model import ModelConfig, ValueEvaluator, batch_graphs, sample_from, target_dist
from rlvae.nn import Params, Tensor

DECODE_CHUNK = 128
EVAL_EDIT_MAX_STEPS = 3
EVAL_EDIT_MAX_STATES = 20_000


# -- encoding and decoding ---------------------------------------------------------


def encode_targets(params: Params, cfg: ModelConfig, graphs: Sequence[MolGraph], chunk: int = 256):
    """Posterior (mu, logsd) for each graph, computed in canonical atom order."""
    p = params.frozen()
    mus, lss = [], []
    for lo in range(0, len(graphs), chunk):
        mu, ls = target_dist(p, batch_graphs(graphs[lo : lo + chunk], canonical=True), cfg)
        mus.append(mu.data)
        lss.append(ls.data)
    if not mus:
        return np.zeros((0, cfg.latent_dim), np.float32), np.zeros((0, cfg.latent_dim), np.float32)
    return np.concatenate(mus), np.concatenate(lss)


def _decode_chunk(params: Params, cfg: ModelConfig, zs: np.ndarray, mdp: MdpConfig) -> list[MolGraph]:
    evaluator = ValueEvaluator(params, cfg)
    zproj = evaluator.latent_projection(zs)

    def policy(ids, items, t):
        return evaluator.successor_values(items, [zproj[k] for k in ids], [t] * len(items))

    return [ep.final for ep in rollout_batch(policy, [None] * len(zproj), 0.0, None, mdp)]


def _decode_job(args):
    with threadpool_limits(1):
        return _decode_chunk(*args)


def greedy_decode(
    params: Params,
    cfg: ModelConfig,
    zs: np.ndarray,
    mdp: MdpConfig = DECODER,
    chunk: int = DECODE_CHUNK,
    workers: int = 1,
) -> list[MolGraph]:
    """Final state of the epsilon = 0 rollout for every latent row of ``zs``.

    Rows are decoded in fixed chunks of ``chunk``; with ``workers > 1`` the
    chunks go to a process pool. Chunk boundaries do not depend on
    ``workers``, so neither does the output.
    """
    jobs = [(params, cfg, zs[lo : lo + chunk], mdp) for lo in range(0, len(zs), chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            parts = list(pool.map(_decode_job, jobs))
    else:
        parts = [_decode_chunk(*job) for job in jobs]
    out = [g for part in parts for g in part]
    for g in out:
        check_state(g)
    return out


def random_walk_decode(n: int, rng: np.random.Generator, mdp: MdpConfig = DECODER) -> list[MolGraph]:
    """Uniformly random legal actions for ``mdp.max_steps`` steps, ``n`` times."""
    out = [ep.final for ep in rollout_batch(None, [None] * n, 1.0, rng, mdp)]
    for g in out:
        check_state(g)
    return out


def morgan_tanimoto(a: MolGraph, b: MolGraph) -> float:
    """Tanimoto over sparse radius-3 Morgan count fingerprints."""
    return fingerprints.tanimoto(fingerprints.cached_profile(a).morgan, fingerprints.cached_profile(b).morgan)


# -- reconstruction ------------------------------------------------------------------


@dataclass
class ReconstructionRow:
    id: str
    input_smiles: str
    output_smiles: str
    exact_match: int
    tanimoto: float
    edit_distance: str


@dataclass
class ReconstructionSummary:
    policy: str
    n: int
    accuracy: float
    mean_tanimoto: float
    edit_unreached: int


def evaluate_reconstruction(
    params: Params | None,
    cfg: ModelConfig | None,
    ids: Sequence[str],
    graphs: Sequence[MolGraph],
    policy: str = "greedy",
    seed: int = 0,
    *,
    edit_max_steps: int | None = EVAL_EDIT_MAX_STEPS,
    edit_max_states: int = EVAL_EDIT_MAX_STATES,
    mdp: MdpConfig = DECODER,
    workers: int = 1,
) -> tuple[list[ReconstructionRow], ReconstructionSummary]:
    """Encode, sample z once per molecule, decode, and compare with the input.

    ``policy`` is ``"greedy"`` (needs params) or ``"random"``. Edit distances
    run from the input to the output; ``edit_max_steps=None`` skips them.
    """
    rng = np.random.default_rng(seed)
    if policy == "greedy":
        if params is None or cfg is None:
            raise ValueError("greedy decoding needs model parameters")
        mu, ls = encode_targets(params, cfg, graphs)
        eta = rng.standard_normal(mu.shape).astype(np.float32)
        zs = sample_from(Tensor(mu), Tensor(ls), eta).data
        outputs = greedy_decode(params, cfg, zs, mdp, workers=workers)
    elif policy == "random":
        outputs = random_walk_decode(len(graphs), rng, mdp)
    else:
        raise ValueError(f"unknown policy {policy!r}")

    rows = []
    unreached = 0
    for i, g, out in zip(ids, graphs, outputs):
        s_in, s_out = write_canonical_smiles(g), write_canonical_smiles(out)
        match = int(s_in == s_out)
        if edit_max_steps is None:
            dist = ""
        elif match:
            dist = "0"
        else:
            res: SearchResult = mdp_edit_distance(g, out, edit_max_steps, max_states=edit_max_states)
            unreached += res.hit_limit
            dist = str(res)
        rows.append(ReconstructionRow(str(i), s_in, s_out, match, morgan_tanimoto(g, out), dist))
    n = len(rows)
    summary = ReconstructionSummary(
        policy,
        n,
        sum(r.exact_match for r in rows) / n if n else 0.0,
        float(np.mean([r.tanimoto for r in rows])) if n else 0.0,
        unreached,
    )
    return rows, summary


# -- perturbation sweep --------------------------------------------------------------


def sweep_factors() -> np.ndarray:
    """-5.0 ... 5.0 in steps of 0.1 with 0.0 left out (100 values)."""
    k = np.arange(-50, 51)
    return (k[k != 0] / 10.0).astype(np.float64)


@dataclass
class PerturbRow:
    start_id: str
    factor: float
    repeat: int
    cosine_distance: float
    euclidean_distance: float
    tanimoto_morgan_r3: float
    output_smiles: str


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    return float(max(0.0, 1.0 - a @ b / (na * nb)))


def perturb_sweep(
    params: Params,
    cfg: ModelConfig,
    start_ids: Sequence[str],
    starts: Sequence[MolGraph],
    seed: int = 0,
    *,
    factors: Sequence[float] | None = None,
    repeats: int = 100,
    mdp: MdpConfig = DECODER,
    workers: int = 1,
) -> list[PerturbRow]:
    """Decode z0 + factor * u for every start, factor and repeat.

    z0 is the posterior mean of each start molecule. One u ~ U[0, 1)^L is
    drawn per repeat and shared by every factor and start, so each repeat
    traces a straight line through latent space. Rows are ordered by
    (start, factor, repeat).
    """
    rng = np.random.default_rng(seed)
    factors = sweep_factors() if factors is None else np.asarray(factors, np.float64)
    mu, _ = encode_targets(params, cfg, starts)
    u = rng.random((repeats, cfg.latent_dim))
    rows: list[PerturbRow] = []
    for sid, g, z0 in zip(start_ids, starts, mu):
        z0 = z0.astype(np.float64)
        zs = z0[None, None, :] + factors[:, None, None] * u[None, :, :]
        flat = zs.reshape(-1, cfg.latent_dim)
        outs = greedy_decode(params, cfg, flat.astype(np.float32), mdp, workers=workers)
        k = 0
        for f in factors:
            for r in range(repeats):
                z, out = flat[k], outs[k]
                rows.append(
                    PerturbRow(
                        str(sid),
                        float(f),
                        r,
                        cosine_distance(z0, z),
                        float(np.linalg.norm(z - z0)),
                        morgan_tanimoto(g, out),
                        write_canonical_smiles(out),
                    )
                )
                k += 1
    return rows


def decile_medians(rows: Sequence[PerturbRow]) -> list[float]:
    """Median Tanimoto in each cosine-distance decile (equal-count bins)."""
    order = np.argsort([r.cosine_distance for r in rows], kind="stable")
    tan = np.array([rows[i].tanimoto_morgan_r3 for i in order])
    return [float(np.median(b)) for b in np.array_split(tan, 10) if len(b)]


def count_inversions(values: Sequence[float]) -> int:
    """Adjacent increases in a sequence expected to be non-increasing."""
    return sum(1 for a, b in zip(values, values[1:]) if b > a)


# -- 2-D exploration -------------------------------------------------------------------


def grid_coefficients() -> np.ndarray:
    return np.arange(-20, 21, 4, dtype=np.float64)


def orthonormal_directions(dim: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Gram-Schmidt on two Gaussian draws."""
    a = rng.standard_normal(dim)
    b = rng.standard_normal(dim)
    d1 = a / np.linalg.norm(a)
    b = b - (b @ d1) * d1
    d2 = b / np.linalg.norm(b)
    return d1, d2


@dataclass
class GridRow:
    i: int
    j: int
    coeff_a: float
    coeff_b: float
    smiles: str


def explore_grid(
    params: Params,
    cfg: ModelConfig,
    start: MolGraph,
    seed: int = 0,
    *,
    mdp: MdpConfig = DECODER,
    workers: int = 1,
) -> list[GridRow]:
    """Decode an 11 x 11 grid spanned by two random orthonormal directions around the start's mean."""
    rng = np.random.default_rng(seed)
    mu, _ = encode_targets(params, cfg, [start])
    z0 = mu[0].astype(np.float64)
    d1, d2 = orthonormal_directions(cfg.latent_dim, rng)
    coeffs = grid_coefficients()
    pts = [(i, j, a, b) for i, a in enumerate(coeffs) for j, b in enumerate(coeffs)]
    zs = np.array([z0 + a * d1 + b * d2 for _, _, a, b in pts], dtype=np.float32)
    outs = greedy_decode(params, cfg, zs, mdp, workers=workers)
    return [GridRow(i, j, float(a), float(b), write_canonical_smiles(o)) for (i, j, a, b), o in zip(pts, outs)]


# -- CSV -------------------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, float):
        return "%.9g" % v
    return str(v)


def rows_to_csv(rows: Sequence, row_type=None) -> str:
    """Dataclass rows as CSV text with a header taken from the field names."""
    row_type = row_type or type(rows[0])
    names = [f.name for f in fields(row_type)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        w.writerow([_cell(getattr(r, n)) for n in names])
    return buf.getvalue()
