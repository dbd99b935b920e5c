"""Replay buffer, episode generation, TD + KL loss and the training loop."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from rlvae import fingerprints
from rlvae.chemgraph import MolGraph
from rlvae.mdp import (
    Episode,
    MdpConfig,
    UnreachableTarget,
    cached_legal_actions,
    idealized_episode,
    rollout_batch,
    successor,
)
from rlvae.model import (
    ModelConfig,
    ValueEvaluator,
    batch_graphs,
    init_params,
    kl_terms,
    sample_from,
    state_embed,
    target_dist,
    time_features,
    value_head,
)
from rlvae.nn import checkpoint
from rlvae.nn import tensor as T
from rlvae.nn.optim import AdamState, ExpSchedule, adam_step
from rlvae.nn.params import Params
from rlvae.nn.tensor import Tensor

log = logging.getLogger(__name__)

METRIC_FIELDS = ["step", "lr", "epsilon", "td_loss", "kl", "buffer_size", "idealized_failures"]


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    kl_weight: float = 1e-5
    huber_delta: float = 1.0
    max_steps: int = 20
    episode_batch: int = 8
    batch_size: int = 128
    buffer_capacity: int = 10_000
    warmup: int = 1000
    lr: float = 1e-5
    lr_decay: float = 0.99
    lr_interval: float = 100_000
    epsilon: float = 1.0
    epsilon_decay: float = 0.95
    epsilon_interval: float = 10_000
    target_sync: int = 1000
    checkpoint_every: int = 0
    node_dim: int = 128
    latent_dim: int = 256
    hidden_dim: int = 256
    n_layers: int = 2

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        for name in ("kl_weight", "huber_delta", "lr", "epsilon"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("max_steps", "episode_batch", "batch_size", "buffer_capacity", "target_sync"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.warmup > self.buffer_capacity:
            raise ValueError("warmup cannot exceed buffer capacity")

    @property
    def model(self) -> ModelConfig:
        return ModelConfig(self.node_dim, self.latent_dim, self.hidden_dim, self.n_layers, self.max_steps)

    @property
    def mdp(self) -> MdpConfig:
        return MdpConfig.decoder(self.max_steps)

    def lr_schedule(self) -> ExpSchedule:
        return ExpSchedule(self.lr, self.lr_decay, self.lr_interval)

    def epsilon_schedule(self) -> ExpSchedule:
        return ExpSchedule(self.epsilon, self.epsilon_decay, self.epsilon_interval)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- replay buffer ---------------------------------------------------------------


@dataclass(frozen=True)
class BufferEntry:
    target: int
    eta: np.ndarray
    z: np.ndarray
    state: MolGraph
    reward: float
    t: int
    terminal: bool


class ReplayBuffer:
    """Bounded FIFO with uniform sampling (with replacement)."""

    def __init__(self, capacity: int = 10_000):
        self.capacity = capacity
        self._items: list[BufferEntry] = []
        self._head = 0  # index of the oldest entry once full
        self.total_added = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, entry: BufferEntry) -> None:
        self.total_added += 1
        if len(self._items) < self.capacity:
            self._items.append(entry)
        else:
            self._items[self._head] = entry
            self._head = (self._head + 1) % self.capacity

    def extend(self, entries) -> None:
        for e in entries:
            self.add(e)

    def entries(self) -> list[BufferEntry]:
        """Contents from oldest to newest."""
        return self._items[self._head :] + self._items[: self._head]

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, len(self._items), size=n)

    def sample(self, n: int, rng: np.random.Generator) -> list[BufferEntry]:
        return [self._items[i] for i in self.sample_indices(n, rng)]


# -- episode generation ----------------------------------------------------------


class Trainer:
    """Owns parameters, optimizer state, replay buffer and the random stream.

    All randomness (initialization, target choice, embedding noise,
    exploration, replay sampling) comes from one seeded generator, in a fixed
    order, so a run is reproducible from ``seed``.
    """

    def __init__(
        self,
        cfg: TrainConfig,
        targets: Sequence[MolGraph],
        seed: int = 0,
        sim: fingerprints.SimilarityConfig = fingerprints.SimilarityConfig(),
    ):
        self.cfg = cfg
        self.model_cfg = cfg.model
        self.mdp = cfg.mdp
        self.sim = sim
        self.targets = list(targets)
        self.rng = np.random.default_rng(seed)
        self.params = init_params(self.model_cfg, self.rng)
        self.target_params = self.params.copy()
        self.adam = AdamState.for_params(self.params)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.step = 0
        self.gradient_steps = 0
        self.idealized_failures = 0
        self.target_reads = 0
        self._ideal: dict[int, Episode | None] = {}
        self._lr = cfg.lr_schedule()
        self._eps = cfg.epsilon_schedule()

    def reward(self, s: MolGraph, y: MolGraph) -> float:
        return fingerprints.reward(s, y, self.sim)

    def idealized(self, idx: int) -> Episode | None:
        if idx not in self._ideal:
            try:
                self._ideal[idx] = idealized_episode(self.targets[idx], self.mdp, self.reward)
            except UnreachableTarget as exc:
                log.debug("target %d has no idealized episode: %s", idx, exc)
                self._ideal[idx] = None
        return self._ideal[idx]

    # -- experience ----------------------------------------------------------

    def fill_step(self, eps: float) -> int:
        """One ε-greedy and one idealized episode per sampled target; returns entries added."""
        cfg = self.cfg
        if not self.targets:
            raise ValueError("training needs at least one target molecule")
        idx = self.rng.integers(0, len(self.targets), size=cfg.episode_batch)
        graphs = [self.targets[i] for i in idx]
        p = self.params.frozen()
        mu, ls = target_dist(p, batch_graphs(graphs), self.model_cfg)
        # Row 2k: ε-greedy episode of target k, row 2k+1: its idealized episode.
        eta = self.rng.standard_normal((2 * len(idx), self.model_cfg.latent_dim)).astype(np.float32)
        rows = np.repeat(np.arange(len(idx)), 2)
        z = sample_from(T.gather(mu, rows), T.gather(ls, rows), eta).data
        policy = None
        if eps < 1.0:
            evaluator = ValueEvaluator(self.params, self.model_cfg)
            zproj = z[0::2] @ self.params["value.w_latent"]

            def policy(ids, items, t):
                return evaluator.successor_values(items, [zproj[k] for k in ids], [t] * len(items))

        episodes = rollout_batch(policy, graphs, eps, self.rng, self.mdp, self.reward)
        before = self.buffer.total_added
        for k, (ti, ep) in enumerate(zip(idx, episodes)):
            self._push(int(ti), eta[2 * k], z[2 * k], ep)
            ideal = self.idealized(int(ti))
            if ideal is None:
                self.idealized_failures += 1
            else:
                self._push(int(ti), eta[2 * k + 1], z[2 * k + 1], ideal)
        return self.buffer.total_added - before

    def _push(self, target: int, eta: np.ndarray, z: np.ndarray, ep: Episode) -> None:
        for tr in ep.steps:
            self.buffer.add(BufferEntry(target, eta, z, tr.state, float(tr.reward), tr.t, tr.terminal))

    # -- loss ------------------------------------------------------------------

    def td_targets(self, entries: Sequence[BufferEntry], z: np.ndarray) -> np.ndarray:
        """Double-Q targets: successor chosen by online V, valued by the target network."""
        y = np.array([e.reward for e in entries], dtype=np.float64)
        gamma = self.cfg.gamma
        if gamma == 0.0:
            return y
        nt = [i for i, e in enumerate(entries) if not e.terminal]
        if not nt:
            return y
        self.target_reads += 1
        online = ValueEvaluator(self.params, self.model_cfg)
        items = [(entries[i].state, cached_legal_actions(entries[i].state, self.mdp)) for i in nt]
        zp_online = z[nt] @ self.params["value.w_latent"]
        t_next = [entries[i].t + 1 for i in nt]
        values = online.successor_values(items, list(zp_online), t_next)
        best = [successor(s, acts[int(np.argmax(v))]) for (s, acts), v in zip(items, values)]
        pt = self.target_params.frozen()
        fs = state_embed(pt, batch_graphs(best), self.model_cfg)
        zp_target = Tensor(z[nt] @ self.target_params["value.w_latent"])
        v_star = value_head(pt, fs, zp_target, time_features(t_next, self.cfg.max_steps)).data
        y[nt] += gamma * v_star.astype(np.float64)
        return y

    def loss_and_grads(self, entries: Sequence[BufferEntry]):
        """TD Huber loss with terminal/non-terminal balancing plus λ·KL.

        Returns (loss, td_loss, kl, grads, weights).
        """
        cfg, mc = self.cfg, self.model_cfg
        B = len(entries)
        tids = sorted({e.target for e in entries})
        row_of = {t: r for r, t in enumerate(tids)}
        p = self.params.tape()
        mu, ls = target_dist(p, batch_graphs([self.targets[t] for t in tids]), mc)
        rows = np.array([row_of[e.target] for e in entries])
        eta = np.stack([e.eta for e in entries])
        z = sample_from(T.gather(mu, rows), T.gather(ls, rows), eta)
        fs = state_embed(p, batch_graphs([e.state for e in entries]), mc)
        zproj = T.matmul(z, p["value.w_latent"])
        tf = time_features([e.t for e in entries], cfg.max_steps)
        v = value_head(p, fs, zproj, tf)
        y = self.td_targets(entries, z.data)
        w = balance_weights([e.terminal for e in entries])
        td = T.huber(T.sub(v, Tensor(y.astype(np.float32))), cfg.huber_delta)
        td_loss = T.mul(T.total(T.mul(td, Tensor(w.astype(np.float32)))), 1.0 / B)
        kl = T.mul(T.total(kl_terms(mu, ls)), 1.0 / len(tids))
        loss = T.add(td_loss, T.mul(kl, cfg.kl_weight)) if cfg.kl_weight else td_loss
        loss.backward()
        grads = {k: p[k].grad for k in p if p[k].grad is not None}
        return float(loss.data), float(td_loss.data), float(kl.data), grads, w

    # -- loop --------------------------------------------------------------------

    def train_step(self) -> dict:
        cfg = self.cfg
        eps = self._eps(self.step)
        lr = self._lr(self.step)
        self.fill_step(eps)
        while len(self.buffer) < cfg.warmup:
            self.fill_step(eps)
        assert len(self.buffer) >= cfg.warmup
        batch = self.buffer.sample(cfg.batch_size, self.rng)
        loss, td_loss, kl, grads, _ = self.loss_and_grads(batch)
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise NonFiniteLoss(self.step, {"loss": loss, "td_loss": td_loss, "kl": kl, "lr": lr, "epsilon": eps})
        adam_step(self.params, grads, self.adam, lr)
        self.gradient_steps += 1
        self.step += 1
        if self.step % cfg.target_sync == 0:
            self.target_params = self.params.copy()
        return {
            "step": self.step,
            "lr": lr,
            "epsilon": eps,
            "td_loss": td_loss,
            "kl": kl,
            "buffer_size": len(self.buffer),
            "idealized_failures": self.idealized_failures,
        }

    # -- persistence ---------------------------------------------------------------

    def checkpoint_bytes(self) -> bytes:
        tensors = {}
        for k, v in self.params.items():
            tensors[f"online/{k}"] = v
        for k, v in self.target_params.items():
            tensors[f"target_net/{k}"] = v
        for k in self.params:
            tensors[f"adam_m/{k}"] = self.adam.m[k]
            tensors[f"adam_v/{k}"] = self.adam.v[k]
        meta = {
            "kind": "rlvae-model",
            "step": self.step,
            "adam_step": self.adam.step,
            "idealized_failures": self.idealized_failures,
            "rng_state": self.rng.bit_generator.state,
            "train_config": self.cfg.to_dict(),
            "model_config": self.model_cfg.to_dict(),
        }
        return checkpoint.dumps(tensors, meta)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.checkpoint_bytes())


class NonFiniteLoss(FloatingPointError):
    def __init__(self, step: int, state: dict):
        super().__init__(f"non-finite loss at step {step}: {state}")
        self.step = step
        self.state = state


def balance_weights(terminal: Sequence[bool]) -> np.ndarray:
    """Per-example weights giving both terminal classes half the batch mass.

    Terminal examples get B/(2 n_t) and the rest B/(2 n_nt), so the weights
    sum to B. A batch missing either class is left unweighted.
    """
    term = np.asarray(terminal, dtype=bool)
    B = len(term)
    n_t = int(term.sum())
    n_nt = B - n_t
    if n_t == 0 or n_nt == 0:
        log.debug("batch has a single terminal class; no reweighting")
        return np.ones(B)
    return np.where(term, B / (2.0 * n_t), B / (2.0 * n_nt))


def load_model(path: str | Path) -> tuple[Params, ModelConfig, dict]:
    """Online parameters, model config and metadata from a checkpoint file."""
    tensors, meta = checkpoint.load(path)
    if meta.get("kind") != "rlvae-model":
        raise checkpoint.CheckpointError(f"{path} is not a model checkpoint")
    params = Params({k[len("online/") :]: v for k, v in tensors.items() if k.startswith("online/")})
    return params, ModelConfig(**meta["model_config"]), meta


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.9g}"
    return str(x)


def train(
    cfg: TrainConfig,
    targets: Sequence[MolGraph],
    steps: int,
    seed: int,
    out_dir: str | Path,
    progress_every: int = 0,
) -> Trainer:
    """Run ``steps`` optimizer steps, writing config.json, metrics.csv and checkpoints.

    Files in ``out_dir``: ``config.json`` (usable as ``--config``), ``run.json``
    (seed, step count, number of targets), ``metrics.csv`` (one row per step),
    ``checkpoint.bin`` (final state) and ``checkpoint_<step>.bin`` every
    ``cfg.checkpoint_every`` steps (when positive). ``steps == 0`` writes the
    initial checkpoint only.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    (out / "run.json").write_text(json.dumps({"seed": seed, "steps": steps, "targets": len(targets)}, indent=2) + "\n")
    trainer = Trainer(cfg, targets, seed)
    with (out / "metrics.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_FIELDS)
        for _ in range(steps):
            try:
                row = trainer.train_step()
            except NonFiniteLoss as exc:
                dump = {"step": exc.step, **exc.state, "buffer_size": len(trainer.buffer)}
                (out / "nonfinite_dump.json").write_text(json.dumps(dump, indent=2, default=str))
                trainer.save(out / "nonfinite_state.bin")
                raise
            writer.writerow([_fmt(row[k]) for k in METRIC_FIELDS])
            if cfg.checkpoint_every and row["step"] % cfg.checkpoint_every == 0:
                trainer.save(out / f"checkpoint_{row['step']:07d}.bin")
            if progress_every and row["step"] % progress_every == 0:
                fh.flush()
                log.info("step %d td_loss %.4f kl %.2f eps %.3f", row["step"], row["td_loss"], row["kl"], row["epsilon"])
    trainer.save(out / "checkpoint.bin")
    return trainer
