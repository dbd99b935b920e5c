"""Command-line entry point: ``rlvae <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors and 2 on data errors
(unparsable molecules, unreadable files, bad checkpoints).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from rlvae import __version__, data, experiments, fingerprints, training
from rlvae.chemgraph import GraphError, SmilesError, parse_smiles, write_canonical_smiles
from rlvae.editdist import DEFAULT_MAX_STATES, DEFAULT_MAX_STEPS, mdp_edit_distance
from rlvae.mdp import DECODER, MdpConfig, UnreachableTarget, idealized_episode, rollout
from rlvae.nn.checkpoint import CheckpointError

log = logging.getLogger("rlvae")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(0), help="seed for every random draw (default 0)")
    p.add_argument("--config", type=Path, default=d(None), help="training configuration JSON")
    p.add_argument("--threads", type=int, default=d(1), help="worker processes for decoding experiments (default 1)")
    p.add_argument("--strip-stereo", action="store_true", default=d(False), help="drop stereo marks (/ \\ @) before parsing")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False), help="log progress to stderr")


_STRIP = False


def _mol(text: str):
    return parse_smiles(text, strip=_STRIP)


def _write(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")


# -- subcommands -----------------------------------------------------------------


def cmd_canonicalize(args) -> int:
    for s in args.smiles:
        print(write_canonical_smiles(_mol(s)))
    return EXIT_OK


def cmd_fingerprint(args) -> int:
    g = _mol(args.smiles)
    kinds = {
        "morgan": lambda: fingerprints.morgan_fingerprint(g, args.radius),
        "path": lambda: fingerprints.path_fingerprint(g, args.max_len),
        "pair": lambda: fingerprints.atom_pair_fingerprint(g),
    }
    chosen = list(kinds) if args.kind == "all" else [args.kind]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["kind", "feature", "count"])
    for k in chosen:
        for key, n in sorted(kinds[k]().items()):
            w.writerow([k, f"{key:016x}", n])
    return EXIT_OK


def cmd_similarity(args) -> int:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["smiles_a", "smiles_b", "morgan", "path", "pair", "atom_count", "reward"])
    for b in args.b:
        pa, pb = fingerprints.profile(_mol(args.a)), fingerprints.profile(_mol(b))
        c = fingerprints.similarity_components(pa, pb)
        r = fingerprints.reward_from_profiles(pa, pb)
        w.writerow([args.a, b] + [f"{v:.6f}" for v in (c["morgan"], c["path"], c["pair"], c["atom_count"], r)])
    return EXIT_OK


def cmd_episode(args) -> int:
    y = _mol(args.smiles)
    cfg = MdpConfig.decoder(args.max_steps)
    if args.random:
        ep = rollout(None, y, 1.0, np.random.default_rng(args.seed), cfg, fingerprints.reward)
    else:
        try:
            ep = idealized_episode(y, cfg, fingerprints.reward)
        except UnreachableTarget as exc:
            print(f"rlvae: no idealized episode: {exc}", file=sys.stderr)
            return EXIT_DATA
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["t", "action", "smiles_after", "reward", "terminal"])
    for tr in ep.steps:
        w.writerow([tr.t, str(tr.action), write_canonical_smiles(tr.state), f"{tr.reward:.6f}", int(tr.terminal)])
    return EXIT_OK


def cmd_editdist(args) -> int:
    res = mdp_edit_distance(_mol(args.src), _mol(args.dst), args.max_steps, max_states=args.max_states)
    print(res)
    if args.verbose:
        print(f"expanded {res.expanded_states} states", file=sys.stderr)
    return EXIT_OK


def cmd_ingest(args) -> int:
    ds = data.ingest(
        args.input, args.seed, max_heavy_atoms=args.max_heavy_atoms, limit=args.limit, strip_stereo=args.strip_stereo
    )
    _write(ds.manifest_csv(), args.out)
    print(f"kept {len(ds)}", file=sys.stderr)
    for reason, n in sorted(ds.dropped.items()):
        print(f"dropped {reason} {n}", file=sys.stderr)
    return EXIT_OK


def _train_config(args) -> training.TrainConfig:
    if args.config is None:
        return training.TrainConfig()
    try:
        raw = json.loads(args.config.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise data.DataError(f"cannot read config {args.config}: {exc}") from exc
    try:
        return training.TrainConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise data.DataError(f"bad config {args.config}: {exc}") from exc


def cmd_train(args) -> int:
    cfg = _train_config(args)
    if args.data is None:
        if args.steps > 0:
            raise UsageError("train: --data is required when --steps > 0")
        targets = []
    else:
        _, targets = data.load_molecules(args.data, args.split, strip_stereo=args.strip_stereo)
    training.train(cfg, targets, args.steps, args.seed, args.out, progress_every=args.progress_every)
    return EXIT_OK


def _model(path: Path):
    return training.load_model(path)


def cmd_evaluate(args) -> int:
    ids, graphs = data.load_molecules(args.data, args.split, strip_stereo=args.strip_stereo)
    if args.policy == "random":
        params = cfg = None
    else:
        if args.checkpoint is None:
            raise UsageError("evaluate: --checkpoint is required for the greedy policy")
        params, cfg, _ = _model(args.checkpoint)
    limit = None if args.edit_max_steps < 0 else args.edit_max_steps
    rows, summary = experiments.evaluate_reconstruction(
        params, cfg, ids, graphs, args.policy, args.seed,
        edit_max_steps=limit, edit_max_states=args.edit_max_states, workers=args.threads,
    )
    _write(experiments.rows_to_csv(rows, experiments.ReconstructionRow), args.out)
    line = experiments.rows_to_csv([summary])
    if args.summary is not None:
        _write(line, args.summary)
    print(line, end="", file=sys.stderr)
    return EXIT_OK


def _starts(args, n: int):
    ids, graphs = data.load_molecules(args.data, args.split, strip_stereo=args.strip_stereo)
    if len(graphs) < n:
        raise data.DataError(f"need {n} start molecules, {args.data} has {len(graphs)} in split {args.split!r}")
    pick = sorted(np.random.default_rng(args.seed).choice(len(graphs), size=n, replace=False))
    return [ids[i] for i in pick], [graphs[i] for i in pick]


def cmd_perturb(args) -> int:
    params, cfg, _ = _model(args.checkpoint)
    ids, starts = _starts(args, args.starts)
    rows = experiments.perturb_sweep(params, cfg, ids, starts, args.seed, repeats=args.repeats, workers=args.threads)
    _write(experiments.rows_to_csv(rows, experiments.PerturbRow), args.out)
    return EXIT_OK


def cmd_explore(args) -> int:
    params, cfg, _ = _model(args.checkpoint)
    if args.smiles is not None:
        start = _mol(args.smiles)
    else:
        start = _starts(args, 1)[1][0]
    rows = experiments.explore_grid(params, cfg, start, args.seed, workers=args.threads)
    _write(experiments.rows_to_csv(rows, experiments.GridRow), args.out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rlvae", description="Molecule autoencoding with a value-function decoder.")
    ap.add_argument("--version", action="version", version=f"rlvae {__version__}")
    _global_flags(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("canonicalize", cmd_canonicalize, "print canonical SMILES")
    p.add_argument("smiles", nargs="+")

    p = add("fingerprint", cmd_fingerprint, "sparse count fingerprints (CSV: kind, feature, count)")
    p.add_argument("smiles")
    p.add_argument("--kind", choices=["morgan", "path", "pair", "all"], default="all")
    p.add_argument("--radius", type=int, default=3)
    p.add_argument("--max-len", type=int, default=7)

    p = add("similarity", cmd_similarity, "similarity components and reward of A against each B (CSV)")
    p.add_argument("a")
    p.add_argument("b", nargs="+")

    p = add("episode", cmd_episode, "idealized (or --random) decoder episode for a target (CSV)")
    p.add_argument("smiles")
    p.add_argument("--random", action="store_true", help="uniformly random actions instead of the idealized episode")
    p.add_argument("--max-steps", type=int, default=DECODER.max_steps)

    p = add("editdist", cmd_editdist, "minimum number of search-MDP actions from one molecule to another")
    p.add_argument("--from", dest="src", required=True)
    p.add_argument("--to", dest="dst", required=True)
    p.add_argument("--max-steps", type=int, default=DEFAULT_MAX_STEPS)
    p.add_argument("--max-states", type=int, default=DEFAULT_MAX_STATES)

    p = add("ingest", cmd_ingest, "filter, canonicalize and fold-split a molecule list")
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, help="manifest CSV (default stdout)")
    p.add_argument("--max-heavy-atoms", type=int)
    p.add_argument("--limit", type=int)

    p = add("train", cmd_train, "train a model and write metrics and checkpoints")
    p.add_argument("--data", type=Path, help="fold manifest or SMILES list")
    p.add_argument("--split", default="train", choices=["train", "tune", "test", "all"])
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", type=Path, default=Path("run"))
    p.add_argument("--progress-every", type=int, default=0)

    def experiment_flags(p, need_ckpt=True):
        p.add_argument("--checkpoint", type=Path, required=need_ckpt)
        p.add_argument("--data", type=Path, required=True, help="fold manifest or SMILES list")
        p.add_argument("--out", type=Path, help="output CSV (default stdout)")

    p = add("evaluate", cmd_evaluate, "reconstruction accuracy, Tanimoto and edit distance per molecule")
    experiment_flags(p, need_ckpt=False)
    p.add_argument("--split", default="test", choices=["train", "tune", "test", "all"])
    p.add_argument("--policy", choices=["greedy", "random"], default="greedy")
    p.add_argument("--edit-max-steps", type=int, default=experiments.EVAL_EDIT_MAX_STEPS, help="-1 skips edit distances")
    p.add_argument("--edit-max-states", type=int, default=experiments.EVAL_EDIT_MAX_STATES)
    p.add_argument("--summary", type=Path, help="write the summary row here as CSV")

    p = add("perturb", cmd_perturb, "decode scaled random perturbations of start embeddings")
    experiment_flags(p)
    p.add_argument("--split", default="tune", choices=["train", "tune", "test", "all"])
    p.add_argument("--starts", type=int, default=10)
    p.add_argument("--repeats", type=int, default=100)

    p = add("explore", cmd_explore, "decode an 11 x 11 grid in a random 2-D latent plane")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, help="pick the start from this manifest (tune split)")
    p.add_argument("--split", default="tune", choices=["train", "tune", "test", "all"])
    p.add_argument("--smiles", help="start molecule (instead of --data)")
    p.add_argument("--out", type=Path, help="output CSV (default stdout)")
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        if getattr(args, "func", None) is cmd_explore and args.smiles is None and args.data is None:
            raise UsageError("explore: give --smiles or --data")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    global _STRIP
    _STRIP = args.strip_stereo
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        with threadpool_limits(1):
            return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (SmilesError, GraphError, data.DataError, CheckpointError, OSError) as exc:
        print(f"rlvae: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
