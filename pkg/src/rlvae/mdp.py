"""Molecule-editing MDPs and episode construction.

Two rule sets share one action vocabulary:

* ``decoder``: grow-only edits used by the RL decoder (no-op allowed, ring
  sizes 3-6, no bonds between two ring atoms, no triple bonds between
  existing atoms, no removal or promotion).
* ``search``: the relaxed rules used for MDP edit distance (bond removal,
  demotion and promotion, any ring size, ring-ring bonds, no no-op). A
  removal that splits the graph yields one successor per fragment.

States are kekulized MolGraphs with implicit hydrogens.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, NamedTuple, Sequence

import numpy as np

from rlvae.chemgraph import EMPTY, MAX_VALENCE, GraphError, MolGraph, kekulize, write_canonical_smiles

ADDABLE = ("H", "C", "N", "O", "F")


class Kind(IntEnum):
    NO_OP = 0
    ADD_ATOM = 1
    ADD_BOND = 2
    REMOVE_BOND = 3
    PROMOTE_BOND = 4


class Action(NamedTuple):
    """One graph edit. Tuple order is the canonical action order."""

    kind: Kind
    i: int = -1
    j: int = -1
    element: str = ""
    order: int = 0
    fragment: int = 0

    def __str__(self) -> str:
        if self.kind == Kind.NO_OP:
            return "no_op"
        if self.kind == Kind.ADD_ATOM:
            at = "" if self.i < 0 else f"@{self.i}"
            return f"add_atom({self.element}{at},{self.order})"
        if self.kind == Kind.ADD_BOND:
            return f"add_bond({self.i},{self.j},{self.order})"
        if self.kind == Kind.REMOVE_BOND:
            frag = f",frag{self.fragment}" if self.fragment else ""
            return f"remove_or_demote_bond({self.i},{self.j}{frag})"
        return f"promote_bond({self.i},{self.j})"


NO_OP = Action(Kind.NO_OP)


@dataclass(frozen=True)
class MdpConfig:
    variant: str = "decoder"
    max_steps: int = 20
    min_ring: int = 3
    max_ring: int | None = 6
    allow_no_op: bool = True
    allow_ring_ring_bonds: bool = False
    allow_removal: bool = False
    elements: tuple[str, ...] = ADDABLE

    @classmethod
    def decoder(cls, max_steps: int = 20) -> "MdpConfig":
        return cls(max_steps=max_steps)

    @classmethod
    def search(cls) -> "MdpConfig":
        return cls(
            variant="search",
            max_ring=None,
            allow_no_op=False,
            allow_ring_ring_bonds=True,
            allow_removal=True,
        )


DECODER = MdpConfig.decoder()
SEARCH = MdpConfig.search()


class IllegalActionError(ValueError):
    pass


def legal_actions(s: MolGraph, cfg: MdpConfig = DECODER) -> list[Action]:
    """Legal actions from a kekulized state, in canonical action order."""
    out: list[Action] = []
    if cfg.allow_no_op:
        out.append(NO_OP)
    n = s.n_atoms
    if n == 0:
        out.extend(Action(Kind.ADD_ATOM, -1, -1, e, 0) for e in cfg.elements)
        return out
    free = [s.free_valence(a) for a in range(n)]
    # add_atom: attach a new atom through one bond of order 1..3.
    for a in range(n):
        fa = free[a]
        if fa < 1:
            continue
        for e in cfg.elements:
            for order in range(1, min(fa, MAX_VALENCE[e], 3) + 1):
                out.append(Action(Kind.ADD_ATOM, a, -1, e, order))
    # add_bond between existing atoms (orders 1-2).
    adj = s.adjacency
    ring = s.ring_atoms
    for a in range(n):
        if free[a] < 1:
            continue
        dist = None
        for b in range(a + 1, n):
            if free[b] < 1 or b in adj[a]:
                continue
            if not cfg.allow_ring_ring_bonds and a in ring and b in ring:
                continue
            if dist is None:
                dist = s.distances_from(a)
            if dist[b] < 0:
                continue
            size = dist[b] + 1
            if size < cfg.min_ring or (cfg.max_ring is not None and size > cfg.max_ring):
                continue
            for order in (1, 2):
                if order > free[a] or order > free[b]:
                    break
                out.append(Action(Kind.ADD_BOND, a, b, "", order))
    if cfg.allow_removal:
        for a, b, o in s.bonds:
            if o > 1:
                out.append(Action(Kind.REMOVE_BOND, a, b, "", o - 1))
                continue
            rest = tuple(x for x in s.bonds if x[:2] != (a, b))
            n_frag = len(MolGraph(s.atoms, rest, check=False).components())
            for k in range(n_frag):
                out.append(Action(Kind.REMOVE_BOND, a, b, "", 0, k))
        for a, b, o in s.bonds:
            if o < 3 and free[a] >= 1 and free[b] >= 1:
                out.append(Action(Kind.PROMOTE_BOND, a, b, "", o + 1))
    out.sort()
    return out


def successor(s: MolGraph, action: Action) -> MolGraph:
    """Graph produced by ``action`` (assumed legal) on kekulized ``s``."""
    kind = action.kind
    if kind == Kind.NO_OP:
        return s
    if kind == Kind.ADD_ATOM:
        if action.i < 0:
            return MolGraph((action.element,), (), check=False)
        return MolGraph(s.atoms + (action.element,), s.bonds + ((action.i, s.n_atoms, action.order),), check=False)
    if kind == Kind.ADD_BOND:
        return MolGraph(s.atoms, s.bonds + ((action.i, action.j, action.order),), check=False)
    rest = tuple(x for x in s.bonds if x[:2] != (action.i, action.j))
    if kind == Kind.PROMOTE_BOND or action.order > 0:
        return MolGraph(s.atoms, rest + ((action.i, action.j, action.order),), check=False)
    cut = MolGraph(s.atoms, rest, check=False)
    comps = cut.components()
    if len(comps) == 1:
        return cut
    return cut.subgraph(comps[action.fragment])


def enumerate_actions(s: MolGraph, cfg: MdpConfig = DECODER) -> list[tuple[Action, MolGraph]]:
    """Legal actions from ``s`` paired with their successors, in canonical action order."""
    if s.has_aromatic:
        s = kekulize(s)
    return [(a, successor(s, a)) for a in legal_actions(s, cfg)]


def apply(s: MolGraph, action: Action, cfg: MdpConfig = DECODER) -> MolGraph:
    """Successor of ``s`` under ``action``; raises if the action is illegal."""
    if s.has_aromatic:
        s = kekulize(s)
    if action in legal_actions(s, cfg):
        return successor(s, action)
    raise IllegalActionError(f"{action} is not legal in state {write_canonical_smiles(s) or '<empty>'} ({cfg.variant} rules)")


# -- episodes ------------------------------------------------------------------


@dataclass(frozen=True)
class Transition:
    state: MolGraph
    action: Action
    reward: float
    t: int
    terminal: bool


@dataclass
class Episode:
    target: MolGraph | None
    steps: list[Transition]

    @property
    def final(self) -> MolGraph:
        return self.steps[-1].state if self.steps else EMPTY

    @property
    def actions(self) -> list[Action]:
        return [tr.action for tr in self.steps]


class UnreachableTarget(ValueError):
    """The target cannot be rebuilt by an idealized decoder episode."""


def idealized_actions(y: MolGraph, cfg: MdpConfig = DECODER) -> list[Action]:
    """Constructive action sequence rebuilding ``y`` in its stored atom order.

    Atom k of ``y`` becomes state atom ``placed.index(k)``; each new atom is
    attached through its first bond to an already placed atom and every
    further bond to placed atoms follows as its own ``add_bond`` step.
    """
    y = kekulize(y)
    if y.n_atoms == 0:
        return []
    adj = y.adjacency
    placed: list[int] = [0]
    where = {0: 0}
    actions = [Action(Kind.ADD_ATOM, -1, -1, y.atoms[0], 0)]
    pending = list(range(1, y.n_atoms))
    while pending:
        for k in pending:
            links = sorted(b for b in adj[k] if b in where)
            if links:
                break
        else:
            raise UnreachableTarget("target is disconnected")
        pending.remove(k)
        first = links[0]
        actions.append(Action(Kind.ADD_ATOM, where[first], -1, y.atoms[k], adj[k][first]))
        where[k] = len(placed)
        placed.append(k)
        for b in links[1:]:
            i, j = sorted((where[k], where[b]))
            actions.append(Action(Kind.ADD_BOND, i, j, "", adj[k][b]))
    return actions


def idealized_episode(y: MolGraph, cfg: MdpConfig = DECODER, reward_fn=None) -> Episode:
    """Replay the idealized actions under ``cfg`` and pad with no-ops to exactly T steps."""
    actions = idealized_actions(y, cfg)
    if len(actions) > cfg.max_steps:
        raise UnreachableTarget(f"needs {len(actions)} steps > T={cfg.max_steps}")
    state = EMPTY
    steps = []
    for t in range(cfg.max_steps):
        action = actions[t] if t < len(actions) else NO_OP
        try:
            state = apply(state, action, cfg)
        except IllegalActionError as exc:
            raise UnreachableTarget(str(exc)) from None
        r = reward_fn(state, y) if reward_fn is not None else 0.0
        steps.append(Transition(state, action, r, t, t == cfg.max_steps - 1))
    return Episode(y, steps)


BatchPolicy = Callable[[list[int], Sequence[tuple[MolGraph, list[Action]]], int], Sequence[np.ndarray]]

class ActionList(list):
    """Cached action list; consumers may attach derived data as attributes."""


_LEGAL_CACHE: dict[tuple, ActionList] = {}
_LEGAL_CACHE_MAX = 50_000


def cached_legal_actions(s: MolGraph, cfg: MdpConfig = DECODER) -> list[Action]:
    """``legal_actions`` memoized on the labeled graph (callers must not mutate the list)."""
    key = (s.key(), cfg)
    hit = _LEGAL_CACHE.get(key)
    if hit is None:
        if len(_LEGAL_CACHE) >= _LEGAL_CACHE_MAX:
            _LEGAL_CACHE.clear()
        hit = _LEGAL_CACHE[key] = ActionList(legal_actions(s, cfg))
    return hit


def rollout_batch(
    policy: BatchPolicy | None,
    targets: Sequence[MolGraph | None],
    eps: float,
    rng: np.random.Generator | None,
    cfg: MdpConfig = DECODER,
    reward_fn=None,
) -> list[Episode]:
    """Run several epsilon-greedy episodes in lockstep from the empty graph.

    At every step the random draws are made episode by episode in order,
    then all greedy episodes are scored with one ``policy(episode_ids,
    items, t)`` call that gets the greedy episode indices, their
    ``(state, actions)`` pairs and the step index and returns one value
    array per pair. Greedy ties go to the first action in canonical order.
    """
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    if eps > 0 and rng is None:
        raise ValueError("a random generator is required when eps > 0")
    if eps < 1 and policy is None:
        raise ValueError("a policy is required when eps < 1")
    n = len(targets)
    states = [EMPTY] * n
    steps: list[list[Transition]] = [[] for _ in range(n)]
    for t in range(cfg.max_steps):
        options = [cached_legal_actions(s, cfg) for s in states]
        chosen: list[int | None] = [None] * n
        for k in range(n):
            if eps >= 1.0 or (eps > 0 and rng.random() < eps):
                chosen[k] = int(rng.integers(len(options[k])))
        greedy = [k for k in range(n) if chosen[k] is None]
        if greedy:
            values = policy(greedy, [(states[k], options[k]) for k in greedy], t)
            for k, v in zip(greedy, values):
                chosen[k] = int(np.argmax(v))
        for k in range(n):
            action = options[k][chosen[k]]
            states[k] = successor(states[k], action)
            y = targets[k]
            r = reward_fn(states[k], y) if (reward_fn is not None and y is not None) else 0.0
            steps[k].append(Transition(states[k], action, r, t, t == cfg.max_steps - 1))
    return [Episode(y, st) for y, st in zip(targets, steps)]


def rollout(
    policy: BatchPolicy | None,
    target: MolGraph | None,
    eps: float,
    rng: np.random.Generator | None,
    cfg: MdpConfig = DECODER,
    reward_fn=None,
) -> Episode:
    """Single-episode form of ``rollout_batch`` (identical random stream)."""
    return rollout_batch(policy, [target], eps, rng, cfg, reward_fn)[0]


def check_state(g: MolGraph) -> None:
    """Raise GraphError if ``g`` breaks any MolGraph invariant."""
    g.validate()
    for a in range(g.n_atoms):
        if g.free_valence(a) < 0:
            raise GraphError(f"negative free valence on atom {a}")
