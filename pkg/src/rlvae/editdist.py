"""Minimum number of search-MDP actions turning one molecule into another."""

from __future__ import annotations

from dataclasses import dataclass

from rlvae.chemgraph import MolGraph, kekulize, write_canonical_smiles
from rlvae.mdp import SEARCH, MdpConfig, enumerate_actions

DEFAULT_MAX_STEPS = 5
DEFAULT_MAX_STATES = 500_000


@dataclass(frozen=True)
class SearchResult:
    distance: int | None
    expanded_states: int
    hit_limit: bool

    def __str__(self) -> str:
        return "unreached(limit)" if self.distance is None else str(self.distance)


def mdp_edit_distance(
    a: MolGraph,
    b: MolGraph,
    max_steps: int = DEFAULT_MAX_STEPS,
    *,
    max_states: int = DEFAULT_MAX_STATES,
    cfg: MdpConfig = SEARCH,
) -> SearchResult:
    """Breadth-first search from ``a`` until a state canonically equal to ``b`` appears.

    States are deduplicated by canonical SMILES, so the first representative
    reached (in canonical action order) stands for every Kekulé form of that
    molecule. The search gives up with ``hit_limit`` once ``max_steps`` layers
    are exhausted or more than ``max_states`` distinct states have been seen.
    """
    if max_steps < 0:
        raise ValueError("max_steps must be non-negative")
    goal = write_canonical_smiles(b)
    start_key = write_canonical_smiles(a)
    if start_key == goal:
        return SearchResult(0, 0, False)
    seen = {start_key}
    frontier = [kekulize(a) if a.has_aromatic else a]
    expanded = 0
    for depth in range(1, max_steps + 1):
        nxt: list[MolGraph] = []
        for s in frontier:
            expanded += 1
            for _, child in enumerate_actions(s, cfg):
                key = write_canonical_smiles(child)
                if key == goal:
                    return SearchResult(depth, expanded, False)
                if key in seen:
                    continue
                seen.add(key)
                if len(seen) > max_states:
                    return SearchResult(None, expanded, True)
                nxt.append(child)
        if not nxt:
            break
        frontier = nxt
    return SearchResult(None, expanded, True)
