import numpy as np
import pytest

from rlvae.chemgraph import EMPTY, MolGraph, kekulize, parse_smiles, write_canonical_smiles
from rlvae.mdp import (
    DECODER,
    NO_OP,
    SEARCH,
    Action,
    IllegalActionError,
    Kind,
    MdpConfig,
    UnreachableTarget,
    apply,
    check_state,
    enumerate_actions,
    idealized_actions,
    idealized_episode,
    legal_actions,
    rollout,
    rollout_batch,
)

P = parse_smiles


def heavy(g: MolGraph) -> int:
    return sum(1 for e in g.atoms if e != "H")


def brute_force_successors(s: MolGraph) -> set[str]:
    """Every graph reachable by adding one atom or one bond (orders 1-3), filtered by decoder rules."""
    out = {write_canonical_smiles(s)}
    n = s.n_atoms
    free = [s.free_valence(a) for a in range(n)]
    for a in range(n):
        for e, v in (("H", 1), ("C", 4), ("N", 3), ("O", 2), ("F", 1)):
            for o in (1, 2, 3):
                if o <= free[a] and o <= v:
                    out.add(write_canonical_smiles(MolGraph(s.atoms + (e,), s.bonds + ((a, n, o),))))
    return out


class TestEnumeration:
    def test_empty_state(self):
        acts = legal_actions(EMPTY)
        assert acts[0] == NO_OP
        adds = [a for a in acts if a.kind == Kind.ADD_ATOM]
        assert sorted(a.element for a in adds) == ["C", "F", "H", "N", "O"]
        assert len(acts) == 6

    def test_methane(self):
        acts = legal_actions(P("C"))
        assert len(acts) == 11
        per_element = {e: sum(1 for a in acts if a.element == e) for e in "HCNOF"}
        assert per_element == {"H": 1, "C": 3, "N": 3, "O": 2, "F": 1}

    def test_hydrogen_cyanide(self):
        s = P("C#N")
        succ = enumerate_actions(s)
        assert not any(a.kind == Kind.ADD_BOND for a, _ in succ)
        assert {write_canonical_smiles(g) for _, g in succ} == brute_force_successors(s)
        assert len(succ) == 6

    def test_small_states_against_brute_force(self, small_graphs):
        for s in small_graphs[:80]:
            k = kekulize(s)
            got = {write_canonical_smiles(g) for a, g in enumerate_actions(k) if a.kind != Kind.ADD_BOND}
            assert got == brute_force_successors(k)

    def test_no_triple_bond_between_existing_atoms(self, small_graphs):
        for s in small_graphs[:200]:
            for a in legal_actions(kekulize(s)):
                if a.kind == Kind.ADD_BOND:
                    assert a.order in (1, 2)

    def test_ring_size_bounds(self):
        chain = P("CCCCCCC")
        sizes = set()
        for a in legal_actions(chain):
            if a.kind == Kind.ADD_BOND:
                sizes.add(chain.distances_from(a.i)[a.j] + 1)
        assert sizes == {3, 4, 5, 6}

    def test_no_bond_between_two_ring_atoms(self):
        s = P("C1CC1CC1CC1")  # two separate rings joined by a chain
        for a in legal_actions(s):
            if a.kind == Kind.ADD_BOND:
                assert not (a.i in s.ring_atoms and a.j in s.ring_atoms)
        search = [a for a in legal_actions(s, SEARCH) if a.kind == Kind.ADD_BOND]
        assert any(a.i in s.ring_atoms and a.j in s.ring_atoms for a in search)

    def test_order_is_sorted_and_stable(self):
        s = P("CC(N)C=O")
        acts = legal_actions(s)
        assert acts == sorted(acts)
        assert acts == legal_actions(P("CC(N)C=O"))

    def test_decoder_subset_of_search(self, small_graphs):
        for s in small_graphs[:150]:
            k = kekulize(s)
            dec = {a for a in legal_actions(k) if a != NO_OP}
            assert dec <= set(legal_actions(k, SEARCH))
            assert NO_OP not in legal_actions(k, SEARCH)

    def test_search_promotion_and_demotion(self):
        succ = {write_canonical_smiles(g) for _, g in enumerate_actions(P("CC"), SEARCH)}
        assert "C=C" in succ
        succ = {write_canonical_smiles(g) for _, g in enumerate_actions(P("C=C"), SEARCH)}
        assert "CC" in succ and "C#C" in succ

    def test_search_removal_yields_each_fragment(self):
        succ = {write_canonical_smiles(g) for a, g in enumerate_actions(P("CCO"), SEARCH) if a.kind == Kind.REMOVE_BOND}
        assert {"CC", "O", "C", "CO"} <= succ

    def test_search_kekulizes_aromatic_states(self):
        succ = enumerate_actions(P("c1ccccc1"), SEARCH)
        assert any(a.kind == Kind.REMOVE_BOND and a.order == 1 for a, _ in succ)


class TestApply:
    def test_no_op_identity(self):
        s = P("CCO")
        assert apply(s, NO_OP) == s

    def test_add_atom(self):
        s = P("CC")
        assert apply(s, Action(Kind.ADD_ATOM, 0, -1, "O", 1)).n_atoms == 3

    def test_add_bond_degrees(self):
        s = P("CCCC")
        t = apply(s, Action(Kind.ADD_BOND, 0, 3, "", 1))
        assert t.degree(0) == s.degree(0) + 1 and t.degree(3) == s.degree(3) + 1

    def test_illegal_rejected(self):
        with pytest.raises(IllegalActionError, match="not legal"):
            apply(P("C#N"), Action(Kind.ADD_ATOM, 1, -1, "C", 1))
        with pytest.raises(IllegalActionError):
            apply(P("CC"), Action(Kind.PROMOTE_BOND, 0, 1, "", 2))


class TestIdealized:
    def test_methane(self):
        ep = idealized_episode(P("C"))
        assert ep.actions[0].kind == Kind.ADD_ATOM
        assert all(a == NO_OP for a in ep.actions[1:])
        assert len(ep.steps) == 20
        assert write_canonical_smiles(ep.final) == "C"

    def test_ethanol(self):
        acts = idealized_actions(P("CCO"))
        assert len(acts) == 3
        assert write_canonical_smiles(idealized_episode(P("CCO")).final) == "CCO"

    def test_cyclopropane(self):
        acts = idealized_actions(P("C1CC1"))
        assert [a.kind for a in acts] == [Kind.ADD_ATOM] * 3 + [Kind.ADD_BOND]

    def test_terminal_flag_and_rewards(self):
        from rlvae.fingerprints import reward

        y = P("CC=O")
        ep = idealized_episode(y, DECODER, reward)
        assert [tr.terminal for tr in ep.steps] == [False] * 19 + [True]
        assert [tr.t for tr in ep.steps] == list(range(20))
        assert all(tr.reward == reward(tr.state, y) for tr in ep.steps)
        assert ep.steps[-1].reward == 1.0

    def test_deferred_atoms(self):
        # atom 1 (O) only bonds to atom 2, which is placed later
        y = MolGraph(["C", "O", "C"], [(0, 2, 1), (1, 2, 1)])
        assert write_canonical_smiles(idealized_episode(y).final) == write_canonical_smiles(y)

    def test_seven_ring_unreachable(self):
        with pytest.raises(UnreachableTarget):
            idealized_episode(P("C1CCCCCC1"))

    def test_too_many_steps(self):
        with pytest.raises(UnreachableTarget, match="steps"):
            idealized_episode(P("C" * 21))

    def test_aromatic_targets(self):
        for smi in ("c1ccccc1", "CN1C=NC2=C1C(=O)N(C(=O)N2C)C", "c1cc[nH]c1"):
            try:
                ep = idealized_episode(P(smi))
            except UnreachableTarget:
                continue
            assert write_canonical_smiles(ep.final) == write_canonical_smiles(P(smi))
        assert write_canonical_smiles(idealized_episode(P("c1ccccc1")).final) == "c1ccccc1"

    def test_corpus_replay(self, sample_graphs):
        ok = fail = 0
        for y in sample_graphs[:400]:
            try:
                ep = idealized_episode(y)
            except UnreachableTarget:
                fail += 1
                continue
            ok += write_canonical_smiles(ep.final) == write_canonical_smiles(y)
        assert ok / (400 - fail) >= 0.99


class TestRollout:
    def test_random_rollouts_are_valid_and_monotone(self):
        rng = np.random.default_rng(0)
        for ep in rollout_batch(None, [None] * 200, 1.0, rng):
            assert len(ep.steps) == 20
            prev = 0
            for tr in ep.steps:
                check_state(tr.state)
                assert tr.state.is_connected()
                assert heavy(tr.state) >= prev
                prev = heavy(tr.state)

    def test_same_seed_identical(self):
        a = rollout_batch(None, [None] * 20, 1.0, np.random.default_rng(5))
        b = rollout_batch(None, [None] * 20, 1.0, np.random.default_rng(5))
        assert [e.actions for e in a] == [e.actions for e in b]

    def test_single_matches_batch_stream(self):
        a = rollout(None, None, 1.0, np.random.default_rng(9))
        b = rollout_batch(None, [None], 1.0, np.random.default_rng(9))[0]
        assert a.actions == b.actions

    def test_greedy_ties_take_first_action(self):
        def flat(ids, items, t):
            return [np.zeros(len(acts)) for _, acts in items]

        ep = rollout(flat, None, 0.0, None)
        assert all(a == NO_OP for a in ep.actions)

    def test_greedy_follows_values(self):
        y = P("CCO")
        target = idealized_actions(y)

        def oracle(ids, items, t):
            out = []
            for _, acts in items:
                want = target[t] if t < len(target) else NO_OP
                out.append(np.array([1.0 if a == want else 0.0 for a in acts]))
            return out

        ep = rollout(oracle, y, 0.0, None)
        assert write_canonical_smiles(ep.final) == "CCO"

    def test_eps_validation(self):
        with pytest.raises(ValueError):
            rollout(None, None, 1.5, np.random.default_rng(0))
        with pytest.raises(ValueError):
            rollout(None, None, 0.5, np.random.default_rng(0))

    def test_custom_step_limit(self):
        ep = rollout(None, None, 1.0, np.random.default_rng(0), MdpConfig.decoder(5))
        assert len(ep.steps) == 5 and ep.steps[-1].terminal
