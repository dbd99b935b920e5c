import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rlvae import fingerprints as F
from rlvae.chemgraph import EMPTY, kekulize, parse_smiles
from rlvae.mdp import rollout_batch

P = parse_smiles

counters = st.dictionaries(st.integers(0, 12), st.integers(1, 4), max_size=8).map(Counter)
weights = st.floats(0.0, 2.0, allow_nan=False)


class TestTversky:
    def test_identity(self):
        a = Counter({1: 2, 5: 1})
        for al, be in F.DEFAULT_TVERSKY_PAIRS:
            assert F.tversky(a, a, al, be) == 1.0

    def test_disjoint(self):
        assert F.tversky(Counter({1: 1}), Counter({2: 1}), 0.5, 0.5) == 0.0

    def test_hand_value(self):
        a, b = Counter({"x": 1, "y": 1}), Counter({"x": 1})
        assert F.tversky(a, b, 0.95, 0.05) == pytest.approx(1 / 1.95)
        assert F.tversky(a, b, 0.95, 0.05) == pytest.approx(0.5128205128)

    def test_tanimoto_hand_value(self):
        assert F.tanimoto(Counter("xyz"), Counter("xyw")) == 0.5

    def test_both_empty(self):
        assert F.tversky(Counter(), Counter(), 0.5, 0.5) == 1.0

    def test_counted_semantics(self):
        assert F.tanimoto(Counter({1: 3}), Counter({1: 1})) == pytest.approx(1 / 3)

    @settings(max_examples=200, deadline=None)
    @given(a=counters, b=counters, al=weights, be=weights)
    def test_swap_symmetry(self, a, b, al, be):
        assert F.tversky(a, b, al, be) == F.tversky(b, a, be, al)

    @settings(max_examples=200, deadline=None)
    @given(a=counters, b=counters)
    def test_tanimoto_le_dice(self, a, b):
        t, d = F.tanimoto(a, b), F.dice(a, b)
        assert 0.0 <= t <= d + 1e-12 <= 1.0 + 1e-12


class TestFingerprints:
    def test_identical_molecules(self):
        assert F.tanimoto(F.morgan_fingerprint(P("CCO")), F.morgan_fingerprint(P("OCC"))) == 1.0

    def test_c_vs_o(self):
        assert F.tanimoto(F.morgan_fingerprint(P("C")), F.morgan_fingerprint(P("O"))) == 0.0

    def test_ethanol_vs_ethylamine(self):
        t = F.tanimoto(F.morgan_fingerprint(P("CCO")), F.morgan_fingerprint(P("CCN")))
        assert 0.0 < t < 1.0

    def test_radius_zero_one_identifier_per_atom(self):
        assert sum(F.morgan_fingerprint(P("CCO"), 0).values()) == 3

    def test_kekule_and_aromatic_forms_agree(self):
        a, k = P("c1ccncc1"), kekulize(P("c1ccncc1"))
        assert F.morgan_fingerprint(a) == F.morgan_fingerprint(k)
        assert F.path_fingerprint(a) == F.path_fingerprint(k)
        assert F.atom_pair_fingerprint(a) == F.atom_pair_fingerprint(k)

    def test_single_atom_path(self):
        fp = F.path_fingerprint(P("C"))
        assert sum(fp.values()) == 1

    def test_ethane_paths(self):
        fp = F.path_fingerprint(P("CC"))
        assert sorted(fp.values()) == [1, 2]  # {C, C, C-C}

    def test_butane_path_count(self):
        assert F.count_paths(P("CCCC"), 3) == 10

    def test_path_count_oracle(self, sample_graphs):
        """Against brute-force enumeration of simple paths (vertex sequences up to reversal)."""
        for g in sample_graphs[:150]:
            heavy = [i for i, e in enumerate(g.atoms) if e != "H"]
            adj = g.adjacency
            seqs = set()

            def walk(path):
                seqs.add(min(tuple(path), tuple(reversed(path))))
                if len(path) > 7:
                    return
                for n in adj[path[-1]]:
                    if n not in path and g.atoms[n] != "H":
                        walk(path + [n])

            for a in heavy:
                walk([a])
            assert F.count_paths(g, 7) == len(seqs)

    def test_atom_pairs(self):
        assert sum(F.atom_pair_fingerprint(P("CC")).values()) == 1
        assert sum(F.atom_pair_fingerprint(P("CCO")).values()) == 3
        assert F.tanimoto(F.atom_pair_fingerprint(P("CCO")), F.atom_pair_fingerprint(P("OCC"))) == 1.0

    def test_deterministic_ids(self):
        # identifiers come from a pinned hash, not Python's salted hash()
        fp = F.morgan_fingerprint(P("CCO"))
        assert fp == F.morgan_fingerprint(P("CCO"))
        assert all(0 <= k < 2**64 for k in fp)


class TestAtomCounts:
    def test_examples(self):
        assert F.atom_count_similarity(P("CCO"), P("CCO")) == 1.0
        assert F.atom_count_similarity(P("CCO"), P("CCN")) == pytest.approx(8 / 11)
        assert F.atom_count_similarity(P("C"), P("N")) == pytest.approx(0.5)

    def test_both_empty(self):
        assert F.atom_count_similarity(EMPTY, EMPTY) == 1.0


class TestReward:
    def test_self(self):
        assert F.reward(P("CCO"), P("CCO")) == 1.0

    def test_relabeled(self):
        g = P("CC(=O)N")
        assert F.reward(g.permute([3, 1, 0, 2]), g) == 1.0

    def test_empty_state(self):
        assert F.reward(EMPTY, P("CCO")) == 0.0

    def test_single_atoms_share_empty_pair_fingerprint(self):
        # Morgan 0, path 0, atom pairs both empty -> 1, atom counts 3/6
        assert F.reward(P("C"), P("N")) == pytest.approx((0 + 0 + 1 + 0.5) / 4)

    def test_components_mean(self):
        a, b = F.profile(P("CCO")), F.profile(P("CCN"))
        c = F.similarity_components(a, b)
        assert F.reward_from_profiles(a, b) == pytest.approx(sum(c.values()) / 4)
        assert c["atom_count"] == pytest.approx(8 / 11)

    def test_reward_one_iff_components_one(self, small_graphs):
        rng = random.Random(0)
        for _ in range(200):
            a, b = rng.choice(small_graphs), rng.choice(small_graphs)
            c = F.similarity_components(F.profile(a), F.profile(b))
            r = F.reward(a, b)
            assert (r == 1.0) == all(v == 1.0 for v in c.values())
            assert 0.0 <= r <= 1.0

    @settings(max_examples=40, deadline=None)
    @given(i=st.integers(0, 599), j=st.integers(0, 599), seed=st.integers(0, 1000))
    def test_permutation_invariance(self, small_graphs, i, j, seed):
        a, b = small_graphs[i], small_graphs[j]
        perm = list(range(a.n_atoms))
        random.Random(seed).shuffle(perm)
        assert F.reward(a.permute(perm), b) == F.reward(a, b)

    def test_config_defaults(self):
        cfg = F.SimilarityConfig()
        assert set(cfg.tversky_pairs) == {(0.5, 0.5), (0.95, 0.05), (0.05, 0.95)}
        assert cfg.morgan_radius == 3
        with pytest.raises(ValueError):
            F.SimilarityConfig(tversky_pairs=((-1.0, 0.5),))


class TestKernelBackends:
    def test_compiled_matches_python(self, sample_graphs):
        C = pytest.importorskip("rlvae._kernels._ckernels")
        from rlvae._kernels import _pykernels as Py
        from rlvae.chemgraph import aromatize
        from rlvae.chemgraph.canon import _csr, initial_invariants

        mols = list(sample_graphs[:400])
        mols += [tr.state for ep in rollout_batch(None, [None] * 40, 1.0, np.random.default_rng(3)) for tr in ep.steps]
        for g in mols:
            hg = F._HeavyGraph(aromatize(g) if g.n_atoms else g)
            if hg.heavy:
                inv = F._morgan_invariants(hg)
                args = (inv, hg.ptr, hg.nbr, hg.code, hg.eid, 3, F._MORGAN_SEED)
                assert Counter(Py.morgan_ids(*args)) == Counter(C.morgan_ids(*args))
            lab = F._path_labels(hg)
            assert Counter(Py.path_ids(lab, hg.ptr, hg.nbr, hg.code, 7, 5)) == Counter(C.path_ids(lab, hg.ptr, hg.nbr, hg.code, 7, 5))
            ty = F._pair_types(hg)
            assert Counter(Py.pair_ids(ty, hg.ptr, hg.nbr, 9)) == Counter(C.pair_ids(ty, hg.ptr, hg.nbr, 9))
            if g.n_atoms:
                ptr, idx, w = _csr(g)
                r0 = [hash(x) % 5 for x in initial_invariants(g)]
                assert Py.refine_ranks(r0, ptr, idx, w) == C.refine_ranks(r0, ptr, idx, w)
        x = np.random.default_rng(0).standard_normal((50, 7)).astype(np.float32)
        seg = np.random.default_rng(1).integers(0, 9, 50)
        assert np.allclose(Py.segment_sum(x, seg, 9), C.segment_sum(x, seg, 9), atol=1e-6)
        assert Py.hash_seq([1, 2, 2**64 - 1], 3) == C.hash_seq([1, 2, 2**64 - 1], 3)
