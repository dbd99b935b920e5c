import numpy as np
import pytest

from rlvae.data import (
    MANIFEST_FIELDS,
    N_FOLDS,
    DataError,
    assign_folds,
    ingest,
    load_manifest,
    load_molecules,
    read_smiles_lines,
    role_of,
)

RAW = """id,smiles
m1,CCO
m2,OCC
m3,[NH4+]
m4,C[C@H](N)O
m5,CCCCCC
m6,[Na]Cl
m7,C(
m8,c1ccccc1
m9,[13CH4]
m10,C1CC1
"""


@pytest.fixture
def raw(tmp_path):
    p = tmp_path / "raw.csv"
    p.write_text(RAW)
    return p


def test_drop_reasons(raw):
    ds = ingest(raw, 0)
    assert [r.id for r in ds.records] == ["m1", "m5", "m8", "m10"]
    assert ds.dropped == {"duplicate": 1, "charge": 1, "stereo": 1, "unsupported": 2, "parse": 1}


def test_strip_stereo_keeps_molecule(raw):
    ds = ingest(raw, 0, strip_stereo=True)
    assert "m4" in [r.id for r in ds.records]
    assert "stereo" not in ds.dropped


def test_heavy_atom_cap_and_limit(raw):
    ds = ingest(raw, 0, max_heavy_atoms=5)
    assert "m5" not in [r.id for r in ds.records] and ds.dropped["too_large"] == 2
    assert len(ingest(raw, 0, limit=2)) == 2


def test_canonical_forms(raw):
    ds = ingest(raw, 0)
    assert ds.records[0].canonical == "CCO"
    assert ds.records[2].canonical == "c1ccccc1"


def test_folds_balanced_and_seeded():
    f = assign_folds(1845, 0)
    sizes = np.bincount(f, minlength=N_FOLDS)
    assert sizes.max() - sizes.min() <= 1 and sizes.sum() == 1845
    np.testing.assert_array_equal(f, assign_folds(1845, 0))
    assert not np.array_equal(f, assign_folds(1845, 1))


def test_roles():
    assert [role_of(k) for k in range(10)] == ["train"] * 8 + ["tune", "test"]


def test_manifest_round_trip(raw, tmp_path):
    ds = ingest(raw, 3)
    path = tmp_path / "m.csv"
    ds.write_manifest(path)
    assert path.read_text().splitlines()[0] == ",".join(MANIFEST_FIELDS)
    back = load_manifest(path)
    assert [(r.id, r.canonical, r.fold) for r in back.records] == [(r.id, r.canonical, r.fold) for r in ds.records]
    ids, graphs = load_molecules(path, "all")
    assert ids == [r.id for r in ds.records] and len(graphs) == len(ids)
    assert sum(len(back.split(k)) for k in ("train", "tune", "test")) == len(back)


def test_corpus_ingest_deterministic(tmp_path):
    from conftest import DATA

    a = ingest(DATA / "qm9like_small.csv", 0, limit=500)
    b = ingest(DATA / "qm9like_small.csv", 0, limit=500)
    assert a.manifest_csv() == b.manifest_csv()
    assert len(a) == 500 and a.fold_sizes() == [50] * 10


def test_plain_lines(tmp_path):
    p = tmp_path / "x.smi"
    p.write_text("CCO ethanol\n\nC\n")
    assert read_smiles_lines(p) == [("ethanol", "CCO"), ("3", "C")]
    ids, graphs = load_molecules(p)
    assert ids == ["ethanol", "3"] and graphs[1].n_atoms == 1


def test_errors(tmp_path):
    with pytest.raises(DataError):
        ingest(tmp_path / "missing.csv")
    empty = tmp_path / "e.csv"
    empty.write_text("id,smiles\nx,[Na]\n")
    with pytest.raises(DataError):
        ingest(empty)
    with pytest.raises(DataError):
        load_molecules(empty)
    with pytest.raises(DataError):
        load_manifest(empty)
    with pytest.raises(ValueError):
        ingest(_good(tmp_path)).split("validation")


def _good(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("C\nCC\n")
    return p
