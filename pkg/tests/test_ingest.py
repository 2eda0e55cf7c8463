import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mkdti.exceptions import DataError
from mkdti.ingest import (EntityCatalog, build_hetero_adjacency, jaccard_similarity, load_adjacency,
                          load_dataset, read_similarity_matrix, save_adjacency, save_dataset,
                          tanimoto_similarity, write_matrix)


def write_files(root, assoc="D1\tT1\n", fps="D1\t1,2\nD2\t3\n", ints="T1\tT2\n"):
    root.mkdir(parents=True, exist_ok=True)
    (root / "drugs.txt").write_text("D1\nD2\n")
    (root / "targets.txt").write_text("T1\nT2\n")
    (root / "associations.tsv").write_text(assoc)
    (root / "fingerprints.tsv").write_text(fps)
    (root / "target_interactions.tsv").write_text(ints)
    return root


def test_single_edge_gives_single_one(tmp_path):
    ds = load_dataset(write_files(tmp_path))
    assert ds.catalog.drug_ids == ("D1", "D2")
    np.testing.assert_array_equal(ds.Y, [[1, 0], [0, 0]])


def test_unknown_identifier_names_file_and_line(tmp_path):
    write_files(tmp_path, assoc="D1\tT1\nD9\tT2\n")
    with pytest.raises(DataError, match=r"associations\.tsv:2: unknown identifier 'D9'"):
        load_dataset(tmp_path)


def test_duplicate_association_is_idempotent(tmp_path):
    a = load_dataset(write_files(tmp_path / "a"))
    b = load_dataset(write_files(tmp_path / "b",
                                 assoc="D1\tT1\nD1\tT1\n"))
    np.testing.assert_array_equal(a.Y, b.Y)


def test_catalog_first_appearance_order_and_dedup(tmp_path):
    write_files(tmp_path)
    (tmp_path / "drugs.txt").write_text("D2\nD1\nD2\n")
    ds = load_dataset(tmp_path)
    assert ds.catalog.drug_ids == ("D2", "D1")
    np.testing.assert_array_equal(ds.Y, [[0, 0], [1, 0]])


def test_missing_required_file(tmp_path):
    write_files(tmp_path)
    (tmp_path / "associations.tsv").unlink()
    with pytest.raises(DataError, match="associations"):
        load_dataset(tmp_path)


def test_catalog_rejects_duplicates_and_empty():
    with pytest.raises(DataError):
        EntityCatalog(("a", "a"), ("t",))
    with pytest.raises(DataError):
        EntityCatalog((), ("t",))


def test_bad_fingerprint_line(tmp_path):
    write_files(tmp_path, fps="D1\t1,x\n")
    with pytest.raises(DataError, match=r"fingerprints\.tsv:1"):
        load_dataset(tmp_path)


def test_missing_fingerprint_is_empty_with_warning(tmp_path, caplog):
    write_files(tmp_path, fps="D1\t1,2\n")
    with caplog.at_level(logging.WARNING):
        ds = load_dataset(tmp_path)
    assert ds.fingerprints[1] == frozenset()
    assert "no fingerprint" in caplog.text


def test_interactions_read_undirected(tmp_path):
    ds = load_dataset(write_files(tmp_path))
    assert ds.interactions == [frozenset({1}), frozenset({0})]


def test_tanimoto_examples():
    S = tanimoto_similarity([{1, 2, 3}, {2, 3, 4}, {1, 2, 3}, {7, 8}])
    assert S[0, 1] == 0.5
    assert S[0, 2] == 1.0
    assert S[0, 3] == 0.0


def test_jaccard_examples():
    S = jaccard_similarity([{0, 1}, {1, 2, 3}, {5}])
    assert S[0, 1] == 0.25
    assert S[0, 2] == 0.0


def test_both_empty_is_zero_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        S = tanimoto_similarity([set(), set(), {1}])
    assert S[0, 1] == 0.0 and S[0, 0] == 1.0 and S[1, 1] == 1.0
    assert "empty" in caplog.text


sets = st.lists(st.frozensets(st.integers(0, 12), max_size=8), min_size=1, max_size=10)


@settings(max_examples=100, deadline=None)
@given(sets)
def test_set_similarities_are_symmetric_unit_diagonal_bounded(bits):
    for fn in (tanimoto_similarity, jaccard_similarity):
        S = fn(bits)
        assert np.array_equal(S, S.T)
        assert (np.diag(S) == 1.0).all()
        assert ((S >= 0) & (S <= 1)).all()


@settings(max_examples=100, deadline=None)
@given(sets)
def test_tanimoto_matches_pairwise_count(bits):
    S = tanimoto_similarity(bits)
    for i, a in enumerate(bits):
        for j, b in enumerate(bits):
            if i != j:
                expected = len(a & b) / len(a | b) if a | b else 0.0
                assert S[i, j] == pytest.approx(expected, abs=1e-15)


def test_adjacency_block_layout():
    Y = np.array([[1, 0, 1], [0, 1, 0]], dtype=float)
    kd = np.array([[1.0, 0.2], [0.2, 1.0]])
    kt = np.eye(3)
    adj = build_hetero_adjacency(kd, kt, Y)
    assert adj.A.shape == (5, 5)
    np.testing.assert_array_equal(adj.A[:2, 2:], Y)
    np.testing.assert_array_equal(adj.A[2:, :2], Y.T)
    np.testing.assert_array_equal(adj.A[:2, :2], kd)
    np.testing.assert_array_equal(adj.A[2:, 2:], kt)


def test_identity_similarities_and_no_links_give_self_loops_only():
    adj = build_hetero_adjacency(np.eye(2), np.eye(3), np.zeros((2, 3)))
    assert adj.neighbor_lists == tuple(((i, 1.0),) for i in range(5))


def test_threshold_excludes_weak_edge_keeps_self_loops():
    kd = np.array([[1.0, 0.3], [0.3, 1.0]])
    adj = build_hetero_adjacency(kd, np.eye(1), np.zeros((2, 1)), tau=0.5)
    assert adj.neighbor_lists[0] == ((0, 1.0),)
    assert adj.neighbor_lists[1] == ((1, 1.0),)
    kept = build_hetero_adjacency(kd, np.eye(1), np.zeros((2, 1)), tau=0.0)
    assert kept.neighbor_lists[0] == ((0, 1.0), (1, 0.3))


def test_top_k_keeps_largest():
    kd = np.array([[1.0, 0.3, 0.9], [0.3, 1.0, 0.1], [0.9, 0.1, 1.0]])
    adj = build_hetero_adjacency(kd, np.eye(1), np.zeros((3, 1)), top_k=1)
    assert adj.neighbor_lists[0] == ((0, 1.0), (2, 0.9))


def test_adjacency_errors():
    with pytest.raises(DataError, match="shape"):
        build_hetero_adjacency(np.eye(3), np.eye(3), np.zeros((2, 3)))
    with pytest.raises(DataError):
        build_hetero_adjacency(np.eye(2), np.eye(3), np.zeros((2, 3)), tau=-1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 31), st.floats(0, 0.9))
def test_adjacency_symmetric_with_self_loops(nd, nt, seed, tau):
    rng = np.random.default_rng(seed)
    kd = tanimoto_similarity([set(rng.choice(10, 3).tolist()) for _ in range(nd)])
    kt = jaccard_similarity([set(rng.choice(6, 2).tolist()) for _ in range(nt)])
    Y = (rng.random((nd, nt)) < 0.4).astype(float)
    adj = build_hetero_adjacency(kd, kt, Y, tau)
    assert np.array_equal(adj.A, adj.A.T)
    for i, lst in enumerate(adj.neighbor_lists):
        assert lst[0] == (i, 1.0)
        assert all(w > tau for j, w in lst[1:])


def test_adjacency_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    kd = tanimoto_similarity([set(rng.choice(20, 5).tolist()) for _ in range(4)])
    kt = jaccard_similarity([set(rng.choice(6, 3).tolist()) for _ in range(3)])
    Y = (rng.random((4, 3)) < 0.5).astype(float)
    adj = build_hetero_adjacency(kd, kt, Y)
    save_adjacency(adj, tmp_path / "adj.npz")
    back = load_adjacency(tmp_path / "adj.npz")
    assert back.A.tobytes() == adj.A.tobytes()
    assert back.neighbor_lists == adj.neighbor_lists


def test_dataset_round_trip(tmp_path):
    ds = load_dataset(write_files(tmp_path / "src"))
    save_dataset(ds, tmp_path / "out")
    back = load_dataset(tmp_path / "out")
    assert back.catalog == ds.catalog
    np.testing.assert_array_equal(back.Y, ds.Y)
    assert back.fingerprints == ds.fingerprints
    assert back.interactions == ds.interactions


def test_similarity_matrix_file_reordered(tmp_path):
    M = np.array([[1.0, 0.1 + 0.2], [0.1 + 0.2, 1.0]])
    write_matrix(tmp_path / "s.tsv", M, ["a", "b"], ["a", "b"])
    back = read_similarity_matrix(tmp_path / "s.tsv", ["b", "a"])
    assert back[0, 1] == 0.1 + 0.2
    with pytest.raises(DataError, match="missing"):
        read_similarity_matrix(tmp_path / "s.tsv", ["a", "c"])


def test_similarity_matrix_replaces_fingerprints(tmp_path):
    write_files(tmp_path)
    (tmp_path / "fingerprints.tsv").unlink()
    write_matrix(tmp_path / "drug_similarity.tsv", np.array([[1.0, 0.4], [0.4, 1.0]]), ["D1", "D2"],
                 ["D1", "D2"])
    kd, _ = load_dataset(tmp_path).base_kernels()
    assert kd[0, 1] == 0.4
