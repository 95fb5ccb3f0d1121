import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from floorline.code_model import (GIRTH_INFINITE, CodeFormatError, SparseParityCheck,
                                  TannerGraph, alist_text, build_qc_matrix, gf2_rank, girth,
                                  ieee_proxy, is_codeword, load_alist, nullspace_basis,
                                  random_qc_shifts, save_alist, syndrome)
from floorline.validation import check_llrs, check_parity_matrix


def test_tanner_code_shape_rank_and_girth(tanner):
    assert tanner.shape == (93, 155)
    assert tanner.is_regular()
    assert tanner.degree_profile() == {"variable": {3: 155}, "check": {5: 93}}
    assert gf2_rank(tanner) == 91
    assert girth(tanner) == 8


def test_circulant_convention():
    H = build_qc_matrix([[1]], 4).toarray()
    expected = np.roll(np.eye(4, dtype=np.uint8), 1, axis=1)
    assert np.array_equal(H, expected)
    assert H[0, 1] == 1 and H[3, 0] == 1


def test_nullspace_gives_codewords(tanner):
    basis = nullspace_basis(tanner)
    assert basis.shape == (64, 155)
    assert gf2_rank(basis) == 64
    assert all(is_codeword(tanner, w) for w in basis)
    assert not syndrome(tanner, basis).any()


def test_syndrome_batch_and_single(tanner):
    rng = np.random.default_rng(0)
    words = rng.integers(0, 2, (5, 155))
    batch = syndrome(tanner, words)
    for k in range(5):
        assert np.array_equal(batch[k], syndrome(tanner, words[k]))
    with pytest.raises(ValueError):
        syndrome(tanner, np.zeros(154))


def test_alist_roundtrip(tmp_path, tanner):
    path = tmp_path / "t.alist"
    save_alist(tanner, path)
    back = load_alist(path)
    assert back.same_support(tanner)
    first = alist_text(tanner).splitlines()[0]
    assert first == "155 93"


def test_alist_irregular_zero_padding(tmp_path):
    H = SparseParityCheck.from_rows(4, [[0, 1, 2], [2, 3]])
    path = tmp_path / "irr.alist"
    save_alist(H, path)
    text = path.read_text().split("\n")
    assert text[-2].split() == ["3", "4", "0"]
    assert load_alist(path).same_support(H)


@pytest.mark.parametrize("body, message", [
    ("3 2\n2 2\n1 1 1\n2 2\n1 0\n1 0\n2 0\n1 2\n3 0\n", "disagree|expected"),
    ("3 2\n1 2\n1 1 1\n2 1\n1\n1\n9\n1 2\n3 0\n", "out of range"),
    ("3 2\n1 2\n1 1 1\n2 1\n1\n1\n2\n1 2\n3 0\n7\n", "trailing"),
    ("3 2\n1 2\n1 1", "ended early"),
    ("3 x\n", "non-integer"),
])
def test_alist_rejects_malformed_files(tmp_path, body, message):
    path = tmp_path / "bad.alist"
    path.write_text(body)
    with pytest.raises(CodeFormatError, match=message):
        load_alist(path)


def test_duplicate_support_rejected():
    with pytest.raises(ValueError):
        SparseParityCheck.from_rows(3, [[0, 0, 1]])


def test_tanner_graph_edge_ids_are_a_bijection(tanner):
    g = TannerGraph(tanner)
    assert g.n_edges == 465
    seen = set()
    for e in range(g.n_edges):
        c, v = g.edge(e)
        assert g.edge_id(c, v) == e
        seen.add((c, v))
    assert len(seen) == 465


def test_girth_of_tree_and_four_cycle():
    tree = SparseParityCheck.from_rows(4, [[0, 1], [1, 2], [2, 3]])
    assert girth(tree) == GIRTH_INFINITE
    square = SparseParityCheck.from_rows(2, [[0, 1], [0, 1]])
    assert girth(square) == 4


def test_random_shifts_avoid_four_cycles():
    table = random_qc_shifts(3, 5, 13, rng=4)
    assert girth(build_qc_matrix(table, 13)) >= 6


def test_ieee_proxy_shape():
    H = ieee_proxy()
    assert H.shape == (384, 2048)
    assert H.degree_profile() == {"variable": {6: 2048}, "check": {32: 384}}


def test_validation_accepts_dense_and_sparse(tanner):
    dense = tanner.toarray()
    assert check_parity_matrix(dense).same_support(tanner)
    assert check_parity_matrix(sp.csr_matrix(dense)).same_support(tanner)
    with pytest.raises(ValueError):
        check_parity_matrix(np.array([[0, 2]]))
    with pytest.raises(ValueError):
        check_llrs(np.array([np.nan, 1.0]), 2)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.booleans(), min_size=6, max_size=6), min_size=1, max_size=6))
def test_rank_matches_nullspace_dimension(rows):
    H = np.array(rows, dtype=np.uint8)
    basis = nullspace_basis(H)
    assert gf2_rank(H) + basis.shape[0] == 6
    assert not ((H.astype(int) @ basis.T.astype(int)) % 2).any()
