"""Sparse parity-check matrices, quasi-cyclic construction and alist I/O."""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

GIRTH_INFINITE = -1

TANNER_155_SHIFTS = (
    (1, 2, 4, 8, 16),
    (5, 10, 20, 9, 18),
    (25, 19, 7, 14, 28),
)
TANNER_155_P = 31


class CodeFormatError(ValueError):
    """Raised for malformed alist input or inconsistent supports."""


@dataclass(frozen=True)
class QCDescriptor:
    p: int
    shifts: tuple[tuple[int, ...], ...]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.shifts), len(self.shifts[0])


@dataclass(frozen=True, eq=False)
class SparseParityCheck:
    """Binary m x n matrix held as row and column supports.

    Edges are numbered in row-major order: edge ``e`` joins check
    ``edge_check[e]`` and variable ``edge_var[e]``.  The object is immutable
    and may be shared across threads.
    """

    n_rows: int
    n_cols: int
    row_support: tuple[np.ndarray, ...]
    col_support: tuple[np.ndarray, ...]
    meta: QCDescriptor | None = None
    label: str = ""
    edge_check: np.ndarray = field(init=False, repr=False)
    edge_var: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for i, row in enumerate(self.row_support):
            if len(np.unique(row)) != len(row):
                raise CodeFormatError(f"duplicate index in row {i}")
        for j, col in enumerate(self.col_support):
            if len(np.unique(col)) != len(col):
                raise CodeFormatError(f"duplicate index in column {j}")
        checks = np.repeat(np.arange(self.n_rows), [len(r) for r in self.row_support])
        variables = (np.concatenate(self.row_support) if self.n_rows
                     else np.zeros(0, dtype=np.int64))
        # transpose consistency
        cols_from_rows = sorted(zip(variables.tolist(), checks.tolist()))
        cols = sorted((j, int(i)) for j, col in enumerate(self.col_support) for i in col)
        if cols_from_rows != cols:
            raise CodeFormatError("row and column supports disagree")
        object.__setattr__(self, "edge_check", checks.astype(np.int64))
        object.__setattr__(self, "edge_var", variables.astype(np.int64))

    @classmethod
    def from_dense(cls, H, meta: QCDescriptor | None = None, label: str = "") -> "SparseParityCheck":
        H = np.asarray(H)
        if H.ndim != 2:
            raise ValueError("parity-check matrix must be 2-D")
        H = H.astype(bool)
        rows = tuple(np.flatnonzero(H[i]).astype(np.int64) for i in range(H.shape[0]))
        cols = tuple(np.flatnonzero(H[:, j]).astype(np.int64) for j in range(H.shape[1]))
        return cls(H.shape[0], H.shape[1], rows, cols, meta=meta, label=label)

    @classmethod
    def from_rows(cls, n_cols: int, rows: Sequence[Iterable[int]], meta=None, label="") -> "SparseParityCheck":
        row_support = tuple(np.array(sorted(r), dtype=np.int64) for r in rows)
        per_col: list[list[int]] = [[] for _ in range(n_cols)]
        for i, r in enumerate(row_support):
            for j in r:
                if not 0 <= j < n_cols:
                    raise CodeFormatError(f"column index {j} out of range in row {i}")
                per_col[j].append(i)
        col_support = tuple(np.array(c, dtype=np.int64) for c in per_col)
        return cls(len(row_support), n_cols, row_support, col_support, meta=meta, label=label)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def n_edges(self) -> int:
        return len(self.edge_var)

    def toarray(self) -> np.ndarray:
        H = np.zeros(self.shape, dtype=np.uint8)
        H[self.edge_check, self.edge_var] = 1
        return H

    def csr(self):
        """scipy CSR copy, built once."""
        cached = self.__dict__.get("_csr")
        if cached is None:
            from scipy import sparse
            data = np.ones(self.n_edges, dtype=np.int64)
            cached = sparse.csr_matrix((data, (self.edge_check, self.edge_var)), shape=self.shape)
            object.__setattr__(self, "_csr", cached)
        return cached

    def row_degrees(self) -> np.ndarray:
        return np.array([len(r) for r in self.row_support], dtype=np.int64)

    def col_degrees(self) -> np.ndarray:
        return np.array([len(c) for c in self.col_support], dtype=np.int64)

    def degree_profile(self) -> dict:
        """Histogram of column and row weights, keyed by weight."""
        cv, cc = np.unique(self.col_degrees(), return_counts=True)
        rv, rc = np.unique(self.row_degrees(), return_counts=True)
        return {
            "variable": {int(k): int(v) for k, v in zip(cv, cc)},
            "check": {int(k): int(v) for k, v in zip(rv, rc)},
        }

    def is_regular(self) -> bool:
        return len(set(self.col_degrees().tolist())) == 1 and len(set(self.row_degrees().tolist())) == 1

    def same_support(self, other: "SparseParityCheck") -> bool:
        if self.shape != other.shape:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.row_support, other.row_support))

    def dots(self) -> np.ndarray:
        """(row, col) coordinates of every one, for dot-plot output."""
        return np.column_stack([self.edge_check, self.edge_var])


@dataclass(frozen=True, eq=False)
class TannerGraph:
    """Edge-indexed view of a parity-check matrix."""

    matrix: SparseParityCheck

    @property
    def n_edges(self) -> int:
        return self.matrix.n_edges

    def edge(self, e: int) -> tuple[int, int]:
        return int(self.matrix.edge_check[e]), int(self.matrix.edge_var[e])

    def edge_id(self, check: int, var: int) -> int:
        H = self.matrix
        start = int(sum(len(r) for r in H.row_support[:check]))
        pos = np.searchsorted(H.row_support[check], var)
        if pos >= len(H.row_support[check]) or H.row_support[check][pos] != var:
            raise KeyError((check, var))
        return start + int(pos)


def build_qc_matrix(shifts, p: int, label: str = "") -> SparseParityCheck:
    """Array of p x p circulant permutation blocks.

    Block (i, j) is the identity with rows cyclically shifted left by
    ``shifts[i][j]``: entry (r, c) is one iff ``c == (r + shift) % p``.
    """
    p = int(p)
    if p <= 0:
        raise ValueError("circulant size p must be positive")
    table = np.asarray(shifts, dtype=np.int64)
    if table.ndim != 2 or table.size == 0:
        raise ValueError("shift table must be a non-empty 2-D array")
    if table.min() < 0 or table.max() >= p:
        raise ValueError(f"shifts must lie in [0, {p})")
    d_v, d_c = table.shape
    rows = []
    for i in range(d_v):
        for r in range(p):
            rows.append(sorted(j * p + (r + int(table[i, j])) % p for j in range(d_c)))
    meta = QCDescriptor(p, tuple(tuple(int(s) for s in row) for row in table))
    return SparseParityCheck.from_rows(d_c * p, rows, meta=meta, label=label)


def tanner_155() -> SparseParityCheck:
    """The [155, 64, 20] (3,5)-regular code of Tanner."""
    return build_qc_matrix(TANNER_155_SHIFTS, TANNER_155_P, label="tanner155")


def random_qc_shifts(d_v: int, d_c: int, p: int, rng=None, avoid_4cycles: bool = True,
                     max_tries: int = 10000) -> np.ndarray:
    """Random circulant shift table, optionally free of 4-cycles.

    A 4-cycle exists iff s[i,j] - s[i,l] + s[k,l] - s[k,j] == 0 (mod p) for
    some i != k, j != l.
    """
    rng = np.random.default_rng(rng)
    table = np.zeros((d_v, d_c), dtype=np.int64)
    for i in range(d_v):
        for j in range(d_c):
            for _ in range(max_tries):
                s = int(rng.integers(p))
                table[i, j] = s
                if not avoid_4cycles or not _has_4cycle_at(table, i, j, p):
                    break
            else:
                raise RuntimeError("could not place a 4-cycle-free shift; increase p")
    return table


def _has_4cycle_at(table, i, j, p):
    # only entries (k, l) with k < i, l < j are placed alongside (i, l)
    for k in range(i):
        for l in range(j):
            if (table[i, j] - table[i, l] + table[k, l] - table[k, j]) % p == 0:
                return True
    return False


def ieee_proxy(seed: int = 2048) -> SparseParityCheck:
    """Synthesized (6,32)-regular QC stand-in with the 802.3an block shape.

    Not the Reed-Solomon based standard matrix; 384 x 2048 with 64 x 64
    circulants and no 4-cycles.
    """
    table = random_qc_shifts(6, 32, 64, rng=seed)
    return build_qc_matrix(table, 64, label=f"ieee-proxy-seed{seed}")


# ---------------------------------------------------------------------------
# alist
# ---------------------------------------------------------------------------

def alist_text(matrix: SparseParityCheck) -> str:
    """The alist serialisation as a string (1-based indices, zero padding)."""
    cols, rows = matrix.col_support, matrix.row_support
    max_c = max((len(c) for c in cols), default=0)
    max_r = max((len(r) for r in rows), default=0)

    def padded(lst, width):
        vals = [str(int(x) + 1) for x in lst] + ["0"] * (width - len(lst))
        return " ".join(vals)

    lines = [f"{matrix.n_cols} {matrix.n_rows}", f"{max_c} {max_r}",
             " ".join(str(len(c)) for c in cols), " ".join(str(len(r)) for r in rows)]
    lines += [padded(c, max_c) for c in cols]
    lines += [padded(r, max_r) for r in rows]
    return "\n".join(lines) + "\n"


def save_alist(matrix: SparseParityCheck, path) -> None:
    with open(path, "w") as fh:
        fh.write(alist_text(matrix))


def load_alist(path) -> SparseParityCheck:
    with open(path) as fh:
        tokens = fh.read().split()
    try:
        values = [int(t) for t in tokens]
    except ValueError as exc:
        raise CodeFormatError(f"non-integer token in {path}") from exc
    pos = 0

    def take(k):
        nonlocal pos
        if pos + k > len(values):
            raise CodeFormatError("alist ended early")
        chunk = values[pos:pos + k]
        pos += k
        return chunk

    n, m = take(2)
    if n <= 0 or m <= 0:
        raise CodeFormatError("alist dimensions must be positive")
    max_c, max_r = take(2)
    col_deg = take(n)
    row_deg = take(m)
    if max(col_deg) > max_c or max(row_deg) > max_r:
        raise CodeFormatError("degree exceeds declared maximum")
    col_lists = _read_lists(take, n, col_deg, max_c, m, "column")
    row_lists = _read_lists(take, m, row_deg, max_r, n, "row")
    if pos != len(values):
        raise CodeFormatError("trailing data after alist body")
    H = SparseParityCheck.from_rows(n, row_lists, label=os.path.basename(str(path)))
    if any(sorted(c) != list(s) for c, s in zip(col_lists, H.col_support)):
        raise CodeFormatError("column lists disagree with row lists")
    return H


def _read_lists(take, count, degrees, width, bound, what):
    out = []
    for k in range(count):
        raw = take(width)
        entries = [v for v in raw if v != 0]
        if len(entries) != degrees[k]:
            raw_tail = raw[degrees[k]:]
            if any(raw_tail) or len(entries) < degrees[k]:
                raise CodeFormatError(f"{what} {k + 1}: expected {degrees[k]} entries")
        if any(v < 1 or v > bound for v in entries):
            raise CodeFormatError(f"{what} {k + 1}: index out of range")
        if len(set(entries)) != len(entries):
            raise CodeFormatError(f"{what} {k + 1}: duplicate neighbor")
        out.append(sorted(v - 1 for v in entries))
    return out


# ---------------------------------------------------------------------------
# GF(2) algebra
# ---------------------------------------------------------------------------

def _row_bits(matrix) -> list[int]:
    if isinstance(matrix, SparseParityCheck):
        return [sum(1 << int(j) for j in row) for row in matrix.row_support]
    H = np.asarray(matrix).astype(bool)
    return [sum(1 << int(j) for j in np.flatnonzero(row)) for row in H]


def gf2_rank(matrix) -> int:
    """Rank over GF(2) by elimination on integer bitsets."""
    pivots: dict[int, int] = {}
    rank = 0
    for row in _row_bits(matrix):
        while row:
            top = row.bit_length() - 1
            if top in pivots:
                row ^= pivots[top]
            else:
                pivots[top] = row
                rank += 1
                break
    return rank


def nullspace_basis(matrix: SparseParityCheck) -> np.ndarray:
    """Basis of {x : Hx = 0} over GF(2), one codeword per row."""
    H = matrix.toarray().astype(np.uint8) if isinstance(matrix, SparseParityCheck) else np.asarray(matrix, dtype=np.uint8) % 2
    A = H.copy()
    m, n = A.shape
    pivot_cols = []
    r = 0
    for c in range(n):
        hits = np.flatnonzero(A[r:, c]) if r < m else []
        if len(hits) == 0:
            continue
        k = r + hits[0]
        if k != r:
            A[[r, k]] = A[[k, r]]
        others = np.flatnonzero(A[:, c])
        others = others[others != r]
        A[others] ^= A[r]
        pivot_cols.append(c)
        r += 1
        if r == m:
            break
    free = [c for c in range(n) if c not in set(pivot_cols)]
    basis = np.zeros((len(free), n), dtype=np.uint8)
    for t, f in enumerate(free):
        basis[t, f] = 1
        for i, pc in enumerate(pivot_cols):
            basis[t, pc] = A[i, f]
    return basis


def syndrome(matrix: SparseParityCheck, word) -> np.ndarray:
    """H * word over GF(2); accepts a single word or a batch of rows."""
    w = np.asarray(word)
    if w.shape[-1] != matrix.n_cols:
        raise ValueError(f"word length {w.shape[-1]} != n = {matrix.n_cols}")
    bits = (w % 2).astype(np.int64)
    s = matrix.csr() @ bits.T
    return (np.asarray(s).T % 2).astype(np.uint8)


def is_codeword(matrix: SparseParityCheck, word) -> bool:
    return not syndrome(matrix, word).any()


# ---------------------------------------------------------------------------
# girth
# ---------------------------------------------------------------------------

def girth(matrix: SparseParityCheck) -> int:
    """Shortest cycle length of the Tanner graph, GIRTH_INFINITE if acyclic.

    BFS from every variable node; every cycle passes through one.
    """
    n = matrix.n_cols
    # nodes: variables 0..n-1, checks n..n+m-1
    adj = [list(n + c for c in col) for col in matrix.col_support]
    adj += [list(int(v) for v in row) for row in matrix.row_support]
    best = None
    for root in range(n):
        if not adj[root]:
            continue
        dist = {root: 0}
        parent = {root: -1}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            if best is not None and 2 * dist[u] + 1 >= best:
                break
            for w in adj[u]:
                if w == parent[u]:
                    continue
                if w in dist:
                    length = dist[u] + dist[w] + 1
                    if best is None or length < best:
                        best = length
                else:
                    dist[w] = dist[u] + 1
                    parent[w] = u
                    queue.append(w)
    return GIRTH_INFINITE if best is None else best
