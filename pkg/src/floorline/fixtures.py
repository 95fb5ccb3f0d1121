"""Reference set topologies drawn from published figures.

``TANNER_82_EDGES`` lists, for the eight variables of the dominant (8,2)
set of the Tanner code, the neighbour reached through each satisfied check
in the drawing's left-to-right edge order (``None`` marks none); variables
4 and 5 (1-based) each see one unsatisfied check.  The ordering reproduces
the published edge labels 1..22, so eigenvector entries can be compared
position by position.

``IEEE_88_PAIRS`` is the variable graph of the dominant (8,8) set of the
802.3an code: eight degree-6 variables, twenty satisfied checks joining
pairs, one unsatisfied check per variable.
"""

from __future__ import annotations

import numpy as np

from .absorption import SetTopology
from .code_model import SparseParityCheck

TANNER_82_EDGES = (
    (6, 2, 8),
    (7, 1, 4),
    (4, 5, 8),
    (2, 3),
    (3, 6),
    (1, 5, 7),
    (2, 6, 8),
    (7, 1, 3),
)
TANNER_82_EXT = (0, 0, 0, 1, 1, 0, 0, 0)

TANNER_82_VMAX = (
    0.2369, 0.2369, 0.2273, 0.2031, 0.2031, 0.2651, 0.2254, 0.2254, 0.1660,
    0.1261, 0.1483, 0.1483, 0.1261, 0.2031, 0.2651, 0.2031, 0.2369, 0.2369,
    0.2273, 0.2201, 0.2201, 0.2544,
)
TANNER_82_MU = 1.7870

# T1 T2 L1 R1 L2 R2 B1 B2 -> 0..7
IEEE_88_PAIRS = (
    (0, 1), (0, 2), (0, 4), (0, 3), (0, 5),
    (1, 2), (1, 4), (1, 3), (1, 5),
    (2, 4), (2, 6), (2, 7),
    (3, 5), (3, 7), (3, 6),
    (4, 6), (4, 7),
    (5, 7), (5, 6),
    (6, 7),
)


def tanner_82_topology() -> SetTopology:
    """(8,2) topology with the published edge labelling."""
    owners, checks = [], []
    for k, nbrs in enumerate(TANNER_82_EDGES):
        for w in nbrs:
            u, v = sorted((k, w - 1))
            owners.append(k)
            checks.append(u * 8 + v)
    return SetTopology.from_edges(owners, checks, TANNER_82_EXT, d_v=3)


def ieee_88_matrix() -> SparseParityCheck:
    """Smallest parity-check matrix realising the (8,8) set: 20 pair checks
    followed by 8 single-variable checks, 8 columns of weight 6."""
    rows = [list(pair) for pair in IEEE_88_PAIRS] + [[k] for k in range(8)]
    return SparseParityCheck.from_rows(8, rows, label="ieee88-fixture")


def pairs_matrix(pairs, n_vars: int, ext_per_var) -> SparseParityCheck:
    """Parity-check matrix for an arbitrary pairwise set topology."""
    rows = [sorted(p) for p in pairs]
    for k, e in enumerate(ext_per_var):
        for _ in range(int(e)):
            rows.append([k])
    return SparseParityCheck.from_rows(n_vars, rows)


def relabel_to(reference: SetTopology, other: SetTopology) -> np.ndarray | None:
    """Edge permutation ``perm`` with other-edge ``perm[e]`` matching
    reference-edge ``e`` under some variable-graph isomorphism, or None."""
    def structure(t: SetTopology):
        adj = {}
        for e, k in enumerate(t.edge_owner):
            w = t.edge_owner[t.partner[e]]
            adj[(k, w)] = e
        return adj

    ref, oth = structure(reference), structure(other)
    a = reference.a
    if a != other.a or reference.dim != other.dim:
        return None
    ref_nbrs = {k: sorted(w for (u, w) in ref if u == k) for k in range(a)}
    oth_nbrs = {k: sorted(w for (u, w) in oth if u == k) for k in range(a)}

    def extend(mapping):
        if len(mapping) == a:
            return mapping
        k = len(mapping)
        for cand in range(a):
            if cand in mapping.values():
                continue
            if len(oth_nbrs[cand]) != len(ref_nbrs[k]):
                continue
            if other.ext_degree[cand] != reference.ext_degree[k]:
                continue
            ok = all(((mapping[w] in oth_nbrs[cand]) == (w in ref_nbrs[k]))
                     for w in mapping)
            if ok:
                res = extend({**mapping, k: cand})
                if res:
                    return res
        return None

    mapping = extend({})
    if mapping is None:
        return None
    perm = np.empty(reference.dim, dtype=np.int64)
    for (k, w), e in ref.items():
        perm[e] = oth[(mapping[k], mapping[w])]
    return perm
