"""Absorption-set verification, exhaustive enumeration and set topology.

A set of variable nodes is an absorption set when every member has more
neighbouring checks touched an even number of times by the set than checks
touched an odd number of times.  ``b`` counts the odd checks.
"""

from __future__ import annotations

import os
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .code_model import SparseParityCheck, TannerGraph


class NotAbsorbingError(ValueError):
    """The variable set violates the majority rule (or is malformed)."""


class TopologyError(ValueError):
    """Set structure unsuitable for the linear message model."""


@dataclass(frozen=True)
class AbsorptionSet:
    variables: tuple[int, ...]
    unsatisfied_checks: tuple[int, ...]
    satisfied_checks: tuple[int, ...]
    internal_edges: tuple[int, ...]
    check_incidence: dict = field(compare=False, repr=False, default_factory=dict)

    @property
    def a(self) -> int:
        return len(self.variables)

    @property
    def b(self) -> int:
        return len(self.unsatisfied_checks)

    @property
    def signature(self) -> tuple[int, int]:
        return self.a, self.b

    @property
    def elementary(self) -> bool:
        """True when satisfied checks touch the set exactly twice and
        unsatisfied checks exactly once (what the linear model needs)."""
        inc = self.check_incidence
        return (all(inc[c] == 2 for c in self.satisfied_checks)
                and all(inc[c] == 1 for c in self.unsatisfied_checks))

    def to_dict(self) -> dict:
        return {"variables": list(self.variables), "a": self.a, "b": self.b}


def _incidence(matrix: SparseParityCheck, variables) -> Counter:
    inc: Counter = Counter()
    for v in variables:
        inc.update(int(c) for c in matrix.col_support[v])
    return inc


def classify_set(matrix: SparseParityCheck, variables: Iterable[int]) -> AbsorptionSet:
    """Verify a variable set; raise NotAbsorbingError with the reason if it fails."""
    vs = sorted({int(v) for v in variables})
    if not vs:
        raise NotAbsorbingError("empty variable set")
    if vs[0] < 0 or vs[-1] >= matrix.n_cols:
        raise NotAbsorbingError(f"variable index out of range [0, {matrix.n_cols})")
    inc = _incidence(matrix, vs)
    for v in vs:
        checks = matrix.col_support[v]
        even = sum(1 for c in checks if inc[int(c)] % 2 == 0)
        if even <= len(checks) - even:
            raise NotAbsorbingError(
                f"variable {v}: {even} even-incidence checks of {len(checks)}, majority fails")
    sat = tuple(sorted(c for c, k in inc.items() if k % 2 == 0))
    unsat = tuple(sorted(c for c, k in inc.items() if k % 2 == 1))
    graph = TannerGraph(matrix)
    sat_set = set(sat)
    internal = tuple(graph.edge_id(int(c), v)
                     for v in vs for c in matrix.col_support[v] if int(c) in sat_set)
    return AbsorptionSet(tuple(vs), unsat, sat, internal, dict(inc))


def is_absorption_set(matrix: SparseParityCheck, variables) -> bool:
    try:
        classify_set(matrix, variables)
    except NotAbsorbingError:
        return False
    return True


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------

@dataclass
class Census:
    """Enumeration result grouped by (a, b) signature."""

    sets: dict[tuple[int, int], list[AbsorptionSet]]
    exhaustive: bool
    a_max: int
    b_max: int
    nodes_visited: int = 0

    def multiplicities(self) -> dict[tuple[int, int], int]:
        return {k: len(v) for k, v in sorted(self.sets.items())}

    def of(self, a: int, b: int) -> list[AbsorptionSet]:
        return self.sets.get((a, b), [])

    def table(self) -> list[dict]:
        """Rows (a, b, exists, multiplicity) covering every a <= a_max."""
        mult = self.multiplicities()
        rows = []
        for a in range(1, self.a_max + 1):
            found = sorted(b for (aa, b) in mult if aa == a)
            if not found:
                rows.append({"a": a, "b": None, "exists": False, "multiplicity": 0})
            for b in found:
                rows.append({"a": a, "b": b, "exists": True, "multiplicity": mult[(a, b)]})
        return rows


class _Searcher:
    """Connected-subset growth (ESU order) with a best-achievable-b bound.

    Every connected variable set is visited exactly once, with its smallest
    index as root.  A branch is cut when even the most favourable ``r``
    additional variables cannot bring the odd-check count to ``b_max``:
    a new variable cancels at most as many odd checks as it touches.
    """

    def __init__(self, matrix: SparseParityCheck, a_max: int, b_max: int, max_nodes: int | None):
        self.vchecks = [tuple(int(c) for c in col) for col in matrix.col_support]
        self.cvars = [tuple(int(v) for v in row) for row in matrix.row_support]
        n = matrix.n_cols
        self.vnbrs = [sorted({u for c in self.vchecks[v] for u in self.cvars[c] if u != v})
                      for v in range(n)]
        self.a_max = a_max
        self.b_max = b_max
        self.max_nodes = max_nodes
        self.n_rows = matrix.n_rows

    def run(self, root: int):
        self.root = root
        self.deg = [0] * self.n_rows
        self.S = [root]
        self.in_s = {root}
        self.found: list[tuple[int, ...]] = []
        self.nodes = 0
        self.truncated = False
        for c in self.vchecks[root]:
            self.deg[c] += 1
        ext = [u for u in self.vnbrs[root] if u > root]
        self._extend(ext, set(ext) | {root}, len(self.vchecks[root]))
        return self.found, self.nodes, self.truncated

    def _odd_checks(self):
        deg = self.deg
        return {c for v in self.S for c in self.vchecks[v] if deg[c] & 1}

    def _extend(self, ext, seen, b):
        self.nodes += 1
        if self.max_nodes is not None and self.nodes > self.max_nodes:
            self.truncated = True
            return
        k = len(self.S)
        if b <= self.b_max:
            self.found.append(tuple(sorted(self.S)))
        if k == self.a_max:
            return
        r = self.a_max - k
        gain: dict[int, int] = {}
        root, in_s = self.root, self.in_s
        for c in self._odd_checks():
            for u in self.cvars[c]:
                if u > root and u not in in_s:
                    gain[u] = gain.get(u, 0) + 1
        best = sorted(gain.values(), reverse=True)[:r]
        if b - sum(best) > self.b_max:
            return
        ext = list(ext)
        deg, S, in_s = self.deg, self.S, self.in_s
        while ext:
            w = ext.pop()
            new = [u for u in self.vnbrs[w] if u > self.root and u not in seen]
            db = 0
            for c in self.vchecks[w]:
                deg[c] += 1
                db += 1 if deg[c] & 1 else -1
            S.append(w)
            in_s.add(w)
            self._extend(ext + new, seen | set(new), b + db)
            S.pop()
            in_s.discard(w)
            for c in self.vchecks[w]:
                deg[c] -= 1
            if self.truncated:
                return


def _qc_orbit(variables: Sequence[int], p: int):
    """Canonical representative and orbit size under the cyclic QC shift.

    Shifting every variable by one position inside its column block (and
    every check inside its row block) is an automorphism of any QC matrix.
    Among the shifts whose smallest index is a block start, the
    lexicographically smallest is canonical.
    """
    orbit = set()
    best = None
    for s in range(p):
        shifted = tuple(sorted((v // p) * p + (v % p + s) % p for v in variables))
        orbit.add(shifted)
        if shifted[0] % p == 0 and (best is None or shifted < best):
            best = shifted
    return best, orbit


def _search_roots(args):
    matrix, a_max, b_max, max_nodes, roots = args
    searcher = _Searcher(matrix, a_max, b_max, max_nodes)
    out, nodes, truncated = [], 0, False
    for root in roots:
        found, k, t = searcher.run(root)
        out.extend(found)
        nodes += k
        truncated |= t
    return out, nodes, truncated


def enumerate_sets(matrix: SparseParityCheck, a_max: int, b_max: int,
                   qc_symmetry: int | None = None, max_nodes: int | None = None,
                   n_jobs: int | None = None) -> Census:
    """All connected absorption sets with a <= a_max and b <= b_max.

    Sets are counted as distinct variable-index sets.  With ``qc_symmetry=p``
    only canonical orbit representatives are searched (roots at block starts)
    and each is expanded to its full orbit.  ``max_nodes`` bounds the search
    per root; exceeding it yields ``exhaustive=False``.
    """
    if a_max < 1 or b_max < 0:
        raise ValueError("need a_max >= 1 and b_max >= 0")
    p = qc_symmetry
    if p:
        if matrix.n_cols % p:
            raise ValueError("qc_symmetry p must divide n")
        roots = list(range(0, matrix.n_cols, p))
    else:
        roots = list(range(matrix.n_cols))
    n_jobs = n_jobs or int(os.environ.get("FLOORLINE_WORKERS", "1"))
    chunks = [roots[i::n_jobs] for i in range(n_jobs)] if n_jobs > 1 else [roots]
    jobs = [(matrix, a_max, b_max, max_nodes, chunk) for chunk in chunks if chunk]
    if len(jobs) > 1:
        with ProcessPoolExecutor(len(jobs)) as pool:
            results = list(pool.map(_search_roots, jobs))
    else:
        results = [_search_roots(jobs[0])]

    candidates: set[tuple[int, ...]] = set()
    nodes, truncated = 0, False
    for found, k, t in results:
        nodes += k
        truncated |= t
        for vs in found:
            if p:
                canon, orbit = _qc_orbit(vs, p)
                if canon == vs:
                    candidates.update(orbit)
            else:
                candidates.add(vs)

    grouped: dict[tuple[int, int], list[AbsorptionSet]] = defaultdict(list)
    for vs in sorted(candidates):
        try:
            s = classify_set(matrix, vs)
        except NotAbsorbingError:
            continue
        grouped[s.signature].append(s)
    return Census(dict(sorted(grouped.items())), not truncated, a_max, b_max, nodes)


def containment_stats(smaller: Sequence[AbsorptionSet], larger: Sequence[AbsorptionSet]) -> float:
    """Fraction of ``smaller`` sets whose variables lie inside some ``larger`` set."""
    if not smaller:
        return float("nan")
    by_var: dict[int, list[frozenset]] = defaultdict(list)
    for s in larger:
        fs = frozenset(s.variables)
        for v in s.variables:
            by_var[v].append(fs)
    hits = 0
    for s in smaller:
        target = set(s.variables)
        pool = by_var.get(s.variables[0], [])
        if any(target <= big for big in pool):
            hits += 1
    return hits / len(smaller)


# ---------------------------------------------------------------------------
# topology for the linear model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SetTopology:
    """Internal edges of an elementary set in deterministic label order.

    ``edge_owner[e]`` is the local index (0..a-1) of the variable sending on
    edge ``e``; ``partner[e]`` the other internal edge at the same satisfied
    check; ``ext_degree[k]`` how many unsatisfied checks variable ``k`` sees.
    """

    variables: tuple[int, ...]
    edge_owner: tuple[int, ...]
    edge_check: tuple[int, ...]
    partner: tuple[int, ...]
    ext_degree: tuple[int, ...]
    d_v: int

    @property
    def dim(self) -> int:
        return len(self.edge_owner)

    @property
    def a(self) -> int:
        return len(self.variables)

    @property
    def b(self) -> int:
        return int(sum(self.ext_degree))

    @classmethod
    def from_edges(cls, owners: Sequence[int], checks: Sequence[int], ext_degree: Sequence[int],
                   variables: Sequence[int] | None = None, d_v: int | None = None) -> "SetTopology":
        """Build directly from (variable, check) pairs; each check must appear twice."""
        by_check: dict[int, list[int]] = defaultdict(list)
        for e, c in enumerate(checks):
            by_check[c].append(e)
        partner = [0] * len(checks)
        for c, es in by_check.items():
            if len(es) != 2 or owners[es[0]] == owners[es[1]]:
                raise TopologyError(f"check {c} must join two distinct set variables")
            partner[es[0]], partner[es[1]] = es[1], es[0]
        a = len(ext_degree)
        if variables is None:
            variables = tuple(range(a))
        if d_v is None:
            d_v = Counter(owners)[0] + ext_degree[0]
        return cls(tuple(variables), tuple(owners), tuple(checks), tuple(partner),
                   tuple(int(x) for x in ext_degree), int(d_v))


def induced_topology(s: AbsorptionSet, matrix: SparseParityCheck) -> SetTopology:
    """Label internal edges by ascending variable index, then ascending check."""
    if not s.elementary:
        bad = [c for c in s.satisfied_checks if s.check_incidence[c] != 2]
        bad += [c for c in s.unsatisfied_checks if s.check_incidence[c] != 1]
        raise TopologyError(f"checks {bad} touch the set more than twice / thrice; "
                            "linear model needs incidence 2 (satisfied) and 1 (unsatisfied)")
    sat = set(s.satisfied_checks)
    unsat = set(s.unsatisfied_checks)
    owners, checks, ext = [], [], []
    degrees = set()
    for k, v in enumerate(s.variables):
        cs = sorted(int(c) for c in matrix.col_support[v])
        degrees.add(len(cs))
        for c in cs:
            if c in sat:
                owners.append(k)
                checks.append(c)
        ext.append(sum(1 for c in cs if c in unsat))
    if len(degrees) != 1:
        raise TopologyError("set variables have unequal degrees")
    return SetTopology.from_edges(owners, checks, ext, variables=s.variables, d_v=degrees.pop())


class AbsorptionSetSearch(BaseEstimator):
    """Estimator wrapper: ``fit(H)`` enumerates sets into ``census_``.

    Parameters mirror :func:`enumerate_sets`.
    """

    def __init__(self, a_max=8, b_max=2, qc_symmetry="auto", max_nodes=None, n_jobs=None):
        self.a_max = a_max
        self.b_max = b_max
        self.qc_symmetry = qc_symmetry
        self.max_nodes = max_nodes
        self.n_jobs = n_jobs

    def fit(self, H, y=None):
        from .validation import check_parity_matrix
        H = check_parity_matrix(H)
        p = self.qc_symmetry
        if p == "auto":
            p = H.meta.p if H.meta is not None else None
        self.census_ = enumerate_sets(H, self.a_max, self.b_max, qc_symmetry=p,
                                      max_nodes=self.max_nodes, n_jobs=self.n_jobs)
        self.multiplicities_ = self.census_.multiplicities()
        self.matrix_ = H
        return self

    def transform(self, X):
        """Indicator matrix: rows of X (variable sets) -> absorbing or not."""
        from sklearn.utils.validation import check_is_fitted
        check_is_fitted(self, "census_")
        return np.array([is_absorption_set(self.matrix_, vs) for vs in X])
