"""Factor-graph expansion checks and rich partial assignments.

``clauses`` arguments accept anything indexable by clause index that yields a
sequence of signed literals: a :class:`~walksat_lab.formula.Formula`, a list,
or a dict holding only the clauses of interest.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

__all__ = [
    "FactorGraph",
    "LFoldMatching",
    "RichResult",
    "build_rich_assignment",
    "check_core_property",
    "closure_Y",
    "has_l_fold_matching",
    "neighborhood",
    "rich_count",
]

ClauseSource = Sequence[Sequence[int]] | Mapping[int, Sequence[int]]


@dataclass(frozen=True)
class FactorGraph:
    """Clause/variable incidence with occurrence multiplicity kept per slot."""

    slot_vars: Mapping[int, tuple[int, ...]]
    clause_adj: Mapping[int, frozenset[int]]
    var_adj: Mapping[int, frozenset[int]]

    @classmethod
    def from_clauses(cls, clauses: ClauseSource, indices: Iterable[int] | None = None) -> "FactorGraph":
        if indices is None:
            indices = clauses.keys() if isinstance(clauses, Mapping) else range(len(clauses))
        slot_vars: dict[int, tuple[int, ...]] = {}
        var_adj: dict[int, set[int]] = {}
        for i in indices:
            vs = tuple(abs(int(l)) for l in clauses[i])
            slot_vars[i] = vs
            for v in vs:
                var_adj.setdefault(v, set()).add(i)
        return cls(
            slot_vars,
            {i: frozenset(vs) for i, vs in slot_vars.items()},
            {v: frozenset(cs) for v, cs in var_adj.items()},
        )

    @property
    def clause_indices(self) -> list[int]:
        return sorted(self.slot_vars)


def neighborhood(fg: FactorGraph, z: Iterable[int]) -> set[int]:
    out: set[int] = set()
    for i in z:
        out |= fg.clause_adj[i]
    return out


@dataclass(frozen=True)
class LFoldMatching:
    l: int
    edges: frozenset[tuple[int, int]]  # (clause, variable)

    def is_valid_for(self, z: Iterable[int], fg: FactorGraph) -> bool:
        per_clause: dict[int, int] = {}
        used: set[int] = set()
        for i, x in self.edges:
            if x not in fg.clause_adj[i] or x in used:
                return False
            used.add(x)
            per_clause[i] = per_clause.get(i, 0) + 1
        return all(per_clause.get(i, 0) == self.l for i in z) and set(per_clause) <= set(z)


def _match_rows(rows: list[tuple[int, frozenset[int] | set[int]]]) -> list[int] | None:
    """Perfect matching of row slots into distinct variables.

    Each row is ``(clause, allowed variables)``.  Returns the variable matched
    to each row, or None when some row stays unmatched.
    """
    if not rows:
        return []
    cols = sorted(set().union(*(allowed for _, allowed in rows)))
    if len(cols) < len(rows):
        return None
    col_of = {v: c for c, v in enumerate(cols)}
    indptr = [0]
    indices: list[int] = []
    for _, allowed in rows:
        if not allowed:
            return None
        indices.extend(sorted(col_of[v] for v in allowed))
        indptr.append(len(indices))
    graph = csr_matrix(
        (np.ones(len(indices), dtype=np.int8), np.array(indices, dtype=np.int32), np.array(indptr, dtype=np.int32)),
        shape=(len(rows), len(cols)),
    )
    match = maximum_bipartite_matching(graph, perm_type="column")
    if (match < 0).any():
        return None
    return [cols[c] for c in match.tolist()]


def has_l_fold_matching(fg: FactorGraph, z: Iterable[int], l: int) -> tuple[bool, LFoldMatching | None]:
    """Decide whether every clause in ``z`` can own ``l`` private variables.

    Each clause is split into ``l`` unit-capacity copies and a maximum
    bipartite matching (Hopcroft-Karp) is computed against the distinct
    variables of ``N(Phi_z)``; the l-fold matching exists iff every copy is
    matched.
    """
    if l < 1:
        raise ValueError("l must be >= 1")
    zs = sorted(set(z))
    if any(len(fg.clause_adj[i]) < l for i in zs):
        return False, None
    rows = [(i, fg.clause_adj[i]) for i in zs for _ in range(l)]
    got = _match_rows(rows)
    if got is None:
        return False, None
    return True, LFoldMatching(l, frozenset((i, x) for (i, _), x in zip(rows, got)))


def check_core_property(fg: FactorGraph, z: Iterable[int], lam: int) -> list[int]:
    """Greedy maximal sequence of clauses outside ``z`` overlapping the growing neighbourhood.

    Clause ``i`` is appended when it shares at least ``lam`` distinct
    variables with ``N(Phi_z)`` plus the neighbourhoods of the clauses
    appended so far.  The least qualifying index is taken each time.
    """
    chosen = set(z)
    acc = neighborhood(fg, chosen)
    if lam <= 0:
        return [i for i in fg.clause_indices if i not in chosen]
    overlap: dict[int, int] = {}
    heap: list[int] = []

    def absorb(vars_: Iterable[int]) -> None:
        for v in vars_:
            for c in fg.var_adj.get(v, ()):
                if c in chosen:
                    continue
                overlap[c] = overlap.get(c, 0) + 1
                if overlap[c] == lam:
                    heapq.heappush(heap, c)

    absorb(acc)
    seq: list[int] = []
    while heap:
        i = heapq.heappop(heap)
        if i in chosen:
            continue
        chosen.add(i)
        seq.append(i)
        new = fg.clause_adj[i] - acc
        acc |= new
        absorb(new)
    return seq


def closure_Y(fg: FactorGraph, y0: Iterable[int], lam: int) -> set[int]:
    """Least superset of ``y0`` closed under adding clauses with ``lam`` slots in N(Phi_Y).

    Slots are counted with multiplicity.
    """
    y = set(y0)
    nbr = neighborhood(fg, y)
    if lam <= 0:
        return set(fg.clause_indices) | y
    count: dict[int, int] = {}
    heap: list[int] = []

    def absorb(vars_: Iterable[int]) -> None:
        for v in vars_:
            for c in fg.var_adj.get(v, ()):
                if c in y:
                    continue
                before = count.get(c, 0)
                after = before + fg.slot_vars[c].count(v)
                count[c] = after
                if before < lam <= after:
                    heapq.heappush(heap, c)

    absorb(nbr)
    while heap:
        i = heapq.heappop(heap)
        if i in y:
            continue
        y.add(i)
        new = fg.clause_adj[i] - nbr
        nbr |= new
        absorb(new)
    return y


@dataclass(frozen=True)
class RichResult:
    ok: bool
    tau: dict[int, bool]
    reason: str | None = None


def _satisfying_value(clause: Sequence[int], x: int) -> bool:
    for lit in clause:
        if abs(lit) == x:
            return lit > 0
    raise KeyError(x)


def rich_count(clause: Sequence[int], tau: Mapping[int, bool]) -> int:
    """Number of literal occurrences of ``clause`` made true by ``tau``."""
    return sum(1 for lit in clause if abs(lit) in tau and tau[abs(lit)] == (lit > 0))


def build_rich_assignment(
    clauses: ClauseSource,
    z_new: Iterable[int],
    n_prev: set[int] | frozenset[int],
    tau_prev: Mapping[int, bool],
    *,
    match_size: int,
    rich_size: int,
) -> RichResult:
    """Extend ``tau_prev`` to the variables of the clauses ``z_new``.

    Looks for a ``match_size``-fold matching from ``z_new`` into its
    variables whose edges into ``n_prev`` can be dropped while every clause
    keeps ``rich_size`` edges.  Each kept edge sets its variable so that the
    lowest-slot occurrence in the matched clause is true; new variables that
    end up unmatched default to true.  On failure a best-effort extension is
    still returned (``ok=False``) so that callers can keep tracking.
    """
    zs = sorted(set(z_new))
    tau = dict(tau_prev)
    if not zs:
        return RichResult(True, tau)
    fg = FactorGraph.from_clauses(clauses, zs)
    new_vars = neighborhood(fg, zs) - set(n_prev)

    reason = None
    ok, _ = has_l_fold_matching(fg, zs, match_size)
    kept: list[tuple[int, int]] | None = None
    if not ok:
        reason = f"no {match_size}-fold matching"
    else:
        keep = min(rich_size, match_size)
        rows = []
        for i in zs:
            fresh = fg.clause_adj[i] - n_prev
            rows += [(i, fresh)] * keep
            rows += [(i, fg.clause_adj[i])] * (match_size - keep)
        got = _match_rows(rows)
        if got is None:
            reason = f"pruning edges into N_prev leaves fewer than {rich_size} per clause"
        else:
            kept = [(i, x) for (i, _), x in zip(rows, got) if x not in n_prev]

    if kept is None:
        # best effort: greedy private variables outside n_prev
        kept = []
        used: set[int] = set()
        for i in zs:
            for x in sorted(fg.clause_adj[i] - set(n_prev) - used)[:match_size]:
                kept.append((i, x))
                used.add(x)

    for x in new_vars:
        tau[x] = True
    for i, x in kept:
        tau[x] = _satisfying_value(clauses[i], x)
    if reason is None:
        short = [i for i in zs if rich_count(clauses[i], tau) < rich_size]
        if short:
            reason = f"clauses {short} have fewer than {rich_size} true occurrences"
    return RichResult(reason is None, tau, reason)
