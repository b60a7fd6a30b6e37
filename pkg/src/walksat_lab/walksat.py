"""Plain Walksat with an incremental unsatisfied-clause tracker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from ._rng import make_rng
from .formula import Assignment, Formula, unsat_indices

__all__ = [
    "IndexedSet",
    "RunResult",
    "SolverTracker",
    "flip",
    "init_tracker",
    "run",
    "run_with_restarts",
]


class IndexedSet:
    """Integer set over ``0..capacity-1`` with O(1) add, remove and uniform sampling.

    Membership order is insertion order with swap-remove, so the sequence of
    sampled elements is a deterministic function of the operation history.
    """

    __slots__ = ("items", "_pos")

    def __init__(self, capacity: int, members: Iterable[int] = ()):
        self.items: list[int] = []
        self._pos = [-1] * capacity
        for x in members:
            self.add(x)

    def add(self, x: int) -> None:
        if self._pos[x] < 0:
            self._pos[x] = len(self.items)
            self.items.append(x)

    def remove(self, x: int) -> None:
        p = self._pos[x]
        if p < 0:
            return
        last = self.items.pop()
        if last != x:
            self.items[p] = last
            self._pos[last] = p
        self._pos[x] = -1

    def sample(self, rng: np.random.Generator) -> int:
        return self.items[int(rng.integers(len(self.items)))]

    def __contains__(self, x: int) -> bool:
        return self._pos[x] >= 0

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def __bool__(self) -> bool:
        return bool(self.items)


class SolverTracker:
    """Assignment plus per-clause true-literal counts and the unsat set.

    ``true_count[i]`` counts literal occurrences, so a clause holding both
    ``x`` and ``-x`` never drops to zero because of ``x``.  Flipping ``x``
    only touches the clauses in which ``x`` occurs.
    """

    def __init__(self, n: int, true_count: list[int], value: bytearray,
                 deltas: Callable[[int], list[tuple[int, int]]] | None = None):
        self.n = n
        self.m = len(true_count)
        self.value = value
        self.true_count = true_count
        self.unsat = IndexedSet(self.m, (i for i, c in enumerate(true_count) if c == 0))
        self._delta_cache: dict[int, list[tuple[int, int]]] = {}
        self._delta_source = deltas

    @classmethod
    def from_formula(cls, f: Formula, a: Assignment | None = None) -> "SolverTracker":
        a = a if a is not None else Assignment.all_true(f.n)
        vals = a.values
        if f.m:
            true = vals[np.abs(f.lits)] == (f.lits > 0)
            counts = true.sum(axis=1).tolist()
        else:
            counts = []
        return cls(f.n, counts, bytearray(vals.astype(np.uint8).tobytes()), _formula_deltas(f))

    @classmethod
    def from_signs(cls, n: int, signs: np.ndarray) -> "SolverTracker":
        """Tracker for an all-true start where only the literal signs are known.

        Occurrence lists are registered later with :meth:`register`.
        """
        counts = (np.asarray(signs) > 0).sum(axis=1).tolist() if len(signs) else []
        return cls(n, counts, bytearray(b"\x01" * (n + 1)))

    def register(self, x: int, clause_deltas: list[tuple[int, int]]) -> None:
        self._delta_cache[x] = clause_deltas

    def deltas(self, x: int) -> list[tuple[int, int]]:
        """``(clause, #positive - #negative occurrences of x)`` in clause order."""
        d = self._delta_cache.get(x)
        if d is None:
            d = self._delta_source(x) if self._delta_source else []
            self._delta_cache[x] = d
        return d

    def flip(self, x: int) -> tuple[int, int]:
        """Toggle ``x``; return (clauses made satisfied, clauses broken)."""
        up = not self.value[x]
        self.value[x] = up
        made = broken = 0
        tc = self.true_count
        unsat = self.unsat
        for c, d in self.deltas(x):
            old = tc[c]
            new = old + d if up else old - d
            tc[c] = new
            if old == 0:
                if new > 0:
                    unsat.remove(c)
                    made += 1
            elif new == 0:
                unsat.add(c)
                broken += 1
        return made, broken

    def assignment(self) -> Assignment:
        return Assignment(np.frombuffer(bytes(self.value), dtype=np.uint8).astype(bool))

    def state(self) -> tuple[bytes, tuple[int, ...], frozenset[int]]:
        """Comparable snapshot (assignment bytes, counts, unsat set)."""
        return bytes(self.value[1:]), tuple(self.true_count), frozenset(self.unsat)


def _formula_deltas(f: Formula) -> Callable[[int], list[tuple[int, int]]]:
    slots, starts = f.occurrence_index
    flat = f.lits.ravel()
    k = f.k

    def deltas(x: int) -> list[tuple[int, int]]:
        out: list[tuple[int, int]] = []
        for s in slots[starts[x]:starts[x + 1]].tolist():
            c = s // k
            d = 1 if flat[s] > 0 else -1
            if out and out[-1][0] == c:
                out[-1] = (c, out[-1][1] + d)
            else:
                out.append((c, d))
        return [cd for cd in out if cd[1] != 0]

    return deltas


def init_tracker(f: Formula, a: Assignment) -> SolverTracker:
    return SolverTracker.from_formula(f, a)


def flip(tracker: SolverTracker, f: Formula, v: int) -> tuple[int, int]:
    if not 1 <= v <= f.n:
        raise ValueError(f"variable {v} outside 1..{f.n}")
    return tracker.flip(v)


@dataclass(frozen=True)
class RunResult:
    satisfied: bool
    assignment: Assignment | None
    flips_used: int
    flip_log: tuple[tuple[int, int, int], ...] = field(repr=False)
    tries: int = 1

    @property
    def outcome(self) -> str:
        return "satisfied" if self.satisfied else "failure"


def _walk(f: Formula, tracker: SolverTracker, t_max: int, rng: np.random.Generator,
          log: list[tuple[int, int, int]]) -> bool:
    flat = f.lits.ravel()
    k = f.k
    unsat = tracker.unsat
    for _ in range(t_max):
        if not unsat:
            return True
        i = unsat.sample(rng)
        j = int(rng.integers(k))
        x = abs(int(flat[i * k + j]))
        tracker.flip(x)
        log.append((i, j, x))
    # the loop may end on the flip that satisfies the formula
    return not unsat


def run(f: Formula, t_max: int, seed: int) -> RunResult:
    """Walksat from the all-true assignment with at most ``t_max`` flips.

    Each iteration picks an unsatisfied clause uniformly, then a slot
    uniformly, and flips that slot's variable.
    """
    if t_max < 0:
        raise ValueError("t_max must be >= 0")
    rng = make_rng(seed)
    tracker = SolverTracker.from_formula(f)
    log: list[tuple[int, int, int]] = []
    ok = _walk(f, tracker, t_max, rng, log)
    a = tracker.assignment() if ok else None
    if ok:
        _verify(f, a)
    return RunResult(ok, a, len(log), tuple(log))


def run_with_restarts(f: Formula, tries: int, t_max_per_try: int, seed: int) -> RunResult:
    """Repeated Walksat, each try from a fresh uniformly random assignment."""
    if tries < 1:
        raise ValueError("tries must be >= 1")
    rng = make_rng(seed)
    log: list[tuple[int, int, int]] = []
    for attempt in range(1, tries + 1):
        start = Assignment.random(f.n, rng)
        tracker = SolverTracker.from_formula(f, start)
        if _walk(f, tracker, t_max_per_try, rng, log):
            a = tracker.assignment()
            _verify(f, a)
            return RunResult(True, a, len(log), tuple(log), attempt)
    return RunResult(False, None, len(log), tuple(log), tries)


def _verify(f: Formula, a: Assignment) -> None:
    bad = unsat_indices(f, a)
    if bad:
        raise AssertionError(f"claimed satisfying assignment leaves clauses {bad[:5]} unsatisfied")
