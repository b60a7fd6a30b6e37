"""Random k-CNF formulas, assignments, evaluation and DIMACS I/O.

A formula is an ordered tuple of ``m`` clauses, each an ordered ``k``-tuple of
literals.  Literals use the DIMACS convention: variable ``x`` is ``x`` and its
negation is ``-x`` with variables numbered ``1..n``.  Repeated literals inside
a clause and repeated clauses are kept as-is; nothing is simplified.

Clause and slot indices are 0-based inside the Python API.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from ._rng import make_rng

__all__ = [
    "Assignment",
    "DimacsError",
    "Formula",
    "Literal",
    "count_all_negative",
    "generate_uniform",
    "is_s_negative",
    "parse_dimacs",
    "unsat_indices",
    "write_dimacs",
]


class Literal(NamedTuple):
    variable: int
    sign: int  # +1 or -1

    @classmethod
    def from_int(cls, lit: int) -> "Literal":
        if lit == 0:
            raise ValueError("0 is not a literal")
        return cls(abs(lit), 1 if lit > 0 else -1)

    def to_int(self) -> int:
        return self.sign * self.variable

    def __str__(self) -> str:
        return f"x{self.variable}" if self.sign > 0 else f"~x{self.variable}"


Clause = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class Formula:
    """An ordered k-CNF over variables ``1..n``.

    ``lits`` is a read-only ``(m, k)`` integer array of signed literals.
    """

    n: int
    k: int
    lits: np.ndarray

    def __post_init__(self) -> None:
        lits = np.array(self.lits, dtype=np.int64, copy=True)
        if lits.ndim != 2:
            raise ValueError("lits must be an (m, k) array")
        if self.n < 1 and lits.size:
            raise ValueError("formula with clauses needs n >= 1")
        if lits.shape[0] and self.k < 1:
            raise ValueError("clause width k must be >= 1")
        if lits.shape[1] != self.k:
            raise ValueError(f"clause width {lits.shape[1]} != k={self.k}")
        if lits.size:
            v = np.abs(lits)
            if v.min() < 1 or v.max() > self.n:
                raise ValueError(f"literal variable outside 1..{self.n}")
        lits.setflags(write=False)
        object.__setattr__(self, "lits", lits)

    @classmethod
    def from_clauses(cls, n: int, clauses: Iterable[Sequence[int]], k: int | None = None) -> "Formula":
        rows = [tuple(int(l) for l in c) for c in clauses]
        if k is None:
            if not rows:
                raise ValueError("k is required for an empty formula")
            k = len(rows[0])
        for idx, c in enumerate(rows):
            if len(c) != k:
                raise ValueError(f"clause {idx} has width {len(c)}, expected {k}")
        arr = np.array(rows, dtype=np.int64) if rows else np.zeros((0, k), np.int64)
        return cls(n, k, arr)

    @property
    def m(self) -> int:
        return int(self.lits.shape[0])

    @property
    def density(self) -> float:
        return self.m / self.n

    @cached_property
    def clauses(self) -> tuple[Clause, ...]:
        return tuple(tuple(row) for row in self.lits.tolist())

    def __len__(self) -> int:
        return self.m

    def __getitem__(self, i: int) -> Clause:
        return self.clauses[i]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Formula):
            return NotImplemented
        return self.n == other.n and self.k == other.k and np.array_equal(self.lits, other.lits)

    def __hash__(self) -> int:
        return hash((self.n, self.k, self.lits.tobytes()))

    def __repr__(self) -> str:
        return f"Formula(n={self.n}, m={self.m}, k={self.k})"

    @cached_property
    def occurrence_index(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR index of slots by variable.

        Returns ``(slots, starts)``: the flat slot ids (``i * k + j``) holding
        variable ``x`` are ``slots[starts[x]:starts[x + 1]]`` in ascending order.
        """
        flat = np.abs(self.lits).ravel()
        slots = np.argsort(flat, kind="stable")
        counts = np.bincount(flat, minlength=self.n + 1)
        starts = np.zeros(self.n + 2, dtype=np.int64)
        np.cumsum(counts, out=starts[1:])
        slots.setflags(write=False)
        starts.setflags(write=False)
        return slots, starts

    def occurrences(self, x: int) -> list[tuple[int, int]]:
        """All ``(clause, slot)`` positions whose variable is ``x``."""
        slots, starts = self.occurrence_index
        k = self.k
        return [divmod(s, k) for s in slots[starts[x]:starts[x + 1]].tolist()]


@dataclass(frozen=True, eq=False)
class Assignment:
    """A total truth assignment; ``a[x]`` for ``x`` in ``1..n``."""

    values: np.ndarray  # bool, length n + 1, index 0 unused

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=bool, copy=True)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def all_true(cls, n: int) -> "Assignment":
        return cls(np.ones(n + 1, dtype=bool))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "Assignment":
        vals = np.ones(n + 1, dtype=bool)
        vals[1:] = rng.integers(0, 2, size=n).astype(bool)
        return cls(vals)

    @classmethod
    def from_sequence(cls, bits: Sequence[bool]) -> "Assignment":
        """Build from values for ``x1..xn`` in order."""
        return cls(np.concatenate([[True], np.asarray(bits, dtype=bool)]))

    @property
    def n(self) -> int:
        return int(self.values.shape[0]) - 1

    def __getitem__(self, x: int) -> bool:
        if not 1 <= x <= self.n:
            raise IndexError(x)
        return bool(self.values[x])

    def flipped(self, x: int) -> "Assignment":
        vals = self.values.copy()
        vals[x] = not vals[x]
        return Assignment(vals)

    def literal_true(self, lit: int) -> bool:
        return bool(self.values[abs(lit)]) == (lit > 0)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Assignment):
            return NotImplemented
        return np.array_equal(self.values[1:], other.values[1:])

    def __hash__(self) -> int:
        return hash(self.values[1:].tobytes())

    def __repr__(self) -> str:
        bits = "".join("1" if b else "0" for b in self.values[1:].tolist())
        return f"Assignment({bits})"


def generate_uniform(n: int, m: int, k: int, seed: int) -> Formula:
    """Draw a formula uniformly from all ``(2n)^(km)`` ordered k-CNFs."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if m > 0 and (n < 1 or k < 1):
        raise ValueError("need n >= 1 and k >= 1 for a non-empty formula")
    if k < 1:
        raise ValueError("k must be >= 1")
    if m == 0:
        return Formula(n, k, np.zeros((0, k), np.int64))
    rng = make_rng(seed)
    return Formula(n, k, _literals_from_codes(rng.integers(0, 2 * n, size=(m, k))))


def _literals_from_codes(codes: np.ndarray) -> np.ndarray:
    # code 2(x-1) -> x, code 2(x-1)+1 -> -x
    codes = np.asarray(codes, dtype=np.int64)
    var = codes // 2 + 1
    return np.where(codes % 2 == 0, var, -var)


def count_all_negative(f: Formula) -> int:
    if f.m == 0:
        return 0
    return int(np.count_nonzero((f.lits < 0).all(axis=1)))


def unsat_indices(f: Formula, a: Assignment) -> list[int]:
    """Ascending indices of the clauses with no true literal under ``a``."""
    if f.m == 0:
        return []
    if a.n < f.n:
        raise ValueError("assignment does not cover the formula's variables")
    vals = a.values[np.abs(f.lits)]
    true = vals == (f.lits > 0)
    return np.flatnonzero(~true.any(axis=1)).tolist()


def is_s_negative(clause: Sequence[int], s: set[int] | frozenset[int]) -> bool:
    """True iff every positive literal of ``clause`` has its variable in ``s``."""
    return all(lit in s for lit in clause if lit > 0)


class DimacsError(ValueError):
    pass


_WIDTH_COMMENT = re.compile(rb"^c\s+k\s+(\d+)\s*$")


def parse_dimacs(data: bytes | str, k: int | None = None) -> Formula:
    """Parse a fixed-width DIMACS CNF.

    The clause width comes from ``k``, else from a ``c k <width>`` comment,
    else from the first clause.  Clauses of any other width are rejected.
    """
    if isinstance(data, str):
        data = data.encode()
    header: tuple[int, int] | None = None
    width = k
    clauses: list[list[int]] = []
    current: list[int] = []
    for lineno, raw in enumerate(data.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith(b"c"):
            match = _WIDTH_COMMENT.match(line)
            if match and width is None:
                width = int(match.group(1))
            continue
        if line.startswith(b"%"):
            break
        if line.startswith(b"p"):
            fields = line.split()
            if header is not None or len(fields) != 4 or fields[1] != b"cnf":
                raise DimacsError(f"line {lineno}: malformed header {line!r}")
            try:
                header = (int(fields[2]), int(fields[3]))
            except ValueError:
                raise DimacsError(f"line {lineno}: malformed header {line!r}") from None
            if header[0] < 0 or header[1] < 0:
                raise DimacsError(f"line {lineno}: negative counts in header")
            continue
        if header is None:
            raise DimacsError(f"line {lineno}: clause before 'p cnf' header")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"line {lineno}: bad token {tok!r}") from None
            if lit == 0:
                clauses.append(current)
                current = []
                continue
            if abs(lit) > header[0]:
                raise DimacsError(f"line {lineno}: variable {abs(lit)} out of range 1..{header[0]}")
            current.append(lit)
    if header is None:
        raise DimacsError("missing 'p cnf' header")
    if current:
        raise DimacsError("last clause is not terminated by 0")
    n, m = header
    if len(clauses) != m:
        raise DimacsError(f"header declares {m} clauses, found {len(clauses)}")
    if width is None:
        width = len(clauses[0]) if clauses else 1
    for idx, c in enumerate(clauses):
        if len(c) != width:
            raise DimacsError(f"clause {idx + 1} has width {len(c)}, expected {width}")
    if clauses and n < 1:
        raise DimacsError("clauses present but n = 0")
    return Formula.from_clauses(n, clauses, k=width)


def write_dimacs(f: Formula) -> bytes:
    lines = [f"c k {f.k}", f"p cnf {f.n} {f.m}"]
    lines.extend(" ".join(map(str, c)) + " 0" for c in f.clauses)
    return ("\n".join(lines) + "\n").encode()
