"""The revelation process that runs in lockstep with Walksat.

:class:`PiProcess` replays Walksat's choices while tracking how much of the
random formula the run has looked at.  Each slot ``(i, j)`` is either still
hidden (only its sign is known) or revealed.  A variable is revealed, at all
of its occurrences at once, when it is flipped for the first time or when it
occurs in a heavily conditioned clause.  Revealed variables carry one of two
labels:

* ``A`` -- flipped at least once and not absorbed into ``N``;
* ``N`` -- occurs in a clause of ``Z``, the set of heavily conditioned clauses.

One step of the process:

1. stop if the current assignment satisfies the formula;
2. pick an unsatisfied clause ``i`` and a slot ``j`` uniformly, flip ``y = |Phi_ij|``;
3. close ``Z``: while some clause outside ``Z`` has all its positive slots
   revealed and either at least ``k1`` slots on ``A_{t-1} + {y}`` or more than
   ``lam`` slots on ``N``, add the least such clause and put its variables in ``N``;
4. relabel: ``A_t = (A_{t-1} + {y}) - N_t``.

Alongside, the process maintains the potentials ``S, H, S', H', R``, the
injection from ``A`` into satisfied clauses of ``D``, a rich assignment ``tau``
on ``N`` and the active/passive tallies.

The formula can be supplied up front (eager) or generated on demand (lazy):
the lazy source fixes all signs at time 0 and draws each hidden variable only
when the process reveals it.  Given the same choice seed both modes make the
same decisions for the same underlying formula.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ._rng import make_rng
from .expansion import FactorGraph, build_rich_assignment, closure_Y, rich_count
from .formula import Assignment, Formula, is_s_negative, unsat_indices
from .walksat import IndexedSet, SolverTracker

__all__ = [
    "InjectionViolation",
    "InvalidChoice",
    "PiProcess",
    "ProcessParams",
    "ProcessStopped",
    "StepRecord",
    "Trace",
    "audit",
    "build_injection_s",
    "classify_active_passive",
    "compute_D",
    "compute_H",
    "run_instrumented",
    "run_lazy",
    "y_closure",
]

HIDDEN, LABEL_A, LABEL_N = 0, 1, 2


def _ceil_times(frac: float | Fraction, x: int) -> int:
    if not isinstance(frac, Fraction):
        frac = Fraction(repr(float(frac)))
    return math.ceil(frac * x)


@dataclass(frozen=True)
class ProcessParams:
    k: int
    k1: int
    k2: int
    k3: int
    lam: int
    epsilon: float
    theta: float
    t_star: int
    rich_fraction: float = 0.8
    match_fraction: float = 0.9

    def __post_init__(self) -> None:
        for name in ("k1", "k2", "k3", "lam", "t_star"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")

    @classmethod
    def for_instance(cls, k: int, n: int, **overrides) -> "ProcessParams":
        """Defaults for clause width ``k`` on ``n`` variables, fractional thresholds rounded up."""
        theta = overrides.pop("theta", None)
        if theta is None:
            theta_val, theta_exact = 1 / (3 * k), Fraction(1, 3 * k)
        else:
            theta_val = float(theta)
            theta_exact = theta if isinstance(theta, Fraction) else Fraction(repr(theta_val))
        values = dict(
            k=k,
            k1=_ceil_times(Fraction(49, 100), k),
            k2=_ceil_times(Fraction(48, 100), k),
            k3=_ceil_times(Fraction(1, 100), k),
            lam=math.isqrt(k - 1) + 1 if k > 1 else 1,
            epsilon=math.exp(-(k ** (2 / 3))),
            theta=theta_val,
            t_star=max(1, math.ceil(theta_exact * n)),
        )
        values.update({key: v for key, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def rich_size(self) -> int:
        return _ceil_times(self.rich_fraction, self.k)

    @property
    def match_size(self) -> int:
        return _ceil_times(self.match_fraction, self.k)

    def to_json(self) -> dict:
        return {
            "k1": self.k1, "k2": self.k2, "k3": self.k3, "lambda": self.lam,
            "epsilon": self.epsilon, "theta": self.theta, "t_star": self.t_star,
            "rich_fraction": self.rich_fraction, "match_fraction": self.match_fraction,
        }


class ProcessStopped(RuntimeError):
    pass


class InvalidChoice(ValueError):
    pass


@dataclass(frozen=True)
class StepRecord:
    t: int
    i: int
    j: int
    var: int
    fresh: bool  # the chosen slot was hidden, i.e. pi_{t-1}(i, j) = -1
    in_z_prev: bool  # i was already in Z_{t-1}
    var_in_n_prev: bool
    made: int
    broken: int
    d_size: int
    s_pot: int
    h_pot: int
    s_prime: int
    h_prime: int
    r_pot: int
    u_count: int
    z_size: int
    n_size: int
    a_size: int
    active_count: int
    passive_count: int
    rich_ok: bool
    z_added: tuple[int, ...] = ()
    a_set: tuple[int, ...] | None = None
    n_set: tuple[int, ...] | None = None
    z_set: tuple[int, ...] | None = None

    def to_json(self) -> dict:
        out = {
            "t": self.t, "i": self.i + 1, "j": self.j + 1, "var": self.var,
            "fresh": self.fresh, "in_z_prev": self.in_z_prev, "var_in_n_prev": self.var_in_n_prev,
            "made": self.made, "broken": self.broken,
            "d_size": self.d_size, "s": self.s_pot, "h": self.h_pot,
            "s_prime": self.s_prime, "h_prime": self.h_prime, "r": self.r_pot,
            "u": self.u_count, "z_size": self.z_size, "n_size": self.n_size, "a_size": self.a_size,
            "active": self.active_count, "passive": self.passive_count, "rich_ok": self.rich_ok,
            "z_added": [c + 1 for c in self.z_added],
        }
        if self.a_set is not None:
            out["a_set"] = list(self.a_set)
            out["n_set"] = list(self.n_set)
            out["z_set"] = [c + 1 for c in self.z_set]
        return out


class _EagerSource:
    """Reveals variables of a fully drawn formula."""

    lazy = False

    def __init__(self, f: Formula):
        self.formula = f
        self._flat = f.lits.ravel()
        self._k = f.k

    def reveal(self, i: int, j: int) -> tuple[int, list[tuple[int, int]]]:
        x = abs(int(self._flat[i * self._k + j]))
        return x, self.formula.occurrences(x)


class _LazySource:
    """Draws hidden variables only when the process asks for them.

    A hidden slot is uniform over the variables not yet revealed, independently
    of every other hidden slot.  Revealing ``x`` therefore turns each other
    hidden slot into ``x`` with probability ``1/|W|`` (``W`` the unrevealed
    variables); ``occurrence_bias`` scales that probability and exists only to
    build deliberately wrong samplers for negative controls.
    """

    lazy = True

    def __init__(self, n: int, m: int, k: int, rng: np.random.Generator, occurrence_bias: float = 1.0):
        self.n, self.m, self.k = n, m, k
        self.rng = rng
        self.bias = occurrence_bias
        self.signs = (rng.integers(0, 2, size=(m, k)) * 2 - 1) if m else np.zeros((0, k), np.int64)
        self.unknown = IndexedSet(n + 1, range(1, n + 1))
        self.hidden = IndexedSet(m * k, range(m * k))
        self.var = [0] * (m * k)

    def reveal(self, i: int, j: int) -> tuple[int, list[tuple[int, int]]]:
        rng = self.rng
        first = i * self.k + j
        width = len(self.unknown)
        x = self.unknown.sample(rng)
        self.hidden.remove(first)
        pool = self.hidden.items
        p = min(1.0, self.bias / width)
        hits = int(rng.binomial(len(pool), p)) if pool else 0
        chosen = [pool[q] for q in rng.choice(len(pool), size=hits, replace=False).tolist()] if hits else []
        for s in chosen:
            self.hidden.remove(s)
        self.unknown.remove(x)
        slots = sorted([first, *chosen])
        for s in slots:
            self.var[s] = x
        return x, [divmod(s, self.k) for s in slots]

    def materialize(self) -> Formula:
        """Fill every still-hidden slot uniformly from the unrevealed variables."""
        var = list(self.var)
        pool = self.unknown.items
        for s in list(self.hidden):
            var[s] = pool[int(self.rng.integers(len(pool)))]
        arr = np.array(var, dtype=np.int64).reshape(self.m, self.k) * self.signs
        return Formula(self.n, self.k, arr)


@dataclass(frozen=True)
class InjectionViolation:
    reason: str


class PiProcess:
    """Mutable state of the revelation process at time ``t``."""

    def __init__(self, n: int, m: int, k: int, signs: np.ndarray, source, tracker: SolverTracker,
                 params: ProcessParams, choice_rng: np.random.Generator,
                 record_sets: bool = False, keep_pi_history: bool = False, check_rich: bool = False):
        if params.k != k:
            raise ValueError(f"params built for k={params.k}, formula has k={k}")
        self.n, self.m, self.k = n, m, k
        self.params = params
        self.source = source
        self.tracker = tracker
        self.rng = choice_rng
        self.record_sets = record_sets
        self.check_rich = check_rich

        self.signs = np.asarray(signs).ravel().tolist()
        self.slot_var = [0] * (m * k)  # revealed variable or 0 (hidden)
        self.label = bytearray(n + 1)
        self.var_slots: dict[int, list[tuple[int, int]]] = {}
        pos = (np.asarray(signs) > 0).sum(axis=1).tolist() if m else []
        self.hidden_pos = pos  # hidden positive slots per clause
        self.in_d = bytearray(1 if c == 0 else 0 for c in pos)
        self.d_size = sum(self.in_d)
        self.d0 = self.d_size
        self.cnt_a = [0] * m
        self.cnt_n = [0] * m
        self.in_z = bytearray(m)
        self.z_order: list[int] = []
        self.a_set: set[int] = set()
        self.n_set: set[int] = set()
        self.tau: dict[int, bool] = {}
        self.rich_ok = True
        self.rich_failures: list[tuple[int, str]] = []
        self.rich_violations: list[str] = []
        self.rich_checked = 0
        self.mismatch = 0
        self.s_prime = 0
        self.h_prime = 0
        self.r_pot = 0
        self.s_map: dict[int, int] = {}
        self.active_slots = [0] * m
        self.passive_slots = [0] * m
        self.active_count = 0
        self.passive_count = 0
        self.flip_history: list[tuple[int, int, int]] = []
        self.t = 0
        self.T: int | None = None
        self.stopped = False
        self.pi_history: list[np.ndarray] | None = [self.pi_array()] if keep_pi_history else None

    # construction -------------------------------------------------------

    @classmethod
    def eager(cls, f: Formula, params: ProcessParams, seed: int = 0, **kw) -> "PiProcess":
        signs = np.sign(f.lits) if f.m else np.zeros((0, f.k), np.int64)
        return cls(f.n, f.m, f.k, signs, _EagerSource(f), SolverTracker.from_formula(f),
                   params, make_rng(seed), **kw)

    @classmethod
    def lazy(cls, n: int, m: int, k: int, params: ProcessParams, seed: int = 0,
             occurrence_bias: float = 1.0, **kw) -> "PiProcess":
        source = _LazySource(n, m, k, make_rng(seed, 1), occurrence_bias)
        return cls(n, m, k, source.signs, source, SolverTracker.from_signs(n, source.signs),
                   params, make_rng(seed), **kw)

    # views ----------------------------------------------------------------

    @property
    def sigma(self) -> Assignment:
        return self.tracker.assignment()

    @property
    def z_set(self) -> set[int]:
        return set(self.z_order)

    def pi(self, i: int, j: int) -> int | None:
        """Revealed literal at slot ``(i, j)``, or None while only its sign is known."""
        v = self.slot_var[i * self.k + j]
        return v * self.signs[i * self.k + j] if v else None

    def sign(self, i: int, j: int) -> int:
        return self.signs[i * self.k + j]

    def pi_array(self) -> np.ndarray:
        """``(m, k)`` array of revealed variables, 0 where hidden."""
        return np.array(self.slot_var, dtype=np.int64).reshape(self.m, self.k)

    def revealed_clause(self, i: int) -> tuple[int, ...]:
        k = self.k
        base = i * k
        return tuple(self.slot_var[base + j] * self.signs[base + j] for j in range(k))

    @property
    def s_pot(self) -> int:
        return self.d_size - len(self.a_set) if self.t else self.d_size

    @property
    def h_pot(self) -> int:
        return self.mismatch if self.rich_ok else len(self.n_set)

    def u_count(self) -> int:
        in_z = self.in_z
        return sum(1 for c in self.tracker.unsat if not in_z[c])

    # the process ------------------------------------------------------------

    def _reveal(self, i: int, j: int) -> tuple[int, list[tuple[int, int]]]:
        x, slots = self.source.reveal(i, j)
        k = self.k
        signs = self.signs
        hidden_pos = self.hidden_pos
        deltas: list[tuple[int, int]] = []
        for c, s in slots:
            idx = c * k + s
            self.slot_var[idx] = x
            sg = signs[idx]
            if sg > 0:
                hidden_pos[c] -= 1
                if hidden_pos[c] == 0:
                    self.in_d[c] = 1
                    self.d_size += 1
            if deltas and deltas[-1][0] == c:
                deltas[-1] = (c, deltas[-1][1] + sg)
            else:
                deltas.append((c, sg))
        self.var_slots[x] = slots
        if self.source.lazy:
            self.tracker.register(x, [cd for cd in deltas if cd[1]])
        return x, slots

    def step(self, choice: tuple[int, int] | None = None) -> StepRecord | None:
        """Advance one time step; None when the current assignment is satisfying."""
        if self.stopped:
            raise ProcessStopped(f"process stopped at T={self.T}")
        unsat = self.tracker.unsat
        if not unsat:
            self._stop()
            return None
        k = self.k
        if choice is None:
            i = unsat.sample(self.rng)
            j = int(self.rng.integers(k))
        else:
            i, j = choice
            if not 0 <= i < self.m or i not in unsat:
                raise InvalidChoice(f"step {self.t + 1}: clause {i + 1} is not unsatisfied")
            if not 0 <= j < k:
                raise InvalidChoice(f"step {self.t + 1}: slot {j + 1} outside 1..{k}")

        t = self.t + 1
        in_z_prev = bool(self.in_z[i])
        fresh = self.slot_var[i * k + j] == 0
        boost: dict[int, int] = {}
        touched: list[int] = []
        if fresh:
            y, slots = self._reveal(i, j)
            self.label[y] = LABEL_A
            self.a_set.add(y)
            for c, _ in slots:
                self.cnt_a[c] += 1
                touched.append(c)
            self.active_slots[i] += 1
            if self.active_slots[i] == self.params.k2:
                self.active_count += 1
            k3 = self.params.k3
            for c, s in slots:
                if c != i or s != j:
                    self.passive_slots[c] += 1
                    if self.passive_slots[c] == k3:
                        self.passive_count += 1
            y_in_n_prev = False
        else:
            y = self.slot_var[i * k + j]
            y_in_n_prev = self.label[y] == LABEL_N
            if y_in_n_prev:
                for c, _ in self.var_slots[y]:
                    boost[c] = boost.get(c, 0) + 1
                    touched.append(c)

        made, broken = self.tracker.flip(y)

        n_before = len(self.n_set)
        new_n: list[int] = []
        added = self._close_z(touched, boost, new_n)

        # relabel: A_t = (A_{t-1} + {y}) - N_t
        for v in new_n:
            if v in self.a_set:
                self.a_set.discard(v)
                self.s_map.pop(v, None)
                for c, _ in self.var_slots[v]:
                    self.cnt_a[c] -= 1
        if y in self.a_set:
            self.s_map[y] = i

        if added:
            n_prev = self.n_set.difference(new_n)
            res = build_rich_assignment(
                {c: self.revealed_clause(c) for c in added}, added, n_prev, self.tau,
                match_size=self.params.match_size, rich_size=self.params.rich_size,
            )
            if self.check_rich and res.ok:
                self.rich_checked += 1
                self.rich_violations.extend(
                    _rich_problems(self, added, n_prev, self.tau, res.tau))
            if not res.ok:
                self.rich_ok = False
                self.rich_failures.append((t, res.reason or ""))
            self.tau = res.tau

        value = self.tracker.value
        if y_in_n_prev:
            if bool(value[y]) == self.tau[y]:
                self.h_prime -= 1
                self.mismatch -= 1
            else:
                self.h_prime += 1
                self.mismatch += 1
        for v in new_n:
            if bool(value[v]) != self.tau[v]:
                self.mismatch += 1
        assert len(self.n_set) == n_before + len(new_n)

        if fresh:
            self.s_prime -= 1
        if t <= self.params.t_star:
            self.r_pot = self.s_prime + self.h_prime
        else:
            self.r_pot -= 1

        self.t = t
        self.flip_history.append((i, j, y))
        if self.pi_history is not None:
            self.pi_history.append(self.pi_array())
        rec = StepRecord(
            t=t, i=i, j=j, var=y, fresh=fresh, in_z_prev=in_z_prev, var_in_n_prev=y_in_n_prev,
            made=made, broken=broken, d_size=self.d_size, s_pot=self.s_pot, h_pot=self.h_pot,
            s_prime=self.s_prime, h_prime=self.h_prime, r_pot=self.r_pot, u_count=self.u_count(),
            z_size=len(self.z_order), n_size=len(self.n_set), a_size=len(self.a_set),
            active_count=self.active_count, passive_count=self.passive_count, rich_ok=self.rich_ok,
            z_added=tuple(added),
        )
        if self.record_sets:
            rec = replace(rec, a_set=tuple(sorted(self.a_set)), n_set=tuple(sorted(self.n_set)),
                          z_set=tuple(sorted(self.z_order)))
        return rec

    def _close_z(self, touched: Iterable[int], boost: Mapping[int, int], new_n: list[int]) -> list[int]:
        """Grow ``Z`` and ``N`` to the fixed point; returns the added clauses in order."""
        k1, lam, k = self.params.k1, self.params.lam, self.k
        in_z, hidden_pos, cnt_a, cnt_n = self.in_z, self.hidden_pos, self.cnt_a, self.cnt_n

        def qualifies(c: int) -> bool:
            return (not in_z[c] and hidden_pos[c] == 0
                    and (cnt_a[c] + boost.get(c, 0) >= k1 or cnt_n[c] > lam))

        heap = sorted({c for c in touched if qualifies(c)})
        added: list[int] = []
        while heap:
            c = heapq.heappop(heap)
            if in_z[c] or not qualifies(c):
                continue
            in_z[c] = 1
            self.z_order.append(c)
            added.append(c)
            for j in range(k):
                v = self.slot_var[c * k + j]
                if v == 0:
                    v, slots = self._reveal(c, j)
                elif self.label[v] == LABEL_N:
                    continue
                else:
                    slots = self.var_slots[v]
                self.label[v] = LABEL_N
                self.n_set.add(v)
                new_n.append(v)
                for cl, _ in slots:
                    cnt_n[cl] += 1
                for cl, _ in slots:
                    if qualifies(cl):
                        heapq.heappush(heap, cl)
        return added

    def _stop(self) -> None:
        self.stopped = True
        self.T = self.t

    def finish(self) -> None:
        """Final stop check once the step budget is spent."""
        if not self.stopped and not self.tracker.unsat:
            self._stop()

    def materialize(self) -> Formula:
        if self.source.lazy:
            return self.source.materialize()
        return self.source.formula


def _rich_problems(proc: PiProcess, added: Sequence[int], n_prev: set[int],
                   tau_prev: Mapping[int, bool], tau: Mapping[int, bool]) -> list[str]:
    out = []
    need = proc.params.rich_size
    for c in added:
        got = rich_count(proc.revealed_clause(c), tau)
        if got < need:
            out.append(f"t={proc.t + 1}: clause {c} has {got} < {need} true occurrences")
    for x in n_prev:
        if tau.get(x) != tau_prev.get(x):
            out.append(f"t={proc.t + 1}: tau changed on old variable {x}")
    expected = set(n_prev)
    for c in added:
        expected.update(abs(l) for l in proc.revealed_clause(c))
    if set(tau) != expected:
        out.append(f"t={proc.t + 1}: tau domain differs from N_t")
    return out


# traces ---------------------------------------------------------------------


@dataclass(frozen=True)
class FinalState:
    a_set: frozenset[int]
    n_set: frozenset[int]
    z_order: tuple[int, ...]
    sigma: Assignment
    tau: Mapping[int, bool]
    rich_ok: bool
    rich_failures: tuple[tuple[int, str], ...]
    rich_violations: tuple[str, ...]
    rich_checked: int
    d_size: int
    formula: Formula | None = field(default=None, repr=False)


@dataclass(frozen=True)
class Trace:
    n: int
    m: int
    k: int
    params: ProcessParams
    seed: int
    mode: str
    cap: int
    d0: int
    T: int | None
    records: tuple[StepRecord, ...]
    final: FinalState

    @property
    def outcome(self) -> str:
        return "satisfied" if self.T is not None else "capped"

    def to_json(self) -> dict:
        from . import RNG_NAME, TRACE_SCHEMA

        return {
            "header": {
                "schema": TRACE_SCHEMA, "rng": RNG_NAME, "mode": self.mode,
                "n": self.n, "m": self.m, "k": self.k, "seed": self.seed,
                "params": self.params.to_json(), "cap": self.cap,
                "outcome": self.outcome, "T": self.T, "d0": self.d0,
                "rich_ok": self.final.rich_ok,
                "final": {
                    "a_set": sorted(self.final.a_set), "n_set": sorted(self.final.n_set),
                    "z_set": sorted(c + 1 for c in self.final.z_order),
                },
            },
            "records": [r.to_json() for r in self.records],
        }


def _drive(proc: PiProcess, cap: int, choices: Sequence[tuple[int, int]] | None,
           observer: Callable[[PiProcess, StepRecord], None] | None, seed: int, mode: str) -> Trace:
    records: list[StepRecord] = []
    while proc.t < cap:
        choice = None
        if choices is not None:
            if proc.t >= len(choices):
                break
            choice = choices[proc.t]
        rec = proc.step(choice)
        if rec is None:
            break
        records.append(rec)
        if observer is not None:
            observer(proc, rec)
    proc.finish()
    final = FinalState(
        frozenset(proc.a_set), frozenset(proc.n_set), tuple(proc.z_order), proc.sigma,
        dict(proc.tau), proc.rich_ok, tuple(proc.rich_failures), tuple(proc.rich_violations),
        proc.rich_checked, proc.d_size, proc.materialize() if mode == "eager" else None,
    )
    if proc.T is not None:
        bad = unsat_indices(final.formula, final.sigma) if final.formula is not None else []
        if bad:
            raise AssertionError(f"process stopped on an assignment violating clauses {bad[:5]}")
    return Trace(proc.n, proc.m, proc.k, proc.params, seed, mode, cap, proc.d0, proc.T,
                 tuple(records), final)


def run_instrumented(f: Formula, params: ProcessParams | None = None, seed: int = 0, *,
                     cap: int | None = None, choices: Sequence[tuple[int, int]] | None = None,
                     observer: Callable[[PiProcess, StepRecord], None] | None = None,
                     **kw) -> Trace:
    """Run the process on ``f`` until it stops or ``cap`` steps (default ``t_star``).

    ``choices`` replays fixed ``(clause, slot)`` picks (0-based) instead of
    sampling them; the run then also ends when the script runs out.
    """
    params = params or ProcessParams.for_instance(f.k, f.n)
    cap = params.t_star if cap is None else cap
    proc = PiProcess.eager(f, params, seed, **kw)
    return _drive(proc, cap, choices, observer, seed, "eager")


def run_lazy(n: int, m: int, k: int, params: ProcessParams | None = None, seed: int = 0, *,
             cap: int | None = None, occurrence_bias: float = 1.0, materialize: bool = False,
             observer: Callable[[PiProcess, StepRecord], None] | None = None, **kw) -> Trace:
    """Run the process while generating the formula on demand."""
    params = params or ProcessParams.for_instance(k, n)
    cap = params.t_star if cap is None else cap
    proc = PiProcess.lazy(n, m, k, params, seed, occurrence_bias, **kw)
    trace = _drive(proc, cap, None, observer, seed, "lazy")
    if materialize:
        formula = proc.materialize()
        trace = replace(trace, final=replace(trace.final, formula=formula))
        if trace.T is not None and unsat_indices(formula, trace.final.sigma):
            raise AssertionError("materialized formula is not satisfied by the final assignment")
    return trace


# definitional recomputations ---------------------------------------------------


def compute_D(proc: PiProcess, f: Formula) -> set[int]:
    """Clauses all of whose positive literals sit on ``A_t`` or ``N_t``."""
    s = proc.a_set | proc.n_set
    return {i for i, c in enumerate(f.clauses) if is_s_negative(c, s)}


def compute_H(proc: PiProcess) -> int:
    if not proc.rich_ok:
        return len(proc.n_set)
    sigma = proc.tracker.value
    return sum(1 for x in proc.n_set if bool(sigma[x]) != proc.tau[x])


def build_injection_s(proc: PiProcess, f: Formula) -> dict[int, int] | InjectionViolation:
    """Check the maintained map from ``A_t`` into satisfied clauses of ``D_t``.

    Each ``x`` must map to a distinct clause in ``D_t`` containing a literal
    on ``x`` that is true under the current assignment.
    """
    s = dict(proc.s_map)
    if set(s) != proc.a_set:
        return InjectionViolation(f"domain {sorted(s)} != A_t {sorted(proc.a_set)}")
    if len(set(s.values())) != len(s):
        return InjectionViolation("map is not injective")
    d = compute_D(proc, f)
    sigma = proc.sigma
    for x, c in s.items():
        if c not in d:
            return InjectionViolation(f"clause {c} for x{x} is not in D_t")
        if not any(abs(l) == x and sigma.literal_true(l) for l in f.clauses[c]):
            return InjectionViolation(f"x{x} contributes no true literal to clause {c}")
    return s


def classify_active_passive(flip_history: Sequence[tuple[int, int, int]],
                            pi_history: Sequence[np.ndarray], t: int, k2: int, k3: int) -> tuple[int, int]:
    """Count t-active and t-passive clauses from the recorded history.

    ``pi_history[s]`` is the ``(m, k)`` array of revealed variables after step
    ``s`` (0 where only the sign is known).
    """
    if t == 0:
        return 0, 0
    m, k = pi_history[0].shape
    active = np.zeros((m, k), dtype=bool)
    passive = np.zeros((m, k), dtype=bool)
    for s in range(1, t + 1):
        i_s, j_s, y = flip_history[s - 1]
        before, after = pi_history[s - 1], pi_history[s]
        if before[i_s, j_s] == 0:
            active[i_s, j_s] = True
        hit = (before == 0) & (after == y)
        hit[i_s, j_s] = False
        passive |= hit
    return int((active.sum(axis=1) >= k2).sum()), int((passive.sum(axis=1) >= k3).sum())


def y_closure(proc: PiProcess, fg: FactorGraph) -> set[int]:
    """Active/passive clauses closed under ``lam``-slot overlap with their neighbourhood."""
    p = proc.params
    seeds = {c for c in range(proc.m) if proc.active_slots[c] >= p.k2 or proc.passive_slots[c] >= p.k3}
    return closure_Y(fg, seeds, p.lam)


def audit(proc: PiProcess, f: Formula, prev_r: int | None = None) -> list[str]:
    """List every invariant the current state violates (empty when all hold)."""
    problems: list[str] = []
    k = proc.k
    t = proc.t
    sigma = proc.sigma

    flips = np.zeros(proc.n + 1, dtype=np.int64)
    for _, _, x in proc.flip_history:
        flips[x] += 1
    if not np.array_equal(sigma.values[1:], flips[1:] % 2 == 0):
        problems.append("parity")

    known = proc.a_set | proc.n_set
    if proc.a_set & proc.n_set:
        problems.append("A and N intersect")
    vars_ = np.abs(f.lits)
    pi = proc.pi_array()
    in_known = np.isin(vars_, list(known)) if known else np.zeros_like(vars_, dtype=bool)
    if not np.array_equal(pi != 0, in_known) or not np.array_equal(pi[pi != 0], vars_[pi != 0]):
        problems.append("reveal")
    for c in proc.z_order:
        if (pi[c] == 0).any():
            problems.append("z-row")
            break
    nz = set()
    for c in proc.z_order:
        nz.update(vars_[c].tolist())
    if nz != proc.n_set:
        problems.append("N != vars(Z)")

    d = compute_D(proc, f)
    if len(d) != proc.d_size:
        problems.append("D size")
    unsat = unsat_indices(f, sigma)
    if set(unsat) != set(proc.tracker.unsat):
        problems.append("tracker")
    if not set(unsat) <= d:
        problems.append("unsat outside D")
    u = sum(1 for c in unsat if not proc.in_z[c])
    s_pot = proc.s_pot
    z = len(proc.z_order)
    if u > s_pot:
        problems.append("U<=S")
    if s_pot > proc.d_size + k * z + proc.s_prime:
        problems.append("S<=|D|+k|Z|+S'")
    h = proc.h_pot
    if h != compute_H(proc):
        problems.append("H recount")
    if h > k * z + proc.h_prime:
        problems.append("H<=k|Z|+H'" + ("" if proc.rich_ok else " (fallback)"))
    if prev_r is not None and abs(proc.r_pot - prev_r) > 2:
        problems.append("|dR|<=2")
    if t <= proc.params.t_star and s_pot + h == 0 and unsat:
        problems.append("S+H=0 but unsatisfied")
    inj = build_injection_s(proc, f)
    if isinstance(inj, InjectionViolation):
        problems.append("injection: " + inj.reason)
    return problems
