"""Independent reference computations shared by the tests."""

import itertools
from fractions import Fraction

from walksat_lab.formula import Formula


def _unsat(clauses, bits):
    return [i for i, c in enumerate(clauses) if not any((lit > 0) == bits[abs(lit) - 1] for lit in c)]


def walksat_success_exact(f: Formula, t_max: int, start=None) -> Fraction:
    """P(Walksat satisfies ``f`` within ``t_max`` flips) by propagating the exact chain law.

    States are assignments of ``x1..xn``; a satisfied state is absorbing.
    """
    clauses = f.clauses
    start = tuple(start) if start is not None else (True,) * f.n
    dist = {start: Fraction(1)}
    done = Fraction(0)
    for _ in range(t_max + 1):
        nxt: dict = {}
        for bits, p in dist.items():
            bad = _unsat(clauses, bits)
            if not bad:
                done += p
                continue
            w = p / (len(bad) * f.k)
            for i in bad:
                for lit in clauses[i]:
                    x = abs(lit) - 1
                    new = bits[:x] + (not bits[x],) + bits[x + 1:]
                    nxt[new] = nxt.get(new, 0) + w
        dist = nxt
    return done


def walksat_success_random_start(f: Formula, t_max: int) -> Fraction:
    starts = list(itertools.product([False, True], repeat=f.n))
    return sum(walksat_success_exact(f, t_max, s) for s in starts) / len(starts)


def l_fold_matching_brute(clause_vars: dict, z, l: int) -> bool:
    """Search every way of giving each clause in ``z`` ``l`` distinct private variables."""
    z = sorted(z)

    def go(idx, used):
        if idx == len(z):
            return True
        options = sorted(clause_vars[z[idx]] - used)
        for pick in itertools.combinations(options, l):
            if go(idx + 1, used | set(pick)):
                return True
        return False

    return go(0, frozenset())


def naive_process(f: Formula, k1: int, lam: int, choices):
    """Replay the process by brute force, rescanning every clause after each addition.

    Returns per step ``(fresh, A_t, N_t, Z_t in order of addition)``.
    """
    clauses = f.clauses
    a, nset, z = set(), set(), []
    out = []
    for i, j in choices:
        y = abs(clauses[i][j])
        fresh = y not in a and y not in nset
        b = a | {y}
        while True:
            s = a | nset | {y}
            cands = [
                c for c, cl in enumerate(clauses)
                if c not in z
                and all(abs(l) in s for l in cl if l > 0)
                and (sum(abs(l) in b for l in cl) >= k1 or sum(abs(l) in nset for l in cl) > lam)
            ]
            if not cands:
                break
            c = min(cands)
            z.append(c)
            nset |= {abs(l) for l in clauses[c]}
        a = b - nset
        out.append((fresh, set(a), set(nset), list(z)))
    return out


TINY_FORMULA = Formula.from_clauses(3, [(-1, -2, -3), (1, -2, 3), (-1, 2, -3), (2, 3, -1)])
