import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from walksat_lab import derive_seed, make_rng
from walksat_lab.formula import (
    Assignment,
    DimacsError,
    Formula,
    Literal,
    count_all_negative,
    generate_uniform,
    is_s_negative,
    parse_dimacs,
    unsat_indices,
    write_dimacs,
)


@st.composite
def formulas(draw, max_n=6, max_m=8, max_k=4):
    n = draw(st.integers(1, max_n))
    k = draw(st.integers(1, max_k))
    m = draw(st.integers(0, max_m))
    lit = st.integers(1, n).flatmap(lambda v: st.sampled_from([v, -v]))
    clauses = draw(st.lists(st.lists(lit, min_size=k, max_size=k), min_size=m, max_size=m))
    return Formula.from_clauses(n, clauses, k=k)


def test_literal_roundtrip():
    assert Literal.from_int(-3) == Literal(3, -1)
    assert Literal.from_int(4).to_int() == 4
    assert str(Literal(2, -1)) == "~x2"
    with pytest.raises(ValueError):
        Literal.from_int(0)


def test_formula_validation():
    with pytest.raises(ValueError):
        Formula.from_clauses(2, [(1, 3)])
    with pytest.raises(ValueError):
        Formula.from_clauses(3, [(1, 2), (1, 2, 3)])
    f = Formula.from_clauses(3, [(1, -1, 2)])
    assert f.clauses == ((1, -1, 2),)
    assert f.m == 1 and f.k == 3
    with pytest.raises(ValueError):
        f.lits[0, 0] = 2


def test_generate_example_shape():
    f = generate_uniform(10, 6, 5, seed=1)
    assert (f.n, f.m, f.k) == (10, 6, 5)
    assert np.abs(f.lits).max() <= 10


def test_generate_deterministic():
    a = generate_uniform(5, 4, 3, seed=99)
    b = generate_uniform(5, 4, 3, seed=99)
    assert write_dimacs(a) == write_dimacs(b)
    assert a != generate_uniform(5, 4, 3, seed=100)


def test_generate_rejects_bad_dimensions():
    with pytest.raises(ValueError):
        generate_uniform(0, 3, 3, 0)
    with pytest.raises(ValueError):
        generate_uniform(3, 3, 0, 0)
    with pytest.raises(ValueError):
        generate_uniform(3, -1, 3, 0)
    assert generate_uniform(3, 0, 3, 0).m == 0


def test_single_literal_two_point():
    hits = sum(generate_uniform(1, 1, 1, derive_seed(5, t)).lits[0, 0] == 1 for t in range(4000))
    # binomial(4000, 1/2): sd ~ 31.6
    assert abs(hits - 2000) < 5 * 31.7


def test_slot_marginals_uniform():
    n, draws = 4, 20000
    f = generate_uniform(n, draws, 1, seed=11)
    vals, counts = np.unique(f.lits[:, 0], return_counts=True)
    assert sorted(vals.tolist()) == [-4, -3, -2, -1, 1, 2, 3, 4]
    p = 1 / (2 * n)
    se = np.sqrt(draws * p * (1 - p))
    assert np.all(np.abs(counts - draws * p) < 5 * se)


def test_count_all_negative_examples():
    f = Formula.from_clauses(2, [(-1, -2), (1, -2)])
    assert count_all_negative(f) == 1
    assert count_all_negative(Formula.from_clauses(2, [], k=2)) == 0


def test_all_negative_mean_matches_binomial():
    counts = [count_all_negative(generate_uniform(200, 1000, 5, derive_seed(3, t))) for t in range(300)]
    mean = np.mean(counts)
    se = np.sqrt(1000 * 2**-5 * (1 - 2**-5) / 300)
    assert abs(mean - 31.25) < 4 * se


def test_unsat_indices_examples():
    f = Formula.from_clauses(2, [(1, 2), (-1, -2)])
    assert unsat_indices(f, Assignment.all_true(2)) == [1]
    assert unsat_indices(f, Assignment.from_sequence([True, False])) == []


def _brute_unsat(f, a):
    return [i for i, c in enumerate(f.clauses) if not any((lit > 0) == a[abs(lit)] for lit in c)]


@settings(max_examples=200, deadline=None)
@given(formulas(), st.data())
def test_unsat_indices_matches_brute_force(f, data):
    bits = data.draw(st.lists(st.booleans(), min_size=f.n, max_size=f.n))
    a = Assignment.from_sequence(bits)
    assert unsat_indices(f, a) == _brute_unsat(f, a)


def test_unsat_indices_all_assignments_n3():
    for s in range(20):
        f = generate_uniform(3, 7, 3, seed=s)
        for bits in itertools.product([False, True], repeat=3):
            a = Assignment.from_sequence(bits)
            assert unsat_indices(f, a) == _brute_unsat(f, a)


@settings(max_examples=200, deadline=None)
@given(formulas())
def test_all_negative_equals_unsat_under_all_true(f):
    assert count_all_negative(f) == len(unsat_indices(f, Assignment.all_true(f.n)))


def test_is_s_negative_examples():
    assert is_s_negative((-1, -2, -3), set())
    assert is_s_negative((1, -2, -3), {1})
    assert not is_s_negative((1, -2, -3), set())


def test_is_s_negative_quantifier_oracle():
    rng = make_rng(17)
    for _ in range(10_000):
        k = int(rng.integers(1, 6))
        clause = tuple(int(v) * int(s) for v, s in zip(rng.integers(1, 7, k), rng.choice([-1, 1], k)))
        s = {int(x) for x in rng.integers(1, 7, int(rng.integers(0, 6)))}
        expected = True
        for lit in clause:
            if lit > 0 and lit not in s:
                expected = False
        assert is_s_negative(clause, s) == expected


def test_parse_simple():
    f = parse_dimacs(b"p cnf 2 1\n1 -2 0\n")
    assert (f.n, f.m, f.k) == (2, 1, 2)
    assert f.clauses == ((1, -2),)


def test_parse_keeps_duplicates():
    f = parse_dimacs(b"p cnf 1 2\n1 1 0\n1 1 0\n")
    assert f.clauses == ((1, 1), (1, 1))


def test_width_comment_and_multiline_clause():
    f = parse_dimacs("c k 3\np cnf 3 1\n1 -2\n3 0\n")
    assert f.clauses == ((1, -2, 3),)


@pytest.mark.parametrize("text, msg", [
    ("p cnf x 1\n1 0\n", "header"),
    ("p dnf 2 1\n1 0\n", "header"),
    ("1 2 0\n", "before"),
    ("p cnf 2 1\n1 3 0\n", "out of range"),
    ("p cnf 2 2\n1 2 0\n", "declares"),
    ("p cnf 3 2\n1 2 0\n1 2 3 0\n", "width"),
    ("c k 3\np cnf 3 1\n1 2 0\n", "width"),
    ("p cnf 2 1\n1 2\n", "terminated"),
    ("", "missing"),
])
def test_parse_errors(text, msg):
    with pytest.raises(DimacsError, match=msg):
        parse_dimacs(text)


def test_write_fixture_roundtrip():
    text = b"c k 3\np cnf 4 3\n1 -2 3 0\n-4 -4 1 0\n1 -2 3 0\n"
    assert write_dimacs(parse_dimacs(text)) == text
    messy = b"c hello\np  cnf 4 3\n 1 -2  3 0 -4\n-4 1 0\n1 -2 3 0\n"
    assert write_dimacs(parse_dimacs(messy)) == text


@settings(max_examples=200, deadline=None)
@given(formulas())
def test_roundtrip_property(f):
    g = parse_dimacs(write_dimacs(f))
    assert g == f
    assert g.clauses == f.clauses


def test_occurrences_index():
    f = Formula.from_clauses(3, [(1, -2, 1), (2, 3, -1)])
    assert f.occurrences(1) == [(0, 0), (0, 2), (1, 2)]
    assert f.occurrences(3) == [(1, 1)]


def test_assignment_helpers():
    a = Assignment.all_true(3)
    b = a.flipped(2)
    assert b[2] is False and a[2] is True
    assert b.literal_true(-2) and not b.literal_true(2)
    with pytest.raises(IndexError):
        a[4]
