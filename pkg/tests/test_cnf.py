import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxsat_gnn.cnf import (
    CnfFormula, DimacsError, FormulaError, Literal, eval_assignment, parse_dimacs, read_dimacs,
    write_dimacs,
)

from conftest import EXAMPLE_TEXT, random_formula


class TestParse:
    def test_two_clauses(self):
        f = parse_dimacs("p cnf 3 2\n1 -3 0\n-2 3 0\n")
        assert f.num_vars == 3
        assert f.clauses == ((1, -3), (-2, 3))

    def test_unit(self):
        f = parse_dimacs("p cnf 1 1\n1 0\n")
        assert f.num_vars == 1 and f.clauses == ((1,),)

    def test_comments_and_stream(self):
        f = parse_dimacs(io.StringIO("c hello\np cnf 2 2\nc between\n1 2 0\n-1 0\n"))
        assert f.clauses == ((1, 2), (-1,))

    def test_clause_split_across_lines(self):
        assert parse_dimacs("p cnf 3 1\n1 2\n3 0\n").clauses == ((1, 2, 3),)

    @pytest.mark.parametrize("text, fragment", [
        ("p cnf 2 1\n1 -1 0\n", "repeats a variable"),
        ("1 2 0\n", "before problem line"),
        ("p cnf 2 1\np cnf 2 1\n1 0\n", "duplicate problem line"),
        ("p cnf 2 1\n0\n", "empty"),
        ("p cnf 2 1\n3 0\n", "variable"),
        ("p cnf 2 2\n1 0\n", "declares 2 clauses, found 1"),
        ("p cnf 2 1\n1 0\n2 0\n", "declares 1 clauses, found 2"),
        ("p cnf 2 1\n1 x 0\n", "not an integer"),
    ])
    def test_errors(self, text, fragment):
        with pytest.raises(DimacsError, match=fragment):
            parse_dimacs(text)

    def test_error_carries_line(self):
        with pytest.raises(DimacsError) as info:
            parse_dimacs("p cnf 2 1\nc\n2 -2 0\n")
        assert info.value.line == 3


class TestWrite:
    def test_unit(self):
        assert write_dimacs(CnfFormula(1, ((1,),))) == "p cnf 1 1\n1 0\n"

    def test_example(self, example):
        assert write_dimacs(example) == EXAMPLE_TEXT

    def test_file_roundtrip(self, example, example_file):
        assert read_dimacs(example_file) == example

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 30), st.integers(0, 2**32 - 1))
    def test_roundtrip_property(self, n, m, seed):
        f = random_formula(np.random.default_rng(seed), n, m)
        assert parse_dimacs(write_dimacs(f)) == f


class TestFormula:
    def test_rejects_repeated_variable(self):
        with pytest.raises(FormulaError):
            CnfFormula(2, ((1, 1),))
        with pytest.raises(FormulaError):
            CnfFormula(2, ((2, -2),))

    def test_rejects_out_of_range(self):
        with pytest.raises(FormulaError):
            CnfFormula(2, ((3,),))

    def test_duplicate_clauses_allowed(self):
        f = CnfFormula(1, ((1,), (1,)))
        assert eval_assignment(f, [True]).satisfied == 2

    def test_literal_view(self):
        lit = Literal.from_int(-3)
        assert lit.var == 3 and not lit.positive
        assert (-lit).to_int() == 3
        assert [x.to_int() for x in CnfFormula(3, ((1, -3),)).literals(0)] == [1, -3]

    def test_counts(self, example):
        assert example.num_clauses == 3
        assert example.widths == (3, 2, 3)
        assert example.num_literal_occurrences == 8


class TestEval:
    def test_example(self, example):
        assert eval_assignment(example, (True, False, False)).satisfied == 3
        res = eval_assignment(example, (True, True, True))
        assert (res.satisfied, res.total) == (2, 3)

    def test_complementary_units(self):
        f = CnfFormula(1, ((1,), (-1,)))
        for a in (True, False):
            assert eval_assignment(f, [a]).satisfied == 1

    def test_length_mismatch(self, example):
        with pytest.raises(ValueError):
            eval_assignment(example, (True,))

    def test_bounds_and_clause_deletion(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            n, m = int(rng.integers(1, 8)), int(rng.integers(1, 12))
            f = random_formula(rng, n, m)
            a = rng.integers(0, 2, n).astype(bool)
            s = eval_assignment(f, a).satisfied
            assert 0 <= s <= m
            if m > 1:
                j = int(rng.integers(m))
                g = CnfFormula(n, f.clauses[:j] + f.clauses[j + 1:])
                assert s - 1 <= eval_assignment(g, a).satisfied <= s
