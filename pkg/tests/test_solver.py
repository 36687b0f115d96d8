from itertools import product

import numpy as np
import pytest

from maxsat_gnn.cnf import CnfFormula, eval_assignment
from maxsat_gnn.dla import run_dla
from maxsat_gnn.generator import GenSpec, generate_dataset, generate_instance
from maxsat_gnn.solver import (
    LabelRecord, SolverGuardError, label_dataset, load_labels, solve_branch_bound, solve_exhaustive,
)

from conftest import random_formula


def brute_force(formula: CnfFormula):
    """Plain enumeration in lexicographic order (False before True, x1 first)."""
    best, witness = -1, None
    for a in product((False, True), repeat=formula.num_vars):
        s = eval_assignment(formula, a).satisfied
        if s > best:
            best, witness = s, a
    return best, witness


class TestExhaustive:
    def test_example(self, example):
        res = solve_exhaustive(example)
        assert res.optimum == 3
        assert res.witness == (False, True, False)

    def test_small_cases(self):
        assert solve_exhaustive(CnfFormula(1, ((1,), (-1,)))).optimum == 1
        res = solve_exhaustive(CnfFormula(1, ((1,),)))
        assert (res.optimum, res.witness) == (1, (True,))

    def test_guard(self):
        with pytest.raises(SolverGuardError):
            solve_exhaustive(CnfFormula(27, ((27,),)))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(150):
            f = random_formula(rng, int(rng.integers(1, 9)), int(rng.integers(1, 25)))
            res = solve_exhaustive(f)
            assert (res.optimum, res.witness) == brute_force(f)

    def test_chunked_enumeration(self):
        f = generate_instance(GenSpec(2, 10, 50, 3))
        assert solve_exhaustive(f, chunk_bits=4) == solve_exhaustive(f)


class TestBranchBound:
    def test_example(self, example):
        res = solve_branch_bound(example)
        assert res.optimum == 3
        assert eval_assignment(example, res.witness).satisfied == 3

    def test_all_true_satisfiable(self):
        f = CnfFormula(4, ((1, 2), (3,), (4, -1), (2, 3, 4)))
        assert solve_branch_bound(f).optimum == 4

    def test_equivalence_with_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            k = int(rng.integers(1, 4))
            n = int(rng.integers(k, 11))
            f = generate_instance(GenSpec(k, n, int(rng.integers(1, 6 * n)), int(rng.integers(2**63))))
            a, b = solve_exhaustive(f), solve_branch_bound(f)
            assert a.optimum == b.optimum
            assert a.witness == b.witness
            assert b.optimum >= eval_assignment(f, run_dla(f)).satisfied

    def test_warm_start_does_not_change_result(self):
        f = generate_instance(GenSpec(2, 20, 120, 5))
        cold, warm = solve_branch_bound(f, warm_start=False), solve_branch_bound(f)
        assert (cold.optimum, cold.witness) == (warm.optimum, warm.witness)


class TestLabels:
    def test_record_roundtrip(self):
        rec = LabelRecord("inst_00000.cnf", 17, (True, False, True))
        assert rec.line() == "inst_00000.cnf 17 101"
        assert LabelRecord.parse(rec.line()) == rec

    def test_label_dataset(self, tmp_path):
        manifest = generate_dataset(GenSpec(2, 8, 30, 2), 10, tmp_path)
        path = label_dataset(manifest)
        first = path.read_bytes()
        labels = load_labels(tmp_path)
        assert len(labels) == 10
        for entry in manifest.entries:
            rec = labels[entry.path]
            f = generate_instance(GenSpec(2, 8, 30, entry.seed))
            assert eval_assignment(f, rec.witness).satisfied == rec.optimum
            assert rec.optimum == solve_exhaustive(f).optimum
        label_dataset(tmp_path)
        assert path.read_bytes() == first
