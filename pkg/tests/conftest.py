import numpy as np
import pytest

from maxsat_gnn.cnf import EXAMPLE_FORMULA, CnfFormula
from maxsat_gnn.generator import GenSpec, generate_dataset
from maxsat_gnn.solver import label_dataset

EXAMPLE_TEXT = "p cnf 3 3\n1 2 3 0\n1 -3 0\n-1 -2 -3 0\n"


@pytest.fixture
def example() -> CnfFormula:
    return EXAMPLE_FORMULA


@pytest.fixture
def example_file(tmp_path):
    path = tmp_path / "example.cnf"
    path.write_text(EXAMPLE_TEXT)
    return path


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """16 labeled R2(10, 40) instances (train 14, val 1, test 1)."""
    root = tmp_path_factory.mktemp("toy")
    manifest = generate_dataset(GenSpec(2, 10, 40, 11), 16, root)
    label_dataset(manifest)
    return root


def random_formula(rng: np.random.Generator, n: int, m: int, k_max: int = 3) -> CnfFormula:
    clauses = []
    for _ in range(m):
        k = int(rng.integers(1, min(k_max, n) + 1))
        vs = rng.choice(np.arange(1, n + 1), size=k, replace=False)
        signs = rng.integers(0, 2, size=k)
        clauses.append(tuple(int(v) if s else -int(v) for v, s in zip(vs, signs)))
    return CnfFormula(n, tuple(clauses))
