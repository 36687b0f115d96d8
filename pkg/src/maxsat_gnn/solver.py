"""Exact MaxSAT: an exhaustive reference oracle and a branch-and-bound solver.

Both report the same witness on ties: the lexicographically smallest optimal
assignment, reading x1 first and False < True.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .cnf import CnfFormula, eval_assignment, read_dimacs
from .generator import DatasetManifest, load_manifest

MAX_EXHAUSTIVE_VARS = 26
LABELS_NAME = "labels.txt"


class SolverGuardError(ValueError):
    """The formula is too large for the requested solver."""


@dataclass(frozen=True)
class OptResult:
    optimum: int
    witness: tuple[bool, ...]
    nodes_explored: int


def solve_exhaustive(formula: CnfFormula, chunk_bits: int = 18) -> OptResult:
    """Enumerate all 2**n assignments in increasing binary order (x1 most significant)."""
    n = formula.num_vars
    if n > MAX_EXHAUSTIVE_VARS:
        raise SolverGuardError(f"exhaustive search limited to n <= {MAX_EXHAUSTIVE_VARS}, got n={n}")
    shifts = np.array([n - 1 - i for i in range(n)], dtype=np.int64)
    pos_masks = np.zeros(formula.num_clauses, dtype=np.int64)
    neg_masks = np.zeros(formula.num_clauses, dtype=np.int64)
    for j, clause in enumerate(formula.clauses):
        for lit in clause:
            bit = 1 << int(shifts[abs(lit) - 1])
            if lit > 0:
                pos_masks[j] |= bit
            else:
                neg_masks[j] |= bit
    full = (1 << n) - 1
    chunk = 1 << min(chunk_bits, n)
    best, best_a = -1, 0
    for start in range(0, 1 << n, chunk):
        a = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        counts = np.zeros(a.shape, dtype=np.int64)
        for pm, nm in zip(pos_masks, neg_masks):
            counts += ((a & pm) != 0) | (((~a) & full & nm) != 0)
        i = int(np.argmax(counts))
        if counts[i] > best:
            best, best_a = int(counts[i]), int(a[i])
    witness = tuple(bool((best_a >> int(s)) & 1) for s in shifts)
    return OptResult(best, witness, 1 << n)


def _occurrence_arrays(formula: CnfFormula):
    n, m = formula.num_vars, formula.num_clauses
    widths = np.array(formula.widths, dtype=np.int64)
    occ: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for j, clause in enumerate(formula.clauses):
        for lit in clause:
            occ[abs(lit) - 1].append((j, 1 if lit > 0 else 0))
    occ_start = np.zeros(n + 1, dtype=np.int64)
    for v in range(n):
        occ_start[v + 1] = occ_start[v] + len(occ[v])
    flat = [p for lst in occ for p in lst]
    occ_clause = np.array([p[0] for p in flat], dtype=np.int64).reshape(-1)
    occ_pos = np.array([p[1] for p in flat], dtype=np.int8).reshape(-1)
    return n, m, widths, occ_start, occ_clause, occ_pos


@numba.njit(cache=True)
def _dfs(n, m, widths, occ_start, occ_clause, occ_pos, order, first_value, best, strict, stop_at_first):
    """Depth-first search over ``order``.

    Prunes a node when ``m - falsified <= best`` (``strict``) or ``< best``.
    Returns (best value found, its assignment, nodes, found flag).
    """
    n_true = np.zeros(m, dtype=np.int64)
    n_false = np.zeros(m, dtype=np.int64)
    assign = np.full(n, -1, dtype=np.int8)
    best_assign = np.zeros(n, dtype=np.int8)
    tried = np.zeros(n + 1, dtype=np.int8)
    falsified = 0
    nodes = 0
    found = False
    depth = 0
    while depth >= 0:
        if depth == n:
            value = m - falsified
            best = value
            best_assign[:] = assign
            found = True
            if stop_at_first:
                break
            depth -= 1
            continue
        v = order[depth]
        if tried[depth] > 0:
            val = assign[v]
            for t in range(occ_start[v], occ_start[v + 1]):
                c = occ_clause[t]
                if occ_pos[t] == val:
                    n_true[c] -= 1
                    if n_true[c] == 0 and n_false[c] == widths[c]:
                        falsified += 1
                else:
                    if n_true[c] == 0 and n_false[c] == widths[c]:
                        falsified -= 1
                    n_false[c] -= 1
            assign[v] = -1
        if tried[depth] == 2:
            tried[depth] = 0
            depth -= 1
            continue
        val = first_value[v] if tried[depth] == 0 else 1 - first_value[v]
        tried[depth] += 1
        assign[v] = val
        nodes += 1
        for t in range(occ_start[v], occ_start[v + 1]):
            c = occ_clause[t]
            if occ_pos[t] == val:
                if n_true[c] == 0 and n_false[c] == widths[c]:
                    falsified -= 1
                n_true[c] += 1
            else:
                n_false[c] += 1
                if n_true[c] == 0 and n_false[c] == widths[c]:
                    falsified += 1
        bound = m - falsified
        if bound < best or (strict and bound == best):
            continue
        depth += 1
    return best, best_assign, nodes, found


@numba.njit(cache=True)
def _local_search(n, m, widths, occ_start, occ_clause, occ_pos, assign):
    """Best-improvement single-flip hill climbing; returns (value, assignment)."""
    n_true = np.zeros(m, dtype=np.int64)
    for v in range(n):
        for t in range(occ_start[v], occ_start[v + 1]):
            if occ_pos[t] == assign[v]:
                n_true[occ_clause[t]] += 1
    while True:
        best_gain, best_v = 0, -1
        for v in range(n):
            gain = 0
            for t in range(occ_start[v], occ_start[v + 1]):
                c = occ_clause[t]
                if occ_pos[t] == assign[v]:
                    if n_true[c] == 1:
                        gain -= 1
                elif n_true[c] == 0:
                    gain += 1
            if gain > best_gain:
                best_gain, best_v = gain, v
        if best_v < 0:
            break
        v = best_v
        for t in range(occ_start[v], occ_start[v + 1]):
            if occ_pos[t] == assign[v]:
                n_true[occ_clause[t]] -= 1
            else:
                n_true[occ_clause[t]] += 1
        assign[v] = 1 - assign[v]
    return m - np.sum(n_true == 0), assign


def solve_branch_bound(formula: CnfFormula, warm_start: bool = True) -> OptResult:
    """Exact optimum by depth-first branch and bound.

    Variables are branched in descending occurrence count, True first. A node
    is pruned when (clauses not yet falsified) <= incumbent. With
    ``warm_start`` the incumbent starts at a hill-climbed assignment's value,
    which only tightens pruning. A second search in x1..xn order, False
    first, then recovers the lexicographically smallest optimal assignment.
    """
    n, m, widths, occ_start, occ_clause, occ_pos = _occurrence_arrays(formula)
    occurrences = np.diff(occ_start)
    order = np.array(sorted(range(n), key=lambda v: (-occurrences[v], v)), dtype=np.int64)
    incumbent = -1
    if warm_start:
        pos_count = np.zeros(n, dtype=np.int64)
        np.add.at(pos_count, np.abs(_lits_of(formula)) - 1, _lits_of(formula) > 0)
        start = (2 * pos_count >= occurrences).astype(np.int8)
        incumbent, _ = _local_search(n, m, widths, occ_start, occ_clause, occ_pos, start)
        incumbent = int(incumbent)
    ones = np.ones(n, dtype=np.int8)
    best, _, nodes1, _ = _dfs(n, m, widths, occ_start, occ_clause, occ_pos, order, ones, incumbent, True, False)
    optimum = int(best)
    zeros = np.zeros(n, dtype=np.int8)
    natural = np.arange(n, dtype=np.int64)
    value, witness, nodes2, found = _dfs(
        n, m, widths, occ_start, occ_clause, occ_pos, natural, zeros, optimum, False, True
    )
    assert found and value == optimum
    return OptResult(optimum, tuple(bool(b) for b in witness), int(nodes1 + nodes2))


def _lits_of(formula: CnfFormula) -> np.ndarray:
    return np.array([l for c in formula.clauses for l in c], dtype=np.int64)


@dataclass(frozen=True)
class LabelRecord:
    path: str
    optimum: int
    witness: tuple[bool, ...]

    def line(self) -> str:
        bits = "".join("1" if b else "0" for b in self.witness)
        return f"{self.path} {self.optimum} {bits}"

    @classmethod
    def parse(cls, line: str) -> "LabelRecord":
        path, optimum, bits = line.split()
        if set(bits) - {"0", "1"}:
            raise ValueError(f"bad witness bitstring {bits!r}")
        return cls(path, int(optimum), tuple(b == "1" for b in bits))


def label_formula(formula: CnfFormula, path: str = "") -> LabelRecord:
    result = solve_branch_bound(formula)
    record = LabelRecord(path, result.optimum, result.witness)
    if eval_assignment(formula, record.witness).satisfied != record.optimum:
        raise AssertionError(f"{path}: witness does not attain the reported optimum")
    return record


def label_dataset(manifest: DatasetManifest | str | Path) -> Path:
    """Solve every instance of a dataset; write ``labels.txt`` next to the manifest."""
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    lines = []
    for entry in manifest.entries:
        formula = read_dimacs(manifest.instance_path(entry))
        lines.append(label_formula(formula, entry.path).line())
    out = manifest.root / LABELS_NAME
    out.write_text("\n".join(lines) + "\n", encoding="ascii")
    return out


def load_labels(path) -> dict[str, LabelRecord]:
    """Read a label file (or the one inside a dataset directory) keyed by instance path."""
    path = Path(path)
    if path.is_dir():
        path = path / LABELS_NAME
    records = {}
    with open(path, encoding="ascii") as f:
        for line in f:
            if line.strip():
                rec = LabelRecord.parse(line)
                records[rec.path] = rec
    return records
