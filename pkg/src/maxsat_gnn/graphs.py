"""Bipartite factor graphs of CNF formulas and their disjoint-union batches.

NSFG: one node per literal and one per clause. Literal node ``2i`` is x(i+1)
and ``2i + 1`` is ¬x(i+1). ESFG: one node per variable and one per clause,
with positive and negative occurrences kept as separate edge sets.

Edges are kept in canonical order (clause by clause, literals in clause
order). Adjacency is stored as CSR matrices with clauses as rows, together
with their transposes, so aggregation in either direction is one sparse
product with a fixed summation order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .cnf import CnfFormula


def literal_node(lit: int) -> int:
    return 2 * (abs(lit) - 1) + (0 if lit > 0 else 1)


def _adjacency(rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    data = np.ones(len(rows), dtype=np.float32)
    m = sp.csr_matrix((data, (rows, cols)), shape=shape)
    m.sort_indices()
    mt = m.T.tocsr()
    mt.sort_indices()
    return m, mt


@dataclass(frozen=True, eq=False)
class Nsfg:
    num_vars: int
    num_clauses: int
    edge_lit: np.ndarray     # literal node per edge
    edge_clause: np.ndarray  # clause node per edge
    flip: np.ndarray         # literal node -> node of its negation
    adj: sp.csr_matrix       # clauses x literals
    adj_t: sp.csr_matrix     # literals x clauses

    kind = "nsfg"

    @property
    def num_literal_nodes(self) -> int:
        return 2 * self.num_vars

    @property
    def num_nodes(self) -> int:
        return self.num_literal_nodes + self.num_clauses

    @property
    def num_edges(self) -> int:
        return len(self.edge_lit)

    def clause_degrees(self) -> np.ndarray:
        return np.diff(self.adj.indptr)


@dataclass(frozen=True, eq=False)
class Esfg:
    num_vars: int
    num_clauses: int
    pos_var: np.ndarray
    pos_clause: np.ndarray
    neg_var: np.ndarray
    neg_clause: np.ndarray
    adj_pos: sp.csr_matrix    # clauses x variables
    adj_pos_t: sp.csr_matrix
    adj_neg: sp.csr_matrix
    adj_neg_t: sp.csr_matrix

    kind = "esfg"

    @property
    def num_variable_nodes(self) -> int:
        return self.num_vars

    @property
    def num_nodes(self) -> int:
        return self.num_vars + self.num_clauses

    @property
    def num_edges(self) -> int:
        return len(self.pos_var) + len(self.neg_var)

    def positive_edges(self) -> set[tuple[int, int]]:
        """(variable, clause) pairs, both 1-based as in the formula."""
        return {(int(v) + 1, int(c) + 1) for v, c in zip(self.pos_var, self.pos_clause)}

    def negative_edges(self) -> set[tuple[int, int]]:
        return {(int(v) + 1, int(c) + 1) for v, c in zip(self.neg_var, self.neg_clause)}

    def clause_degrees(self) -> np.ndarray:
        return np.diff(self.adj_pos.indptr) + np.diff(self.adj_neg.indptr)


def _nsfg_from_edges(n: int, m: int, edge_lit: np.ndarray, edge_clause: np.ndarray) -> Nsfg:
    flip = np.arange(2 * n, dtype=np.int64) ^ 1
    adj, adj_t = _adjacency(edge_clause, edge_lit, (m, 2 * n))
    return Nsfg(n, m, edge_lit, edge_clause, flip, adj, adj_t)


def _esfg_from_edges(n, m, pos_var, pos_clause, neg_var, neg_clause) -> Esfg:
    adj_pos, adj_pos_t = _adjacency(pos_clause, pos_var, (m, n))
    adj_neg, adj_neg_t = _adjacency(neg_clause, neg_var, (m, n))
    return Esfg(n, m, pos_var, pos_clause, neg_var, neg_clause, adj_pos, adj_pos_t, adj_neg, adj_neg_t)


def build_nsfg(formula: CnfFormula) -> Nsfg:
    lits, clauses = [], []
    for j, clause in enumerate(formula.clauses):
        for lit in clause:
            lits.append(literal_node(lit))
            clauses.append(j)
    return _nsfg_from_edges(
        formula.num_vars, formula.num_clauses,
        np.array(lits, dtype=np.int64), np.array(clauses, dtype=np.int64),
    )


def build_esfg(formula: CnfFormula) -> Esfg:
    pv, pc, nv, nc = [], [], [], []
    for j, clause in enumerate(formula.clauses):
        for lit in clause:
            if lit > 0:
                pv.append(lit - 1)
                pc.append(j)
            else:
                nv.append(-lit - 1)
                nc.append(j)
    arr = lambda xs: np.array(xs, dtype=np.int64)
    return _esfg_from_edges(formula.num_vars, formula.num_clauses, arr(pv), arr(pc), arr(nv), arr(nc))


def build_graph(formula: CnfFormula, kind: str):
    if kind == "nsfg":
        return build_nsfg(formula)
    if kind == "esfg":
        return build_esfg(formula)
    raise ValueError(f"unknown graph kind {kind!r}")


@dataclass(frozen=True, eq=False)
class BatchedGraph:
    """Disjoint union of same-kind graphs.

    ``offsets[i]`` is the first node of instance ``i`` when each instance's
    nodes (literal or variable nodes, then clause nodes) are laid out one
    instance after another. ``graph`` stores the union with all literal /
    variable nodes first and all clause nodes after, instance by instance.
    """

    graph: Nsfg | Esfg
    offsets: tuple[int, ...]
    sizes: tuple[tuple[int, int], ...]  # (n, m) per instance

    @property
    def kind(self) -> str:
        return self.graph.kind

    @property
    def num_instances(self) -> int:
        return len(self.sizes)

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    def var_slices(self) -> list[slice]:
        """Rows of the per-variable output belonging to each instance."""
        out, start = [], 0
        for n, _ in self.sizes:
            out.append(slice(start, start + n))
            start += n
        return out


def batch_graphs(graphs: Sequence[Nsfg | Esfg]) -> BatchedGraph:
    if not graphs:
        raise ValueError("cannot batch an empty list")
    kinds = {g.kind for g in graphs}
    if len(kinds) != 1:
        raise ValueError(f"cannot batch mixed graph kinds {sorted(kinds)}")
    offsets, sizes = [], []
    total = 0
    for g in graphs:
        offsets.append(total)
        sizes.append((g.num_vars, g.num_clauses))
        total += g.num_nodes
    N = sum(g.num_vars for g in graphs)
    M = sum(g.num_clauses for g in graphs)
    var_off = np.cumsum([0] + [g.num_vars for g in graphs[:-1]])
    cl_off = np.cumsum([0] + [g.num_clauses for g in graphs[:-1]])
    if graphs[0].kind == "nsfg":
        edge_lit = np.concatenate([g.edge_lit + 2 * vo for g, vo in zip(graphs, var_off)])
        edge_clause = np.concatenate([g.edge_clause + co for g, co in zip(graphs, cl_off)])
        union = _nsfg_from_edges(N, M, edge_lit, edge_clause)
    else:
        cat = lambda attr, offs: np.concatenate([getattr(g, attr) + o for g, o in zip(graphs, offs)])
        union = _esfg_from_edges(
            N, M,
            cat("pos_var", var_off), cat("pos_clause", cl_off),
            cat("neg_var", var_off), cat("neg_clause", cl_off),
        )
    return BatchedGraph(union, tuple(offsets), tuple(sizes))
