"""CNF formulas, assignment evaluation and DIMACS reading/writing.

Literals are stored DIMACS-style as signed integers (``3`` is x3, ``-3`` is
its negation). :class:`Literal` is a convenience view over that encoding.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO


class FormulaError(ValueError):
    """A formula or clause violates its structural invariants."""


class DimacsError(ValueError):
    """Malformed DIMACS input."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Literal:
    var: int
    positive: bool = True

    def __post_init__(self):
        if self.var < 1:
            raise FormulaError(f"variable index must be >= 1, got {self.var}")

    @classmethod
    def from_int(cls, lit: int) -> "Literal":
        if lit == 0:
            raise FormulaError("0 is not a literal")
        return cls(abs(lit), lit > 0)

    def to_int(self) -> int:
        return self.var if self.positive else -self.var

    def __neg__(self) -> "Literal":
        return Literal(self.var, not self.positive)

    def __str__(self):
        return f"x{self.var}" if self.positive else f"¬x{self.var}"


def check_clause(lits: Sequence[int]) -> tuple[int, ...]:
    clause = tuple(int(l) for l in lits)
    if not clause:
        raise FormulaError("empty clause")
    if 0 in clause:
        raise FormulaError("0 is not a literal")
    if len({abs(l) for l in clause}) != len(clause):
        raise FormulaError(f"clause {list(clause)} repeats a variable")
    return clause


@dataclass(frozen=True)
class CnfFormula:
    """An immutable CNF formula over variables ``1..num_vars``.

    ``k``, when given, asserts that every clause has exactly ``k`` literals;
    it does not take part in equality. Duplicate clauses are allowed and
    counted independently.
    """

    num_vars: int
    clauses: tuple[tuple[int, ...], ...]
    k: int | None = field(default=None, compare=False)
    _widths: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.num_vars < 1:
            raise FormulaError(f"num_vars must be positive, got {self.num_vars}")
        clauses = tuple(check_clause(c) for c in self.clauses)
        for c in clauses:
            for lit in c:
                if abs(lit) > self.num_vars:
                    raise FormulaError(f"literal {lit} exceeds num_vars={self.num_vars}")
            if self.k is not None and len(c) != self.k:
                raise FormulaError(f"clause {list(c)} does not have width k={self.k}")
        object.__setattr__(self, "clauses", clauses)
        object.__setattr__(self, "_widths", tuple(len(c) for c in clauses))

    @classmethod
    def from_lists(cls, num_vars: int, clauses: Iterable[Iterable[int]], k: int | None = None) -> "CnfFormula":
        return cls(num_vars, tuple(tuple(c) for c in clauses), k)

    @property
    def num_clauses(self) -> int:
        return len(self.clauses)

    @property
    def widths(self) -> tuple[int, ...]:
        return self._widths

    @property
    def num_literal_occurrences(self) -> int:
        return sum(self._widths)

    def literals(self, j: int) -> list[Literal]:
        return [Literal.from_int(l) for l in self.clauses[j]]

    def uniform_width(self) -> int | None:
        """The common clause width, or None for mixed widths."""
        ws = set(self._widths)
        return ws.pop() if len(ws) == 1 else None


@dataclass(frozen=True)
class EvalResult:
    satisfied: int
    total: int

    @property
    def unsatisfied(self) -> int:
        return self.total - self.satisfied


def eval_assignment(formula: CnfFormula, assignment: Sequence[bool]) -> EvalResult:
    """Count the clauses of ``formula`` with at least one true literal."""
    if len(assignment) != formula.num_vars:
        raise ValueError(
            f"assignment has {len(assignment)} values, formula has {formula.num_vars} variables"
        )
    values = [bool(v) for v in assignment]
    sat = 0
    for clause in formula.clauses:
        for lit in clause:
            if values[abs(lit) - 1] == (lit > 0):
                sat += 1
                break
    return EvalResult(sat, formula.num_clauses)


def parse_dimacs(text: str | TextIO) -> CnfFormula:
    """Parse DIMACS CNF text.

    Comment lines (``c ...``) may appear anywhere before or between clauses.
    Clauses are zero-terminated and may span lines.
    """
    if not isinstance(text, str):
        text = text.read()
    header: tuple[int, int] | None = None
    clauses: list[tuple[int, ...]] = []
    current: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            if header is not None:
                raise DimacsError("duplicate problem line", lineno)
            toks = line.split()
            if len(toks) != 4 or toks[1] != "cnf":
                raise DimacsError(f"bad problem line {line!r}", lineno)
            try:
                n, m = int(toks[2]), int(toks[3])
            except ValueError:
                raise DimacsError(f"bad problem line {line!r}", lineno) from None
            if n < 1 or m < 0:
                raise DimacsError(f"bad header counts n={n} m={m}", lineno)
            header = (n, m)
            continue
        if header is None:
            raise DimacsError("clause before problem line", lineno)
        n = header[0]
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"not an integer: {tok!r}", lineno) from None
            if lit == 0:
                if not current:
                    raise DimacsError("empty clause", lineno)
                if len({abs(l) for l in current}) != len(current):
                    raise DimacsError(f"clause {current} repeats a variable", lineno)
                clauses.append(tuple(current))
                current = []
            else:
                if abs(lit) > n:
                    raise DimacsError(f"variable {abs(lit)} exceeds n={n}", lineno)
                current.append(lit)
    if header is None:
        raise DimacsError("missing problem line")
    if current:
        raise DimacsError("last clause is not zero-terminated")
    n, m = header
    if len(clauses) != m:
        raise DimacsError(f"header declares {m} clauses, found {len(clauses)}")
    return CnfFormula(n, tuple(clauses))


def read_dimacs(path) -> CnfFormula:
    with open(path, "r", encoding="ascii") as f:
        return parse_dimacs(f.read())


def write_dimacs(formula: CnfFormula) -> str:
    lines = [f"p cnf {formula.num_vars} {formula.num_clauses}"]
    lines.extend(" ".join(map(str, c)) + " 0" for c in formula.clauses)
    return "\n".join(lines) + "\n"


def save_dimacs(formula: CnfFormula, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(write_dimacs(formula))


# (x1 ∨ x2 ∨ x3) ∧ (x1 ∨ ¬x3) ∧ (¬x1 ∨ ¬x2 ∨ ¬x3), the running example used in docs and tests.
EXAMPLE_FORMULA = CnfFormula(3, ((1, 2, 3), (1, -3), (-1, -2, -3)))
