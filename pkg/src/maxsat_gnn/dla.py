"""One-round distributed local algorithm for MaxSAT with a 1/2 guarantee.

Every clause votes for one of its literals; each variable then takes the
polarity with at least as many votes. Reducing each clause to its voted
literal yields a Max1SAT instance in which this majority rule satisfies at
least half of the clauses, and the original formula satisfies at least as
many.
"""
from __future__ import annotations

import random
from itertools import combinations_with_replacement, permutations, product
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

from .cnf import CnfFormula, eval_assignment


class PickPolicy(str, Enum):
    FIRST = "first-literal"
    RANDOM = "seeded-random"


@dataclass(frozen=True)
class DlaState:
    """Counters after the clause-to-literal round.

    ``votes`` is keyed by signed literal and covers both polarities of every
    variable. ``members[j]`` is what clause ``j`` learned from its literals in
    the first round and ``picks[j]`` is the literal it voted for.
    """

    votes: dict[int, int]
    members: tuple[tuple[int, ...], ...]
    picks: tuple[int, ...]
    policy: PickPolicy

    def weight(self, lit: int) -> int:
        return self.votes.get(lit, 0)


def dla_state(formula: CnfFormula, policy: PickPolicy | str = PickPolicy.FIRST,
              seed: int | None = None) -> DlaState:
    policy = PickPolicy(policy)
    if (policy is PickPolicy.RANDOM) != (seed is not None):
        raise ValueError("a seed is required for, and only for, the seeded-random policy")
    rng = random.Random(seed) if seed is not None else None
    votes = {lit: 0 for v in range(1, formula.num_vars + 1) for lit in (v, -v)}
    # literal -> clause round: each clause collects the literals on its edges
    members: list[list[int]] = [[] for _ in formula.clauses]
    for j, clause in enumerate(formula.clauses):
        for lit in clause:
            members[j].append(lit)
    picks = []
    for s in members:
        lit = s[0] if rng is None else s[rng.randrange(len(s))]
        votes[lit] += 1
        picks.append(lit)
    return DlaState(votes, tuple(tuple(s) for s in members), tuple(picks), policy)


def decode(state: DlaState, num_vars: int) -> tuple[bool, ...]:
    # per variable, so x and ¬x can never both be set True on a tie
    return tuple(state.weight(v) >= state.weight(-v) for v in range(1, num_vars + 1))


def run_dla(formula: CnfFormula, policy: PickPolicy | str = PickPolicy.FIRST,
            seed: int | None = None) -> tuple[bool, ...]:
    return decode(dla_state(formula, policy, seed), formula.num_vars)


def verify_half_bound(formula: CnfFormula, assignment: Sequence[bool]) -> bool:
    """True iff ``assignment`` satisfies at least half of the clauses."""
    return 2 * eval_assignment(formula, assignment).satisfied >= formula.num_clauses


def all_small_formulas(num_vars: int, k: int, max_clauses: int) -> Iterator[CnfFormula]:
    """Every width-``k`` formula over ``num_vars`` variables with 1..max_clauses clauses.

    Literal order inside a clause is enumerated (it decides the first-literal
    pick); clause order is not, since votes are summed over clauses. Repeated
    clauses are included.
    """
    clauses = [tuple(v if s else -v for v, s in zip(vs, signs))
               for vs in permutations(range(1, num_vars + 1), k)
               for signs in product((True, False), repeat=k)]
    for m in range(1, max_clauses + 1):
        for chosen in combinations_with_replacement(clauses, m):
            yield CnfFormula(num_vars, chosen, k=k)
