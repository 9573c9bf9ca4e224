"""Finite abelian groups as products of cyclic factors, and their endomorphisms.

Elements are residue tuples; endomorphisms are integer matrices (a_ij) where
a_ij acts from the j-th factor into the i-th and must satisfy the order
constraint a_ij * q_j = 0 mod q_i, i.e. a_ij is a multiple of q_i / gcd(q_i, q_j).
Surjectivity is decided by image enumeration, which is exact and cheap at the
group sizes this module supports.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

from .errors import DimensionMismatch, OutOfRange, SearchBudgetExceeded

ENDOMORPHISM_CAP = 2**20


@dataclass(frozen=True)
class FiniteAbelianGroup:
    """Direct sum of cyclic groups Z/q_1 + ... + Z/q_m."""

    factors: tuple[int, ...]

    def __post_init__(self):
        if not self.factors:
            raise DimensionMismatch("group needs at least one cyclic factor")
        if any(q < 2 for q in self.factors):
            raise OutOfRange("cyclic factors must have order >= 2")

    @classmethod
    def cyclic(cls, order: int) -> "FiniteAbelianGroup":
        return cls((order,))

    @property
    def order(self) -> int:
        return math.prod(self.factors)

    @property
    def rank(self) -> int:
        return len(self.factors)

    def zero(self) -> tuple[int, ...]:
        return (0,) * self.rank

    def elements(self):
        return itertools.product(*(range(q) for q in self.factors))

    def add(self, a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
        return tuple((x + y) % q for x, y, q in zip(a, b, self.factors))

    def neg(self, a: tuple[int, ...]) -> tuple[int, ...]:
        return tuple((-x) % q for x, q in zip(a, self.factors))

    def endomorphism_count(self) -> int:
        return math.prod(
            math.gcd(qi, qj) for qi in self.factors for qj in self.factors
        )


@dataclass(frozen=True)
class FiniteEndomorphism:
    """Group endomorphism given by its matrix of residues."""

    group: FiniteAbelianGroup
    entries: tuple[tuple[int, ...], ...]  # entries[i][j] mod factors[i]

    def __call__(self, element: tuple[int, ...]) -> tuple[int, ...]:
        qs = self.group.factors
        return tuple(
            sum(a * e for a, e in zip(row, element)) % q
            for row, q in zip(self.entries, qs)
        )

    def compose(self, other: "FiniteEndomorphism") -> "FiniteEndomorphism":
        """self after other."""
        qs = self.group.factors
        m = self.group.rank
        rows = tuple(
            tuple(
                sum(self.entries[i][k] * other.entries[k][j] for k in range(m)) % qs[i]
                for j in range(m)
            )
            for i in range(m)
        )
        return FiniteEndomorphism(self.group, rows)

    def sub(self, other: "FiniteEndomorphism") -> "FiniteEndomorphism":
        qs = self.group.factors
        rows = tuple(
            tuple((a - b) % q for a, b in zip(r1, r2))
            for r1, r2, q in zip(self.entries, other.entries, qs)
        )
        return FiniteEndomorphism(self.group, rows)

    def image(self) -> frozenset:
        return frozenset(self(e) for e in self.group.elements())

    def is_surjective(self) -> bool:
        return len(self.image()) == self.group.order

    @classmethod
    def identity(cls, group: FiniteAbelianGroup) -> "FiniteEndomorphism":
        m = group.rank
        return cls(
            group, tuple(tuple(int(i == j) for j in range(m)) for i in range(m))
        )


@lru_cache(maxsize=None)
def all_endomorphisms(
    group: FiniteAbelianGroup, cap: int = ENDOMORPHISM_CAP
) -> tuple[FiniteEndomorphism, ...]:
    """Enumerate End(group) by brute force over admissible entry residues."""
    total = group.endomorphism_count()
    if total > cap:
        raise SearchBudgetExceeded(
            f"|End| = {total} exceeds the configured cap {cap}"
        )
    qs = group.factors
    m = group.rank
    entry_choices = []
    for i in range(m):
        for j in range(m):
            step = qs[i] // math.gcd(qs[i], qs[j])
            entry_choices.append(tuple(t * step for t in range(math.gcd(qs[i], qs[j]))))
    out = []
    for flat in itertools.product(*entry_choices):
        rows = tuple(flat[i * m : (i + 1) * m] for i in range(m))
        out.append(FiniteEndomorphism(group, rows))
    return tuple(out)


def parse_group(text: str) -> FiniteAbelianGroup:
    """Parse shorthand like ``Z2``, ``Z/3``, or ``Z2xZ2`` into a group."""
    parts = text.replace(" ", "").lower().split("x")
    factors = []
    for p in parts:
        p = p.removeprefix("z").removeprefix("/")
        if not p.isdigit():
            raise OutOfRange(f"cannot parse group factor {p!r}")
        factors.append(int(p))
    return FiniteAbelianGroup(tuple(factors))
