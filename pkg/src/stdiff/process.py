"""Generator sequences, cached cumulative products, and surjectivity checks.

A process is generated by a sequence of integer-matrix torus endomorphisms
T_1, T_2, ...; the cache materializes the cumulative products
P_n = T_n ... T_1 (P_0 = identity) together with exact determinants and the
l1 Lipschitz data used by the shrinking-ball radius schedule.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from .errors import (
    ConfigError,
    DimensionMismatch,
    OutOfRange,
    RuleExhausted,
    SearchBudgetExceeded,
)
from .finite import FiniteAbelianGroup, FiniteEndomorphism, all_endomorphisms
from .torus import MIN_BITS, IntegerEndomorphism

PRECISION_GUARD_BITS = 64


# ---------------------------------------------------------------------------
# Generator rules
# ---------------------------------------------------------------------------


class GeneratorRule:
    """Produces the generator matrix for each step n >= 1."""

    dim: int
    horizon: int | None  # None means unbounded

    def matrix(self, n: int) -> IntegerEndomorphism:
        raise NotImplementedError

    def to_json(self) -> dict:
        raise NotImplementedError

    def _check_step(self, n: int) -> None:
        if n < 1:
            raise OutOfRange(f"generator index must be >= 1, got {n}")
        if self.horizon is not None and n > self.horizon:
            raise RuleExhausted(f"rule defines steps 1..{self.horizon}, asked for {n}")


@dataclass(frozen=True)
class ConstantMatrixRule(GeneratorRule):
    """The same matrix at every step (the autonomous case)."""

    endo: IntegerEndomorphism

    @property
    def dim(self) -> int:
        return self.endo.dim

    horizon = None

    def matrix(self, n: int) -> IntegerEndomorphism:
        self._check_step(n)
        return self.endo

    def to_json(self) -> dict:
        return {
            "kind": "constant_matrix",
            "dim": self.dim,
            "matrix": [list(r) for r in self.endo.rows],
        }


@dataclass(frozen=True)
class CantorMultipliersRule(GeneratorRule):
    """One-dimensional rule T_n = multiplication by q_n, each q_n >= 2.

    ``multipliers`` is either an explicit tuple or the formula string "n+1"
    (the classic base sequence 2, 3, 4, ...).
    """

    multipliers: tuple[int, ...] | str

    dim = 1

    def __post_init__(self):
        if isinstance(self.multipliers, str):
            if self.multipliers.replace(" ", "") != "n+1":
                raise ConfigError(
                    f"unknown multiplier formula {self.multipliers!r}; "
                    "supported: 'n+1' or an explicit list"
                )
        else:
            object.__setattr__(self, "multipliers", tuple(int(q) for q in self.multipliers))
            if any(q < 2 for q in self.multipliers):
                raise ConfigError("multipliers must all be >= 2")

    @property
    def horizon(self) -> int | None:
        if isinstance(self.multipliers, str):
            return None
        return len(self.multipliers)

    def multiplier(self, n: int) -> int:
        self._check_step(n)
        if isinstance(self.multipliers, str):
            return n + 1
        return self.multipliers[n - 1]

    def matrix(self, n: int) -> IntegerEndomorphism:
        return IntegerEndomorphism(((self.multiplier(n),),))

    def to_json(self) -> dict:
        mults = self.multipliers if isinstance(self.multipliers, str) else list(self.multipliers)
        return {"kind": "cantor_multipliers", "dim": 1, "multipliers": mults}


@dataclass(frozen=True)
class ExplicitListRule(GeneratorRule):
    """A finite list of matrices; the rule is exhausted beyond the list."""

    matrices: tuple[IntegerEndomorphism, ...]

    def __post_init__(self):
        if not self.matrices:
            raise ConfigError("explicit_list needs at least one matrix")
        d = self.matrices[0].dim
        if any(m.dim != d for m in self.matrices):
            raise DimensionMismatch("all matrices in a rule must share a dimension")

    @property
    def dim(self) -> int:
        return self.matrices[0].dim

    @property
    def horizon(self) -> int:
        return len(self.matrices)

    def matrix(self, n: int) -> IntegerEndomorphism:
        self._check_step(n)
        return self.matrices[n - 1]

    def to_json(self) -> dict:
        return {
            "kind": "explicit_list",
            "dim": self.dim,
            "matrices": [[list(r) for r in m.rows] for m in self.matrices],
        }


_ALLOWED_EXPR_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.FloorDiv,
    ast.Mod,
    ast.Pow,
    ast.USub,
    ast.UAdd,
    ast.Constant,
    ast.Name,
    ast.Load,
)


def _compile_entry(expr: str) -> Callable[[int], int]:
    """Compile an integer arithmetic expression in the variable n."""
    tree = ast.parse(expr, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_EXPR_NODES):
            raise ConfigError(f"unsupported syntax in matrix entry {expr!r}")
        if isinstance(node, ast.Name) and node.id != "n":
            raise ConfigError(f"only the variable 'n' is allowed, got {node.id!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, int):
            raise ConfigError(f"non-integer constant in matrix entry {expr!r}")
    code = compile(tree, "<matrix entry>", "eval")
    return lambda n: int(eval(code, {"__builtins__": {}}, {"n": n}))


@dataclass(frozen=True)
class MatrixFormulaRule(GeneratorRule):
    """Matrix whose entries are integer expressions in the step index n."""

    entries: tuple[tuple[str, ...], ...]
    _compiled: tuple[tuple[Callable[[int], int], ...], ...] = field(
        init=False, repr=False, compare=False
    )

    horizon = None

    def __post_init__(self):
        d = len(self.entries)
        if d == 0 or any(len(row) != d for row in self.entries):
            raise ConfigError("matrix_formula entries must form a square matrix")
        compiled = tuple(tuple(_compile_entry(e) for e in row) for row in self.entries)
        object.__setattr__(self, "_compiled", compiled)

    @property
    def dim(self) -> int:
        return len(self.entries)

    def matrix(self, n: int) -> IntegerEndomorphism:
        self._check_step(n)
        return IntegerEndomorphism(
            tuple(tuple(fn(n) for fn in row) for row in self._compiled)
        )

    def to_json(self) -> dict:
        return {
            "kind": "matrix_formula",
            "dim": self.dim,
            "matrix": [list(r) for r in self.entries],
        }


def doubling_rule(dim: int = 1) -> GeneratorRule:
    """The expanding benchmark rule: multiplication by 2 at every step."""
    return ConstantMatrixRule(IntegerEndomorphism.scalar(dim, 2))


def identity_rule(dim: int = 1) -> GeneratorRule:
    return ConstantMatrixRule(IntegerEndomorphism.identity(dim))


def rule_from_json(doc: dict) -> GeneratorRule:
    """Load a rule from its JSON document form."""
    if not isinstance(doc, dict):
        raise ConfigError("rule document must be a JSON object")
    kind = doc.get("kind")
    try:
        if kind == "constant_matrix":
            return ConstantMatrixRule(IntegerEndomorphism.from_rows(doc["matrix"]))
        if kind == "cantor_multipliers":
            mults = doc["multipliers"]
            if isinstance(mults, str):
                return CantorMultipliersRule(mults)
            return CantorMultipliersRule(tuple(int(q) for q in mults))
        if kind == "explicit_list":
            mats = tuple(IntegerEndomorphism.from_rows(m) for m in doc["matrices"])
            return ExplicitListRule(mats)
        if kind == "matrix_formula":
            entries = tuple(tuple(str(e) for e in row) for row in doc["matrix"])
            return MatrixFormulaRule(entries)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed rule document: {exc}") from exc
    raise ConfigError(f"unknown rule kind {kind!r}")


# ---------------------------------------------------------------------------
# Process cache
# ---------------------------------------------------------------------------


class ProcessCache:
    """Lazily extended cumulative products with exact determinant bookkeeping.

    Extension is single-writer; reads of already-materialized prefixes are safe
    from parallel workers.
    """

    def __init__(self, rule: GeneratorRule):
        self.rule = rule
        self._generators: list[IntegerEndomorphism] = []  # T_1, T_2, ...
        self._products: list[IntegerEndomorphism] = [
            IntegerEndomorphism.identity(rule.dim)
        ]  # P_0 = I
        self._dets: list[int] = [1]
        self._gen_dets: list[int] = []
        self._lips: list[int] = []  # col norm of T_n

    @property
    def dim(self) -> int:
        return self.rule.dim

    def extend_to(self, n: int) -> None:
        while len(self._products) <= n:
            step = len(self._products)
            gen = self.rule.matrix(step)
            if gen.dim != self.dim:
                raise DimensionMismatch("rule emitted a matrix of the wrong dimension")
            product = gen @ self._products[-1]
            det_gen = gen.det()
            det_product = product.det()
            # Exact multiplicativity is rechecked on every extension.
            if det_product != det_gen * self._dets[-1]:
                raise ArithmeticError(
                    f"determinant bookkeeping failed at step {step}"
                )
            self._generators.append(gen)
            self._products.append(product)
            self._gen_dets.append(det_gen)
            self._dets.append(det_product)
            self._lips.append(gen.col_norm())

    def generator(self, n: int) -> IntegerEndomorphism:
        """T_n for n >= 1."""
        if n < 1:
            raise OutOfRange("generator index starts at 1")
        self.extend_to(n)
        return self._generators[n - 1]

    def product(self, n: int) -> IntegerEndomorphism:
        """P_n = T_n ... T_1, with P_0 the identity."""
        if n < 0:
            raise OutOfRange("product index starts at 0")
        self.extend_to(n)
        return self._products[n]

    def det_product(self, n: int) -> int:
        self.extend_to(n)
        return self._dets[n]

    def det_generator(self, n: int) -> int:
        self.extend_to(n)
        return self._gen_dets[n - 1]

    def lipschitz(self, n: int) -> int:
        """l1 Lipschitz constant of T_n."""
        self.extend_to(n)
        return self._lips[n - 1]

    def lipschitz_running_max(self, k: int) -> int:
        """max(1, L_1, ..., L_{k-1}); the constant governing the first k steps."""
        if k < 1:
            raise OutOfRange("k must be >= 1")
        self.extend_to(k - 1)
        return max([1] + self._lips[: k - 1])

    def transition(self, s: int, t: int) -> IntegerEndomorphism:
        """T_s ... T_{t+1}, the transition from time t to time s >= t."""
        if s < t:
            raise OutOfRange("transition needs s >= t")
        self.extend_to(s)
        out = IntegerEndomorphism.identity(self.dim)
        for n in range(t + 1, s + 1):
            out = self._generators[n - 1] @ out
        return out

    def required_bits(self, k_max: int) -> int:
        """Fixed-point precision for exact orbits through k_max steps.

        Each application of T_n can consume ceil(log2 ||T_n||) fraction bits;
        the 64-bit guard keeps sampled coordinates non-degenerate at the end.
        """
        self.extend_to(k_max)
        spent = sum(
            (norm - 1).bit_length() for norm in self._lips[:k_max] if norm > 1
        )
        return max(MIN_BITS, spent + PRECISION_GUARD_BITS)

    def radius_schedule(self, k: int) -> Fraction:
        """Ball radius bound for step k: 1 / (Lmax_k**(k-1) * k).

        Any radius at or below this keeps the first k orbit points of every
        ball point within 1/k of the center orbit.
        """
        lmax = self.lipschitz_running_max(k)
        return Fraction(1, lmax ** (k - 1) * k)


# ---------------------------------------------------------------------------
# Difference property and surjectivity reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DifferencePropertyReport:
    ok: bool
    horizon: int
    failing_pair: tuple[int, int] | None
    checked_pairs: int
    dets: tuple[tuple[int, int, int], ...]  # (n, m, det(P_n - P_m))

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "horizon": self.horizon,
            "failing_pair": list(self.failing_pair) if self.failing_pair else None,
            "checked_pairs": self.checked_pairs,
            "dets": [[n, m, str(d)] for n, m, d in self.dets],
        }


def difference_property_check(
    cache: ProcessCache, horizon: int, keep_dets: bool = True
) -> DifferencePropertyReport:
    """Check det(P_n - P_m) != 0 exactly for all 0 < m < n <= horizon.

    The report certifies the property up to the horizon only; scanning stops
    at the first failing pair.
    """
    if horizon < 2:
        raise OutOfRange("horizon must be >= 2")
    cache.extend_to(horizon)
    dets = []
    checked = 0
    for n in range(2, horizon + 1):
        for m in range(1, n):
            value = (cache.product(n) - cache.product(m)).det()
            checked += 1
            if keep_dets:
                dets.append((n, m, value))
            if value == 0:
                return DifferencePropertyReport(
                    ok=False,
                    horizon=horizon,
                    failing_pair=(n, m),
                    checked_pairs=checked,
                    dets=tuple(dets),
                )
    return DifferencePropertyReport(
        ok=True, horizon=horizon, failing_pair=None, checked_pairs=checked, dets=tuple(dets)
    )


@dataclass(frozen=True)
class SurjectivityReport:
    horizon: int
    generators_invertible: bool
    zero_det_step: int | None
    commuting: bool
    first_noncommuting_pair: tuple[int, int] | None
    factorization_applicable: bool
    factorization_ok: bool | None

    def to_json(self) -> dict:
        return {
            "horizon": self.horizon,
            "generators_invertible": self.generators_invertible,
            "zero_det_step": self.zero_det_step,
            "commuting": self.commuting,
            "first_noncommuting_pair": (
                list(self.first_noncommuting_pair)
                if self.first_noncommuting_pair
                else None
            ),
            "factorization_applicable": self.factorization_applicable,
            "factorization_ok": self.factorization_ok,
        }


def surjectivity_fastpaths(cache: ProcessCache, horizon: int) -> SurjectivityReport:
    """Fast consequences of the difference property on the torus.

    Always checks det(T_n) != 0 up to the horizon. When the generators commute
    pairwise, additionally verifies the exact factorization
    det(P_{n+1} - P_n) = det(T_{n+1} - I) * prod_{i<=n} det(T_i).
    """
    cache.extend_to(horizon)
    zero_step = None
    for n in range(1, horizon + 1):
        if cache.det_generator(n) == 0:
            zero_step = n
            break
    commuting = True
    bad_pair = None
    for i in range(1, horizon + 1):
        for j in range(i + 1, horizon + 1):
            a, b = cache.generator(i), cache.generator(j)
            if a @ b != b @ a:
                commuting = False
                bad_pair = (i, j)
                break
        if not commuting:
            break
    factorization_ok = None
    if commuting:
        ident = IntegerEndomorphism.identity(cache.dim)
        factorization_ok = True
        for n in range(1, horizon):
            lhs = (cache.product(n + 1) - cache.product(n)).det()
            rhs = (cache.generator(n + 1) - ident).det() * cache.det_product(n)
            if lhs != rhs:
                factorization_ok = False
                break
    return SurjectivityReport(
        horizon=horizon,
        generators_invertible=zero_step is None,
        zero_det_step=zero_step,
        commuting=commuting,
        first_noncommuting_pair=bad_pair,
        factorization_applicable=commuting,
        factorization_ok=factorization_ok,
    )


# ---------------------------------------------------------------------------
# Finite-group refutation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteRefutationReport:
    group_factors: tuple[int, ...]
    endomorphism_count: int
    max_survival: int
    refuted_at: int
    exhaustive: bool
    nodes_visited: int
    certified_bound: int
    reason: str

    def to_json(self) -> dict:
        return {
            "group_factors": list(self.group_factors),
            "endomorphism_count": self.endomorphism_count,
            "max_survival": self.max_survival,
            "refuted_at": self.refuted_at,
            "exhaustive": self.exhaustive,
            "nodes_visited": self.nodes_visited,
            "certified_bound": self.certified_bound,
            "reason": self.reason,
        }


def finite_dp_refute(
    group: FiniteAbelianGroup,
    horizon: int | None = None,
    node_budget: int = 10**6,
) -> FiniteRefutationReport:
    """Show no generator sequence on a finite group keeps the difference property.

    Runs a depth-first search over generator choices, extending a sequence only
    while all pairwise differences of the cumulative endomorphisms stay
    surjective. Pigeonhole forces every branch to die within |End|+1 steps:
    surviving cumulative endomorphisms are pairwise distinct, and there are
    only |End| of them. The report carries the deepest survival observed.
    """
    if group.order < 2:
        raise OutOfRange("the group must have more than one element")
    endos = all_endomorphisms(group)
    n_endos = len(endos)
    bound = n_endos + 1
    depth_cap = bound if horizon is None else min(horizon, bound)

    surjective_cache: dict[tuple, bool] = {}

    def diff_is_surjective(a: FiniteEndomorphism, b: FiniteEndomorphism) -> bool:
        key = a.sub(b).entries
        hit = surjective_cache.get(key)
        if hit is None:
            hit = FiniteEndomorphism(group, key).is_surjective()
            surjective_cache[key] = hit
        return hit

    max_survival = 0
    nodes = 0
    exhausted_budget = False

    # Iterative DFS over chains of surviving cumulative endomorphisms.
    stack: list[tuple[FiniteEndomorphism, ...]] = [()]
    while stack:
        chain = stack.pop()
        depth = len(chain)
        max_survival = max(max_survival, depth)
        if depth >= depth_cap:
            continue
        last = chain[-1] if chain else FiniteEndomorphism.identity(group)
        for gen in endos:
            nodes += 1
            if nodes > node_budget:
                exhausted_budget = True
                stack.clear()
                break
            nxt = gen.compose(last)
            if all(diff_is_surjective(nxt, prev) for prev in chain):
                stack.append(chain + (nxt,))

    if max_survival > n_endos:
        raise AssertionError(
            "pigeonhole violated: survival exceeded the endomorphism count"
        )

    exhaustive = not exhausted_budget
    if exhaustive:
        reason = (
            f"every generator sequence loses the difference property by step "
            f"{max_survival + 1}; deepest surviving prefix has length {max_survival}"
        )
    else:
        reason = (
            f"search budget exhausted after {nodes} nodes; pigeonhole still "
            f"guarantees refutation within {bound} steps"
        )
    return FiniteRefutationReport(
        group_factors=group.factors,
        endomorphism_count=n_endos,
        max_survival=max_survival,
        refuted_at=max_survival + 1 if exhaustive else bound,
        exhaustive=exhaustive,
        nodes_visited=nodes,
        certified_bound=bound,
        reason=reason,
    )
