"""Observables for time and ball averages: characters, tents, custom Lipschitz.

Every observable carries a modulus of continuity so that shrinking-ball
averages can be bounded deterministically: if two points are within t in the
torus metric, their observable values differ by at most ``modulus(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

from .errors import OutOfRange
from .torus import TorusPoint, dist_fractions, norm_from_zero
from .weyl import Character


class Observable:
    kind: str = "abstract"
    is_complex: bool = False
    sup: float = 1.0

    def value(self, point: TorusPoint) -> complex | float:
        raise NotImplementedError

    def modulus(self, t: float) -> float:
        """Upper bound on |f(x) - f(y)| whenever dist(x, y) <= t."""
        raise NotImplementedError

    def integral(self, dim: int) -> complex | Fraction | None:
        """Haar integral, when known in closed form."""
        return None

    def label(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class CharacterObservable(Observable):
    character: Character

    kind = "character"
    is_complex = True
    sup = 1.0

    def value(self, point: TorusPoint) -> complex:
        return self.character.value(point)

    def modulus(self, t: float) -> float:
        # |e^{2 pi i a} - e^{2 pi i b}| <= 2 pi |a - b|, and never exceeds 2.
        return min(2.0, 2.0 * math.pi * self.character.norm_l1 * float(t))

    def integral(self, dim: int) -> complex:
        return 0j

    def label(self) -> str:
        return "char:" + ",".join(str(f) for f in self.character.freq)


@dataclass(frozen=True)
class TentFunction:
    """Continuous bump: 1 inside the half-width ball at 0, linear decay to 0.

    f(x) = 1 where dist(x, 0) <= delta/2, f(x) = 2 - (2/delta) dist(x, 0) on
    the shell delta/2 <= dist <= delta, and 0 outside; squeezed between the
    indicator functions of the two balls.
    """

    delta: Fraction

    def __post_init__(self):
        d = Fraction(self.delta)
        if not 0 < d < Fraction(1, 2):
            raise OutOfRange(f"delta must be in (0, 1/2), got {d}")
        object.__setattr__(self, "delta", d)

    def value_of_distance(self, r: Fraction) -> Fraction:
        half = self.delta / 2
        if r <= half:
            return Fraction(1)
        if r >= self.delta:
            return Fraction(0)
        return 2 - 2 * r / self.delta

    def value_exact(self, coords: Sequence[Fraction]) -> Fraction:
        zero = (Fraction(0),) * len(coords)
        return self.value_of_distance(dist_fractions(coords, zero))

    def value_point(self, point: TorusPoint) -> Fraction:
        return self.value_of_distance(norm_from_zero(point))


@dataclass(frozen=True)
class TentObservable(Observable):
    tent: TentFunction

    kind = "tent"
    is_complex = False
    sup = 1.0

    def value(self, point: TorusPoint) -> float:
        return float(self.tent.value_point(point))

    def value_exact(self, coords: Sequence[Fraction]) -> Fraction:
        return self.tent.value_exact(coords)

    def modulus(self, t: float) -> float:
        return min(1.0, 2.0 * float(t) / float(self.tent.delta))

    def integral(self, dim: int) -> Fraction:
        from .genericity import tent_integral

        return tent_integral(self.tent.delta, dim)

    def label(self) -> str:
        d = self.tent.delta
        return f"tent:{d.numerator}/{d.denominator}"


@dataclass(frozen=True)
class ConstantObservable(Observable):
    constant: float = 1.0

    kind = "constant"
    is_complex = False

    def value(self, point: TorusPoint) -> float:
        return self.constant

    def modulus(self, t: float) -> float:
        return 0.0

    def integral(self, dim: int) -> float:
        return self.constant

    def label(self) -> str:
        return f"const:{self.constant}"


@dataclass(frozen=True)
class CustomLipschitzObservable(Observable):
    """User-supplied function with a declared Lipschitz constant."""

    fn: Callable[[TorusPoint], complex | float]
    lipschitz: float
    name: str = "custom"
    sup_bound: float = float("inf")
    known_integral: complex | float | None = None

    kind = "custom_lipschitz"

    @property
    def sup(self) -> float:  # type: ignore[override]
        return self.sup_bound

    def value(self, point: TorusPoint) -> complex | float:
        return self.fn(point)

    def modulus(self, t: float) -> float:
        return self.lipschitz * float(t)

    def integral(self, dim: int) -> complex | float | None:
        return self.known_integral

    def label(self) -> str:
        return f"custom:{self.name}"


def observable_from_spec(text: str) -> Observable:
    """Parse CLI shorthand: ``char:1,0``, ``tent:1/20``, ``const:1``."""
    kind, _, arg = text.partition(":")
    if kind == "char":
        freq = tuple(int(v) for v in arg.split(","))
        return CharacterObservable(Character(freq))
    if kind == "tent":
        return TentObservable(TentFunction(Fraction(arg)))
    if kind == "const":
        return ConstantObservable(float(arg) if arg else 1.0)
    raise OutOfRange(f"unknown observable spec {text!r}")
