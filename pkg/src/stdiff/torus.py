"""Exact arithmetic on the d-torus.

Points live on the dyadic grid {j / 2**bits}: every coordinate is stored as
an integer numerator in [0, 2**bits), so the group law, integer-matrix
endomorphisms, and the wrap-around l1 metric are all computed without any
rounding. ``bits`` is chosen per experiment (see ``ProcessCache.required_bits``):
an orbit under expanding integer maps consumes roughly log2 of the map norm
per step, and the extra 64-bit guard keeps sampled orbits non-degenerate
through the experiment horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import (
    DimensionMismatch,
    OutOfRange,
    PrecisionExhausted,
    PrecisionMismatch,
)
from .rng import Stream

#: Minimum fractional bits for any point; below this sampled orbits are junk.
MIN_BITS = 64

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class TorusPoint:
    """A point of (R/Z)^d in fixed-point with ``bits`` fractional bits."""

    coords: tuple[int, ...]
    bits: int

    def __post_init__(self):
        if self.bits < MIN_BITS:
            raise OutOfRange(f"precision must be >= {MIN_BITS} bits, got {self.bits}")
        if not self.coords:
            raise DimensionMismatch("a torus point needs at least one coordinate")
        modulus = 1 << self.bits
        for c in self.coords:
            if not 0 <= c < modulus:
                raise OutOfRange("coordinate numerator outside [0, 2**bits)")

    @property
    def dim(self) -> int:
        return len(self.coords)

    @classmethod
    def zero(cls, dim: int, bits: int) -> "TorusPoint":
        return cls((0,) * dim, bits)

    @classmethod
    def from_fractions(
        cls, values: Iterable[Fraction | int], bits: int, exact: bool = False
    ) -> "TorusPoint":
        """Build a point from rationals, reduced mod 1.

        With ``exact=True`` the values must already lie on the 2**-bits grid;
        otherwise they are rounded to the nearest grid point.
        """
        modulus = 1 << bits
        coords = []
        for v in values:
            scaled = Fraction(v) * modulus
            if scaled.denominator == 1:
                num = scaled.numerator
            elif exact:
                raise PrecisionExhausted(
                    f"{v} is not representable with {bits} fractional bits"
                )
            else:
                num = round(scaled)
            coords.append(num % modulus)
        return cls(tuple(coords), bits)

    def as_fractions(self) -> tuple[Fraction, ...]:
        modulus = 1 << self.bits
        return tuple(Fraction(c, modulus) for c in self.coords)

    def as_floats(self) -> tuple[float, ...]:
        return tuple(fixed_to_float(c, self.bits) for c in self.coords)

    def signed_fractions(self) -> tuple[Fraction, ...]:
        """Coordinates as rationals in (-1/2, 1/2] (nearest lift of each)."""
        modulus = 1 << self.bits
        out = []
        for c in self.coords:
            f = Fraction(c, modulus)
            out.append(f if f <= HALF else f - 1)
        return tuple(out)

    def with_bits(self, bits: int) -> "TorusPoint":
        """Exact lift to a finer grid (coarsening would lose information)."""
        if bits == self.bits:
            return self
        if bits < self.bits:
            raise PrecisionExhausted(
                f"cannot lower precision exactly: {self.bits} -> {bits}"
            )
        shift = bits - self.bits
        return TorusPoint(tuple(c << shift for c in self.coords), bits)

    def _check_compatible(self, other: "TorusPoint") -> None:
        if self.dim != other.dim:
            raise DimensionMismatch(f"dim {self.dim} vs {other.dim}")
        if self.bits != other.bits:
            raise PrecisionMismatch(f"{self.bits} bits vs {other.bits} bits")

    def __add__(self, other: "TorusPoint") -> "TorusPoint":
        self._check_compatible(other)
        modulus = 1 << self.bits
        return TorusPoint(
            tuple((a + b) % modulus for a, b in zip(self.coords, other.coords)),
            self.bits,
        )

    def __sub__(self, other: "TorusPoint") -> "TorusPoint":
        self._check_compatible(other)
        modulus = 1 << self.bits
        return TorusPoint(
            tuple((a - b) % modulus for a, b in zip(self.coords, other.coords)),
            self.bits,
        )

    def __neg__(self) -> "TorusPoint":
        modulus = 1 << self.bits
        return TorusPoint(tuple((-c) % modulus for c in self.coords), self.bits)


def fixed_to_float(numerator: int, bits: int) -> float:
    """Round a grid coordinate to double; the only lossy step in the pipeline."""
    if bits <= 64:
        return numerator * 2.0 ** (-bits)
    top = numerator >> (bits - 64)
    return top * 2.0**-64


@dataclass(frozen=True)
class IntegerEndomorphism:
    """x -> A x mod Z^d for a d-by-d integer matrix A."""

    rows: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        d = len(self.rows)
        if d == 0 or any(len(r) != d for r in self.rows):
            raise DimensionMismatch("matrix must be square and nonempty")

    @property
    def dim(self) -> int:
        return len(self.rows)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "IntegerEndomorphism":
        return cls(tuple(tuple(int(e) for e in row) for row in rows))

    @classmethod
    def identity(cls, dim: int) -> "IntegerEndomorphism":
        return cls(tuple(tuple(int(i == j) for j in range(dim)) for i in range(dim)))

    @classmethod
    def scalar(cls, dim: int, value: int) -> "IntegerEndomorphism":
        return cls(
            tuple(tuple(value if i == j else 0 for j in range(dim)) for i in range(dim))
        )

    def __call__(self, point: TorusPoint) -> TorusPoint:
        if point.dim != self.dim:
            raise DimensionMismatch(f"matrix dim {self.dim} vs point dim {point.dim}")
        modulus = 1 << point.bits
        coords = point.coords
        out = tuple(
            sum(a * c for a, c in zip(row, coords)) % modulus for row in self.rows
        )
        return TorusPoint(out, point.bits)

    def apply_fractions(self, values: Sequence[Fraction]) -> tuple[Fraction, ...]:
        """Exact action on a rational point, reduced mod 1."""
        if len(values) != self.dim:
            raise DimensionMismatch("vector length does not match matrix dimension")
        return tuple(
            sum((a * v for a, v in zip(row, values)), Fraction(0)) % 1
            for row in self.rows
        )

    def __matmul__(self, other: "IntegerEndomorphism") -> "IntegerEndomorphism":
        if self.dim != other.dim:
            raise DimensionMismatch("matrix dimensions differ")
        cols = list(zip(*other.rows))
        return IntegerEndomorphism(
            tuple(
                tuple(sum(a * b for a, b in zip(row, col)) for col in cols)
                for row in self.rows
            )
        )

    def __sub__(self, other: "IntegerEndomorphism") -> "IntegerEndomorphism":
        if self.dim != other.dim:
            raise DimensionMismatch("matrix dimensions differ")
        return IntegerEndomorphism(
            tuple(
                tuple(a - b for a, b in zip(r1, r2))
                for r1, r2 in zip(self.rows, other.rows)
            )
        )

    def __add__(self, other: "IntegerEndomorphism") -> "IntegerEndomorphism":
        if self.dim != other.dim:
            raise DimensionMismatch("matrix dimensions differ")
        return IntegerEndomorphism(
            tuple(
                tuple(a + b for a, b in zip(r1, r2))
                for r1, r2 in zip(self.rows, other.rows)
            )
        )

    def transpose(self) -> "IntegerEndomorphism":
        return IntegerEndomorphism(tuple(zip(*self.rows)))

    def det(self) -> int:
        return det_int(self.rows)

    def col_norm(self) -> int:
        """Induced l1 operator norm: max over columns of the absolute column sum.

        This is the Lipschitz constant of the map in the wrap-around l1 metric.
        """
        return max(sum(abs(row[j]) for row in self.rows) for j in range(self.dim))

    def is_identity(self) -> bool:
        return self == IntegerEndomorphism.identity(self.dim)

    def is_zero(self) -> bool:
        return all(all(e == 0 for e in row) for row in self.rows)


def det_int(rows: Sequence[Sequence[int]]) -> int:
    """Exact determinant of an integer matrix by fraction-free elimination."""
    d = len(rows)
    if d == 1:
        return rows[0][0]
    if d == 2:
        return rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
    m = [list(row) for row in rows]
    sign = 1
    prev = 1
    for t in range(d - 1):
        if m[t][t] == 0:
            for i in range(t + 1, d):
                if m[i][t] != 0:
                    m[t], m[i] = m[i], m[t]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(t + 1, d):
            for j in range(t + 1, d):
                m[i][j] = (m[i][j] * m[t][t] - m[i][t] * m[t][j]) // prev
            m[i][t] = 0
        prev = m[t][t]
    return sign * m[d - 1][d - 1]


def dist(x: TorusPoint, y: TorusPoint) -> Fraction:
    """Wrap-around l1 distance: sum over coordinates of min_h |x_j - y_j + h|.

    Exact; translation invariant; bounded by dim/2.
    """
    x._check_compatible(y)
    modulus = 1 << x.bits
    total = 0
    for a, b in zip(x.coords, y.coords):
        diff = (a - b) % modulus
        total += min(diff, modulus - diff)
    return Fraction(total, modulus)


def dist_fractions(x: Sequence[Fraction], y: Sequence[Fraction]) -> Fraction:
    """Same metric on exact rational coordinate tuples."""
    if len(x) != len(y):
        raise DimensionMismatch("vector lengths differ")
    total = Fraction(0)
    for a, b in zip(x, y):
        diff = (Fraction(a) - Fraction(b)) % 1
        total += min(diff, 1 - diff)
    return total


def norm_from_zero(x: TorusPoint) -> Fraction:
    """dist(x, 0) without building the zero point."""
    modulus = 1 << x.bits
    total = 0
    for c in x.coords:
        total += min(c, modulus - c)
    return Fraction(total, modulus)


def haar_sample(stream: Stream, dim: int, bits: int) -> TorusPoint:
    """Uniform sample on the 2**-bits grid, one stream draw per coordinate."""
    if bits < MIN_BITS:
        raise OutOfRange(f"precision must be >= {MIN_BITS} bits, got {bits}")
    return TorusPoint(tuple(stream.bits(bits) for _ in range(dim)), bits)


def ball_offset_sample(
    stream: Stream, dim: int, radius: Fraction, bits: int
) -> TorusPoint:
    """Uniform offset u with dist(0, u) < radius, by rejection from a box.

    Coordinates are drawn from the grid points of (-b, b) with b = min(radius,
    1/2); a draw is accepted when the exact l1 sum is below ``radius``.
    Acceptance is 1/d! for radius <= 1/2, fine for the supported dim <= 8.
    """
    radius = Fraction(radius)
    if not 0 < radius <= Fraction(dim, 2):
        raise OutOfRange(f"radius must be in (0, dim/2], got {radius}")
    modulus = 1 << bits
    box = min(radius, HALF)
    # Largest grid magnitude strictly inside the box: |i| < box * 2**bits.
    scaled = box * modulus
    magnitude = math.ceil(scaled) - 1
    if magnitude < 1:
        needed = (radius.denominator // radius.numerator).bit_length() + 1
        raise PrecisionExhausted(
            f"radius {radius} has no nonzero offsets at {bits} bits",
            required_bits=needed,
        )
    num, den = radius.numerator, radius.denominator
    while True:
        draws = [stream.symmetric(magnitude) for _ in range(dim)]
        if sum(abs(v) for v in draws) * den < num * modulus:
            return TorusPoint(tuple(v % modulus for v in draws), bits)


def ball_volume(dim: int, radius: Fraction) -> Fraction:
    """Haar measure of the metric ball of the given radius around 0.

    Valid for radius <= 1/2, where the ball unwraps to an l1 cross-polytope:
    (2r)^d / d!.
    """
    radius = Fraction(radius)
    if not 0 < radius <= HALF:
        raise OutOfRange(f"radius must be in (0, 1/2], got {radius}")
    return (2 * radius) ** dim / math.factorial(dim)
