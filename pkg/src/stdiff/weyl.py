"""Characters, Weyl sums, uniform-distribution tests, and 1-d star discrepancy.

Phases are accumulated in exact fixed point (an integer mod 2**bits) and
converted to double precision only once, immediately before the complex
exponential; all precision risk is confined to that single rounding of
magnitude at most 2**-53.
"""

from __future__ import annotations

import cmath
import math
import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import DimensionMismatch, OutOfRange, UnsupportedDimension
from .process import ProcessCache
from .rng import Stream
from .torus import TorusPoint, fixed_to_float, haar_sample

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Character:
    """x -> exp(2 pi i m.x) for a nonzero integer frequency vector m."""

    freq: tuple[int, ...]

    def __post_init__(self):
        if not self.freq:
            raise DimensionMismatch("frequency vector must be nonempty")
        if all(f == 0 for f in self.freq):
            raise OutOfRange("the trivial character (all-zero frequency) is excluded")

    @property
    def dim(self) -> int:
        return len(self.freq)

    @property
    def norm_inf(self) -> int:
        return max(abs(f) for f in self.freq)

    @property
    def norm_l1(self) -> int:
        return sum(abs(f) for f in self.freq)

    def conjugate(self) -> "Character":
        return Character(tuple(-f for f in self.freq))

    def phase_numerator(self, point: TorusPoint) -> int:
        """Exact phase m.x mod 1, as an integer numerator over 2**bits."""
        if point.dim != self.dim:
            raise DimensionMismatch("character and point dimensions differ")
        return sum(m * c for m, c in zip(self.freq, point.coords)) % (1 << point.bits)

    def value(self, point: TorusPoint) -> complex:
        phase = fixed_to_float(self.phase_numerator(point), point.bits)
        return cmath.exp(complex(0.0, TWO_PI * phase))


def frequency_box(dim: int, max_norm: int) -> list[Character]:
    """All characters with 0 < ||m||_inf <= max_norm, in lexicographic order."""
    if max_norm < 1:
        raise OutOfRange("max_norm must be >= 1")
    out = []

    def rec(prefix: tuple[int, ...]):
        if len(prefix) == dim:
            if any(f != 0 for f in prefix):
                out.append(Character(prefix))
            return
        for v in range(-max_norm, max_norm + 1):
            rec(prefix + (v,))

    rec(())
    return out


class Orbit:
    """The trajectory x, P_1 x, P_2 x, ... materialized incrementally.

    One orbit is shared read-only by every character tested against it.
    """

    def __init__(self, cache: ProcessCache, start: TorusPoint):
        if start.dim != cache.dim:
            raise DimensionMismatch("start point dimension does not match the rule")
        self.cache = cache
        self.start = start
        self._points: list[TorusPoint] = [start]

    def extend_to(self, length: int) -> None:
        """Materialize points 0..length-1."""
        while len(self._points) < length:
            n = len(self._points)
            self._points.append(self.cache.generator(n)(self._points[-1]))

    def point(self, i: int) -> TorusPoint:
        self.extend_to(i + 1)
        return self._points[i]

    def points(self, length: int) -> list[TorusPoint]:
        self.extend_to(length)
        return self._points[:length]


class WeylSeries:
    """Running means S(k) = (1/k) sum_{i<k} char(P_i x), extendable in k."""

    def __init__(self, orbit: Orbit, character: Character):
        if character.dim != orbit.cache.dim:
            raise DimensionMismatch("character dimension does not match the rule")
        self.orbit = orbit
        self.character = character
        self._cumulative: list[complex] = [0j]  # entry k is sum over i < k

    def extend_to(self, k: int) -> None:
        while len(self._cumulative) <= k:
            i = len(self._cumulative) - 1
            term = self.character.value(self.orbit.point(i))
            self._cumulative.append(self._cumulative[-1] + term)

    def sum_at(self, k: int) -> complex:
        if k < 1:
            raise OutOfRange("k must be >= 1")
        self.extend_to(k)
        return self._cumulative[k] / k

    def abs_at(self, k: int) -> float:
        return abs(self.sum_at(k))


def weyl_sum(cache: ProcessCache, x: TorusPoint, character: Character, k: int) -> complex:
    """S(k, x) computed from a fresh orbit; see WeylSeries for incremental use."""
    series = WeylSeries(Orbit(cache, x), character)
    return series.sum_at(k)


def subsequence_bound_check(series: WeylSeries, k: int) -> bool:
    """|S(k)| <= |S(floor(sqrt(k))**2)| + 2/sqrt(k).

    A structural consequence of S being a running mean of unit-modulus terms;
    holds for every orbit, degenerate or not.
    """
    if k < 1:
        raise OutOfRange("k must be >= 1")
    root = math.isqrt(k)
    return series.abs_at(k) <= series.abs_at(root * root) + 2.0 / math.sqrt(k)


@dataclass(frozen=True)
class VarianceResult:
    k: int
    mean_sq: float
    ci: float  # 3-sigma confidence radius of the Monte Carlo mean
    n_samples: int

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "mean_sq": self.mean_sq,
            "ci": self.ci,
            "n_samples": self.n_samples,
        }


def variance_identity_mc(
    cache: ProcessCache,
    character: Character,
    ks: int | Sequence[int],
    n_samples: int,
    seed: int | Stream,
    bits: int | None = None,
) -> list[VarianceResult]:
    """Monte Carlo estimate of the Haar mean of |S(k, .)|^2 for each k.

    When the pairwise differences of the cumulative products are surjective up
    to max(ks), the exact mean is 1/k; running this against a process without
    that property (e.g. the identity rule) shows the mean stuck near 1 instead.
    One Haar sample drives every requested k via a single orbit pass.
    """
    k_list = [ks] if isinstance(ks, int) else sorted(set(int(k) for k in ks))
    if not k_list or k_list[0] < 1:
        raise OutOfRange("each k must be >= 1")
    k_max = k_list[-1]
    if bits is None:
        bits = cache.required_bits(k_max)
    stream = seed if isinstance(seed, Stream) else Stream(seed)
    targets = set(k_list)
    per_k: dict[int, list[float]] = {k: [] for k in k_list}
    for s in range(n_samples):
        x = haar_sample(stream.child("sample", s), cache.dim, bits)
        running = 0j
        point = x
        for i in range(k_max):
            if i > 0:
                point = cache.generator(i)(point)
            running += character.value(point)
            if (i + 1) in targets:
                mean = running / (i + 1)
                per_k[i + 1].append(abs(mean) ** 2)
    out = []
    for k in k_list:
        values = per_k[k]
        mean = math.fsum(values) / n_samples
        sd = statistics.stdev(values) if n_samples > 1 else 0.0
        out.append(
            VarianceResult(
                k=k, mean_sq=mean, ci=3.0 * sd / math.sqrt(n_samples), n_samples=n_samples
            )
        )
    return out


@dataclass(frozen=True)
class UdReport:
    k: int
    threshold: float
    max_abs: float
    passed: bool
    per_char: tuple[tuple[tuple[int, ...], complex], ...]

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "threshold": self.threshold,
            "max_abs": self.max_abs,
            "passed": self.passed,
            "per_char": [
                {"freq": list(freq), "re": z.real, "im": z.imag, "abs": abs(z)}
                for freq, z in self.per_char
            ],
        }


def default_threshold(k: int, scale: float = 3.0) -> float:
    """Chebyshev-motivated pass threshold: scale / sqrt(k)."""
    return scale / math.sqrt(k)


def _canonical_sign(freq: tuple[int, ...]) -> tuple[tuple[int, ...], bool]:
    for f in freq:
        if f > 0:
            return freq, False
        if f < 0:
            return tuple(-v for v in freq), True
    raise OutOfRange("zero frequency")


def ud_test(
    cache: ProcessCache,
    x: TorusPoint,
    characters: Sequence[Character],
    k: int,
    threshold: float,
    orbit: Orbit | None = None,
) -> UdReport:
    """Pass iff max over the character set of |S(k, x)| is within the threshold.

    The orbit is computed once and shared; mirrored frequencies reuse the
    conjugate sum, which is exact.
    """
    if orbit is None:
        orbit = Orbit(cache, x)
    orbit.extend_to(k)
    computed: dict[tuple[int, ...], complex] = {}
    rows = []
    for char in characters:
        canon, mirrored = _canonical_sign(char.freq)
        if canon not in computed:
            computed[canon] = WeylSeries(orbit, Character(canon)).sum_at(k)
        value = computed[canon].conjugate() if mirrored else computed[canon]
        rows.append((char.freq, value))
    max_abs = max(abs(z) for _, z in rows)
    return UdReport(
        k=k,
        threshold=threshold,
        max_abs=max_abs,
        passed=max_abs <= threshold,
        per_char=tuple(rows),
    )


def star_discrepancy_1d(points: Iterable[TorusPoint]) -> Fraction:
    """Exact star discrepancy of a finite 1-d point set.

    Sorting the values u_(1) <= ... <= u_(k), the maximum of
    |i/k - u_(i)| and |u_(i) - (i-1)/k| over i realizes the supremum over all
    anchored intervals [0, t). Computed in integer arithmetic, so the result
    is an exact rational in [0, 1].
    """
    pts = list(points)
    if not pts:
        raise OutOfRange("at least one point is required")
    if any(p.dim != 1 for p in pts):
        raise UnsupportedDimension("star discrepancy is implemented for dim 1 only")
    k = len(pts)
    bits = max(p.bits for p in pts)
    values = sorted(p.with_bits(bits).coords[0] for p in pts)
    modulus = 1 << bits
    best = 0  # numerator over k * 2**bits
    for i, u in enumerate(values, start=1):
        ku = k * u
        best = max(best, abs(i * modulus - ku), abs(ku - (i - 1) * modulus))
    return Fraction(best, k * modulus)
