"""Shrinking-ball averages of ergodic time averages.

The central quantity is the ball-restricted average of the running time
average: sample offsets u uniformly from a metric ball of radius r_k, evaluate
the k-step time average at center+u, and average over samples. Orbits are
split by linearity, orbit(center + u) = orbit(center) + orbit(u), computed
exactly in fixed point, so offsets far below the float scale never vanish by
absorption into the center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import ConfigError, DegenerateRadius, OutOfRange
from .observables import Observable
from .process import GeneratorRule, ProcessCache
from .rng import Stream
from .torus import TorusPoint, ball_offset_sample, haar_sample
from .weyl import (
    Character,
    Orbit,
    UdReport,
    _canonical_sign,
    frequency_box,
    star_discrepancy_1d,
)


@dataclass(frozen=True)
class StdResultRow:
    """One shrinking-ball average at horizon k."""

    k: int
    radius: Fraction
    alpha_hat: complex
    time_avg: complex
    target: complex | None
    mc_ci: float  # 3-sigma radius of the ball-sample mean
    samples: int

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "radius": str(self.radius),
            "alpha_hat": [self.alpha_hat.real, self.alpha_hat.imag],
            "time_avg": [self.time_avg.real, self.time_avg.imag],
            "target": None
            if self.target is None
            else [complex(self.target).real, complex(self.target).imag],
            "mc_ci": self.mc_ci,
            "samples": self.samples,
        }


def dyadic_grid(k_max: int) -> list[int]:
    """1, 2, 4, ..., k_max (k_max included even when not a power of two)."""
    if k_max < 1:
        raise OutOfRange("k_max must be >= 1")
    ks = []
    k = 1
    while k < k_max:
        ks.append(k)
        k *= 2
    ks.append(k_max)
    return ks


@dataclass
class StdRunConfig:
    """Everything needed to reproduce one shrinking-ball experiment."""

    rule: GeneratorRule
    observable: Observable
    k_max: int
    samples_per_ball: int = 64
    seed: int = 0
    radius_factor: Fraction = Fraction(1)  # scales the schedule, must be <= 1
    k_grid: Sequence[int] | None = None  # default: dyadic
    bits: int | None = None  # default: derived from the rule and k_max

    def __post_init__(self):
        if self.samples_per_ball < 16:
            raise ConfigError("samples_per_ball must be >= 16")
        self.radius_factor = Fraction(self.radius_factor)
        if not 0 < self.radius_factor <= 1:
            raise ConfigError(
                "radius_factor must be in (0, 1]: radii may never exceed the schedule"
            )

    def grid(self) -> list[int]:
        if self.k_grid is not None:
            ks = sorted(set(int(k) for k in self.k_grid))
            if not ks or ks[0] < 1 or ks[-1] > self.k_max:
                raise ConfigError("k_grid entries must lie in [1, k_max]")
            return ks
        return dyadic_grid(self.k_max)


def schedule_radius(cache: ProcessCache, k: int, factor: Fraction = Fraction(1)) -> Fraction:
    """Ball radius for step k: the schedule value scaled by ``factor``, capped
    to dim/2 so that the ball is a metric ball of the torus."""
    base = cache.radius_schedule(k) * Fraction(factor)
    return min(base, Fraction(cache.dim, 2))


def ergodic_time_average(
    cache: ProcessCache,
    x: TorusPoint,
    observable: Observable,
    k: int,
    orbit: Orbit | None = None,
) -> complex:
    """(1/k) sum_{i<k} f(P_i x), with the orbit reusable across observables."""
    if k < 1:
        raise OutOfRange("k must be >= 1")
    if orbit is None:
        orbit = Orbit(cache, x)
    pts = orbit.points(k)
    return sum(complex(observable.value(p)) for p in pts) / k


def _offset_orbit_values(
    cache: ProcessCache,
    center_points: list[TorusPoint],
    offset: TorusPoint,
    observable: Observable,
    k: int,
) -> complex:
    """Time average at center+offset using the exact linearity split."""
    total = 0j
    u = offset
    for i in range(k):
        if i > 0:
            u = cache.generator(i)(u)
        total += complex(observable.value(center_points[i] + u))
    return total / k


def std_average(
    cache: ProcessCache,
    center: TorusPoint,
    observable: Observable,
    k: int,
    radius: Fraction,
    samples: int,
    stream: Stream,
    center_orbit: Orbit | None = None,
) -> StdResultRow:
    """Monte Carlo shrinking-ball average around ``center`` at horizon k.

    Each of the ``samples`` ball offsets gets its own derived stream, so the
    result does not depend on evaluation order.
    """
    radius = Fraction(radius)
    if radius <= 0:
        raise OutOfRange("radius must be positive")
    if radius < Fraction(1, 1 << center.bits):
        raise DegenerateRadius(
            f"radius {radius} is below the grid step 2**-{center.bits}"
        )
    if center_orbit is None:
        center_orbit = Orbit(cache, center)
    pts = center_orbit.points(k)
    values = []
    for s in range(samples):
        u = ball_offset_sample(stream.child("ball", s), cache.dim, radius, center.bits)
        values.append(_offset_orbit_values(cache, pts, u, observable, k))
    mean = sum(values) / samples
    if samples > 1:
        spread = math.sqrt(
            math.fsum(abs(v - mean) ** 2 for v in values) / (samples - 1)
        )
    else:
        spread = 0.0
    time_avg = sum(complex(observable.value(p)) for p in pts) / k
    target = observable.integral(cache.dim)
    return StdResultRow(
        k=k,
        radius=radius,
        alpha_hat=mean,
        time_avg=time_avg,
        target=None if target is None else complex(target),
        mc_ci=3.0 * spread / math.sqrt(samples),
        samples=samples,
    )


def run_concentric(config: StdRunConfig) -> list[StdResultRow]:
    """Shrinking balls around one Haar-random center, over the k grid.

    The center orbit is materialized once to k_max and shared by every row.
    """
    cache = ProcessCache(config.rule)
    bits = config.bits if config.bits is not None else cache.required_bits(config.k_max)
    stream = Stream(config.seed)
    center = haar_sample(stream.child("center"), cache.dim, bits)
    orbit = Orbit(cache, center)
    rows = []
    for k in config.grid():
        radius = schedule_radius(cache, k, config.radius_factor)
        rows.append(
            std_average(
                cache,
                center,
                config.observable,
                k,
                radius,
                config.samples_per_ball,
                stream.child("k", k),
                center_orbit=orbit,
            )
        )
    return rows


def run_noncentric(config: StdRunConfig) -> list[StdResultRow]:
    """Shrinking balls with a fresh Haar-random center at every grid step.

    The row at horizon k uses the time average at the k-th center, so each row
    is a statistically independent draw of the same functional.
    """
    cache = ProcessCache(config.rule)
    bits = config.bits if config.bits is not None else cache.required_bits(config.k_max)
    stream = Stream(config.seed)
    rows = []
    for k in config.grid():
        center = haar_sample(stream.child("center", k), cache.dim, bits)
        radius = schedule_radius(cache, k, config.radius_factor)
        rows.append(
            std_average(
                cache,
                center,
                config.observable,
                k,
                radius,
                config.samples_per_ball,
                stream.child("k", k),
            )
        )
    return rows


@dataclass(frozen=True)
class ShiftReport:
    """Uniform-distribution diagnostics for a shifted random input sequence."""

    k: int
    gaps_label: str
    discrepancy: Fraction | None  # exact, dim 1 only
    ud: UdReport | None

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "gaps": self.gaps_label,
            "discrepancy": None if self.discrepancy is None else str(self.discrepancy),
            "discrepancy_float": None
            if self.discrepancy is None
            else float(self.discrepancy),
            "ud": self.ud.to_json() if self.ud else None,
        }


def run_shift_ud(
    rule: GeneratorRule,
    gaps: int | Sequence[int],
    k_max: int,
    seed: int | Stream,
    bits: int | None = None,
    char_box: int | None = None,
    threshold: float | None = None,
) -> ShiftReport:
    """Test uniform distribution of y_n = P_n g_{G_n} for i.i.d. Haar inputs.

    G_n is the running sum of the gaps. Only the consumed indices of the input
    sequence are ever drawn, each from a stream keyed by its index, so the
    result is independent of evaluation order and no infinite product is
    materialized.
    """
    cache = ProcessCache(rule)
    if k_max < 1:
        raise OutOfRange("k_max must be >= 1")
    if bits is None:
        bits = cache.required_bits(k_max)
    stream = seed if isinstance(seed, Stream) else Stream(seed)

    if isinstance(gaps, int):
        if gaps < 1:
            raise OutOfRange("gaps must be >= 1")
        gap_at = lambda n: gaps  # noqa: E731
        gaps_label = str(gaps)
    else:
        gap_list = [int(g) for g in gaps]
        if len(gap_list) < k_max:
            raise ConfigError(f"need at least {k_max} gaps, got {len(gap_list)}")
        if any(g < 1 for g in gap_list):
            raise OutOfRange("gaps must all be >= 1")
        gap_at = lambda n: gap_list[n - 1]  # noqa: E731
        gaps_label = ",".join(str(g) for g in gap_list[:8]) + (
            ",..." if len(gap_list) > 8 else ""
        )

    points = []
    index = 0  # running gap sum
    for n in range(k_max):
        if n > 0:
            index += gap_at(n)
        g = haar_sample(stream.child("g", index), cache.dim, bits)
        points.append(cache.product(n)(g))

    discrepancy = star_discrepancy_1d(points) if cache.dim == 1 else None
    ud = None
    if char_box is not None:
        chars = frequency_box(cache.dim, char_box)
        thr = threshold if threshold is not None else 3.0 / math.sqrt(k_max)
        ud = ud_test_points(points, chars, thr)
    return ShiftReport(k=k_max, gaps_label=gaps_label, discrepancy=discrepancy, ud=ud)


def ud_test_points(
    points: list[TorusPoint], characters: Sequence[Character], threshold: float
) -> UdReport:
    """Weyl test over an explicit finite point list (no process involved)."""
    k = len(points)
    computed: dict[tuple[int, ...], complex] = {}
    rows = []
    for char in characters:
        canon, mirrored = _canonical_sign(char.freq)
        if canon not in computed:
            c = Character(canon)
            computed[canon] = sum(c.value(p) for p in points) / k
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
