"""Constructive witnesses for pathological shrinking-ball behavior.

The constructions here exhibit, with exact certificates, points whose orbit
time averages of a tent observable stay high for a prescribed window (because
the point sits near a kernel point of a cumulative product, and everything
after the absorbing index lands at 0), or oscillate between a high early
average and a low late average. Neighborhoods are certified by Lipschitz
back-propagation: the certificate is arithmetic, not sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import OutOfRange, SearchBudgetExceeded, WitnessNotFound
from .kernels import KERNEL_POINT_CAP, kernel_points
from .observables import TentFunction
from .process import CantorMultipliersRule, ProcessCache, difference_property_check
from .rng import Stream
from .torus import ball_offset_sample, dist_fractions, haar_sample

Vector = tuple[Fraction, ...]


def _int_nth_root(value: int, n: int) -> int:
    """Largest r with r**n <= value (value >= 0)."""
    if value < 0:
        raise OutOfRange("value must be nonnegative")
    if value == 0:
        return 0
    r = 1 << (value.bit_length() // n + 1)
    while True:
        nxt = ((n - 1) * r + value // r ** (n - 1)) // n
        if nxt >= r:
            break
        r = nxt
    while r**n > value:
        r -= 1
    return r


def small_ball_delta(dim: int, epsilon: Fraction, grid_bits: int = 24) -> Fraction:
    """Largest grid rational delta in (0, 1/2) whose ball has measure < epsilon.

    Inverts (2 delta)^d / d! < epsilon in integers and rounds down to the
    2**-grid_bits grid, so the strict inequality is certified exactly.
    """
    epsilon = Fraction(epsilon)
    if not 0 < epsilon <= 1:
        raise OutOfRange("epsilon must be in (0, 1]")
    # a/2**g qualifies iff a**d * q < p * d! * 2**((g-1)d) for epsilon = p/q.
    g = grid_bits
    rhs = epsilon.numerator * math.factorial(dim) * (1 << ((g - 1) * dim))
    a = _int_nth_root((rhs - 1) // epsilon.denominator, dim)
    while a**dim * epsilon.denominator >= rhs:
        a -= 1
    a = min(a, (1 << (g - 1)) - 1)  # keep delta strictly below 1/2
    if a < 1:
        raise OutOfRange(
            f"no grid delta at {g} bits has ball measure below {epsilon}"
        )
    return Fraction(a, 1 << g)


def tent_integral(delta: Fraction, dim: int) -> Fraction:
    """Exact Haar integral of the tent of width delta on the d-torus.

    Splits as (measure of the inner ball) plus the shell integral via the
    radial volume 2^d t^d / d!; for d = 1 this reduces to 3 delta / 2.
    """
    delta = Fraction(delta)
    if not 0 < delta < Fraction(1, 2):
        raise OutOfRange("delta must be in (0, 1/2)")
    d = dim
    fact = math.factorial(d)
    half = delta / 2

    def vol(t: Fraction) -> Fraction:
        return (2 * t) ** d / fact

    def antiderivative(t: Fraction) -> Fraction:
        # integral of (2 - 2t/delta) * vol'(t); vol'(t) = 2^d d t^(d-1) / d!
        return Fraction(2**d * d, fact) * (
            2 * t**d / d - 2 * t ** (d + 1) / (delta * (d + 1))
        )

    return vol(half) + antiderivative(delta) - antiderivative(half)


# ---------------------------------------------------------------------------
# Rational-orbit plumbing (integer numerators over one common denominator)
# ---------------------------------------------------------------------------


def _to_common_denominator(coords: Sequence[Fraction]) -> tuple[tuple[int, ...], int]:
    den = math.lcm(*(c.denominator for c in coords)) if coords else 1
    return tuple(int(c * den) % den if den > 1 else 0 for c in coords), max(den, 1)


def _tent_value(nums: tuple[int, ...], den: int, tent: TentFunction) -> Fraction:
    total = sum(min(c, den - c) if c else 0 for c in nums)
    return tent.value_of_distance(Fraction(total, den))


def _orbit_numerators(cache: ProcessCache, nums: tuple[int, ...], den: int):
    """Yield the integer numerator vectors of the orbit of nums/den, forever."""
    current = nums
    yield current
    n = 1
    while True:
        gen = cache.generator(n)
        current = tuple(
            sum(a * c for a, c in zip(row, current)) % den for row in gen.rows
        )
        yield current
        n += 1


def _rational_orbit_tent_sums(
    cache: ProcessCache,
    nums: tuple[int, ...],
    den: int,
    tent: TentFunction,
    checkpoints: Sequence[int],
) -> dict[int, Fraction]:
    """Exact tent averages of the orbit of nums/den at each checkpoint horizon."""
    targets = sorted(set(checkpoints))
    out: dict[int, Fraction] = {}
    total = Fraction(0)
    steps = _orbit_numerators(cache, nums, den)
    for i in range(targets[-1]):
        total += _tent_value(next(steps), den, tent)
        if (i + 1) in targets:
            out[i + 1] = total / (i + 1)
    return out


# ---------------------------------------------------------------------------
# Concentrated windows near kernel points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeagerWitness:
    """A certified neighborhood whose orbits concentrate at 0 for a window.

    Every x with dist(x, point) < neighborhood_radius has its orbit inside the
    half-width tent ball for all indices in [kernel_index, horizon); the
    guaranteed in-ball fraction at the horizon is window_length / horizon.
    """

    kernel_index: int  # m: the point is in the kernel of P_m
    point: Vector
    window_length: int  # L
    horizon: int  # m + L
    neighborhood_radius: Fraction  # w
    achieved_fraction: Fraction  # L / (m + L), certified for the whole neighborhood
    delta: Fraction
    epsilon: Fraction

    def to_json(self) -> dict:
        return {
            "kernel_index": self.kernel_index,
            "point": [str(c) for c in self.point],
            "window_length": self.window_length,
            "horizon": self.horizon,
            "neighborhood_radius": str(self.neighborhood_radius),
            "achieved_fraction": str(self.achieved_fraction),
            "delta": str(self.delta),
            "epsilon": str(self.epsilon),
        }


def _kernel_point_in_ball(
    cache: ProcessCache,
    m: int,
    center: Vector | None,
    radius: Fraction | None,
    det_cap: int,
) -> Vector | None:
    """A kernel point of P_m inside the target ball, or None."""
    dim = cache.dim
    if m == 0:
        zero = (Fraction(0),) * dim
        if center is None or dist_fractions(center, zero) < radius:
            return zero
        return None
    det = cache.det_product(m)
    if det == 0:
        return None
    rule = cache.rule
    if dim == 1:
        # Equispaced kernel {j / |det|}: the nearest point is found directly.
        q = abs(det)
        if center is None:
            return (Fraction(0),)
        j = round(center[0] * q)
        candidate = (Fraction(j, q) % 1,)
        if dist_fractions(center, candidate) < radius:
            return candidate
        return None
    if abs(det) > det_cap:
        raise SearchBudgetExceeded(
            f"|det P_{m}| = {abs(det)} exceeds the kernel enumeration cap"
        )
    lattice = kernel_points(cache.product(m), cap=det_cap)
    if center is None:
        return lattice.points[0]
    for p in lattice.points:
        if dist_fractions(center, p) < radius:
            return p
    return None


def concentrated_window(
    cache: ProcessCache,
    delta: Fraction,
    epsilon: Fraction,
    min_window: int,
    target_center: Vector | None = None,
    target_radius: Fraction | None = None,
    m_max: int = 64,
    det_cap: int = KERNEL_POINT_CAP,
) -> MeagerWitness:
    """Find a kernel point in the target ball and certify its window.

    The window length L satisfies L >= min_window and m / (m + L) < epsilon,
    so at the horizon m + L the in-ball fraction is at least 1 - epsilon. The
    neighborhood radius shrinks the half-width ball back through the first
    m + L steps by the cached column norms.
    """
    delta = Fraction(delta)
    epsilon = Fraction(epsilon)
    if not 0 < epsilon < 1:
        raise OutOfRange("epsilon must be in (0, 1)")
    if target_center is not None and (target_radius is None or target_radius <= 0):
        raise OutOfRange("a target center needs a positive radius")

    found = None
    for m in range(0, m_max + 1):
        point = _kernel_point_in_ball(cache, m, target_center, target_radius, det_cap)
        if point is not None:
            found = (m, point)
            break
    if found is None:
        raise WitnessNotFound(
            f"no kernel point inside the target ball for indices up to {m_max}"
        )
    m, point = found

    if m == 0:
        window_floor = 1
    else:
        # Smallest L with m / (m + L) < epsilon.
        window_floor = math.floor(m * (1 - epsilon) / epsilon) + 1
    length = max(min_window, window_floor)
    horizon = m + length

    norms = [cache.product(m + off).col_norm() for off in range(length)]
    width = (delta / 2) / max(norms)

    witness = MeagerWitness(
        kernel_index=m,
        point=point,
        window_length=length,
        horizon=horizon,
        neighborhood_radius=width,
        achieved_fraction=Fraction(length, horizon),
        delta=delta,
        epsilon=epsilon,
    )
    _certify_window(cache, witness)
    return witness


def _certify_window(cache: ProcessCache, witness: MeagerWitness) -> None:
    """Exact re-check of a window certificate; raises on any violation."""
    m, length = witness.kernel_index, witness.window_length
    if witness.horizon != m + length:
        raise AssertionError("horizon does not match kernel index + window length")
    if witness.achieved_fraction != Fraction(length, witness.horizon):
        raise AssertionError("certified fraction mismatch")
    if witness.achieved_fraction < 1 - witness.epsilon:
        raise AssertionError("window too short for the requested concentration")
    # The point is annihilated from index m on.
    image = cache.product(m).apply_fractions(witness.point)
    if any(c % 1 != 0 for c in image):
        raise AssertionError("point is not in the kernel of the cumulative product")
    # Lipschitz back-propagation: w * ||P_{m+off}|| <= delta / 2 for the window.
    half = witness.delta / 2
    for off in range(length):
        if witness.neighborhood_radius * cache.product(m + off).col_norm() > half:
            raise AssertionError("neighborhood radius fails the Lipschitz certificate")


# ---------------------------------------------------------------------------
# High-average witnesses and oscillation witnesses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConcentrationReport:
    """A point whose tent time average at some horizon >= K is at least 2/3."""

    witness: MeagerWitness
    horizon: int
    window_average: Fraction  # exact tent average of the witness point's orbit

    def to_json(self) -> dict:
        return {
            "kind": "concentration",
            "witness": self.witness.to_json(),
            "horizon": self.horizon,
            "window_average": str(self.window_average),
        }


def concentration_witness(
    cache: ProcessCache,
    min_horizon: int,
    target_center: Vector | None = None,
    target_radius: Fraction | None = None,
    delta: Fraction | None = None,
    m_max: int = 64,
) -> ConcentrationReport:
    """Exhibit a point near the target whose tent average is >= 2/3 at some
    horizon >= min_horizon.

    The tent width defaults to the largest grid delta with ball measure below
    1/2. The witness is a kernel point: its orbit is absorbed at 0, so the
    average is provably at least the certified window fraction, and the exact
    value is recomputed from the orbit.
    """
    if delta is None:
        delta = small_ball_delta(cache.dim, Fraction(1, 2))
    witness = concentrated_window(
        cache,
        delta,
        Fraction(1, 3),
        min_window=min_horizon,
        target_center=target_center,
        target_radius=target_radius,
        m_max=m_max,
    )
    tent = TentFunction(delta)
    nums, den = _to_common_denominator(witness.point)
    averages = _rational_orbit_tent_sums(cache, nums, den, tent, [witness.horizon])
    avg = averages[witness.horizon]
    if avg < Fraction(2, 3):
        raise AssertionError("window average fell below 2/3 despite the certificate")
    return ConcentrationReport(
        witness=witness, horizon=witness.horizon, window_average=avg
    )


def tent_average_baseline(
    cache: ProcessCache,
    delta: Fraction,
    k: int,
    seed: int | Stream,
    bits: int | None = None,
) -> float:
    """Tent time average along the orbit of one Haar-random point."""
    if bits is None:
        bits = cache.required_bits(k)
    stream = seed if isinstance(seed, Stream) else Stream(seed)
    x = haar_sample(stream.child("baseline"), cache.dim, bits)
    tent = TentFunction(Fraction(delta))
    total = 0.0
    point = x
    for i in range(k):
        if i > 0:
            point = cache.generator(i)(point)
        total += float(tent.value_point(point))
    return total / k


@dataclass(frozen=True)
class OscillationReport:
    """A point whose tent averages differ by more than 1/2 - 2*tol between two
    horizons, so the running average cannot converge gracefully."""

    point_numerators: tuple[int, ...]
    denominator: int
    kernel_index: int
    high_horizon: int  # L
    low_horizon: int  # N
    high_average: Fraction
    low_average: Fraction
    delta: Fraction
    tolerance: Fraction

    @property
    def gap(self) -> Fraction:
        return self.high_average - self.low_average

    def point_fractions(self) -> Vector:
        return tuple(Fraction(n, self.denominator) for n in self.point_numerators)

    def to_json(self) -> dict:
        return {
            "kind": "oscillation",
            "point": [str(f) for f in self.point_fractions()],
            "kernel_index": self.kernel_index,
            "high_horizon": self.high_horizon,
            "low_horizon": self.low_horizon,
            "high_average": str(self.high_average),
            "low_average": str(self.low_average),
            "delta": str(self.delta),
            "tolerance": str(self.tolerance),
        }


def oscillation_witness(
    cache: ProcessCache,
    min_horizon: int,
    seed: int | Stream = 0,
    delta: Fraction | None = None,
    tolerance: Fraction = Fraction(1, 32),
    horizon_budget: int = 8192,
    dp_check_horizon: int = 8,
) -> OscillationReport:
    """Exhibit a point with a high early tent average and a low late one.

    Construction: take a certified concentration window around a kernel point
    (early average >= 7/8 at some horizon L >= min_horizon), then perturb the
    kernel point by a random offset strictly inside the certified
    neighborhood. The perturbation preserves the window exactly, while making
    the tail of the orbit behave like that of a typical point, whose tent
    average falls to the tent integral (< 1/8). The drop below 3/8 + tol is
    then located by exact evaluation at doubling horizons.
    """
    delta = small_ball_delta(cache.dim, Fraction(1, 8)) if delta is None else Fraction(delta)
    tolerance = Fraction(tolerance)
    stream = seed if isinstance(seed, Stream) else Stream(seed)

    # A typical tail needs almost-every-point equidistribution, which the
    # pairwise-difference surjectivity delivers; fail fast when it is absent.
    dp = difference_property_check(cache, max(2, dp_check_horizon), keep_dets=False)
    if not dp.ok:
        raise WitnessNotFound(
            f"pairwise-difference check failed at {dp.failing_pair}; "
            "the late average has no reason to fall"
        )

    witness = concentrated_window(
        cache, delta, Fraction(1, 8), min_window=min_horizon
    )
    high_horizon = witness.horizon

    bits = cache.required_bits(horizon_budget)
    offset = ball_offset_sample(
        stream.child("offset"), cache.dim, witness.neighborhood_radius / 2, bits
    )
    offset_fracs = offset.as_fractions()
    point = tuple(
        (a + u) % 1 for a, u in zip(witness.point, offset_fracs)
    )
    nums, den = _to_common_denominator(point)
    tent = TentFunction(delta)

    low_target = Fraction(3, 8) + tolerance
    checkpoints = [high_horizon]
    n = max(4 * high_horizon, 64)
    while n <= horizon_budget:
        checkpoints.append(n)
        n *= 2
    averages = _rational_orbit_tent_sums(cache, nums, den, tent, checkpoints)

    high_average = averages[high_horizon]
    if high_average < Fraction(7, 8) - tolerance:
        raise AssertionError("window average fell below 7/8 despite the certificate")
    low_horizon = None
    for n in checkpoints[1:]:
        if averages[n] <= low_target:
            low_horizon = n
            break
    if low_horizon is None:
        raise WitnessNotFound(
            f"tent average did not fall below {low_target} within {horizon_budget} steps"
        )
    report = OscillationReport(
        point_numerators=nums,
        denominator=den,
        kernel_index=witness.kernel_index,
        high_horizon=high_horizon,
        low_horizon=low_horizon,
        high_average=high_average,
        low_average=averages[low_horizon],
        delta=delta,
        tolerance=tolerance,
    )
    if report.gap <= Fraction(1, 2) - 2 * tolerance:
        raise AssertionError("oscillation gap certificate failed")
    return report


# ---------------------------------------------------------------------------
# Certificate replay
# ---------------------------------------------------------------------------


def recertify_concentration(cache: ProcessCache, report: ConcentrationReport) -> bool:
    """Recompute a concentration certificate from scratch; exact comparison."""
    _certify_window(cache, report.witness)
    tent = TentFunction(report.witness.delta)
    nums, den = _to_common_denominator(report.witness.point)
    averages = _rational_orbit_tent_sums(cache, nums, den, tent, [report.horizon])
    return (
        averages[report.horizon] == report.window_average
        and report.window_average >= Fraction(2, 3)
    )


def recertify_oscillation(cache: ProcessCache, report: OscillationReport) -> bool:
    """Recompute both oscillation averages from scratch; exact comparison."""
    tent = TentFunction(report.delta)
    averages = _rational_orbit_tent_sums(
        cache,
        report.point_numerators,
        report.denominator,
        tent,
        [report.high_horizon, report.low_horizon],
    )
    return (
        averages[report.high_horizon] == report.high_average
        and averages[report.low_horizon] == report.low_average
        and report.gap > Fraction(1, 2) - 2 * report.tolerance
    )
