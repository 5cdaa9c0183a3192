"""Finite decoy-state estimation of photon-number yields and error rates.

Each observation gives a gain ``Q`` and QBER ``E`` at a packet intensity
``x``.  For a Poissonian source ``Q e^x = sum_n Y_n x^n / n!`` and
``E Q e^x = sum_n e_n Y_n x^n / n!``; divided differences of these sums over
the decoy intensities isolate ``Y_1, Y_2, Y_3`` (and ``e_1..e_3``) up to
nonnegative higher-order terms, which are bounded using the signal.

All formulas here take packet intensities ``x = L * v``.  Written that way
the packet length drops out; the per-pulse forms differ only by powers of
``L`` that cancel.

Observation subsets are nested so that a tier's lower-order bounds never
depend on the extra decoys of a higher tier: with decoys ``d0 > d1 > ... >
d_last`` (``d_last`` normally the vacuum), ``Y0`` and ``Y1, e1`` use
``(d0, d_last)``, ``Y2, e2`` use ``(d0, d1, d_last)`` and ``Y3, e3`` use
``(d0, d1, d2, d_last)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .channel import ChannelParams
from .errors import (
    DomainError,
    InsufficientObservationsError,
    OrderingError,
)
from .rates import DecoyTier

#: Default decoy intensities as fractions of the signal intensity.
DEFAULT_FRACTIONS: dict[DecoyTier, tuple[float, ...]] = {
    DecoyTier.TWO: (0.5, 0.0),
    DecoyTier.THREE: (0.5, 0.25, 0.0),
    DecoyTier.FOUR: (0.5, 0.25, 0.125, 0.0),
}

_TIER_BY_DECOYS = {2: DecoyTier.TWO, 3: DecoyTier.THREE, 4: DecoyTier.FOUR}


@dataclass(frozen=True)
class DecoyObservation:
    """Measured gain and QBER at one packet intensity."""

    packet_intensity: float
    Q: float
    E: float

    def __post_init__(self) -> None:
        if not self.packet_intensity >= 0.0:
            raise DomainError(f"intensity must be >= 0, got {self.packet_intensity!r}")
        if not 0.0 <= self.Q <= 1.0:
            raise DomainError(f"gain must lie in [0, 1], got {self.Q!r}")
        if not 0.0 <= self.E <= 1.0:
            raise DomainError(f"QBER must lie in [0, 1], got {self.E!r}")

    @property
    def scaled_gain(self) -> float:
        """Q * exp(x), formed in log space."""
        if self.Q == 0.0:
            return 0.0
        return math.exp(math.log(self.Q) + self.packet_intensity)

    @property
    def scaled_error_gain(self) -> float:
        """E * Q * exp(x), formed in log space."""
        if self.Q == 0.0 or self.E == 0.0:
            return 0.0
        return math.exp(math.log(self.E) + math.log(self.Q) + self.packet_intensity)


@dataclass(frozen=True)
class YieldBounds:
    """Lower bounds on Y0..Y3 and upper bounds on e1..e3.

    Entries beyond the tier's photon number are ``None``.  ``vacuous`` names
    the bounds that carry no information (yield clamped to 0, error to 1).
    """

    tier: DecoyTier
    Y0_L: float
    Y1_L: float
    e1_U: float
    Y2_L: Optional[float] = None
    e2_U: Optional[float] = None
    Y3_L: Optional[float] = None
    e3_U: Optional[float] = None
    vacuous: frozenset[str] = field(default_factory=frozenset)

    def yields(self) -> tuple[Optional[float], ...]:
        return (self.Y0_L, self.Y1_L, self.Y2_L, self.Y3_L)[: self.tier.n_th + 1]

    def errors(self) -> tuple[Optional[float], ...]:
        return (self.e1_U, self.e2_U, self.e3_U)[: self.tier.n_th]

    def project(self, tier: DecoyTier) -> "YieldBounds":
        """The same bounds restricted to a lower tier."""
        tier = DecoyTier(tier)
        if tier.n_th > self.tier.n_th:
            raise DomainError(f"cannot project {self.tier.value} bounds up to {tier.value}")
        dropped = {2: ("Y2_L", "e2_U"), 3: ("Y3_L", "e3_U")}
        kw: dict = {"tier": tier}
        for n in range(tier.n_th + 1, 4):
            for name in dropped[n]:
                kw[name] = None
        keep = frozenset(v for v in self.vacuous if v[1] == "0" or int(v[1]) <= tier.n_th)
        return replace(self, vacuous=keep, **kw)


def _clamp(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def _require_decreasing(*obs: DecoyObservation) -> None:
    xs = [o.packet_intensity for o in obs]
    if any(a <= b for a, b in zip(xs, xs[1:])):
        raise OrderingError(f"intensities must be strictly decreasing, got {xs}")


def bound_Y0(obs_v1: DecoyObservation, obs_v2: DecoyObservation) -> float:
    """Lower bound on the background yield; exact when the second intensity is 0."""
    _require_decreasing(obs_v1, obs_v2)
    a, b = obs_v1.packet_intensity, obs_v2.packet_intensity
    value = (a * obs_v2.scaled_gain - b * obs_v1.scaled_gain) / (a - b)
    return _clamp(value)


def bound_Y1(
    obs_mu: DecoyObservation, obs_v1: DecoyObservation, obs_v2: DecoyObservation, Y0_L: float
) -> float:
    """Lower bound on the single-photon yield."""
    _require_decreasing(obs_mu, obs_v1, obs_v2)
    m, a, b = obs_mu.packet_intensity, obs_v1.packet_intensity, obs_v2.packet_intensity
    denom = m * a - m * b - a * a + b * b
    if denom <= 0.0:
        raise OrderingError("Y1 bound needs signal > v1 + v2")
    value = (m / denom) * (
        obs_v1.scaled_gain
        - obs_v2.scaled_gain
        - (a * a - b * b) / (m * m) * (obs_mu.scaled_gain - Y0_L)
    )
    return _clamp(value)


def _second_difference(values: Sequence[float], x: Sequence[float]) -> float:
    x1, x2, x3 = x
    return (x2 - x3) * values[0] - (x1 - x3) * values[1] + (x1 - x2) * values[2]


def _third_divided_difference(values: Sequence[float], x: Sequence[float]) -> float:
    total = 0.0
    for i in range(4):
        denom = 1.0
        for j in range(4):
            if j != i:
                denom *= x[i] - x[j]
        total += values[i] / denom
    return total


def bound_Y2(
    obs_mu: DecoyObservation,
    obs_v1: DecoyObservation,
    obs_v2: DecoyObservation,
    obs_v3: DecoyObservation,
    Y0_L: float,
    Y1_L: float,
) -> float:
    """Lower bound on the two-photon yield."""
    _require_decreasing(obs_mu, obs_v1, obs_v2, obs_v3)
    obs = (obs_v1, obs_v2, obs_v3)
    x = [o.packet_intensity for o in obs]
    m, s = obs_mu.packet_intensity, sum(x)
    if m <= s:
        raise OrderingError("Y2 bound needs signal > v1 + v2 + v3")
    spread = (x[0] - x[1]) * (x[0] - x[2]) * (x[1] - x[2])
    diff = _second_difference([o.scaled_gain for o in obs], x)
    rest = obs_mu.scaled_gain - Y0_L - Y1_L * m
    value = 2.0 * m * diff / ((m - s) * spread) - 2.0 * s / (m * m * (m - s)) * rest
    return _clamp(value)


def bound_Y3(
    obs_mu: DecoyObservation,
    obs_v1: DecoyObservation,
    obs_v2: DecoyObservation,
    obs_v3: DecoyObservation,
    obs_v4: DecoyObservation,
    Y0_L: float,
    Y1_L: float,
    Y2_L: float,
) -> float:
    """Lower bound on the three-photon yield."""
    _require_decreasing(obs_mu, obs_v1, obs_v2, obs_v3, obs_v4)
    obs = (obs_v1, obs_v2, obs_v3, obs_v4)
    x = [o.packet_intensity for o in obs]
    m, s = obs_mu.packet_intensity, sum(x)
    if m <= s:
        raise OrderingError("Y3 bound needs signal > v1 + v2 + v3 + v4")
    diff = _third_divided_difference([o.scaled_gain for o in obs], x)
    rest = obs_mu.scaled_gain - Y0_L - Y1_L * m - Y2_L * m * m / 2.0
    value = 6.0 * m * diff / (m - s) - 6.0 * s / ((m - s) * m**3) * rest
    return _clamp(value)


def bound_e1(obs_v1: DecoyObservation, obs_v2: DecoyObservation, Y1_L: float) -> float:
    """Upper bound on the single-photon error rate; 1 when ``Y1_L`` is 0."""
    _require_decreasing(obs_v1, obs_v2)
    if Y1_L <= 0.0:
        return 1.0
    a, b = obs_v1.packet_intensity, obs_v2.packet_intensity
    return _clamp((obs_v1.scaled_error_gain - obs_v2.scaled_error_gain) / ((a - b) * Y1_L))


def bound_e2(
    obs_v1: DecoyObservation, obs_v2: DecoyObservation, obs_v3: DecoyObservation, Y2_L: float
) -> float:
    """Upper bound on the two-photon error rate; 1 when ``Y2_L`` is 0."""
    _require_decreasing(obs_v1, obs_v2, obs_v3)
    if Y2_L <= 0.0:
        return 1.0
    obs = (obs_v1, obs_v2, obs_v3)
    x = [o.packet_intensity for o in obs]
    spread = (x[0] - x[1]) * (x[0] - x[2]) * (x[1] - x[2])
    diff = _second_difference([o.scaled_error_gain for o in obs], x)
    return _clamp(2.0 * diff / (Y2_L * spread))


def bound_e3(
    obs_v1: DecoyObservation,
    obs_v2: DecoyObservation,
    obs_v3: DecoyObservation,
    obs_v4: DecoyObservation,
    Y3_L: float,
) -> float:
    """Upper bound on the three-photon error rate; 1 when ``Y3_L`` is 0."""
    _require_decreasing(obs_v1, obs_v2, obs_v3, obs_v4)
    if Y3_L <= 0.0:
        return 1.0
    obs = (obs_v1, obs_v2, obs_v3, obs_v4)
    x = [o.packet_intensity for o in obs]
    diff = _third_divided_difference([o.scaled_error_gain for o in obs], x)
    return _clamp(6.0 * diff / Y3_L)


def infer_tier(observations: Sequence[DecoyObservation]) -> DecoyTier:
    """Highest tier supported by a signal-plus-decoys observation list."""
    n_decoys = len(observations) - 1
    if n_decoys < 2:
        raise InsufficientObservationsError(
            f"need a signal and at least two decoys, got {len(observations)} observations"
        )
    return _TIER_BY_DECOYS[min(n_decoys, 4)]


def estimate_bounds(tier: DecoyTier, observations: Sequence[DecoyObservation]) -> YieldBounds:
    """Run the bound formulas a tier needs.

    ``observations[0]`` is the signal; the rest are decoys in strictly
    decreasing intensity order.
    """
    tier = DecoyTier(tier)
    if not tier.is_finite:
        raise DomainError(f"no decoy bounds for tier {tier.value!r}")
    if len(observations) < 1 + tier.n_decoys:
        raise InsufficientObservationsError(
            f"tier {tier.value} needs a signal and {tier.n_decoys} decoys, "
            f"got {len(observations)} observations"
        )
    _require_decreasing(*observations)
    sig, decoys = observations[0], list(observations[1:])
    last = decoys[-1]
    vacuous = set()

    Y0_L = bound_Y0(decoys[0], last)
    Y1_L = bound_Y1(sig, decoys[0], last, Y0_L)
    e1_U = bound_e1(decoys[0], last, Y1_L)
    for name, value, empty in (("Y0_L", Y0_L, 0.0), ("Y1_L", Y1_L, 0.0), ("e1_U", e1_U, 1.0)):
        if value == empty:
            vacuous.add(name)
    kw: dict = {}
    if tier.n_th >= 2:
        kw["Y2_L"] = bound_Y2(sig, decoys[0], decoys[1], last, Y0_L, Y1_L)
        kw["e2_U"] = bound_e2(decoys[0], decoys[1], last, kw["Y2_L"])
    if tier.n_th >= 3:
        kw["Y3_L"] = bound_Y3(sig, decoys[0], decoys[1], decoys[2], last, Y0_L, Y1_L, kw["Y2_L"])
        kw["e3_U"] = bound_e3(decoys[0], decoys[1], decoys[2], last, kw["Y3_L"])
    for name, value in kw.items():
        if value == (0.0 if name.startswith("Y") else 1.0):
            vacuous.add(name)
    # Y0 from a vacuum decoy is the exact background, never "vacuous"
    if last.packet_intensity == 0.0:
        vacuous.discard("Y0_L")
    return YieldBounds(tier=tier, Y0_L=Y0_L, Y1_L=Y1_L, e1_U=e1_U, vacuous=frozenset(vacuous), **kw)


def default_decoy_intensities(tier: DecoyTier, mu: float) -> tuple[float, ...]:
    """Per-pulse decoy intensities for ``tier`` at signal intensity ``mu``."""
    return tuple(c * mu for c in DEFAULT_FRACTIONS[DecoyTier(tier)])


def simulate_observation(ch: ChannelParams, intensity: float, L: int) -> DecoyObservation:
    """No-eavesdropper WCP observation at per-pulse ``intensity``."""
    x = L * intensity
    detected = -math.expm1(-x * ch.eta)
    Q = ch.Y0 + (1.0 - ch.Y0) * detected
    EQ = ch.e0 * ch.Y0 + ch.e_d * (1.0 - ch.Y0) * detected
    return DecoyObservation(packet_intensity=x, Q=Q, E=EQ / Q if Q > 0.0 else 0.0)


def simulate_observations(
    ch: ChannelParams, mu: float, decoy_intensities: Iterable[float], L: int
) -> list[DecoyObservation]:
    """Signal followed by decoy observations, all from the channel model."""
    return [simulate_observation(ch, v, L) for v in (mu, *decoy_intensities)]


def read_observations_csv(path: str | Path, L: int) -> list[DecoyObservation]:
    """Load ``intensity_per_pulse,gain,qber`` rows, signal (largest) first."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"intensity_per_pulse", "gain", "qber"} - set(reader.fieldnames or ())
        if missing:
            raise DomainError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append(
                    DecoyObservation(
                        packet_intensity=L * float(row["intensity_per_pulse"]),
                        Q=float(row["gain"]),
                        E=float(row["qber"]),
                    )
                )
            except (ValueError, DomainError) as exc:
                raise DomainError(f"{path}:{lineno}: {exc}") from exc
    rows.sort(key=lambda o: o.packet_intensity, reverse=True)
    return rows
