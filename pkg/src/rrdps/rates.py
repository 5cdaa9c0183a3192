"""Secure key rate per packet for the round-robin DPS protocol.

Three accountings are provided:

* :func:`rate_no_decoy` bounds the phase error from the source alone,
  treating packets with more than ``v_th`` photons as fully leaked.
* :func:`rate_infinite_decoy` assumes every n-photon yield is known exactly
  (the no-eavesdropper forecast).
* :func:`rate_finite_decoy` keeps the photon numbers up to 1, 2 or 3 whose
  yields and error rates were bounded from a finite set of decoy intensities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from . import channel, sources
from .channel import ChannelParams
from .errors import DegenerateInputError, DomainError, InvalidBoundsError
from .numerics import binary_entropy, binary_entropy_array
from .sources import SourceKind, SourceModel

if TYPE_CHECKING:
    from .decoy import YieldBounds

_BOUND_TOL = 1e-9


class DecoyTier(str, Enum):
    NONE = "none"
    INFINITE = "infinite"
    TWO = "two"
    THREE = "three"
    FOUR = "four"

    @property
    def is_finite(self) -> bool:
        return self in (DecoyTier.TWO, DecoyTier.THREE, DecoyTier.FOUR)

    @property
    def n_th(self) -> int:
        """Largest photon number whose yield the tier bounds."""
        return {DecoyTier.TWO: 1, DecoyTier.THREE: 2, DecoyTier.FOUR: 3}[self]

    @property
    def n_decoys(self) -> int:
        return self.n_th + 1


def max_threshold(L: int) -> int:
    """Largest photon threshold allowed for packet length ``L`` (v_th < (L-1)/2)."""
    return math.ceil((L - 1) / 2) - 1


@dataclass(frozen=True)
class ProtocolParams:
    """Packet length, photon threshold and decoy configuration.

    ``decoy_intensities`` are per pulse, strictly decreasing, last one
    usually the vacuum.  ``None`` means the tier's default fractions of mu.
    """

    L: int = 32
    v_th: int = 3
    tier: DecoyTier = DecoyTier.NONE
    decoy_intensities: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tier", DecoyTier(self.tier))
        if int(self.L) != self.L or self.L < 2:
            raise DomainError(f"L must be an integer >= 2, got {self.L!r}")
        if int(self.v_th) != self.v_th or not 0 <= self.v_th < (self.L - 1) / 2:
            raise DomainError(f"v_th must satisfy 0 <= v_th < (L-1)/2, got {self.v_th!r}")
        if self.decoy_intensities is not None:
            v = tuple(float(x) for x in self.decoy_intensities)
            if any(x < 0 for x in v) or any(a <= b for a, b in zip(v, v[1:])):
                raise DomainError(f"decoy intensities must be >= 0 and strictly decreasing, got {v}")
            object.__setattr__(self, "decoy_intensities", v)


@dataclass(frozen=True)
class RateResult:
    """Key rate per packet together with the quantities that produced it.

    ``R`` is clamped at zero; ``R_raw`` keeps the unclamped value.  For decoy
    tiers ``e_ph`` holds the per-photon-number phase errors.  Results coming
    out of a parameter search also carry ``search_max_raw``, the largest
    unclamped rate seen anywhere in that search.
    """

    R: float
    R_raw: float
    Q: float
    e_bit: float
    e_ph: float | tuple[float, ...]
    e_src: float
    mu: float
    v_th: Optional[int]
    tier: DecoyTier
    yield_bounds: Optional["YieldBounds"] = None
    distance: Optional[float] = None
    transmittance: Optional[float] = None
    decoy_intensities: Optional[tuple[float, ...]] = None
    search_max_raw: Optional[float] = None
    flags: tuple[str, ...] = field(default=())


def phase_error_n(L: int, n: int) -> float:
    """Phase error of an ``n``-photon packet, (1 - (1 - 2/L)**n) / 2."""
    if L < 2:
        raise DomainError(f"L must be >= 2, got {L!r}")
    return (1.0 - (1.0 - 2.0 / L) ** n) / 2.0


def phase_error_packet(L: int, v_th: int, e_src: float, Q: float) -> float:
    """Phase error over all detected packets when Pr(v > v_th) <= e_src.

    Returns the worst case 0.5 when e_src >= Q (the bound is vacuous).
    """
    if Q <= 0.0:
        raise DegenerateInputError("gain is zero")
    if e_src >= Q:
        return 0.5
    w = e_src / Q
    return w + (1.0 - w) * phase_error_n(L, v_th)


def no_decoy_rate_formula(Q: float, e_bit: float, e_src: float, L: int, v_th: int, f: float) -> float:
    """Unclamped key rate from packet statistics without decoys."""
    leak = f * binary_entropy(e_bit)
    return (Q - e_src) * (1.0 - leak - binary_entropy(phase_error_n(L, v_th))) - e_src * leak


def zero_gain_result(src: SourceModel, ch: ChannelParams, tier: DecoyTier, v_th: Optional[int]) -> RateResult:
    """Result for a packet that is never detected: no key, flagged ``zero_gain``."""
    return RateResult(R=0.0, R_raw=0.0, Q=0.0, e_bit=ch.e0, e_ph=0.5, e_src=0.0, mu=src.mu,
                      v_th=v_th, tier=DecoyTier(tier), transmittance=ch.eta, flags=("zero_gain",))


def _gain_qber(ch: ChannelParams, src: SourceModel, L: int) -> Optional[tuple[float, float]]:
    try:
        return channel.gain_qber(ch, src, L)
    except DegenerateInputError:
        return None


def rate_no_decoy(src: SourceModel, ch: ChannelParams, proto: ProtocolParams) -> RateResult:
    """Key rate per packet without decoy states (0, flagged, if nothing is ever detected)."""
    if proto.tier is not DecoyTier.NONE:
        raise DomainError(f"rate_no_decoy needs tier 'none', got {proto.tier.value!r}")
    gq = _gain_qber(ch, src, proto.L)
    if gq is None:
        return zero_gain_result(src, ch, proto.tier, proto.v_th)
    Q, E = gq
    es = sources.e_src(src, proto.L, proto.v_th)
    raw = no_decoy_rate_formula(Q, E, es, proto.L, proto.v_th, ch.f)
    flags = ("e_src_exceeds_gain",) if es >= Q else ()
    return RateResult(
        R=max(raw, 0.0),
        R_raw=raw,
        Q=Q,
        e_bit=E,
        e_ph=phase_error_packet(proto.L, proto.v_th, es, Q),
        e_src=es,
        mu=src.mu,
        v_th=proto.v_th,
        tier=proto.tier,
        transmittance=ch.eta,
        flags=flags,
    )


def rate_no_decoy_thresholds(
    src: SourceModel, ch: ChannelParams, L: int, v_ths: Sequence[int]
) -> list[RateResult]:
    """:func:`rate_no_decoy` for several thresholds, sharing one gain evaluation."""
    gq = _gain_qber(ch, src, L)
    if gq is None:
        return [zero_gain_result(src, ch, DecoyTier.NONE, v) for v in v_ths]
    Q, E = gq
    v_max = max(v_ths)
    head = np.cumsum(sources.packet_pmf_array(src, L, v_max))
    results = []
    for v_th in v_ths:
        proto = ProtocolParams(L=L, v_th=v_th, tier=DecoyTier.NONE)
        es = min(max(1.0 - float(head[v_th]), 0.0), 1.0)
        raw = no_decoy_rate_formula(Q, E, es, L, v_th, ch.f)
        results.append(
            RateResult(
                R=max(raw, 0.0),
                R_raw=raw,
                Q=Q,
                e_bit=E,
                e_ph=phase_error_packet(L, v_th, es, Q),
                e_src=es,
                mu=src.mu,
                v_th=proto.v_th,
                tier=DecoyTier.NONE,
                transmittance=ch.eta,
                flags=("e_src_exceeds_gain",) if es >= Q else (),
            )
        )
    return results


def rate_infinite_decoy(src: SourceModel, ch: ChannelParams, proto: ProtocolParams) -> RateResult:
    """Key rate when every n-photon yield is known (no-eavesdropper yields)."""
    if proto.tier is not DecoyTier.INFINITE:
        raise DomainError(f"rate_infinite_decoy needs tier 'infinite', got {proto.tier.value!r}")
    gq = _gain_qber(ch, src, proto.L)
    if gq is None:
        return zero_gain_result(src, ch, proto.tier, None)
    Q, E = gq
    L = proto.L

    def phase_errors(n):
        return (1.0 - (1.0 - 2.0 / L) ** n) / 2.0

    loss = channel.photon_series(
        src, L, lambda n: channel.yields_array(ch, n) * binary_entropy_array(phase_errors(n))
    )
    mean_phase_error = channel.photon_series(
        src, L, lambda n: channel.yields_array(ch, n) * phase_errors(n)
    ) / Q
    raw = Q * (1.0 - ch.f * binary_entropy(E)) - loss
    return RateResult(
        R=max(raw, 0.0),
        R_raw=raw,
        Q=Q,
        e_bit=E,
        e_ph=mean_phase_error,
        e_src=0.0,
        mu=src.mu,
        v_th=None,
        tier=proto.tier,
        transmittance=ch.eta,
    )


def _upper_error_entropy(e: float) -> float:
    # an upper bound at or above 1/2 carries no information
    return binary_entropy(min(e, 0.5))


def finite_decoy_terms(
    bounds: "YieldBounds", pmf: Sequence[float], L: int, f: float, e0: float = 0.5
) -> list[float]:
    """Per-photon-number contributions n = 0..n_th, nonpositive ones set to 0."""
    n_th = bounds.tier.n_th
    yields = bounds.yields()
    errors = (e0,) + bounds.errors()
    terms = []
    for n in range(n_th + 1):
        y, e = yields[n], errors[n]
        if y is None or e is None:
            raise InvalidBoundsError(f"bounds for n={n} are missing for tier {bounds.tier.value}")
        if y < -_BOUND_TOL or y > 1.0 + _BOUND_TOL:
            raise InvalidBoundsError(f"yield bound Y{n} = {y!r} outside [0, 1]")
        if e < -_BOUND_TOL or e > 1.0 + _BOUND_TOL:
            raise InvalidBoundsError(f"error bound e{n} = {e!r} outside [0, 1]")
        y = min(max(y, 0.0), 1.0)
        e = min(max(e, 0.0), 1.0)
        bracket = 1.0 - f * _upper_error_entropy(e) - binary_entropy(phase_error_n(L, n))
        terms.append(y * pmf[n] * bracket if bracket > 0.0 else 0.0)
    return terms


def rate_finite_decoy(
    src: SourceModel, ch: ChannelParams, proto: ProtocolParams, bounds: "YieldBounds"
) -> RateResult:
    """Key rate from decoy-estimated yield lower bounds and error upper bounds."""
    if not proto.tier.is_finite:
        raise DomainError(f"rate_finite_decoy needs a finite tier, got {proto.tier.value!r}")
    if bounds.tier.n_th < proto.tier.n_th:
        raise InvalidBoundsError(
            f"tier {proto.tier.value} needs bounds up to n={proto.tier.n_th}, got {bounds.tier.value}"
        )
    if bounds.tier is not proto.tier:
        bounds = bounds.project(proto.tier)
    gq = _gain_qber(ch, src, proto.L)
    if gq is None:
        return replace(zero_gain_result(src, ch, proto.tier, None), yield_bounds=bounds)
    Q, E = gq
    pmf = sources.packet_pmf_array(src, proto.L, proto.tier.n_th)
    terms = finite_decoy_terms(bounds, pmf, proto.L, ch.f, ch.e0)
    raw = math.fsum(terms)
    return RateResult(
        R=max(raw, 0.0),
        R_raw=raw,
        Q=Q,
        e_bit=E,
        e_ph=tuple(phase_error_n(proto.L, n) for n in range(proto.tier.n_th + 1)),
        e_src=0.0,
        mu=src.mu,
        v_th=None,
        tier=proto.tier,
        yield_bounds=bounds,
        transmittance=ch.eta,
        flags=tuple(sorted(bounds.vacuous)),
    )


def rate_decoy(src: SourceModel, ch: ChannelParams, proto: ProtocolParams) -> RateResult:
    """Finite-decoy rate with observations simulated from the channel model."""
    from . import decoy

    if src.kind is not SourceKind.WCP:
        raise DomainError("finite decoy-state bounds assume Poissonian (WCP) sources")
    intensities = proto.decoy_intensities
    if intensities is None:
        intensities = decoy.default_decoy_intensities(proto.tier, src.mu)
    observations = decoy.simulate_observations(ch, src.mu, intensities, proto.L)
    bounds = decoy.estimate_bounds(proto.tier, observations)
    result = rate_finite_decoy(src, ch, proto, bounds)
    return replace(result, decoy_intensities=tuple(intensities))


def key_rate(src: SourceModel, ch: ChannelParams, proto: ProtocolParams) -> RateResult:
    """Dispatch on ``proto.tier``."""
    if proto.tier is DecoyTier.NONE:
        return rate_no_decoy(src, ch, proto)
    if proto.tier is DecoyTier.INFINITE:
        return rate_infinite_decoy(src, ch, proto)
    return rate_decoy(src, ch, proto)
