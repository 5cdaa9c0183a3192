"""Detection statistics without an eavesdropper.

n-photon yields and error rates for a lossy channel with background counts,
and the resulting packet gain ``Q`` and QBER ``E`` for both sources.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import numerics
from .errors import DegenerateInputError, DomainError
from .sources import SourceKind, SourceModel, packet_distribution

#: Relative truncation accuracy of photon-number series.
SERIES_REL_TOL = 1e-15


@dataclass(frozen=True)
class ChannelParams:
    """Channel and receiver description.

    Attributes
    ----------
    eta : float
        Overall transmittance (fiber x receiver).
    Y0 : float
        Background yield per packet.
    e0 : float
        Error rate of background detections (0.5 for random noise).
    e_d : float
        Misalignment error of signal detections.
    alpha : float
        Fiber loss in dB/km, used only when converting distances.
    f : float
        Error-correction inefficiency.
    eta_b : float
        Receiver efficiency multiplied onto the fiber transmittance when a
        distance is set with :meth:`at_distance`.
    """

    eta: float = 1.0
    Y0: float = 0.0
    e0: float = 0.5
    e_d: float = 0.033
    alpha: float = 0.2
    f: float = 1.16
    eta_b: float = 1.0

    def __post_init__(self) -> None:
        checks = [
            (0.0 <= self.eta <= 1.0, "eta must lie in [0, 1]"),
            (0.0 <= self.Y0 < 1.0, "Y0 must lie in [0, 1)"),
            (0.0 <= self.e0 <= 0.5, "e0 must lie in [0, 0.5]"),
            (0.0 <= self.e_d <= 0.5, "e_d must lie in [0, 0.5]"),
            (self.alpha > 0.0, "alpha must be > 0"),
            (self.f >= 1.0, "f must be >= 1"),
            (0.0 < self.eta_b <= 1.0, "eta_b must lie in (0, 1]"),
        ]
        for ok, msg in checks:
            if not ok:
                raise DomainError(f"{msg}, got {self!r}")

    @classmethod
    def from_dark_count(cls, dark_count: float, L: int, **kwargs) -> "ChannelParams":
        """Aggregate a per-pulse dark-count probability over an ``L``-pulse packet."""
        if not 0.0 <= dark_count < 1.0:
            raise DomainError(f"dark count must lie in [0, 1), got {dark_count!r}")
        Y0 = -math.expm1(L * math.log1p(-dark_count))
        return cls(Y0=Y0, **kwargs)

    def with_eta(self, eta: float) -> "ChannelParams":
        return replace(self, eta=eta)

    def at_distance(self, d: float) -> "ChannelParams":
        return replace(self, eta=self.eta_b * numerics.distance_to_transmittance(d, self.alpha))

    def distance_of(self, eta: float | None = None) -> float:
        """Fiber length matching the overall transmittance ``eta``."""
        eta = self.eta if eta is None else eta
        return numerics.transmittance_to_distance(eta / self.eta_b, self.alpha)


def _survival(ch: ChannelParams, n):
    """1 - (1 - eta)**n, without cancellation for tiny eta."""
    n = np.asarray(n)
    if ch.eta == 1.0:
        return np.where(n == 0, 0.0, 1.0)
    return -np.expm1(n.astype(float) * math.log1p(-ch.eta))


def yield_n(ch: ChannelParams, n: int) -> float:
    """Detection probability given ``n`` photons: 1 - (1 - Y0)(1 - eta)**n."""
    return float(yields_array(ch, np.array([n]))[0])


def yields_array(ch: ChannelParams, n) -> np.ndarray:
    n = np.asarray(n)
    if ch.eta == 1.0:
        return np.where(n == 0, ch.Y0, 1.0)
    return -np.expm1(math.log1p(-ch.Y0) + n.astype(float) * math.log1p(-ch.eta))


def _error_numerator(ch: ChannelParams, n) -> np.ndarray:
    return ch.e0 * ch.Y0 + ch.e_d * (1.0 - ch.Y0) * _survival(ch, n)


def error_n(ch: ChannelParams, n: int) -> float:
    """Error rate of ``n``-photon detections."""
    y = yield_n(ch, n)
    if y == 0.0:
        raise DegenerateInputError(f"yield of {n}-photon states is zero")
    return float(_error_numerator(ch, np.array([n]))[0]) / y


def errors_array(ch: ChannelParams, n) -> np.ndarray:
    y = yields_array(ch, n)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(y > 0.0, _error_numerator(ch, n) / np.where(y > 0, y, 1.0), ch.e0)


def wcp_gain_qber(ch: ChannelParams, mu: float, L: int) -> tuple[float, float]:
    """Closed-form gain and QBER of a WCP packet at per-pulse intensity ``mu``."""
    if not mu >= 0.0:
        raise DomainError(f"mu must be >= 0, got {mu!r}")
    detected = -math.expm1(-L * ch.eta * mu)
    Q = ch.Y0 + (1.0 - ch.Y0) * detected
    if Q <= 0.0:
        raise DegenerateInputError("gain is zero")
    E = (ch.e0 * ch.Y0 + ch.e_d * (1.0 - ch.Y0) * detected) / Q
    return Q, E


def hsps_gain_qber(ch: ChannelParams, src: SourceModel, mu: float, L: int) -> tuple[float, float]:
    """Closed-form gain and QBER of a post-selected HSPS packet.

    Summing the geometric series gives the probability that at least one
    photon survives as

        S = x eta eta_A (1 + 2x + x^2 c) / ((1 + x eta)(1 + x eta_A)(1 + x c) P_post),

    with ``x = L * mu``, ``c = eta_A + eta - eta_A * eta`` and ``P_post`` the
    heralding probability.  Every factor is positive, so unlike the textbook
    three-term expression there is no cancellation when the gain is tiny.
    Then Q = Y0 + (1 - Y0) S and E Q = e0 Y0 + e_d (1 - Y0) S.
    :func:`series_gain_qber` is the reference it is tested against.
    """
    if src.kind is not SourceKind.HSPS:
        raise DomainError("hsps_gain_qber needs an HSPS source")
    if not mu >= 0.0:
        raise DomainError(f"mu must be >= 0, got {mu!r}")
    x = L * mu
    eta, eA, Y0 = ch.eta, src.eta_A, ch.Y0
    p_post = src.d_A / (1.0 + x) + x * eA / (1.0 + x * eA)
    if p_post <= 0.0:
        raise DegenerateInputError("heralding probability is zero")
    c = eA + eta - eA * eta
    S = x * eta * eA * (1.0 + 2.0 * x + x * x * c) / (
        (1.0 + x * eta) * (1.0 + x * eA) * (1.0 + x * c) * p_post
    )
    Q = Y0 + (1.0 - Y0) * S
    if Q <= 0.0:
        raise DegenerateInputError("gain is zero")
    return Q, (ch.e0 * Y0 + ch.e_d * (1.0 - Y0) * S) / Q


def photon_series(src: SourceModel, L: int, weights: Callable[[np.ndarray], np.ndarray]) -> float:
    """Sum of ``weights(n) * P(n)`` over photon numbers, for weights in [0, 1].

    The support grows until the neglected tail is below ``SERIES_REL_TOL`` of
    the accumulated sum.
    """
    tail_tol = 1e-17
    while True:
        p = packet_distribution(src, L, tail_tol)
        total = math.fsum(weights(np.arange(p.size)) * p)
        if total == 0.0 or tail_tol <= SERIES_REL_TOL * total or tail_tol < 1e-300:
            return total
        tail_tol = 0.1 * SERIES_REL_TOL * total


def series_gain_qber(ch: ChannelParams, src: SourceModel, L: int) -> tuple[float, float]:
    """Gain and QBER as photon-number series sum Y_n P(n), sum e_n Y_n P(n)."""
    Q = photon_series(src, L, lambda n: yields_array(ch, n))
    if Q <= 0.0:
        raise DegenerateInputError("gain is zero")
    EQ = photon_series(src, L, lambda n: _error_numerator(ch, n))
    return Q, EQ / Q


def gain_qber(ch: ChannelParams, src: SourceModel, L: int) -> tuple[float, float]:
    """Gain and QBER for ``src`` at its own intensity."""
    if src.kind is SourceKind.WCP:
        return wcp_gain_qber(ch, src.mu, L)
    return series_gain_qber(ch, src, L)
