"""Packet-level photon-number statistics for the two laser sources.

A packet of ``L`` pulses at per-pulse intensity ``mu`` behaves as a single
mode of intensity ``x = L * mu``.  Weak coherent pulses (WCP) are Poissonian
in ``x``.  The heralded single-photon source (HSPS) is a thermal idler
post-selected on a click of Alice's heralding detector (efficiency
``eta_A``, dark-count probability ``d_A``), also evaluated at ``x``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import numerics
from .errors import DomainError

_MAX_SUPPORT = 1_000_000


class SourceKind(str, Enum):
    WCP = "wcp"
    HSPS = "hsps"


@dataclass(frozen=True)
class SourceModel:
    """Photon source at per-pulse intensity ``mu``.

    ``eta_A`` and ``d_A`` describe the heralding detector and are ignored for
    WCP.  Defaults match the packaged simulation parameters (0.045, 1.7e-6).
    """

    kind: SourceKind
    mu: float
    eta_A: float = 0.045
    d_A: float = 1.7e-6

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if not self.mu >= 0.0:
            raise DomainError(f"mu must be >= 0, got {self.mu!r}")
        if self.kind is SourceKind.HSPS:
            if not 0.0 < self.eta_A <= 1.0:
                raise DomainError(f"eta_A must lie in (0, 1], got {self.eta_A!r}")
            if not 0.0 <= self.d_A < 1.0:
                raise DomainError(f"d_A must lie in [0, 1), got {self.d_A!r}")

    @classmethod
    def wcp(cls, mu: float) -> "SourceModel":
        return cls(SourceKind.WCP, mu)

    @classmethod
    def hsps(cls, mu: float, eta_A: float = 0.045, d_A: float = 1.7e-6) -> "SourceModel":
        return cls(SourceKind.HSPS, mu, eta_A, d_A)

    def with_mu(self, mu: float) -> "SourceModel":
        return replace(self, mu=mu)


def _check_L(L: int) -> int:
    if int(L) != L or L < 2:
        raise DomainError(f"packet length L must be an integer >= 2, got {L!r}")
    return int(L)


def post_selection_probability(x: float, eta_A: float, d_A: float) -> float:
    """Heralding probability d_A/(1+x) + x*eta_A/(1+x*eta_A) at intensity ``x``."""
    return d_A / (1.0 + x) + x * eta_A / (1.0 + x * eta_A)


def _post_selection(src: SourceModel, x: float) -> float:
    p_post = post_selection_probability(x, src.eta_A, src.d_A)
    if p_post <= 0.0:
        raise DomainError("heralding never fires: d_A = 0 with zero intensity")
    return p_post


def packet_pmf(src: SourceModel, L: int, n: int) -> float:
    """Probability that a packet carries exactly ``n`` photons."""
    L = _check_L(L)
    x = L * src.mu
    if src.kind is SourceKind.WCP:
        return numerics.poisson_pmf(x, n)
    p_post = _post_selection(src, x)
    if n == 0:
        return src.d_A / ((1.0 + x) * p_post)
    herald = -math.expm1(n * math.log1p(-src.eta_A)) if src.eta_A < 1.0 else 1.0
    return herald * numerics.thermal_pmf(x, n) / p_post


def packet_pmf_array(src: SourceModel, L: int, n_max: int) -> np.ndarray:
    """Vector of :func:`packet_pmf` for n = 0..n_max."""
    L = _check_L(L)
    x = L * src.mu
    if src.kind is SourceKind.WCP:
        return numerics.poisson_pmf_array(x, n_max)
    p_post = _post_selection(src, x)
    n = np.arange(n_max + 1, dtype=float)
    if src.eta_A < 1.0:
        herald = -np.expm1(n * math.log1p(-src.eta_A))
    else:
        herald = (n > 0).astype(float)
    p = herald * numerics.thermal_pmf_array(x, n_max) / p_post
    p[0] = src.d_A / ((1.0 + x) * p_post)
    return p


def packet_tail(src: SourceModel, L: int, n: int) -> float:
    """Closed-form probability of more than ``n`` photons in a packet."""
    L = _check_L(L)
    x = L * src.mu
    if src.kind is SourceKind.WCP:
        return numerics.poisson_tail(x, n)
    if x == 0.0:
        return 0.0
    p_post = _post_selection(src, x)

    # sum_{k>n} a^k x^k / (1+x)^(k+1) = r^(n+1) / (1 + x - a x),  r = a x / (1 + x)
    def geometric_tail(a: float) -> float:
        if a == 0.0:
            return 0.0
        log_r = math.log(a) + math.log(x) - math.log1p(x)
        return math.exp((n + 1) * log_r) / (1.0 + x - a * x)

    return (geometric_tail(1.0) - geometric_tail(1.0 - src.eta_A)) / p_post


def support_size(src: SourceModel, L: int, tail_tol: float) -> int:
    """Smallest cutoff ``N`` found such that the mass above ``N`` is <= ``tail_tol``."""
    x = _check_L(L) * src.mu
    if x == 0.0:
        return 0
    if src.kind is SourceKind.WCP:
        n = int(math.ceil(x + 10.0 * math.sqrt(x) + 10.0))
    else:
        log_r = math.log(x) - math.log1p(x)
        p_post = _post_selection(src, x)
        n = max(int(math.ceil(math.log(tail_tol * p_post) / log_r)) - 1, 0)
    while packet_tail(src, L, n) > tail_tol:
        if n > _MAX_SUPPORT:
            raise DomainError(f"photon-number support exceeds {_MAX_SUPPORT} terms")
        n = int(n * 1.5) + 1
    return n


def packet_distribution(src: SourceModel, L: int, tail_tol: float = 1e-15) -> np.ndarray:
    """Packet pmf truncated where the remaining mass drops below ``tail_tol``."""
    return packet_pmf_array(src, L, support_size(src, L, tail_tol))


def e_src(src: SourceModel, L: int, v_th: int) -> float:
    """Probability that a packet carries more than ``v_th`` photons."""
    L = _check_L(L)
    return numerics.tail_probability(
        lambda _x, n: packet_pmf(src, L, n), L * src.mu, v_th
    )
