"""Monte Carlo cross-checks of the detection model and of sifting.

Random numbers come from numpy's PCG64 bit generator.  Trials are split
into fixed-size chunks; chunk ``k`` is driven by
``PCG64(SeedSequence(seed, spawn_key=(k,)))`` and only uniform doubles are
drawn from it (``Generator.random``, i.e. ``(next_uint64 >> 11) * 2**-53``).
Photon numbers are sampled by inversion of a tabulated CDF, so the streams
do not depend on numpy's distribution-specific samplers.  Chunk counts are
integers summed after the fact, which makes the result independent of the
number of workers and of evaluation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numerics
from .channel import ChannelParams
from .errors import DomainError
from .parallel import ordered_map
from .sources import SourceKind, SourceModel, packet_distribution

#: Trials per independently seeded chunk.
CHUNK = 1 << 16

_CDF_TAIL = 1e-17


@dataclass(frozen=True)
class TrialConfig:
    """Monte Carlo run description."""

    trials: int
    seed: int
    src: SourceModel
    ch: ChannelParams
    L: int

    def __post_init__(self) -> None:
        if int(self.trials) != self.trials or self.trials < 1:
            raise DomainError(f"trials must be a positive integer, got {self.trials!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if int(self.L) != self.L or self.L < 2:
            raise DomainError(f"L must be an integer >= 2, got {self.L!r}")

    def chunks(self) -> list[tuple[int, int]]:
        """(chunk index, size) pairs covering all trials."""
        full, rest = divmod(self.trials, CHUNK)
        out = [(k, CHUNK) for k in range(full)]
        if rest:
            out.append((full, rest))
        return out


@dataclass(frozen=True)
class PacketRound:
    """One round of the protocol.

    ``s`` are Alice's pulse bits, ``r`` Bob's delay, ``pair`` the announced
    pulse indices (``j - i = +-r mod L``), ``s_A = s_i XOR s_j`` Alice's key
    bit and ``s_B`` Bob's measured bit.
    """

    s: tuple[int, ...]
    r: int
    pair: tuple[int, int]
    s_A: int
    s_B: int

    def __post_init__(self) -> None:
        L = len(self.s)
        i, j = self.pair
        if not 1 <= self.r <= L - 1 or (j - i) % L not in (self.r % L, (-self.r) % L):
            raise DomainError(f"pair {self.pair} is not {self.r} apart in a packet of {L}")
        if self.s_A != self.s[i] ^ self.s[j]:
            raise DomainError("s_A must equal s_i XOR s_j")


@dataclass(frozen=True)
class GainQberEstimate:
    """Empirical gain and QBER with binomial standard errors.

    ``E_hat`` and ``stderr_E`` are NaN when nothing was detected.
    ``packets`` counts the packets actually sent (heralded ones for HSPS).
    """

    Q_hat: float
    E_hat: float
    stderr_Q: float
    stderr_E: float
    packets: int
    detections: int
    errors: int

    def z_scores(self, Q_ref: float, E_ref: float) -> tuple[float, float]:
        """Deviations from reference values in units of the reference binomial sigma."""
        zq = _z(self.Q_hat, Q_ref, self.packets)
        ze = _z(self.E_hat, E_ref, self.detections) if self.detections else math.nan
        return zq, ze


def _z(p_hat: float, p_ref: float, n: int) -> float:
    sigma = math.sqrt(p_ref * (1.0 - p_ref) / n) if n else 0.0
    if sigma == 0.0:
        return 0.0 if p_hat == p_ref else math.inf
    return (p_hat - p_ref) / sigma


def _generator(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _inverse_cdf(pmf: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    return cdf


def _emission_cdf(src: SourceModel, L: int) -> np.ndarray:
    """CDF of the photon number drawn before any heralding."""
    if src.kind is SourceKind.WCP:
        return _inverse_cdf(packet_distribution(src, L, _CDF_TAIL))
    x = L * src.mu
    if x == 0.0:
        return np.array([1.0])
    n_max = int(math.ceil(math.log(_CDF_TAIL) / (math.log(x) - math.log1p(x))))
    return _inverse_cdf(numerics.thermal_pmf_array(x, n_max))


def _sample_photons(gen: np.random.Generator, cdf: np.ndarray, size: int) -> np.ndarray:
    u = gen.random(size)
    return np.minimum(np.searchsorted(cdf, u, side="right"), cdf.size - 1)


def _survival_miss(eta: float, n: np.ndarray) -> np.ndarray:
    """(1 - eta)**n, exact at eta = 1."""
    if eta >= 1.0:
        return (n == 0).astype(float)
    return np.exp(n * math.log1p(-eta))


def _emit(cfg: TrialConfig, gen: np.random.Generator, cdf: np.ndarray, size: int) -> np.ndarray:
    """Photon numbers of the packets that are actually sent in one chunk."""
    n = _sample_photons(gen, cdf, size)
    if cfg.src.kind is SourceKind.WCP:
        return n
    herald_p = np.where(n == 0, cfg.src.d_A, 1.0 - _survival_miss(cfg.src.eta_A, n))
    return n[gen.random(size) < herald_p]


def _gain_chunk(args) -> tuple[int, int, int]:
    cfg, chunk, size, cdf = args
    gen = _generator(cfg.seed, chunk)
    n = _emit(cfg, gen, cdf, size)
    m = n.size
    signal = gen.random(m) < 1.0 - _survival_miss(cfg.ch.eta, n)
    background = gen.random(m) < cfg.ch.Y0
    err_p = np.where(signal, cfg.ch.e_d, cfg.ch.e0)
    flip = gen.random(m) < err_p
    detected = signal | background
    return m, int(detected.sum()), int((detected & flip).sum())


def mc_gain_qber(cfg: TrialConfig, workers: Optional[int] = None) -> GainQberEstimate:
    """Simulate packet detections and return the empirical gain and QBER.

    Each photon survives independently with probability ``eta``; a packet is
    detected on any surviving photon or on a background event (probability
    ``Y0``).  Detections with a signal photon err with ``e_d``, pure
    background detections with ``e0``.  For HSPS the pre-heralding thermal
    photon number is drawn at packet intensity ``L * mu`` and unheralded
    packets are discarded.
    """
    cdf = _emission_cdf(cfg.src, cfg.L)
    jobs = [(cfg, k, size, cdf) for k, size in cfg.chunks()]
    counts = np.array(ordered_map(_gain_chunk, jobs, workers), dtype=np.int64).sum(axis=0)
    packets, detections, errors = (int(c) for c in counts)
    if packets == 0:
        return GainQberEstimate(math.nan, math.nan, math.nan, math.nan, 0, 0, 0)
    Q = detections / packets
    sQ = math.sqrt(Q * (1.0 - Q) / packets)
    if detections:
        E = errors / detections
        sE = math.sqrt(E * (1.0 - E) / detections)
    else:
        E = sE = math.nan
    return GainQberEstimate(Q, E, sQ, sE, packets, detections, errors)


def photon_histogram(cfg: TrialConfig, workers: Optional[int] = None) -> np.ndarray:
    """Counts of sent packets by photon number (index = photon number)."""
    cdf = _emission_cdf(cfg.src, cfg.L)
    jobs = [(cfg, k, size, cdf) for k, size in cfg.chunks()]
    parts = ordered_map(_histogram_chunk, jobs, workers)
    out = np.zeros(max(p.size for p in parts), dtype=np.int64)
    for p in parts:
        out[: p.size] += p
    return out


def _histogram_chunk(args) -> np.ndarray:
    cfg, chunk, size, cdf = args
    gen = _generator(cfg.seed, chunk)
    return np.bincount(_emit(cfg, gen, cdf, size), minlength=1)


def _sift_chunk(gen: np.random.Generator, size: int, L: int, e_flip: float):
    s = (gen.random((size, L)) < 0.5).astype(np.int8)
    r = 1 + np.minimum((gen.random(size) * (L - 1)).astype(np.int64), L - 2)
    i = np.minimum((gen.random(size) * L).astype(np.int64), L - 1)
    sign = np.where(gen.random(size) < 0.5, 1, -1)
    j = (i + sign * r) % L
    rows = np.arange(size)
    s_A = s[rows, i] ^ s[rows, j]
    flip = (gen.random(size) < e_flip).astype(np.int8)
    s_B = s_A ^ flip
    return s, r, i, j, s_A, s_B


def _sift_task(args) -> int:
    cfg, chunk, size, e_flip = args
    *_, s_A, s_B = _sift_chunk(_generator(cfg.seed, chunk), size, cfg.L, e_flip)
    return int((s_A == s_B).sum())


def mc_sift(cfg: TrialConfig, noiseless: bool = False, workers: Optional[int] = None) -> float:
    """Fraction of rounds in which Alice's and Bob's sifted bits agree.

    Bob's single-photon measurement returns ``s_i XOR s_j`` for the announced
    pair, flipped with probability ``e_d`` unless ``noiseless``.
    """
    e_flip = 0.0 if noiseless else cfg.ch.e_d
    jobs = [(cfg, k, size, e_flip) for k, size in cfg.chunks()]
    matches = sum(ordered_map(_sift_task, jobs, workers))
    return matches / cfg.trials


def sift_rounds(cfg: TrialConfig, count: int, noiseless: bool = False) -> list[PacketRound]:
    """The first ``count`` rounds of the first chunk as :class:`PacketRound` records."""
    e_flip = 0.0 if noiseless else cfg.ch.e_d
    size = min(count, CHUNK, cfg.trials)
    s, r, i, j, s_A, s_B = _sift_chunk(_generator(cfg.seed, 0), size, cfg.L, e_flip)
    return [
        PacketRound(
            s=tuple(int(b) for b in s[k]),
            r=int(r[k]),
            pair=(int(i[k]), int(j[k])),
            s_A=int(s_A[k]),
            s_B=int(s_B[k]),
        )
        for k in range(size)
    ]
