"""Scalar primitives shared by the rest of the package.

Binary entropy, the two photon-number laws used by the sources (Poisson and
thermal), tail masses, and the fiber distance/transmittance conversion.
All functions are pure.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import special

from .errors import DomainError

#: Inputs this close outside [0, 1] are treated as float noise and clamped.
CLAMP_TOL = 1e-12

#: Below this photon number pmf terms are evaluated directly, above it in log space.
_LOG_SPACE_FROM = 30


def _check_probability(e: float, name: str = "e") -> float:
    if e < -CLAMP_TOL or e > 1.0 + CLAMP_TOL or math.isnan(e):
        raise DomainError(f"{name} must lie in [0, 1], got {e!r}")
    return min(max(e, 0.0), 1.0)


def binary_entropy(e: float) -> float:
    """Binary Shannon entropy in bits, with h(0) = h(1) = 0.

    >>> binary_entropy(0.5)
    1.0
    """
    e = _check_probability(float(e))
    if e == 0.0 or e == 1.0:
        return 0.0
    return -e * math.log2(e) - (1.0 - e) * math.log2(1.0 - e)


def binary_entropy_array(e) -> np.ndarray:
    """Elementwise binary entropy for an array of probabilities."""
    e = np.asarray(e, dtype=float)
    if np.any(np.isnan(e)) or np.any(e < -CLAMP_TOL) or np.any(e > 1.0 + CLAMP_TOL):
        raise DomainError("entropy arguments must lie in [0, 1]")
    e = np.clip(e, 0.0, 1.0)
    out = np.zeros_like(e)
    inner = (e > 0.0) & (e < 1.0)
    x = e[inner]
    out[inner] = -x * np.log2(x) - (1.0 - x) * np.log2(1.0 - x)
    return out


def _check_mean(mean: float) -> float:
    if not mean >= 0.0:
        raise DomainError(f"mean photon number must be >= 0, got {mean!r}")
    return float(mean)


def _check_n(n: int) -> int:
    if n < 0 or int(n) != n:
        raise DomainError(f"photon number must be a nonnegative integer, got {n!r}")
    return int(n)


def poisson_pmf(mean: float, n: int) -> float:
    """Poisson probability exp(-mean) * mean**n / n!."""
    mean, n = _check_mean(mean), _check_n(n)
    if mean == 0.0:
        return 1.0 if n == 0 else 0.0
    if n <= _LOG_SPACE_FROM:
        return math.exp(-mean) * mean**n / math.factorial(n)
    return math.exp(-mean + n * math.log(mean) - math.lgamma(n + 1))


def thermal_pmf(mean: float, n: int) -> float:
    """Thermal (Bose-Einstein) probability mean**n / (1 + mean)**(n + 1)."""
    mean, n = _check_mean(mean), _check_n(n)
    if mean == 0.0:
        return 1.0 if n == 0 else 0.0
    if n <= _LOG_SPACE_FROM:
        return mean**n / (1.0 + mean) ** (n + 1)
    return math.exp(n * math.log(mean) - (n + 1) * math.log1p(mean))


def poisson_pmf_array(mean: float, n_max: int) -> np.ndarray:
    """Poisson probabilities for n = 0..n_max, evaluated in log space."""
    mean = _check_mean(mean)
    n = np.arange(n_max + 1, dtype=float)
    if mean == 0.0:
        return (n == 0).astype(float)
    return np.exp(-mean + n * math.log(mean) - special.gammaln(n + 1.0))


def thermal_pmf_array(mean: float, n_max: int) -> np.ndarray:
    """Thermal probabilities for n = 0..n_max, evaluated in log space."""
    mean = _check_mean(mean)
    n = np.arange(n_max + 1, dtype=float)
    if mean == 0.0:
        return (n == 0).astype(float)
    return np.exp(n * math.log(mean) - (n + 1.0) * math.log1p(mean))


def poisson_tail(mean: float, n: int) -> float:
    """Exact Poisson mass strictly above ``n`` (regularized incomplete gamma)."""
    mean, n = _check_mean(mean), _check_n(n)
    if mean == 0.0:
        return 0.0
    return float(special.gammainc(n + 1, mean))


def thermal_tail(mean: float, n: int) -> float:
    """Exact thermal mass strictly above ``n``: (mean / (1 + mean))**(n + 1)."""
    mean, n = _check_mean(mean), _check_n(n)
    if mean == 0.0:
        return 0.0
    return math.exp((n + 1) * (math.log(mean) - math.log1p(mean)))


def tail_probability(
    pmf: Callable[[float, int], float], packet_intensity: float, v_th: int
) -> float:
    """Probability that more than ``v_th`` photons are emitted.

    ``pmf(packet_intensity, n)`` is the packet-level photon-number law; the
    result is one minus the exactly summed head ``n = 0..v_th``.
    """
    v_th = _check_n(v_th)
    head = math.fsum(pmf(packet_intensity, n) for n in range(v_th + 1))
    return min(max(1.0 - head, 0.0), 1.0)


def distance_to_transmittance(d: float, alpha: float) -> float:
    """Fiber transmittance 10**(-alpha * d / 10) for ``d`` km at ``alpha`` dB/km."""
    if d < 0:
        raise DomainError(f"distance must be >= 0, got {d!r}")
    if not alpha > 0:
        raise DomainError(f"loss coefficient must be > 0, got {alpha!r}")
    return 10.0 ** (-alpha * d / 10.0)


def transmittance_to_distance(eta: float, alpha: float) -> float:
    """Inverse of :func:`distance_to_transmittance`."""
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"transmittance must lie in (0, 1], got {eta!r}")
    if not alpha > 0:
        raise DomainError(f"loss coefficient must be > 0, got {alpha!r}")
    return -10.0 * math.log10(eta) / alpha
