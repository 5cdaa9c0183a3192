"""Grid search over intensity and photon threshold, and distance sweeps."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import rates
from .channel import ChannelParams
from .decoy import DEFAULT_FRACTIONS
from .errors import DegenerateInputError, DomainError
from .parallel import ordered_map
from .rates import DecoyTier, ProtocolParams, RateResult
from .sources import SourceModel

#: Candidate decoy fractions for the coordinate-descent pass.
DECOY_FRACTION_GRID = tuple(float(x) for x in np.geomspace(1e-3, 0.9, 31))

_LOWER_TIER = {DecoyTier.THREE: DecoyTier.TWO, DecoyTier.FOUR: DecoyTier.THREE}


@dataclass(frozen=True)
class SearchSpec:
    """Search grid for :func:`optimize_point`.

    ``mu_*`` describe a log-spaced per-pulse intensity grid; ``v_th_max``
    defaults to the largest threshold allowed by the packet length.  With
    ``optimize_decoys`` a coordinate-descent pass tunes the decoy fractions
    (finite tiers only).
    """

    mu_min: float = 1e-4
    mu_max: float = 1.0
    mu_points: int = 60
    v_th_min: int = 0
    v_th_max: Optional[int] = None
    refine_rounds: int = 3
    objective: DecoyTier = DecoyTier.NONE
    decoy_fractions: Optional[tuple[float, ...]] = None
    optimize_decoys: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "objective", DecoyTier(self.objective))
        if not 0.0 < self.mu_min <= self.mu_max:
            raise DomainError(f"need 0 < mu_min <= mu_max, got {self.mu_min}, {self.mu_max}")
        if self.mu_points < 1:
            raise DomainError("mu grid must be nonempty")
        if self.v_th_max is not None and self.v_th_max < self.v_th_min:
            raise DomainError("v_th range must be nonempty")
        if self.refine_rounds < 0:
            raise DomainError("refine_rounds must be >= 0")

    def mu_grid(self) -> np.ndarray:
        if self.mu_points == 1:
            return np.array([self.mu_min])
        return np.geomspace(self.mu_min, self.mu_max, self.mu_points)

    def thresholds(self, L: int) -> list[int]:
        top = rates.max_threshold(L)
        hi = top if self.v_th_max is None else min(self.v_th_max, top)
        if self.v_th_min > hi:
            raise DomainError(f"v_th range [{self.v_th_min}, {hi}] is empty for L={L}")
        return list(range(self.v_th_min, hi + 1))

    def fractions(self) -> tuple[float, ...]:
        if self.decoy_fractions is not None:
            return tuple(self.decoy_fractions)
        return DEFAULT_FRACTIONS[self.objective]


def evaluate(
    src: SourceModel,
    ch: ChannelParams,
    L: int,
    tier: DecoyTier,
    mu: float,
    v_ths: Sequence[int],
    fractions: Sequence[float] = (),
) -> list[RateResult]:
    """Rates at intensity ``mu``: one per threshold for the no-decoy tier, else one."""
    s = src.with_mu(mu)
    try:
        if tier is DecoyTier.NONE:
            return rates.rate_no_decoy_thresholds(s, ch, L, v_ths)
        if tier is DecoyTier.INFINITE:
            return [rates.rate_infinite_decoy(s, ch, ProtocolParams(L=L, v_th=0, tier=tier))]
        proto = ProtocolParams(L=L, v_th=0, tier=tier,
                               decoy_intensities=tuple(c * mu for c in fractions))
        return [rates.rate_decoy(s, ch, proto)]
    except DegenerateInputError:
        if tier is DecoyTier.NONE:
            return [rates.zero_gain_result(s, ch, tier, v) for v in v_ths]
        return [rates.zero_gain_result(s, ch, tier, None)]


def _better(cand: RateResult, best: Optional[RateResult]) -> bool:
    if best is None:
        return True
    if cand.R != best.R:
        return cand.R > best.R
    return (cand.mu, cand.v_th or 0) < (best.mu, best.v_th or 0)


def _search_mu(src, ch, L, spec: SearchSpec, fractions) -> tuple[RateResult, float]:
    tier = spec.objective
    v_ths = spec.thresholds(L) if tier is DecoyTier.NONE else [0]
    lo, hi = math.log10(spec.mu_min), math.log10(spec.mu_max)
    grid = spec.mu_grid()
    best: Optional[RateResult] = None
    max_raw = -math.inf
    for round_ in range(spec.refine_rounds + 1):
        for mu in grid:
            for res in evaluate(src, ch, L, tier, float(mu), v_ths, fractions):
                max_raw = max(max_raw, res.R_raw)
                if _better(res, best):
                    best = res
        if spec.mu_points == 1 or round_ == spec.refine_rounds:
            break
        width = (hi - lo) / 4.0
        center = math.log10(best.mu)
        lo, hi = max(center - width / 2.0, math.log10(spec.mu_min)), min(
            center + width / 2.0, math.log10(spec.mu_max)
        )
        grid = np.logspace(lo, hi, spec.mu_points)
    assert best is not None
    return best, max_raw


def _fractions_valid(fr: Sequence[float]) -> bool:
    nonzero = [c for c in fr if c > 0.0]
    return (
        all(a > b for a, b in zip(fr, fr[1:]))
        and sum(nonzero) < 1.0
        and all(c >= 0.0 for c in fr)
    )


def optimize_decoy_fractions(
    src: SourceModel,
    ch: ChannelParams,
    L: int,
    tier: DecoyTier,
    mu: float,
    start: Sequence[float],
    max_passes: int = 4,
) -> tuple[tuple[float, ...], RateResult]:
    """Coordinate descent over the nonvacuum decoy fractions at fixed ``mu``."""
    tier = DecoyTier(tier)
    current = tuple(start)
    best = evaluate(src, ch, L, tier, mu, [0], current)[0]
    for _ in range(max_passes):
        improved = False
        for i in range(len(current) - 1):
            for c in DECOY_FRACTION_GRID:
                trial = current[:i] + (c,) + current[i + 1:]
                if trial == current or not _fractions_valid(trial):
                    continue
                res = evaluate(src, ch, L, tier, mu, [0], trial)[0]
                if res.R > best.R:
                    best, current, improved = res, trial, True
        if not improved:
            break
    return current, best


def optimize_point(src: SourceModel, ch: ChannelParams, L: int, spec: SearchSpec) -> RateResult:
    """Maximize the key rate over the intensity grid (and thresholds).

    Ties go to the smaller intensity, then the smaller threshold, so when no
    positive rate exists the result sits at the bottom of the grid with R = 0.
    """
    tier = spec.objective
    fractions = spec.fractions() if tier.is_finite else ()
    best, max_raw = _search_mu(src, ch, L, spec, fractions)
    if spec.optimize_decoys and tier.is_finite and best.R > 0.0:
        starts = [fractions]
        lower = _LOWER_TIER.get(tier)
        if lower is not None:
            # a tier is never worse than the one below it at the same leading fractions,
            # so seed the search with the lower tier's tuned fractions plus one decoy
            low = optimize_point(src, ch, L, replace(spec, objective=lower, decoy_fractions=None))
            if low.R > 0.0 and low.decoy_intensities:
                fr = tuple(v / low.mu for v in low.decoy_intensities)
                ext = fr[:-1] + ((fr[-2] + fr[-1]) / 2.0,) + fr[-1:]
                if _fractions_valid(ext):
                    cand = evaluate(src, ch, L, tier, low.mu, [0], ext)[0]
                    if _better(cand, best):
                        best = cand
                    starts.append(ext)
        for start in starts:
            tuned_fr, _ = optimize_decoy_fractions(src, ch, L, tier, best.mu, start)
            tuned, raw2 = _search_mu(src, ch, L, spec, tuned_fr)
            max_raw = max(max_raw, raw2)
            if tuned.R > best.R:
                best = tuned
    return replace(best, search_max_raw=max_raw)


def _sweep_one(args) -> RateResult:
    src, ch, L, spec, d = args
    res = optimize_point(src, ch.at_distance(d), L, spec)
    return replace(res, distance=float(d))


def _sweep_eta_one(args) -> RateResult:
    src, ch, L, spec, eta = args
    res = optimize_point(src, ch.with_eta(eta), L, spec)
    if eta == 0.0:
        d = math.inf
    elif eta <= ch.eta_b:
        d = ch.distance_of(eta)
    else:
        d = None  # more than the detector passes; no fiber length gives it
    return replace(res, distance=d)


def sweep_distance(
    src: SourceModel,
    ch_template: ChannelParams,
    L: int,
    spec: SearchSpec,
    d_grid: Iterable[float],
    workers: Optional[int] = None,
) -> list[RateResult]:
    """Optimized rate at each fiber length; results keep the input order."""
    d_grid = [float(d) for d in d_grid]
    if any(b < a for a, b in zip(d_grid, d_grid[1:])):
        raise DomainError("distance grid must be sorted ascending")
    return ordered_map(_sweep_one, [(src, ch_template, L, spec, d) for d in d_grid], workers)


def sweep_transmittance(
    src: SourceModel,
    ch_template: ChannelParams,
    L: int,
    spec: SearchSpec,
    eta_grid: Iterable[float],
    workers: Optional[int] = None,
) -> list[RateResult]:
    """Optimized rate at each overall transmittance."""
    return ordered_map(_sweep_eta_one, [(src, ch_template, L, spec, float(e)) for e in eta_grid], workers)


def max_positive_distance(results: Sequence[RateResult]) -> Optional[float]:
    """Largest distance with a positive rate, interpolated to the zero crossing.

    Interpolates linearly between the last positive point and the next one,
    using that point's best unclamped rate.  When that rate is not negative
    the last positive distance is returned.  ``None`` if no rate is positive.
    """
    positive = [i for i, r in enumerate(results) if r.R > 0.0]
    if not positive:
        return None
    i = positive[-1]
    last = results[i]
    if i + 1 == len(results):
        return last.distance
    nxt = results[i + 1]
    r2 = nxt.search_max_raw if nxt.search_max_raw is not None else nxt.R_raw
    if r2 >= 0.0:
        # no signed information past the crossing (finite-decoy sums are >= 0)
        return last.distance
    return last.distance + (nxt.distance - last.distance) * last.R / (last.R - r2)


def rate_landscape(
    src: SourceModel,
    ch: ChannelParams,
    L: int,
    mu_grid: Sequence[float],
    v_ths: Sequence[int],
) -> list[tuple[float, int, float]]:
    """(mu, v_th, R) for every cell of a no-decoy grid."""
    rows = []
    for mu in mu_grid:
        for res in evaluate(src, ch, L, DecoyTier.NONE, float(mu), list(v_ths)):
            rows.append((float(mu), int(res.v_th), res.R))
    return rows
