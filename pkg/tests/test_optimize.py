import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import table_channel
from rrdps import optimize, rates
from rrdps.channel import ChannelParams
from rrdps.errors import DomainError
from rrdps.optimize import SearchSpec
from rrdps.rates import DecoyTier
from rrdps.sources import SourceModel


def _result(d, R, raw=None):
    return replace(rates.zero_gain_result(SourceModel.wcp(0.01), ChannelParams(), DecoyTier.NONE, 0),
                   R=max(R, 0.0), R_raw=R, distance=d, search_max_raw=raw)


class TestSearchSpec:
    @pytest.mark.parametrize(
        "kw", [dict(mu_min=0.0), dict(mu_min=0.2, mu_max=0.1), dict(mu_points=0), dict(v_th_min=3, v_th_max=2),
               dict(refine_rounds=-1)]
    )
    def test_invalid(self, kw):
        with pytest.raises(DomainError):
            SearchSpec(**kw)

    def test_thresholds_capped_by_packet(self):
        assert SearchSpec().thresholds(32) == list(range(16))
        assert SearchSpec(v_th_max=4).thresholds(32) == list(range(5))
        with pytest.raises(DomainError):
            SearchSpec(v_th_min=20).thresholds(32)


class TestOptimizePoint:
    def test_no_positive_rate(self):
        ch = table_channel(32, eta=1e-9)
        res = optimize.optimize_point(SourceModel.wcp(0.1), ch, 32, SearchSpec(mu_points=12))
        assert res.R == 0.0
        assert res.mu == pytest.approx(1e-4)
        assert res.v_th == 0

    @pytest.mark.parametrize("tier", list(DecoyTier))
    def test_single_point(self, tier):
        ch = table_channel(32, eta=1e-2)
        spec = SearchSpec(mu_min=0.02, mu_max=0.02, mu_points=1, v_th_min=3, v_th_max=3, objective=tier)
        res = optimize.optimize_point(SourceModel.wcp(0.5), ch, 32, spec)
        assert res.mu == 0.02
        if tier is DecoyTier.NONE:
            assert res.v_th == 3

    def test_interior_landscape_maximum(self):
        L = 128
        ch = ChannelParams(eta=1e-5, Y0=1.7e-6)
        mu_grid = np.geomspace(1e-3, 1.0, 41)
        v_ths = list(range(rates.max_threshold(L) + 1))
        rows = optimize.rate_landscape(SourceModel.wcp(0.01), ch, L, mu_grid, v_ths)
        mu, v_th, R = max(rows, key=lambda r: r[2])
        assert R > 0
        assert mu_grid[0] < mu < mu_grid[-1]
        assert v_ths[0] < v_th < v_ths[-1]

    def test_at_least_every_grid_point(self):
        ch = table_channel(32, eta=1e-2)
        spec = SearchSpec(mu_points=20, refine_rounds=2)
        best = optimize.optimize_point(SourceModel.wcp(0.5), ch, 32, spec)
        for mu, v_th, R in optimize.rate_landscape(SourceModel.wcp(0.5), ch, 32, spec.mu_grid()[::3], range(16)):
            assert best.R >= R

    @given(st.floats(1e-6, 1.0), st.sampled_from([DecoyTier.NONE, DecoyTier.INFINITE, DecoyTier.THREE]))
    @settings(max_examples=15)
    def test_finer_grid_never_worse(self, eta, tier):
        ch = table_channel(32, eta=eta)
        coarse = SearchSpec(mu_points=16, refine_rounds=0, objective=tier)
        fine = replace(coarse, mu_points=31)  # contains every coarse point
        a = optimize.optimize_point(SourceModel.wcp(0.5), ch, 32, coarse)
        b = optimize.optimize_point(SourceModel.wcp(0.5), ch, 32, fine)
        assert b.R >= a.R - 1e-12

    def test_tuned_decoys_never_worse(self):
        ch = table_channel(32).at_distance(100.0)
        spec = SearchSpec(mu_points=20, refine_rounds=1, objective=DecoyTier.FOUR)
        plain = optimize.optimize_point(SourceModel.wcp(0.5), ch, 32, spec)
        tuned = optimize.optimize_point(SourceModel.wcp(0.5), ch, 32, replace(spec, optimize_decoys=True))
        assert tuned.R >= plain.R > 0

    @pytest.mark.parametrize("d", [20.0, 129.0])
    def test_tuned_tiers_stay_ordered(self, d):
        ch = table_channel(32).at_distance(d)
        spec = SearchSpec(mu_points=20, refine_rounds=1, optimize_decoys=True)
        two, three, four = (optimize.optimize_point(SourceModel.wcp(0.5), ch, 32, replace(spec, objective=t)).R
                            for t in (DecoyTier.TWO, DecoyTier.THREE, DecoyTier.FOUR))
        assert two <= three + 1e-15 and three <= four + 1e-15
        assert four > 0

    def test_fraction_search_keeps_valid_fractions(self):
        ch = table_channel(32).at_distance(50.0)
        fr, res = optimize.optimize_decoy_fractions(
            SourceModel.wcp(0.5), ch, 32, DecoyTier.THREE, 0.01, (0.5, 0.25, 0.0)
        )
        assert fr[-1] == 0.0 and fr[0] > fr[1] > 0.0 and sum(fr) < 1.0
        assert res.R >= optimize.evaluate(SourceModel.wcp(0.5), ch, 32, DecoyTier.THREE, 0.01, [0],
                                          (0.5, 0.25, 0.0))[0].R


class TestSweep:
    def test_empty(self):
        assert optimize.sweep_distance(SourceModel.wcp(0.1), table_channel(32), 32, SearchSpec(), []) == []

    def test_unsorted(self):
        with pytest.raises(DomainError):
            optimize.sweep_distance(SourceModel.wcp(0.1), table_channel(32), 32, SearchSpec(), [10, 0])

    @pytest.mark.parametrize("tier", [DecoyTier.NONE, DecoyTier.INFINITE, DecoyTier.TWO])
    def test_nonincreasing_and_largest_at_zero(self, tier):
        spec = SearchSpec(mu_points=20, refine_rounds=0, objective=tier)
        res = optimize.sweep_distance(SourceModel.wcp(0.1), table_channel(32), 32, spec, range(0, 161, 20))
        assert res[0].distance == 0.0 and res[0].transmittance == 0.045
        Rs = [r.R for r in res]
        assert Rs[0] == max(Rs)
        assert all(b <= a + 1e-12 for a, b in zip(Rs, Rs[1:]))
        assert [r.distance for r in res] == list(map(float, range(0, 161, 20)))

    def test_workers_do_not_change_results(self):
        spec = SearchSpec(mu_points=12, refine_rounds=1)
        args = (SourceModel.wcp(0.1), table_channel(32), 32, spec, [0.0, 40.0, 80.0])
        assert optimize.sweep_distance(*args, workers=1) == optimize.sweep_distance(*args, workers=2)

    def test_transmittance_sweep(self):
        spec = SearchSpec(mu_points=12, refine_rounds=0)
        res = optimize.sweep_transmittance(SourceModel.wcp(0.1), table_channel(32), 32, spec, [0.5, 1e-2, 0.0])
        assert res[0].distance is None and res[0].R > 0
        assert res[1].distance == pytest.approx(table_channel(32).distance_of(1e-2))
        assert math.isinf(res[2].distance) and res[2].R == 0.0


class TestMaxPositiveDistance:
    def test_none_positive(self):
        assert optimize.max_positive_distance([_result(0.0, -1.0)]) is None
        assert optimize.max_positive_distance([]) is None

    def test_interpolates_to_crossing(self):
        res = [_result(0.0, 3.0), _result(10.0, 1.0), _result(20.0, -1.0)]
        assert optimize.max_positive_distance(res) == pytest.approx(15.0)

    def test_uses_best_raw_rate_of_next_point(self):
        res = [_result(10.0, 1.0), _result(20.0, -5.0, raw=-3.0)]
        assert optimize.max_positive_distance(res) == pytest.approx(12.5)

    def test_last_point_positive(self):
        assert optimize.max_positive_distance([_result(0.0, 1.0), _result(5.0, 1e-9)]) == 5.0

    def test_no_signed_information(self):
        assert optimize.max_positive_distance([_result(10.0, 1.0), _result(20.0, 0.0, raw=0.0)]) == 10.0
