import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import table_channel
from rrdps import channel, decoy
from rrdps.channel import ChannelParams
from rrdps.decoy import DecoyObservation, YieldBounds
from rrdps.errors import DomainError, InsufficientObservationsError, OrderingError
from rrdps.rates import DecoyTier

mp.mp.dps = 40

ETAS = list(np.geomspace(1e-4, 1.0, 7))
MUS = [0.005, 0.02, 0.1]
LS = [16, 32, 64]


def four_tier_obs(ch, mu, L):
    return decoy.simulate_observations(ch, mu, decoy.default_decoy_intensities(DecoyTier.FOUR, mu), L)


def true_values(ch):
    Y = [channel.yield_n(ch, n) for n in range(4)]
    e = [channel.error_n(ch, n) for n in range(1, 4)]
    return Y, e


class TestObservation:
    @pytest.mark.parametrize("x,Q,E", [(-1.0, 0.1, 0.1), (1.0, 1.5, 0.1), (1.0, 0.1, -0.1), (math.nan, 0.1, 0.1)])
    def test_invalid(self, x, Q, E):
        with pytest.raises(DomainError):
            DecoyObservation(x, Q, E)

    def test_scaled_gain_no_overflow(self):
        o = DecoyObservation(800.0, 1e-300, 0.5)
        assert o.scaled_gain == pytest.approx(math.exp(800.0 + math.log(1e-300)))
        assert math.isfinite(o.scaled_error_gain)


class TestAgainstPerPulseForms:
    """The packet-intensity implementation against the per-pulse transcription."""

    @pytest.mark.parametrize("L", LS)
    @pytest.mark.parametrize("eta", [1e-3, 1e-2, 0.3])
    def test_all_bounds(self, L, eta):
        ch = table_channel(L, eta=eta)
        mu = 0.02
        v = decoy.default_decoy_intensities(DecoyTier.FOUR, mu)
        obs = four_tier_obs(ch, mu, L)
        Q = [o.Q for o in obs]
        E = [o.E for o in obs]
        b = decoy.estimate_bounds(DecoyTier.FOUR, obs)

        Y0 = oracles.literal_Y0(L, v[0], v[3], Q[1], Q[4])
        Y1 = oracles.literal_Y1(L, mu, v[0], v[3], Q[0], Q[1], Q[4], Y0)
        Y2 = oracles.literal_Y2(L, mu, (v[0], v[1], v[3]), Q[0], (Q[1], Q[2], Q[4]), Y0, Y1)
        Y3 = oracles.literal_Y3(L, mu, v, Q[0], Q[1:], Y0, Y1, Y2)
        e1 = oracles.literal_e1(L, v[0], v[3], Q[1], Q[4], E[1], E[4], Y1)
        e2 = oracles.literal_e2(L, (v[0], v[1], v[3]), (Q[1], Q[2], Q[4]), (E[1], E[2], E[4]), Y2)
        e3 = oracles.literal_e3(L, v, Q[1:], E[1:], Y3)

        assert b.Y0_L == pytest.approx(float(Y0), rel=1e-9)
        assert b.Y1_L == pytest.approx(float(Y1), rel=1e-8)
        assert b.e1_U == pytest.approx(float(e1), rel=1e-8)
        if Y2 > 0:
            assert b.Y2_L == pytest.approx(float(Y2), rel=1e-6, abs=1e-12)
            assert b.e2_U == pytest.approx(min(float(e2), 1.0), rel=1e-6)
        if Y3 > 0 and b.Y3_L > 1e-6:
            assert b.Y3_L == pytest.approx(float(Y3), rel=1e-4, abs=1e-10)

    def test_two_photon_tail_needs_factor_two(self):
        # without the factor 2 on the tail term the two-photon "bound" exceeds the truth
        L, mu, eta = 32, 0.02, 1.0
        ch = ChannelParams(eta=eta, Y0=0.0)
        v = (0.01, 0.005, 0.0)
        obs = decoy.simulate_observations(ch, mu, v, L)
        Q = [o.Q for o in obs]
        Y2_true = channel.yield_n(ch, 2)
        Y0 = oracles.literal_Y0(L, v[0], v[2], Q[1], Q[3])
        Y1 = oracles.literal_Y1(L, mu, v[0], v[2], Q[0], Q[1], Q[3], Y0)
        loose = oracles.literal_Y2(L, mu, v, Q[0], Q[1:], Y0, Y1, second_term_factor=1)
        tight = oracles.literal_Y2(L, mu, v, Q[0], Q[1:], Y0, Y1, second_term_factor=2)
        assert loose > Y2_true
        assert tight <= Y2_true


class TestSoundness:
    @pytest.mark.parametrize("L", LS)
    @pytest.mark.parametrize("mu", MUS)
    @pytest.mark.parametrize("eta", ETAS)
    def test_bounds_bracket_truth(self, L, mu, eta):
        ch = table_channel(L, eta=float(eta))
        b = decoy.estimate_bounds(DecoyTier.FOUR, four_tier_obs(ch, mu, L))
        Y, e = true_values(ch)
        for lo, true in zip(b.yields(), Y):
            assert lo <= true + 1e-10
        for hi, true in zip(b.errors(), e):
            assert hi >= true - 1e-10

    @given(
        st.floats(1e-5, 1.0),
        st.floats(1e-3, 0.2),
        st.integers(2, 128),
        st.floats(0.0, 1e-3),
        st.floats(0.0, 0.1),
    )
    def test_bounds_bracket_truth_property(self, eta, mu, L, Y0, e_d):
        ch = ChannelParams(eta=eta, Y0=Y0, e_d=e_d)
        b = decoy.estimate_bounds(DecoyTier.FOUR, four_tier_obs(ch, mu, L))
        Y, e = true_values(ch)
        for lo, true in zip(b.yields(), Y):
            assert lo <= true + 1e-10
        for hi, true in zip(b.errors(), e):
            assert hi >= true - 1e-10


class TestY0:
    @pytest.mark.parametrize("eta", ETAS)
    def test_exact_with_vacuum(self, eta):
        ch = table_channel(32, eta=float(eta))
        obs = decoy.simulate_observations(ch, 0.02, (0.01, 0.0), 32)
        assert decoy.bound_Y0(obs[1], obs[2]) == pytest.approx(ch.Y0, rel=1e-12)

    def test_zero_background(self):
        obs = decoy.simulate_observations(ChannelParams(eta=0.01, Y0=0.0), 0.02, (0.01, 0.0), 32)
        assert decoy.bound_Y0(obs[1], obs[2]) == 0.0

    def test_nonvacuum_lower_bound(self):
        ch = table_channel(32, eta=0.01)
        obs = decoy.simulate_observations(ch, 0.02, (0.01, 0.001), 32)
        assert decoy.bound_Y0(obs[1], obs[2]) <= ch.Y0

    def test_ordering(self):
        o1, o2 = DecoyObservation(0.1, 0.1, 0.1), DecoyObservation(0.2, 0.1, 0.1)
        with pytest.raises(OrderingError):
            decoy.bound_Y0(o1, o2)
        with pytest.raises(OrderingError):
            decoy.bound_Y0(o1, o1)


class TestY1:
    @pytest.mark.parametrize("v1", [1e-3, 3e-4, 1e-4])
    def test_weak_decoy_limit(self, v1):
        # packet intensity of the weak decoy at most 0.032; Y1 = 1 on a lossless channel
        ch = ChannelParams(eta=1.0, Y0=0.0)
        obs = decoy.simulate_observations(ch, 0.02, (v1, 0.0), 32)
        Y1_L = decoy.bound_Y1(obs[0], obs[1], obs[2], 0.0)
        assert 0.99 <= Y1_L <= 1.0

    def test_zero_gain(self):
        obs = [DecoyObservation(x, 0.0, 0.0) for x in (0.64, 0.32, 0.0)]
        assert decoy.bound_Y1(*obs, 0.0) == 0.0

    def test_needs_signal_above_decoys(self):
        obs = [DecoyObservation(x, 0.1, 0.1) for x in (0.3, 0.2, 0.15)]
        with pytest.raises(OrderingError):
            decoy.bound_Y1(*obs, 0.0)


class TestHigherOrder:
    def test_zero_observations(self):
        obs = [DecoyObservation(x, 0.0, 0.0) for x in (0.64, 0.32, 0.16, 0.08, 0.0)]
        assert decoy.bound_Y2(obs[0], obs[1], obs[2], obs[4], 0.0, 0.0) == 0.0
        assert decoy.bound_Y3(*obs, 0.0, 0.0, 0.0) == 0.0

    def test_shrinking_spread_stays_sound(self):
        ch = table_channel(32, eta=0.01)
        Y2 = channel.yield_n(ch, 2)
        mu = 0.02
        for spread in np.geomspace(0.5, 1e-3, 12):
            v = (0.3 * mu, 0.3 * mu * (1 - spread), 0.0)
            obs = decoy.simulate_observations(ch, mu, v, 32)
            Y0 = decoy.bound_Y0(obs[1], obs[3])
            Y1 = decoy.bound_Y1(obs[0], obs[1], obs[3], Y0)
            value = decoy.bound_Y2(obs[0], obs[1], obs[2], obs[3], Y0, Y1)
            assert math.isfinite(value) and value <= Y2 + 1e-10

    def test_Y2_requires_signal_above_sum(self):
        obs = [DecoyObservation(x, 0.1, 0.1) for x in (0.5, 0.3, 0.2, 0.0)]
        with pytest.raises(OrderingError):
            decoy.bound_Y2(*obs, 0.0, 0.0)

    def test_Y3_requires_signal_above_sum(self):
        obs = [DecoyObservation(x, 0.1, 0.1) for x in (0.5, 0.3, 0.2, 0.1, 0.0)]
        with pytest.raises(OrderingError):
            decoy.bound_Y3(*obs, 0.0, 0.0, 0.0)


class TestErrorBounds:
    def test_error_free_channel(self):
        ch = ChannelParams(eta=0.05, Y0=0.0, e0=0.0, e_d=0.0)
        b = decoy.estimate_bounds(DecoyTier.FOUR, four_tier_obs(ch, 0.02, 32))
        assert b.Y0_L == 0.0
        assert b.e1_U == 0.0 and b.e2_U == 0.0
        obs = four_tier_obs(ch, 0.02, 32)
        assert decoy.bound_e3(*obs[1:], 0.5) == 0.0

    def test_e1_in_operating_regime(self):
        ch = table_channel(32, eta=0.01)
        b = decoy.estimate_bounds(DecoyTier.TWO, decoy.simulate_observations(ch, 0.02, (0.01, 0.0), 32))
        assert channel.error_n(ch, 1) <= b.e1_U < 0.5

    def test_vacuous_when_yield_bound_is_zero(self):
        obs = [DecoyObservation(x, 0.1, 0.1) for x in (0.64, 0.32, 0.16, 0.0)]
        assert decoy.bound_e1(obs[1], obs[3], 0.0) == 1.0
        assert decoy.bound_e2(obs[1], obs[2], obs[3], 0.0) == 1.0
        assert decoy.bound_e3(*[DecoyObservation(x, 0.1, 0.1) for x in (0.3, 0.2, 0.1, 0.0)], 0.0) == 1.0


class TestEstimateBounds:
    def test_all_four_tier_bounds_populated(self):
        ch = table_channel(32, eta=0.01)
        b = decoy.estimate_bounds(DecoyTier.FOUR, four_tier_obs(ch, 0.02, 32))
        assert None not in b.yields() + b.errors()
        assert len(b.yields()) == 4 and len(b.errors()) == 3

    def test_absent_entries_are_none(self):
        ch = table_channel(32, eta=0.01)
        b = decoy.estimate_bounds(DecoyTier.TWO, four_tier_obs(ch, 0.02, 32))
        assert b.Y2_L is None and b.e2_U is None and b.Y3_L is None and b.e3_U is None

    def test_vacuous_flags(self):
        obs = [DecoyObservation(x, 0.0, 0.0) for x in (0.64, 0.32, 0.16, 0.08, 0.0)]
        b = decoy.estimate_bounds(DecoyTier.FOUR, obs)
        assert {"Y1_L", "e1_U", "Y2_L", "e2_U", "Y3_L", "e3_U"} <= b.vacuous
        assert "Y0_L" not in b.vacuous

    def test_insufficient(self):
        obs = [DecoyObservation(x, 0.1, 0.1) for x in (0.64, 0.0)]
        with pytest.raises(InsufficientObservationsError):
            decoy.estimate_bounds(DecoyTier.TWO, obs)
        obs = [DecoyObservation(x, 0.1, 0.1) for x in (0.64, 0.32, 0.0)]
        with pytest.raises(InsufficientObservationsError):
            decoy.estimate_bounds(DecoyTier.THREE, obs)

    def test_unordered(self):
        obs = [DecoyObservation(x, 0.1, 0.1) for x in (0.64, 0.0, 0.32)]
        with pytest.raises(OrderingError):
            decoy.estimate_bounds(DecoyTier.TWO, obs)

    def test_not_for_asymptotic_tiers(self):
        with pytest.raises(DomainError):
            decoy.estimate_bounds(DecoyTier.INFINITE, [])

    @pytest.mark.parametrize("eta", ETAS)
    def test_lower_tiers_ignore_extra_decoys(self, eta):
        ch = table_channel(32, eta=float(eta))
        mu = 0.02
        four = decoy.estimate_bounds(DecoyTier.FOUR, four_tier_obs(ch, mu, 32))
        # the same nested subsets: (mu/2, 0) for Two and (mu/2, mu/4, 0) for Three
        two = decoy.estimate_bounds(DecoyTier.TWO, decoy.simulate_observations(ch, mu, (mu / 2, 0.0), 32))
        three = decoy.estimate_bounds(
            DecoyTier.THREE, decoy.simulate_observations(ch, mu, (mu / 2, mu / 4, 0.0), 32)
        )
        assert (four.Y0_L, four.Y1_L, four.e1_U) == (two.Y0_L, two.Y1_L, two.e1_U)
        assert (four.Y2_L, four.e2_U) == (three.Y2_L, three.e2_U)

    def test_projection(self):
        ch = table_channel(32, eta=0.01)
        four = decoy.estimate_bounds(DecoyTier.FOUR, four_tier_obs(ch, 0.02, 32))
        three = four.project(DecoyTier.THREE)
        assert three.tier is DecoyTier.THREE and three.Y3_L is None
        assert three.Y2_L == four.Y2_L
        with pytest.raises(DomainError):
            three.project(DecoyTier.FOUR)

    @given(st.floats(-1e-3, 1e-3), st.floats(-1e-3, 1e-3), st.integers(0, 4), st.sampled_from(ETAS))
    def test_noise_stays_finite(self, dq, de, k, eta):
        ch = table_channel(32, eta=float(eta))
        obs = four_tier_obs(ch, 0.02, 32)
        o = obs[k]
        obs[k] = DecoyObservation(o.packet_intensity, min(o.Q * (1 + dq), 1.0), min(o.E * (1 + de), 1.0))
        b = decoy.estimate_bounds(DecoyTier.FOUR, obs)
        for value in b.yields() + b.errors():
            assert math.isfinite(value) and 0.0 <= value <= 1.0

    def test_noise_is_continuous(self):
        ch = table_channel(32, eta=0.01)
        obs = four_tier_obs(ch, 0.02, 32)
        base = decoy.estimate_bounds(DecoyTier.FOUR, obs)
        for delta in (1e-5, 1e-7, 1e-9):
            noisy = [DecoyObservation(o.packet_intensity, o.Q * (1 + delta), o.E) for o in obs[:1]] + obs[1:]
            b = decoy.estimate_bounds(DecoyTier.FOUR, noisy)
            assert abs(b.Y1_L - base.Y1_L) <= 1e3 * delta * base.Y1_L


class TestTierInference:
    @pytest.mark.parametrize("n,tier", [(3, DecoyTier.TWO), (4, DecoyTier.THREE), (5, DecoyTier.FOUR), (7, DecoyTier.FOUR)])
    def test_counts(self, n, tier):
        assert decoy.infer_tier([DecoyObservation(float(n - i), 0.1, 0.1) for i in range(n)]) is tier

    def test_too_few(self):
        with pytest.raises(InsufficientObservationsError):
            decoy.infer_tier([DecoyObservation(1.0, 0.1, 0.1)] * 2)


class TestCsv:
    def test_round_trip(self, tmp_path):
        ch = table_channel(32, eta=0.01)
        obs = decoy.simulate_observations(ch, 0.02, (0.01, 0.0), 32)
        path = tmp_path / "obs.csv"
        lines = ["intensity_per_pulse,gain,qber"]
        for v, o in zip((0.0, 0.01, 0.02), reversed(obs)):
            lines.append(f"{v!r},{o.Q!r},{o.E!r}")
        path.write_text("\n".join(lines) + "\n")
        loaded = decoy.read_observations_csv(path, 32)
        assert [o.Q for o in loaded] == [o.Q for o in obs]
        assert decoy.infer_tier(loaded) is DecoyTier.TWO

    def test_missing_column(self, tmp_path):
        path = tmp_path / "obs.csv"
        path.write_text("intensity_per_pulse,gain\n0.1,0.1\n")
        with pytest.raises(DomainError, match="qber"):
            decoy.read_observations_csv(path, 32)

    def test_bad_row(self, tmp_path):
        path = tmp_path / "obs.csv"
        path.write_text("intensity_per_pulse,gain,qber\n0.1,2.0,0.1\n")
        with pytest.raises(DomainError, match=":2:"):
            decoy.read_observations_csv(path, 32)
