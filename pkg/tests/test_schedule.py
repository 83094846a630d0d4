import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointdiff.errors import ConfigError, ContractError
from jointdiff.schedule import (
    DEFAULT_AUDIO_SCHEDULE,
    DEFAULT_VIDEO_SCHEDULE,
    LossProfile,
    TimestepMap,
    build_schedule,
    local_sequences,
    map_timesteps,
    profile_bins,
    round_half_away,
    schedule_from_dict,
    unrounded_timesteps,
)


def mp_map(gamma, T, Tv, Ta, t):
    """High-precision evaluation of the power map with half-away rounding."""
    mpmath.mp.dps = 50
    u = mpmath.mpf(t) / T
    s = mpmath.sqrt(mpmath.mpf(gamma))
    m = Tv * u ** s
    n = Ta * u ** (1 / s)
    return int(mpmath.floor(m + mpmath.mpf("0.5"))), int(mpmath.floor(n + mpmath.mpf("0.5")))


class TestBuildSchedule:
    def test_constant_beta_products(self):
        s = build_schedule("linear", 3, 0.02, 0.02)
        np.testing.assert_allclose(s.alpha_bars, [0.98, 0.9604, 0.941192], rtol=1e-12)

    @pytest.mark.parametrize("kind", ["linear", "scaled_linear"])
    def test_first_alpha_bar(self, kind):
        s = build_schedule(kind, 100, 1e-4, 0.02)
        assert s.alpha_bar(1) == 1.0 - s.betas[0]
        assert s.alpha_bar(0) == 1.0

    def test_scaled_linear_interpolates_sqrt(self):
        s = build_schedule("scaled_linear", 3, 0.01, 0.09)
        np.testing.assert_allclose(s.betas, [0.01, 0.04, 0.09], rtol=1e-12)

    def test_reversed_range_rejected(self):
        with pytest.raises(ConfigError):
            build_schedule("linear", 10, 0.02, 0.01)

    @pytest.mark.parametrize("bad", [("cosine", 10, 0.1, 0.2), ("linear", 0, 0.1, 0.2), ("linear", 10, 0.0, 0.2),
                                     ("linear", 10, 0.1, 1.0)])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            build_schedule(*bad)

    @settings(max_examples=100, deadline=None)
    @given(st.sampled_from(["linear", "scaled_linear"]), st.integers(1, 400),
           st.floats(1e-5, 0.5), st.floats(0.0, 0.4))
    def test_products_and_monotonicity(self, kind, T, b0, extra):
        b1 = min(b0 + extra, 0.99)
        s = build_schedule(kind, T, b0, b1)
        assert ((s.betas > 0) & (s.betas < 1)).all()
        assert (np.diff(s.alpha_bars) < 0).all()
        direct = np.array([math.prod(1 - s.betas[: t + 1]) for t in range(T)])
        np.testing.assert_allclose(s.alpha_bars, direct, rtol=1e-6)

    def test_terminal_warning(self, caplog):
        build_schedule("linear", 10, 0.001, 0.002)
        assert "terminal alpha_bar" in caplog.text

    def test_defaults_are_near_gaussian_at_the_end(self):
        for d in (DEFAULT_VIDEO_SCHEDULE, DEFAULT_AUDIO_SCHEDULE):
            assert schedule_from_dict(d).alpha_bars[-1] < 0.05

    def test_video_default_collapses_faster(self):
        v, a = schedule_from_dict(DEFAULT_VIDEO_SCHEDULE), schedule_from_dict(DEFAULT_AUDIO_SCHEDULE)
        assert (v.alpha_bars[150:] < a.alpha_bars[150:]).all()


class TestMapTimesteps:
    def test_spot_value(self):
        tm = TimestepMap(25, 1000, 1000, 1.5)
        assert mp_map(1.5, 25, 1000, 1000, 10) == (326, 473)
        assert map_timesteps(tm, 10) == (326, 473)

    @pytest.mark.parametrize("T", [1, 7, 25, 1000])
    def test_gamma_one_identity(self, T):
        tm = TimestepMap(T, T, T, 1.0)
        assert all(map_timesteps(tm, t) == (t, t) for t in range(T + 1))

    def test_endpoints(self):
        tm = TimestepMap(25, 1000, 800, 1.75)
        assert map_timesteps(tm, 25) == (1000, 800)
        assert map_timesteps(tm, 0) == (0, 0)

    def test_out_of_range(self):
        tm = TimestepMap(25, 1000, 1000, 1.5)
        for t in (-1, 26):
            with pytest.raises(ContractError):
                map_timesteps(tm, t)

    def test_invalid_map(self):
        with pytest.raises(ConfigError):
            TimestepMap(0, 10, 10, 1.0)
        with pytest.raises(ConfigError):
            TimestepMap(10, 10, 10, 0.0)

    def test_round_half_away(self):
        assert [round_half_away(x) for x in (0.5, 1.5, 2.5, -0.5, 2.4999)] == [1, 2, 3, -1, 2]

    @pytest.mark.parametrize("gamma", [1.0, 1.25, 1.5, 1.75, 2.0])
    def test_matches_high_precision_oracle(self, gamma):
        tm = TimestepMap(25, 1000, 1000, gamma)
        for t in range(26):
            assert map_timesteps(tm, t) == mp_map(gamma, 25, 1000, 1000, t)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 300), st.integers(1, 1000), st.integers(1, 1000), st.floats(0.2, 5.0))
    def test_monotone_and_proportional(self, T, Tv, Ta, gamma):
        tm = TimestepMap(T, Tv, Ta, gamma)
        ms, ns = local_sequences(tm)
        assert ms == sorted(ms, reverse=True) and ns == sorted(ns, reverse=True)
        for t in range(1, T + 1):
            m, n = unrounded_timesteps(tm, t)
            assert m / Tv == pytest.approx((n / Ta) ** gamma, rel=1e-12, abs=1e-300)

    @pytest.mark.parametrize("g1,g2", [(1.0, 1.25), (1.25, 1.5), (1.5, 2.0), (0.5, 1.0)])
    def test_larger_gamma_lowers_video_step(self, g1, g2):
        a, b = TimestepMap(50, 1000, 1000, g1), TimestepMap(50, 1000, 1000, g2)
        for t in range(51):
            assert unrounded_timesteps(b, t)[0] <= unrounded_timesteps(a, t)[0]
            assert map_timesteps(b, t)[0] <= map_timesteps(a, t)[0] + 1


class TestLossProfile:
    def test_bins(self):
        b = profile_bins(1000, 11)
        assert b[0] == 1 and b[-1] == 1000 and len(b) == 11

    def test_bins_contract(self):
        with pytest.raises(ContractError):
            profile_bins(100, 1)
        with pytest.raises(ContractError):
            profile_bins(5, 10)

    def test_csv_round_trip(self, tmp_path):
        p = LossProfile(np.array([1, 5, 10]), np.array([1.0, 0.5, 0.25]), np.array([1.0, 0.75, 0.1]))
        p.to_csv(tmp_path / "p.csv")
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert lines[0] == "t,loss_v,loss_a" and len(lines) == 4
        q = LossProfile.from_csv(tmp_path / "p.csv")
        np.testing.assert_array_equal(q.normalized_loss_v, p.normalized_loss_v)
        assert p.curve_distance() == pytest.approx((0 + 0.25 + 0.15) / 3)
