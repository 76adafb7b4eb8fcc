import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import random_channels
from risd2d.channel_gen import (
    CsiErrorModel, FadingConfig, apply_csi_error, generate_channels, generate_geometry, pathloss,
    rayleigh_scalar, rayleigh_vector, rician_vector,
)
from risd2d.core_model import ConfigurationError, ScenarioConfig


class TestGeometry:
    def test_default_ris_positions(self):
        geo = generate_geometry(ScenarioConfig())
        assert_array_equal(geo.ris, [[0, 500], [500, 0], [0, -500], [-500, 0]])
        assert_array_equal(geo.bs, [0, 0])

    def test_placement_ranges(self):
        cfg = ScenarioConfig(num_cu=6, num_d2d=6)
        for seed in range(50):
            geo = generate_geometry(cfg, seed)
            r_cu = np.linalg.norm(geo.cu, axis=1)
            assert ((r_cu >= 400) & (r_cu <= 500)).all()
            assert (np.linalg.norm(geo.dt, axis=1) <= 500).all()
            d = np.linalg.norm(geo.dr - geo.dt, axis=1)
            assert ((d >= 10) & (d <= 30)).all()

    def test_deterministic(self):
        cfg = ScenarioConfig()
        a, b = generate_geometry(cfg, 7), generate_geometry(cfg, 7)
        assert_array_equal(a.cu, b.cu)
        assert_array_equal(a.dr, b.dr)
        assert not np.array_equal(a.cu, generate_geometry(cfg, 8).cu)

    def test_fixed_positions(self):
        cfg = ScenarioConfig(num_cu=1, num_d2d=1, cu_positions=[(400, 0)], dt_positions=[(250, 0)])
        geo = generate_geometry(cfg, 3)
        assert_array_equal(geo.cu, [[400, 0]])
        assert_array_equal(geo.dt, [[250, 0]])


class TestFading:
    def test_default_constants(self):
        f = FadingConfig()
        assert (f.taps_direct, f.taps_ris, f.taps_user) == (16, 4, 16)
        assert (f.pathloss_exp_bs_user, f.pathloss_exp_ris, f.pathloss_exp_user_user) == (3.8, 2.2, 4.0)
        assert_allclose(f.rician_factor, 10.0)

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            FadingConfig(taps_ris=0)
        with pytest.raises(ConfigurationError):
            FadingConfig(pathloss_exp_ris=0.0)

    def test_pathloss_law(self):
        f = FadingConfig()
        assert_allclose(pathloss(40.0, 4.0, f) / pathloss(20.0, 4.0, f), 2.0 ** -4)
        assert_allclose(pathloss(100.0, 3.8, f), 100.0 ** -3.8)

    def test_rayleigh_vector_power(self):
        # the configured power is the per-entry mean power of the summed taps
        power = 100.0 ** -3.8
        x = rayleigh_vector(np.random.default_rng(0), power, 16, 4, samples=100_000)
        assert_allclose(np.mean(np.abs(x) ** 2, axis=0) / power, 1.0, atol=0.02)

    def test_rayleigh_scalar_power(self):
        x = rayleigh_scalar(np.random.default_rng(1), 2.5, 16, samples=100_000)
        assert_allclose(np.mean(np.abs(x) ** 2) / 2.5, 1.0, atol=0.02)
        assert abs(x.mean()) < 3 * np.sqrt(2.5 / 100_000)

    def test_rician_power(self):
        rng = np.random.default_rng(2)
        draws = np.array([rician_vector(rng, 3.0, 4, 10.0, 2, 0.3, 0.1) for _ in range(20_000)])
        assert_allclose(np.mean(np.abs(draws) ** 2) / 3.0, 1.0, atol=0.02)
        # line-of-sight share: |mean|^2 / power = K / (K + 1)
        assert_allclose(np.abs(draws.mean(axis=0)) ** 2 / 3.0, 10 / 11, atol=0.02)


class TestChannels:
    def test_shapes(self):
        cfg = ScenarioConfig()
        ch = generate_channels(cfg, seed=0)
        assert ch.g_cu_bs.shape == (3, 4)
        assert ch.s_ris_bs.shape == (4, 4, 10)
        assert ch.num_elements == 40

    def test_common_random_numbers(self):
        cfg = ScenarioConfig()
        a = generate_channels(cfg, seed=3)
        b = generate_channels(dataclasses.replace(cfg, ris_positions=()), seed=3)
        assert_array_equal(a.g_cu_bs, b.g_cu_bs)
        assert_array_equal(a.g_d2d, b.g_d2d)
        assert b.num_elements == 0

    def test_distance_scaling_user_user(self):
        # same seed and geometry except the DT-DR distance: mean power ratio 2^-4
        f = FadingConfig()
        assert_allclose(pathloss(20.0, f.pathloss_exp_user_user, f)
                        / pathloss(10.0, f.pathloss_exp_user_user, f), 1 / 16)

    def test_deterministic(self):
        cfg = ScenarioConfig()
        a, b = generate_channels(cfg, seed=9), generate_channels(cfg, seed=9)
        assert_array_equal(a.s_ris_bs, b.s_ris_bs)


class TestCsiError:
    def test_zero_variance(self, rng):
        ch = random_channels(rng)
        est, err = apply_csi_error(ch, CsiErrorModel())
        assert_array_equal(est.g_cu_bs, ch.g_cu_bs)
        for name in ("d2d", "cu_dr", "cu_bs", "dt_bs"):
            assert_array_equal(getattr(est.cascades(), name), getattr(ch.cascades(), name))

    def test_estimate_plus_error_is_truth(self, rng):
        ch = random_channels(rng)
        model = CsiErrorModel(0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
        est, err = apply_csi_error(ch, model, seed=4)
        assert_allclose(est.g_d2d + err.g_d2d, ch.g_d2d, rtol=1e-14)
        assert_allclose(est.cascades().cu_bs + err.cascades().cu_bs, ch.cascades().cu_bs,
                        rtol=1e-13)

    def test_error_moments(self, rng):
        # 10^5 samples per class: cu_bs has M * NL = 4 * 25_000 entries per draw,
        # d2d has NL = 25_000 entries, so four seeds are pooled
        ch = random_channels(rng, K=1, J=1, M=4, L=1, N=25_000)
        model = CsiErrorModel(g_cu=0.3, Q1=2.0, q1=0.5)
        errs = [apply_csi_error(ch, model, seed=s)[1].cascades() for s in range(4)]
        for name, var, draws in (("cu_bs", 2.0, errs[:1]), ("d2d", 0.5, errs)):
            e = np.concatenate([getattr(c, name).ravel() for c in draws])
            assert e.size == 100_000
            assert_allclose(np.mean(np.abs(e) ** 2) / var, 1.0, atol=0.02)
            assert abs(e.mean()) < 3 * np.sqrt(var / e.size)

    def test_relative_and_scaled(self, rng):
        ch = random_channels(rng)
        m = CsiErrorModel.relative(ch, 0.1)
        assert_allclose(m.g_cu, 0.1 * np.mean(np.abs(ch.g_cu_bs) ** 2))
        assert_allclose(m.scaled(2.0).Q2, 2 * m.Q2)
        with pytest.raises(ConfigurationError):
            CsiErrorModel(g_cu=-1.0)
