import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from risd2d.core_model import ChannelSet, ScenarioConfig  # noqa: E402


def random_cn(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_channels(rng, K=2, J=2, M=3, L=2, N=3, scale=1.0, noise=0.1):
    """Unit-scale random channels for algebraic checks."""
    return ChannelSet(
        g_cu_bs=random_cn(rng, (K, M), scale), g_d2d=random_cn(rng, (J,), scale),
        f_cu_dr=random_cn(rng, (K, J), scale), f_dt_bs=random_cn(rng, (J, M), scale),
        s_cu_ris=random_cn(rng, (L, K, N), scale), s_ris_bs=random_cn(rng, (L, M, N), scale),
        s_dt_ris=random_cn(rng, (L, J, N), scale), s_ris_dr=random_cn(rng, (L, J, N), scale),
        noise_dr=noise, noise_bs=noise)


def random_phases(rng, size):
    return np.exp(1j * rng.uniform(0, 2 * np.pi, size))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cfg():
    return ScenarioConfig(num_cu=2, num_d2d=2, elements_per_ris=3, bs_antennas=3)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
