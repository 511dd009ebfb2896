import numpy as np
import pytest

from metde.channel import (ChannelSpec, channel_llr_density, channel_llr_mean, ebn0_to_sigma,
                           sigma_to_ebn0)
from metde.density import Grid, error_probability, mean, variance

GRID = Grid()
D = GRID.delta


def test_channel_density_sigma_one():
    p = channel_llr_density(ChannelSpec(1.0), GRID).check()
    assert abs(mean(p) - 2) <= 2 * D
    assert abs(variance(p) - 4) <= 4 * D


def test_punctured_is_delta():
    p = channel_llr_density(ChannelSpec(1.0, punctured=True), GRID)
    assert p.mass[GRID.half] == 1.0


def test_vanishing_snr():
    p = channel_llr_density(ChannelSpec(100.0), GRID)
    assert abs(mean(p) - 2e-4) <= 2 * D
    assert abs(error_probability(p) - 0.5) < 1e-2


@pytest.mark.parametrize("sigma, m", [(1.0, 2.0), (np.sqrt(2.0), 1.0)])
def test_channel_mean(sigma, m):
    assert channel_llr_mean(ChannelSpec(sigma)) == pytest.approx(m, rel=1e-15)
    assert channel_llr_mean(ChannelSpec(sigma, punctured=True)) == 0


@pytest.mark.parametrize("sigma", [0.5, 0.9, 1.7, 2.5])
def test_density_mean_and_symmetry(sigma):
    p = channel_llr_density(ChannelSpec(sigma), GRID)
    assert abs(mean(p) - channel_llr_mean(ChannelSpec(sigma))) <= 2 * D
    K = GRID.half
    k = np.arange(1, int(6 / D))
    lhs, rhs = p.mass[K + k], np.exp(k * D) * p.mass[K - k]
    keep = lhs > 1e-12
    np.testing.assert_allclose(rhs[keep], lhs[keep], rtol=1e-3)


def test_nonpositive_sigma():
    with pytest.raises(ValueError):
        ChannelSpec(0.0)


def test_ebn0_conversion():
    assert ebn0_to_sigma(0.0, 0.5) == pytest.approx(1.0)
    assert sigma_to_ebn0(ebn0_to_sigma(1.3, 0.3), 0.3) == pytest.approx(1.3)
    with pytest.raises(ValueError):
        ebn0_to_sigma(1.0, 0.0)
