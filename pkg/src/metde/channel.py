"""BI-AWGN channel LLR statistics (unit symbol energy)."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .density import Grid, QuantizedDensity, delta_at_zero, gaussian_density


@dataclass(frozen=True)
class ChannelSpec:
    sigma_n: float
    punctured: bool = False

    def __post_init__(self):
        if not self.sigma_n > 0:
            raise ValueError(f"sigma_n must be positive, got {self.sigma_n}")


def channel_llr_mean(c: ChannelSpec) -> float:
    """2 / sigma^2 for a transmitted bit, 0 for a punctured one."""
    return 0.0 if c.punctured else 2.0 / c.sigma_n ** 2


def channel_llr_density(c: ChannelSpec, grid: Grid) -> QuantizedDensity:
    """Density of the channel LLR: N(2/s^2, 4/s^2), or a point mass at 0 if punctured."""
    if c.punctured:
        return delta_at_zero(grid)
    m = channel_llr_mean(c)
    return gaussian_density(m, 2 * m, grid)


def ebn0_to_sigma(ebn0_db: float, rate: float) -> float:
    """Noise standard deviation for a given Eb/N0 (dB) at code rate ``rate``."""
    if not 0 < rate <= 1:
        raise ValueError("rate must lie in (0, 1]")
    return (2 * rate * 10 ** (ebn0_db / 10)) ** -0.5


def sigma_to_ebn0(sigma_n: float, rate: float) -> float:
    return 10 * math.log10(1 / (2 * rate * sigma_n ** 2))
