"""Hybrid density evolution: full DE until the messages look Gaussian, then the mean recursion."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .channel import ChannelSpec
from .density import mean
from .ensemble import MetEnsemble
from .full_de import DeConfig, DeTrace, DensityEvolver, _moments, _Stall
from .gauss_approx import _mean_cn, _Structure, run_mean_phase


@dataclass
class HybridConfig(DeConfig):
    """Full-DE settings plus the two switching limits.

    ``max_full_de_iterations`` is a hard cap on full-DE iterations;
    ``kl_target`` is the soft limit on the monitored check message's KL
    divergence to the symmetric Gaussian of equal mean, checked every
    ``kl_check_interval`` iterations.  ``kl_target = 0`` disables the soft limit.

    ``reseed`` picks what the mean recursion starts from: ``"check"`` takes
    the check-to-variable density means and resumes with a variable update;
    ``"variable"`` takes the variable-to-check means and recomputes the
    check side with the mean recursion first.
    """

    max_full_de_iterations: int = 100
    kl_target: float = 0.04
    kl_check_interval: int = 5
    reseed: str = "check"

    def __post_init__(self):
        super().__post_init__()
        if not 0 <= self.max_full_de_iterations <= self.max_iterations:
            raise ValueError("max_full_de_iterations must lie in [0, max_iterations]")
        if self.kl_target < 0:
            raise ValueError("kl_target must be non-negative")
        if self.kl_check_interval < 1:
            raise ValueError("kl_check_interval must be >= 1")
        if self.reseed not in ("check", "variable"):
            raise ValueError("reseed must be 'check' or 'variable'")

    def de_config(self) -> DeConfig:
        return DeConfig(self.max_iterations, self.target_ber, self.grid, self.kl_check_interval,
                        self.ber_functional, self.stall_window, self.stall_rtol)


def run_hybrid(e: MetEnsemble, sigma_n: float,
               cfg: HybridConfig | None = None) -> tuple[bool, DeTrace, int]:
    """Run hybrid DE; returns (converged, trace, switch_iteration).

    ``switch_iteration`` is the number of full-DE iterations performed
    before handing over (equal to the trace length if no switch happened).
    """
    cfg = cfg or HybridConfig()
    ev = DensityEvolver(e, sigma_n, cfg.de_config())
    trace = DeTrace("hybrid", sigma_n, e.m_e)
    stall = _Stall(cfg.stall_window, cfg.stall_rtol)
    t0 = time.perf_counter()
    switched = False
    it = 0
    if cfg.max_full_de_iterations == 0:
        switched = True
    while not switched and it < cfg.max_iterations:
        it += 1
        ev.variable_half()
        ber = ev.ber()
        vb, vm, vv = _moments(ev.f_v)
        trace.record(it, "full", ber, vb, vm, vv, [mean(p) for p in ev.f_u], math.nan,
                     time.perf_counter() - t0)
        if ber < cfg.target_ber:
            trace.converged = True
            trace.switch_iteration = it
            return True, trace, it
        check = it % cfg.kl_check_interval == 0
        ev.check_half(check)
        if check:
            kl = ev.monitored_kl()  # NaN when the monitored mean is not positive
            trace.set_last_kl(kl)
            if kl < cfg.kl_target:
                switched = True
        if stall.update(ber):
            trace.switch_iteration = it
            return False, trace, it
        if it >= cfg.max_full_de_iterations:
            switched = True
    trace.switch_iteration = it
    if not switched or it >= cfg.max_iterations:
        return trace.converged, trace, it
    st = _Structure(e, ev.persp)
    m_ch = st.channel_means(ChannelSpec(sigma_n))
    if not it:
        m_u = np.zeros(e.m_e)
    elif cfg.reseed == "check":
        m_u = np.array([mean(p) for p in ev.f_u])
    else:
        m_u = _mean_cn(st, np.array([mean(p) for p in ev.f_v]))
    run_mean_phase(st, m_ch, m_u, cfg, trace, it + 1, "mean", t0, stall)
    return trace.converged, trace, it
