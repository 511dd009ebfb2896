"""Quantized density evolution for MET-LDPC ensembles on the BI-AWGN channel."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .channel import ChannelSpec, channel_llr_density
from .density import (Grid, QuantizedDensity, Spectrum, delta_at_zero, error_probability,
                      g_kernel, kl_to_symmetric_gaussian, mean, sum_kernel, variance)
from .ensemble import EdgePerspective, MetEnsemble, edge_perspective, monitored_check

BER_FUNCTIONALS = ("posterior", "edge")


@dataclass
class DeConfig:
    """Iteration limits and numerical settings shared by every method."""

    max_iterations: int = 1000
    target_ber: float = 1e-10
    grid: Grid = field(default_factory=Grid)
    kl_monitor_interval: int = 5
    ber_functional: str = "posterior"
    stall_window: int = 50
    stall_rtol: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.target_ber < 0.5:
            raise ValueError("target_ber must lie in (0, 0.5)")
        if self.kl_monitor_interval < 1:
            raise ValueError("kl_monitor_interval must be >= 1")
        if self.ber_functional not in BER_FUNCTIONALS:
            raise ValueError(f"ber_functional must be one of {BER_FUNCTIONALS}")


@dataclass
class DeTrace:
    """Per-iteration diagnostics of one run.

    Per-edge lists hold one value per edge type; ``v_*`` refers to
    variable-to-check messages and ``u_mean`` to check-to-variable ones.
    ``kl_monitored`` is NaN at iterations where it was not evaluated.
    """

    method: str
    sigma_n: float
    m_e: int
    iteration: list[int] = field(default_factory=list)
    phase: list[str] = field(default_factory=list)
    posterior_ber: list[float] = field(default_factory=list)
    v_ber: list[list[float]] = field(default_factory=list)
    v_mean: list[list[float]] = field(default_factory=list)
    v_var: list[list[float]] = field(default_factory=list)
    u_mean: list[list[float]] = field(default_factory=list)
    kl_monitored: list[float] = field(default_factory=list)
    elapsed: list[float] = field(default_factory=list)
    converged: bool = False
    switch_iteration: int | None = None

    def record(self, it, phase, ber, v_ber, v_mean, v_var, u_mean, kl, elapsed):
        self.iteration.append(int(it))
        self.phase.append(phase)
        self.posterior_ber.append(float(ber))
        self.v_ber.append([float(x) for x in v_ber])
        self.v_mean.append([float(x) for x in v_mean])
        self.v_var.append([float(x) for x in v_var])
        self.u_mean.append([float(x) for x in u_mean])
        self.kl_monitored.append(float(kl))
        self.elapsed.append(float(elapsed))

    @property
    def iterations(self) -> int:
        return self.iteration[-1] if self.iteration else 0

    def set_last_u_mean(self, u_mean):
        if self.u_mean:
            self.u_mean[-1] = [float(x) for x in u_mean]

    def set_last_kl(self, kl: float):
        if self.kl_monitored:
            self.kl_monitored[-1] = float(kl)

    def write_csv(self, out: TextIO) -> None:
        w = csv.writer(out)
        per_edge = [f"{name}_{i + 1}" for name in ("v_mean", "v_var", "v_ber", "u_mean")
                    for i in range(self.m_e)]
        w.writerow(["iteration", "phase", "posterior_ber", "kl_monitored", "elapsed_s"] + per_edge)
        for k in range(len(self.iteration)):
            row = [self.iteration[k], self.phase[k], repr(self.posterior_ber[k]),
                   repr(self.kl_monitored[k]), f"{self.elapsed[k]:.6f}"]
            for series in (self.v_mean, self.v_var, self.v_ber, self.u_mean):
                row += [repr(x) for x in series[k]]
            w.writerow(row)


@dataclass
class DensityState:
    f_v: list[QuantizedDensity]
    f_u: list[QuantizedDensity]
    iteration: int = 0


class _Stall:
    """Counts consecutive iterations whose relative BER change is tiny."""

    def __init__(self, window: int, rtol: float):
        self.window, self.rtol = window, rtol
        self.prev = None
        self.count = 0

    def update(self, ber: float) -> bool:
        if self.prev is not None and self.prev > 0 and abs(ber - self.prev) <= self.rtol * self.prev:
            self.count += 1
        else:
            self.count = 0
        self.prev = ber
        return self.count >= self.window


def _add(acc: list, w: float, p: QuantizedDensity):
    acc[0] = acc[0] + w * p.mass
    acc[1] += w * p.sat_neg
    acc[2] += w * p.sat_pos


class DensityEvolver:
    """Holds the per-edge message densities of one run and advances them.

    The variable side works on FFT spectra (:class:`SumKernel`), the check
    side on the g-ladder (:class:`GDomainKernel`).  Check-to-variable spectra
    are computed once per iteration and shared by the variable update and
    the posterior.
    """

    def __init__(self, e: MetEnsemble, sigma_n: float, cfg: DeConfig,
                 persp: EdgePerspective | None = None):
        self.e = e
        self.cfg = cfg
        self.grid = cfg.grid
        self.persp = persp if persp is not None else edge_perspective(e)
        self.sk = sum_kernel(self.grid, e.max_vn_degree + 1)
        self.gk = g_kernel(self.grid)
        self.channel = channel_llr_density(ChannelSpec(sigma_n), self.grid)
        self.zero = delta_at_zero(self.grid)
        self.ch_spec = self.sk.spectrum(self.channel)
        self.f_u = [self.zero] * e.m_e
        self.f_v: list[QuantizedDensity] = [self.zero] * e.m_e
        self.monitor = monitored_check(e)
        self.monitored_u: QuantizedDensity | None = None
        self._u_specs: list[Spectrum] | None = None
        self.node_w = np.array([c.coef for c in e.vn_classes])
        self.node_w = self.node_w / self.node_w.sum()
        socks = e.vn_sockets()
        self.edge_w = socks / socks.sum()

    # -- variable side -----------------------------------------------------

    def _u_spectra(self) -> list[Spectrum]:
        if self._u_specs is None:
            self._u_specs = [self.sk.spectrum(p) for p in self.f_u]
            self._powers = {}
        return self._u_specs

    def _power(self, k: int, n: int) -> np.ndarray:
        F = self._u_spectra()[k].F
        if n == 1:
            return F
        if (k, n) not in self._powers:
            self._powers[k, n] = F ** n
        return self._powers[k, n]

    def _vn_mix(self, weights: Sequence[float], counts: Sequence[Sequence[int]]) -> QuantizedDensity:
        """Mixture over variable classes of channel (+) incoming messages with given counts."""
        specs = self._u_spectra()
        power = self._power
        F = None
        pos = neg = both = bulk = 0.0
        direct = [np.zeros(self.grid.n), 0.0, 0.0]
        for c, w in enumerate(weights):
            if w <= 0:
                continue
            vc = self.e.vn_classes[c]
            n = counts[c]
            if sum(n) == 0:
                _add(direct, w, self.zero if vc.punctured else self.channel)
                continue
            terms = [] if vc.punctured else [(self.ch_spec, 1)]
            terms += [(specs[k], n[k]) for k in range(self.e.m_e) if n[k]]
            prod = None if vc.punctured else w * self.ch_spec.F
            for k in range(self.e.m_e):
                if n[k]:
                    prod = w * power(k, n[k]) if prod is None else prod * power(k, n[k])
            p_, n_, b_, f_ = self.sk.saturation_parts(terms)
            if F is None:
                F = prod
            else:
                F += prod
            pos += w * p_
            neg += w * n_
            both += w * b_
            bulk += w * f_
        out = self.sk.fold(F, pos, neg, both, bulk) if F is not None else None
        if out is None:
            return QuantizedDensity(self.grid, direct[0], direct[1], direct[2])
        if direct[1] or direct[2] or direct[0].any():
            return QuantizedDensity(self.grid, out.mass + direct[0], out.sat_neg + direct[1],
                                    out.sat_pos + direct[2])
        return out

    def vn_update(self, i: int) -> QuantizedDensity:
        counts = [tuple(dk - (k == i) for k, dk in enumerate(c.d)) for c in self.e.vn_classes]
        return self._vn_mix(self.persp.lam[i], counts)

    def posterior(self) -> QuantizedDensity:
        counts = [c.d for c in self.e.vn_classes]
        return self._vn_mix(self.node_w, counts)

    # -- check side --------------------------------------------------------

    def cn_update(self, i: int, gspecs=None, memo=None, want_class: int | None = None):
        """Mixed check-to-variable density on edge type ``i``.

        With ``want_class`` set, also returns that class's own output.
        """
        gk = self.gk
        if gspecs is None:
            gspecs = [gk.spectrum(p) for p in self.f_v]
        if memo is None:
            memo = {}
        SD = None
        erasure = 0.0
        direct = [np.zeros(self.grid.n), 0.0, 0.0]
        w_direct = 0.0
        own = None
        for c, w in enumerate(self.persp.rho[i]):
            if w <= 0:
                continue
            cc = self.e.cn_classes[c]
            n = [dk - (k == i) for k, dk in enumerate(cc.d)]
            if sum(n) == 1:
                src = self.f_v[n.index(1)]
                _add(direct, w, src)
                w_direct += w
                if c == want_class:
                    own = src
                continue
            sd, er = gk.combine([(gspecs[k], n[k]) for k in range(self.e.m_e) if n[k]], memo)
            SD = w * sd if SD is None else SD + w * sd
            erasure += w * er
            if c == want_class:
                own = gk.density(sd, er)
        if SD is None:
            out = QuantizedDensity(self.grid, direct[0], direct[1], direct[2])
        else:
            out = gk.density(SD, erasure, direct, w_direct)
        return (out, own) if want_class is not None else out

    # -- full iteration ----------------------------------------------------

    def variable_half(self) -> list[QuantizedDensity]:
        self.f_v = [self.vn_update(i) for i in range(self.e.m_e)]
        return self.f_v

    def check_half(self, monitor: bool = False) -> list[QuantizedDensity]:
        gspecs = [self.gk.spectrum(p) for p in self.f_v]
        memo: dict = {}
        c_mon, i_mon = self.monitor
        out = []
        self.monitored_u = None
        for i in range(self.e.m_e):
            if monitor and i == i_mon:
                u, own = self.cn_update(i, gspecs, memo, want_class=c_mon)
                self.monitored_u = own
            else:
                u = self.cn_update(i, gspecs, memo)
            out.append(u)
        self.f_u = out
        self._u_specs = None
        return out

    def ber(self) -> float:
        """Convergence functional for the current check-to-variable messages."""
        if self.cfg.ber_functional == "edge":
            return float(sum(w * error_probability(p) for w, p in zip(self.edge_w, self.f_v)))
        return error_probability(self.posterior())

    def monitored_kl(self) -> float:
        p = self.monitored_u
        if p is None:
            return math.nan
        try:
            return kl_to_symmetric_gaussian(p)
        except ValueError:
            return math.nan

    @property
    def state(self) -> DensityState:
        return DensityState(list(self.f_v), list(self.f_u))


def vn_update(e: MetEnsemble, persp: EdgePerspective, f_u: Sequence[QuantizedDensity],
              channel: ChannelSpec, i: int) -> QuantizedDensity:
    """Variable-to-check density on edge type ``i`` given check-to-variable densities."""
    if not any(c.d[i] for c in e.vn_classes):
        raise ValueError(f"edge type {i + 1} does not occur on the variable side")
    cfg = DeConfig(grid=f_u[0].grid)
    ev = DensityEvolver(e, channel.sigma_n, cfg, persp)
    ev.f_u = list(f_u)
    return ev.vn_update(i)


def cn_update(e: MetEnsemble, persp: EdgePerspective, f_v: Sequence[QuantizedDensity],
              i: int) -> QuantizedDensity:
    """Check-to-variable density on edge type ``i`` given variable-to-check densities."""
    if not any(c.d[i] for c in e.cn_classes):
        raise ValueError(f"edge type {i + 1} does not occur on the check side")
    cfg = DeConfig(grid=f_v[0].grid)
    ev = DensityEvolver(e, 1.0, cfg, persp)
    ev.f_v = list(f_v)
    return ev.cn_update(i)


def _moments(ps: Sequence[QuantizedDensity]):
    return ([error_probability(p) for p in ps], [mean(p) for p in ps], [variance(p) for p in ps])


def run_full_de(e: MetEnsemble, sigma_n: float, cfg: DeConfig | None = None,
                keep_densities: bool = False) -> tuple[bool, DeTrace]:
    """Iterate full density evolution until the BER functional drops below target.

    Iteration ``l`` forms the variable messages and the posterior from the
    check messages of iteration ``l - 1`` and then updates the check side.
    The run stops early, unconverged, when the BER has not moved by more
    than ``stall_rtol`` (relative) for ``stall_window`` iterations.
    With ``keep_densities`` the trace gets a ``densities`` attribute holding
    the per-iteration :class:`DensityState`.
    """
    cfg = cfg or DeConfig()
    ev = DensityEvolver(e, sigma_n, cfg)
    trace = DeTrace("full", sigma_n, e.m_e)
    if keep_densities:
        trace.densities = []
    stall = _Stall(cfg.stall_window, cfg.stall_rtol)
    t0 = time.perf_counter()
    for it in range(1, cfg.max_iterations + 1):
        ev.variable_half()
        ber = ev.ber()
        vb, vm, vv = _moments(ev.f_v)
        trace.record(it, "full", ber, vb, vm, vv, [mean(p) for p in ev.f_u], math.nan,
                     time.perf_counter() - t0)
        if ber < cfg.target_ber:
            trace.converged = True
            break
        monitor = it % cfg.kl_monitor_interval == 0
        ev.check_half(monitor)
        if keep_densities:
            trace.densities.append(ev.state)
        if monitor:
            trace.set_last_kl(ev.monitored_kl())
        if stall.update(ber):
            break
    return trace.converged, trace
