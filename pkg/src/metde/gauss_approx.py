"""Single-parameter Gaussian approximations of density evolution.

Three recursions are provided, each tracking one scalar per edge type:

* ``mean``: message means, check update through phi;
* ``ber``: message error probabilities, check update in closed form;
* ``rca``: message means, check update made additive through psi.

The special functions are sampled once into tables (cached on disk) and
interpolated afterwards.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import special

from .channel import ChannelSpec, channel_llr_mean
from .ensemble import EdgePerspective, MetEnsemble, edge_perspective
from .full_de import DeConfig, DeTrace, _Stall

M_MAX = 1e3
PHI_SIZE = 10001
PHI_DOMAIN = 90.0
CAP_SIZE = 38302
CAP_DOMAIN = (1e-6, 100.0)
APPROX_METHODS = ("mean", "ber", "rca")
LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# quadrature of the defining integrals


def _gauss_expect(m: np.ndarray, logf, z_step: float = 0.005) -> np.ndarray:
    """E[f(u)] for u ~ N(m, 2m), given ``logf`` = log f, by the trapezoid rule in z.

    Works in log space so tiny expectations keep full relative precision.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    out = np.empty_like(m)
    for start in range(0, m.size, 256):
        mm = m[start:start + 256, None]
        s = np.sqrt(2 * mm)
        zlo = -np.sqrt(2 * mm) - 12.0
        n = int(np.ceil((np.sqrt(2 * mm.max()) + 24.0) / z_step)) + 1
        t = np.linspace(0.0, 1.0, n)[None, :]
        z = zlo + t * (12.0 - zlo)
        h = (12.0 - zlo) / (n - 1)
        u = mm + s * z
        lw = logf(u) - 0.5 * z * z - 0.5 * math.log(2 * math.pi)
        lw[:, [0, -1]] -= LN2
        top = lw.max(axis=1, keepdims=True)
        out[start:start + 256] = (np.exp(top[:, 0]) * np.exp(lw - top).sum(axis=1) * h[:, 0])
    return out


def _log_one_minus_tanh_half(u):
    # 1 - tanh(u/2) = 2 / (1 + e^u)
    return LN2 - np.logaddexp(0.0, u)


def _log_log2_one_plus_exp_neg(u):
    # log(log2(1 + e^-u)); -inf where it underflows
    with np.errstate(divide="ignore"):
        return np.log(np.logaddexp(0.0, -u) / LN2)


def phi_direct(m) -> np.ndarray:
    """phi(m) = 1 - E[tanh(u/2)], u ~ N(m, 2m), by direct quadrature."""
    m = np.asarray(m, dtype=float)
    out = np.ones(m.shape)
    pos = m > 0
    if pos.any():
        out[pos] = _gauss_expect(m[pos], _log_one_minus_tanh_half)
    return out


def capacity_complement_direct(m) -> np.ndarray:
    """1 - C_AWGN(m) = E[log2(1 + e^-u)], u ~ N(m, 2m)."""
    m = np.asarray(m, dtype=float)
    out = np.ones(m.shape)
    pos = m > 0
    if pos.any():
        out[pos] = _gauss_expect(m[pos], _log_log2_one_plus_exp_neg)
    return out


def capacity_awgn(m: float) -> float:
    """Capacity (bits) of the BI-AWGN channel whose LLR is N(m, 2m)."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if m == 0:
        return 0.0
    if m < 1e-4:
        # the quadrature of 1 - E[...] cancels badly here; use the table's small-m branch
        return float(cap_table().capacity(m))
    return float(1.0 - capacity_complement_direct(np.array([m]))[0])


# ---------------------------------------------------------------------------
# tables


def _cache_dir() -> Path:
    d = Path(os.environ.get("METDE_CACHE", Path.home() / ".cache" / "metde"))
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError:
        return Path("/nonexistent")
    return d


def _cached(name: str, build):
    path = _cache_dir() / name
    if path.exists():
        try:
            with np.load(path) as z:
                return {k: z[k] for k in z.files}
        except (OSError, ValueError):
            pass
    data = build()
    try:
        np.savez(path, **data)
    except OSError:
        pass
    return data


class PhiTable:
    """phi sampled on a quadratic grid over [0, domain], interpolated in log phi."""

    def __init__(self, size: int = PHI_SIZE, domain: float = PHI_DOMAIN):
        def build():
            m = domain * np.linspace(0.0, 1.0, size) ** 2
            return {"m": m, "phi": phi_direct(m)}

        data = _cached(f"phi_{size}_{domain:g}.npz", build)
        self.m = data["m"]
        self.logphi = np.log(data["phi"])
        self.domain = domain
        self._tail_slope = (self.logphi[-1] - self.logphi[-2]) / (self.m[-1] - self.m[-2])
        if np.any(np.diff(self.logphi) >= 0):
            raise RuntimeError("phi table is not strictly decreasing")

    @property
    def floor(self) -> float:
        return float(np.exp(self.logphi[-1]))

    def __call__(self, m):
        m = np.asarray(m, dtype=float)
        inside = np.interp(m, self.m, self.logphi)
        tail = self.logphi[-1] + self._tail_slope * (m - self.domain)
        return np.exp(np.where(m > self.domain, tail, inside))

    def inverse(self, y):
        """phi^-1 on (0, 1]; values below the table floor saturate to M_MAX."""
        y = np.asarray(y, dtype=float)
        ly = np.log(np.maximum(y, 1e-300))
        m = np.interp(-ly, -self.logphi, self.m)
        return np.where(y < self.floor, M_MAX, np.where(y >= 1.0, 0.0, m))


class CapacityTable:
    """C_AWGN and its complement J = 1 - C on a log-spaced grid.

    Both are stored directly so that either side stays accurate where it
    is small.  psi(m) = C^-1(J(m)) is evaluated through whichever of C or J
    is the small one.
    """

    def __init__(self, size: int = CAP_SIZE, domain: tuple[float, float] = CAP_DOMAIN):
        lo, hi = domain

        def build():
            m = np.geomspace(lo, hi, size - 1)
            J = capacity_complement_direct(m)
            # 1 - J loses digits for small m; integrate the non-negative even form instead
            C = _gauss_expect(m, _log_c_integrand)
            return {"m": m, "C": C, "J": J}

        data = _cached(f"cap_{size}_{lo:g}_{hi:g}.npz", build)
        self.lm = np.log(data["m"])
        self.lC = np.log(data["C"])
        self.lJ = np.log(data["J"])
        self.lo, self.hi = lo, hi
        self._c0 = float(data["C"][0] / data["m"][0])
        self._j_slope = (self.lJ[-1] - self.lJ[-2]) / (data["m"][-1] - data["m"][-2])

    def capacity(self, m):
        m = np.asarray(m, dtype=float)
        lm = np.log(np.maximum(m, 1e-300))
        c = np.exp(np.interp(lm, self.lm, self.lC))
        c = np.where(m < self.lo, self._c0 * m, c)
        return np.where(m > self.hi, 1.0 - self.complement(m), c)

    def complement(self, m):
        m = np.asarray(m, dtype=float)
        lm = np.log(np.maximum(m, 1e-300))
        j = np.exp(np.interp(lm, self.lm, self.lJ))
        tail = np.exp(self.lJ[-1] + self._j_slope * (m - self.hi))
        return np.where(m > self.hi, tail, np.where(m < self.lo, 1.0 - self._c0 * m, j))

    def inverse_capacity(self, y):
        """m with C(m) = y, for small y (y <= 1/2)."""
        y = np.asarray(y, dtype=float)
        ly = np.log(np.maximum(y, 1e-300))
        m = np.exp(np.interp(ly, self.lC, self.lm))
        return np.where(y < np.exp(self.lC[0]), y / self._c0, m)

    def inverse_complement(self, y):
        """m with J(m) = y, for small y (y <= 1/2)."""
        y = np.asarray(y, dtype=float)
        ly = np.log(np.maximum(y, 1e-300))
        m = np.exp(np.interp(-ly, -self.lJ, self.lm))
        tail = self.hi + (ly - self.lJ[-1]) / self._j_slope
        return np.where(y < np.exp(self.lJ[-1]), np.minimum(tail, np.inf), m)

    def psi(self, m):
        """psi(m) = C^-1(1 - C(m)); psi(0) = inf and psi(inf) = 0."""
        m = np.asarray(m, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            J = self.complement(m)
            C = self.capacity(m)
            out = np.where(J <= 0.5, self.inverse_capacity(J), self.inverse_complement(C))
        out = np.where(m <= 0, np.inf, out)
        return np.where(np.isinf(m), 0.0, out)


def _log_c_integrand(u):
    # log(1 - H2(1 / (1 + e^|u|))); even in u and non-negative, so E over a
    # symmetric density equals the capacity
    t = np.tanh(np.abs(u) / 2)
    kl = 0.5 * ((1 + t) * np.log1p(t) + (1 - t) * np.log1p(-np.minimum(t, 1 - 1e-16)))
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(kl, 0.0) / LN2)


@lru_cache(maxsize=1)
def phi_table() -> PhiTable:
    return PhiTable()


@lru_cache(maxsize=1)
def cap_table() -> CapacityTable:
    return CapacityTable()


def phi(m):
    """phi(m) from the table; scalar in, scalar out."""
    if np.any(np.asarray(m) < 0):
        raise ValueError("phi needs m >= 0")
    out = phi_table()(m)
    return float(out) if np.ndim(out) == 0 else out


def phi_inv(y):
    y_arr = np.asarray(y, dtype=float)
    if np.any((y_arr <= 0) | (y_arr > 1)):
        raise ValueError("phi_inv needs y in (0, 1]")
    out = phi_table().inverse(y_arr)
    return float(out) if np.ndim(out) == 0 else out


def psi(m):
    if np.any(np.asarray(m) <= 0):
        raise ValueError("psi needs m > 0")
    out = cap_table().psi(m)
    return float(out) if np.ndim(out) == 0 else out


def q_func(x):
    """Gaussian tail probability Q(x)."""
    return special.ndtr(-np.asarray(x, dtype=float)) if np.ndim(x) else float(special.ndtr(-x))


def q_inv(p):
    """Inverse of Q on (0, 1); Q^-1(0) = inf."""
    p_arr = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = -special.ndtri(p_arr)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# recursions


@dataclass
class MeanState:
    m_v: np.ndarray
    m_u: np.ndarray


@dataclass
class BerState:
    P_v: np.ndarray
    P_u: np.ndarray


class _Structure:
    """Class/edge-type matrices shared by the scalar recursions."""

    def __init__(self, e: MetEnsemble, persp: EdgePerspective | None = None):
        self.e = e
        self.persp = persp if persp is not None else edge_perspective(e)
        self.Dv = np.array([c.d for c in e.vn_classes], dtype=float)  # (classes, m_e)
        self.Dc = np.array([c.d for c in e.cn_classes], dtype=float)
        self.transmitted = np.array([not c.punctured for c in e.vn_classes])
        w = np.array([c.coef for c in e.vn_classes])
        self.node_w = w / w.sum()

    def channel_means(self, channel: ChannelSpec) -> np.ndarray:
        return np.where(self.transmitted, channel_llr_mean(channel), 0.0)

    def vn_class_means(self, m_u: np.ndarray, m_ch: np.ndarray) -> np.ndarray:
        """(classes, m_e): channel + (d_i - 1) m_u(i) + sum_{k != i} d_k m_u(k)."""
        tot = m_ch + self.Dv @ m_u
        return tot[:, None] - m_u[None, :]

    def vn_update(self, m_u, m_ch) -> np.ndarray:
        cm = self.vn_class_means(m_u, m_ch)
        return np.minimum(np.einsum("ic,ci->i", self.persp.lam, cm), M_MAX)

    def posterior_means(self, m_u, m_ch) -> np.ndarray:
        return m_ch + self.Dv @ m_u

    def posterior_ber(self, m_u, m_ch) -> float:
        m = np.maximum(self.posterior_means(m_u, m_ch), 0.0)
        return float(self.node_w @ special.ndtr(-np.sqrt(m / 2)))


def _mean_cn(st: _Structure, m_v: np.ndarray) -> np.ndarray:
    tab = phi_table()
    with np.errstate(divide="ignore"):
        l1 = np.log1p(-np.minimum(tab(np.maximum(m_v, 0.0)), 1.0))  # -inf where m_v = 0
    out = np.zeros(st.e.m_e)
    for i in range(st.e.m_e):
        acc = 0.0
        for c, w in enumerate(st.persp.rho[i]):
            if w <= 0:
                continue
            n = st.Dc[c].copy()
            n[i] -= 1
            with np.errstate(invalid="ignore"):
                s = float(np.sum(np.where(n > 0, n * l1, 0.0)))
            y = -math.expm1(s)  # phi(m_u) = 1 - prod(1 - phi(m_v))^n
            acc += w * (float(tab.inverse(y)) if y > 0 else M_MAX)
        out[i] = min(acc, M_MAX)
    return out


def _rca_cn(st: _Structure, m_v: np.ndarray) -> np.ndarray:
    tab = cap_table()
    ps = tab.psi(m_v)
    out = np.zeros(st.e.m_e)
    for i in range(st.e.m_e):
        acc = 0.0
        for c, w in enumerate(st.persp.rho[i]):
            if w <= 0:
                continue
            n = st.Dc[c].copy()
            n[i] -= 1
            with np.errstate(invalid="ignore"):
                s = float(np.sum(np.where(n > 0, n * ps, 0.0)))
            acc += w * float(tab.psi(s))
        out[i] = min(acc, M_MAX)
    return out


def approx1_iteration(e: MetEnsemble, persp: EdgePerspective, state: MeanState,
                      channel: ChannelSpec) -> MeanState:
    """One mean-recursion iteration (variable side, then check side)."""
    st = _Structure(e, persp)
    m_v = st.vn_update(np.asarray(state.m_u, float), st.channel_means(channel))
    return MeanState(m_v, _mean_cn(st, m_v))


def approx3_iteration(e: MetEnsemble, persp: EdgePerspective, state: MeanState,
                      channel: ChannelSpec) -> MeanState:
    st = _Structure(e, persp)
    m_v = st.vn_update(np.asarray(state.m_u, float), st.channel_means(channel))
    return MeanState(m_v, _rca_cn(st, m_v))


def _ber_vn(st: _Structure, P_u: np.ndarray, m_ch: np.ndarray) -> np.ndarray:
    m_u = np.minimum(2 * q_inv(np.clip(P_u, 0.0, 0.5)) ** 2, M_MAX)
    cm = np.maximum(st.vn_class_means(m_u, m_ch), 0.0)
    P = special.ndtr(-np.sqrt(cm / 2))
    return np.einsum("ic,ci->i", st.persp.lam, P)


def _ber_cn(st: _Structure, P_v: np.ndarray) -> np.ndarray:
    l1 = np.log(np.maximum(1 - 2 * np.clip(P_v, 0.0, 0.5), 1e-300))
    out = np.zeros(st.e.m_e)
    for i in range(st.e.m_e):
        acc = 0.0
        for c, w in enumerate(st.persp.rho[i]):
            if w <= 0:
                continue
            n = st.Dc[c].copy()
            n[i] -= 1
            s = float(np.sum(np.where(n > 0, n * l1, 0.0)))
            acc += w * 0.5 * (-math.expm1(s))
        out[i] = acc
    return np.clip(out, 0.0, 0.5)


def approx2_iteration(e: MetEnsemble, persp: EdgePerspective, state: BerState,
                      channel: ChannelSpec) -> BerState:
    st = _Structure(e, persp)
    P_v = _ber_vn(st, np.asarray(state.P_u, float), st.channel_means(channel))
    return BerState(P_v, _ber_cn(st, P_v))


def run_mean_phase(st: _Structure, m_ch: np.ndarray, m_u: np.ndarray, cfg: DeConfig,
                   trace: DeTrace, start: int, method: str, t0: float, stall: _Stall,
                   phase: str | None = None) -> bool:
    """Iterate a mean recursion from ``m_u`` at iteration ``start``; returns convergence."""
    cn = _mean_cn if method == "mean" else _rca_cn
    phase = phase or method
    for it in range(start, cfg.max_iterations + 1):
        m_v = st.vn_update(m_u, m_ch)
        ber = st.posterior_ber(m_u, m_ch)
        trace.record(it, phase, ber, special.ndtr(-np.sqrt(np.maximum(m_v, 0) / 2)), m_v, 2 * m_v,
                     m_u, math.nan, time.perf_counter() - t0)
        if ber < cfg.target_ber:
            trace.converged = True
            return True
        m_u = cn(st, m_v)
        if stall.update(ber):
            return False
    return False


def run_approx(e: MetEnsemble, sigma_n: float, method: str,
               cfg: DeConfig | None = None) -> tuple[bool, DeTrace]:
    """Run one of the scalar recursions at noise level ``sigma_n``.

    The convergence functional is the coefficient-weighted posterior error
    probability Q(sqrt(m/2)) of the variable classes; for ``ber`` the
    per-edge means are first rebuilt from the error probabilities.
    """
    if method not in APPROX_METHODS:
        raise ValueError(f"method must be one of {APPROX_METHODS}")
    cfg = cfg or DeConfig()
    st = _Structure(e)
    m_ch = st.channel_means(ChannelSpec(sigma_n))
    trace = DeTrace(method, sigma_n, e.m_e)
    stall = _Stall(cfg.stall_window, cfg.stall_rtol)
    t0 = time.perf_counter()
    if method in ("mean", "rca"):
        run_mean_phase(st, m_ch, np.zeros(e.m_e), cfg, trace, 1, method, t0, stall)
        return trace.converged, trace
    P_u = np.full(e.m_e, 0.5)
    for it in range(1, cfg.max_iterations + 1):
        P_v = _ber_vn(st, P_u, m_ch)
        m_u = np.minimum(2 * q_inv(P_u) ** 2, M_MAX)
        ber = st.posterior_ber(m_u, m_ch)
        m_v = np.minimum(2 * q_inv(np.clip(P_v, 1e-300, 0.5)) ** 2, M_MAX)
        trace.record(it, "ber", ber, P_v, m_v, 2 * m_v, m_u, math.nan, time.perf_counter() - t0)
        if ber < cfg.target_ber:
            trace.converged = True
            break
        P_u = _ber_cn(st, P_v)
        if stall.update(ber):
            break
    return trace.converged, trace
