"""Quantized LLR densities and the two combining kernels of density evolution.

A density lives on a symmetric uniform grid ``x_k = k * delta`` for
``k = -K..K`` plus two saturation masses that stand for the LLR values
``-inf`` and ``+inf`` (everything that fell off the grid).

Two kernels do the heavy lifting:

* :class:`SumKernel` adds independent LLRs (variable-node rule) with a single
  zero-padded real FFT per operand.  Densities are stored cyclically with
  index 0 at ``x = 0`` so sums with different numbers of terms share a layout.
* :class:`GDomainKernel` combines LLRs with the tanh rule.  Magnitudes are
  mapped to ``g = -log tanh(|x|/2)`` where the rule becomes a sum.  ``g``
  spans many decades, so it is covered by a ladder of uniform grids whose
  ranges shrink geometrically; each rung is convolved with truncation, which
  is exact because ``g >= 0``.  Signs are tracked through the sum and
  difference of the positive and negative parts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Sequence, TextIO

import numpy as np
from scipy import fft, sparse, special

KL_FLOOR = 1e-30


@dataclass(frozen=True)
class Grid:
    """Uniform symmetric LLR grid with ``n`` points on ``[-llr_max, llr_max]``."""

    n: int = 9801
    llr_max: float = 50.0

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError(f"grid point count must be odd and >= 3, got {self.n}")
        if not self.llr_max > 0:
            raise ValueError("llr_max must be positive")

    @property
    def half(self) -> int:
        return (self.n - 1) // 2

    @property
    def delta(self) -> float:
        return self.llr_max / self.half

    @cached_property
    def points(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1) * self.delta


@dataclass(frozen=True, eq=False)
class QuantizedDensity:
    """Probability masses on a :class:`Grid` plus saturation masses at +-inf."""

    grid: Grid
    mass: np.ndarray
    sat_neg: float = 0.0
    sat_pos: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        if m.shape != (self.grid.n,):
            raise ValueError(f"mass has shape {m.shape}, grid needs ({self.grid.n},)")
        object.__setattr__(self, "mass", m)

    @property
    def total(self) -> float:
        return float(self.mass.sum() + self.sat_neg + self.sat_pos)

    @property
    def erasure(self) -> float:
        return float(self.mass[self.grid.half])

    def check(self, atol: float = 1e-9) -> "QuantizedDensity":
        if self.mass.min() < 0 or self.sat_neg < 0 or self.sat_pos < 0:
            raise ValueError("density has negative mass")
        if abs(self.total - 1.0) > atol:
            raise ValueError(f"density total mass {self.total} differs from 1")
        return self


def delta_at_zero(grid: Grid) -> QuantizedDensity:
    m = np.zeros(grid.n)
    m[grid.half] = 1.0
    return QuantizedDensity(grid, m)


def saturated(grid: Grid, sign: int = 1) -> QuantizedDensity:
    """All mass at +inf (``sign > 0``) or -inf."""
    if sign > 0:
        return QuantizedDensity(grid, np.zeros(grid.n), 0.0, 1.0)
    return QuantizedDensity(grid, np.zeros(grid.n), 1.0, 0.0)


def _normal_interval(lo, hi, mean, std):
    """P(lo < X <= hi) for X ~ N(mean, std^2), accurate in both tails."""
    zl = (lo - mean) / std
    zh = (hi - mean) / std
    upper = special.ndtr(zh) - special.ndtr(zl)
    lower = special.ndtr(-zl) - special.ndtr(-zh)
    return np.where(zl > 0, lower, upper)


def gaussian_density(mean: float, var: float, grid: Grid) -> QuantizedDensity:
    """Discretize N(mean, var): each grid point takes the mass of its cell."""
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    h = grid.delta
    if math.sqrt(var) < 1e-12 * h:
        return _point_density(float(mean), grid)
    std = math.sqrt(var)
    x = grid.points
    edges = np.concatenate([x - h / 2, [x[-1] + h / 2]])
    mass = _normal_interval(edges[:-1], edges[1:], mean, std)
    sat_neg = float(special.ndtr((edges[0] - mean) / std))
    sat_pos = float(special.ndtr((mean - edges[-1]) / std))
    return QuantizedDensity(grid, np.maximum(mass, 0.0), sat_neg, sat_pos)


def _point_density(x: float, grid: Grid) -> QuantizedDensity:
    """Unit mass at ``x`` assigned to the nearest cell, or saturation."""
    K, h = grid.half, grid.delta
    if x >= grid.llr_max + h / 2:
        return saturated(grid, 1)
    if x < -grid.llr_max - h / 2:
        return saturated(grid, -1)
    m = np.zeros(grid.n)
    m[int(np.clip(np.floor(x / h + 0.5), -K, K)) + K] = 1.0
    return QuantizedDensity(grid, m)


def error_probability(p: QuantizedDensity) -> float:
    """P(x < 0) + P(x = 0) / 2, counting the negative saturation mass."""
    K = p.grid.half
    return float(p.mass[:K].sum() + 0.5 * p.mass[K] + p.sat_neg)


def mean(p: QuantizedDensity) -> float:
    """Grid mean; saturation masses count at +-llr_max."""
    L = p.grid.llr_max
    return float(p.grid.points @ p.mass + L * (p.sat_pos - p.sat_neg))


def variance(p: QuantizedDensity) -> float:
    L = p.grid.llr_max
    mu = mean(p)
    x = p.grid.points
    return float(((x - mu) ** 2) @ p.mass + (L - mu) ** 2 * p.sat_pos
                 + (L + mu) ** 2 * p.sat_neg)


def kl_to_symmetric_gaussian(p: QuantizedDensity) -> float:
    """KL(p || N(m, 2m)) on the grid, with m the mean of ``p``.

    Reference masses below ``KL_FLOOR`` are raised to it.  Saturation masses
    are compared as two extra cells.
    """
    m = mean(p)
    if not m > 0:
        raise ValueError(f"KL to a symmetric Gaussian needs a positive mean, got {m}")
    q = gaussian_density(m, 2 * m, p.grid)
    pp = np.concatenate([p.mass, [p.sat_neg, p.sat_pos]])
    qq = np.concatenate([q.mass, [q.sat_neg, q.sat_pos]])
    nz = pp > 0
    return float(np.sum(pp[nz] * np.log(pp[nz] / np.maximum(qq[nz], KL_FLOOR))))


def write_csv(p: QuantizedDensity, out: TextIO) -> None:
    """Write ``llr,mass`` rows; saturation masses appear as -inf / inf rows."""
    w = csv.writer(out)
    w.writerow(["llr", "mass"])
    w.writerow(["-inf", repr(float(p.sat_neg))])
    for x, m in zip(p.grid.points, p.mass):
        w.writerow([f"{x:.10g}", repr(float(m))])
    w.writerow(["inf", repr(float(p.sat_pos))])


# ---------------------------------------------------------------------------
# variable-node kernel


@dataclass(frozen=True, eq=False)
class Spectrum:
    """FFT of the on-grid part of a density plus its saturation masses."""

    F: np.ndarray
    sat_neg: float
    sat_pos: float

    @property
    def bulk(self) -> float:
        return 1.0 - self.sat_neg - self.sat_pos


class SumKernel:
    """Sums of up to ``max_terms`` independent LLRs by one padded FFT."""

    def __init__(self, grid: Grid, max_terms: int):
        self.grid = grid
        self.max_terms = max(int(max_terms), 1)
        K = grid.half
        self.L = fft.next_fast_len(2 * self.max_terms * K + 1, real=True)

    def spectrum(self, p: QuantizedDensity) -> Spectrum:
        K, L = self.grid.half, self.L
        buf = np.zeros(L)
        buf[: K + 1] = p.mass[K:]
        buf[L - K:] = p.mass[:K]
        return Spectrum(fft.rfft(buf), float(p.sat_neg), float(p.sat_pos))

    @staticmethod
    def saturation_parts(terms: Sequence[tuple[Spectrum, int]]) -> tuple[float, float, float]:
        """Masses of the (pos-only, neg-only, both-infinite, all-finite) outcomes of a sum."""
        no_neg = no_pos = neither = 1.0
        for s, n in terms:
            no_neg *= (1.0 - s.sat_neg) ** n
            no_pos *= (1.0 - s.sat_pos) ** n
            neither *= s.bulk ** n
        pos_only = max(no_neg - neither, 0.0)
        neg_only = max(no_pos - neither, 0.0)
        both = max(1.0 - no_neg - no_pos + neither, 0.0)
        return pos_only, neg_only, both, neither

    @staticmethod
    def product(terms: Sequence[tuple[Spectrum, int]]) -> np.ndarray | None:
        out = None
        for s, n in terms:
            if n == 0:
                continue
            f = s.F if n == 1 else s.F ** n
            out = f if out is None else out * f
        return out

    def fold(self, F: np.ndarray | None, pos_only: float, neg_only: float, both: float,
             bulk: float, extra: np.ndarray | None = None) -> QuantizedDensity:
        """Invert a mixed spectrum and move off-grid mass to saturation.

        ``bulk`` is the exact finite mass the spectrum carries; round-off
        negatives are zeroed and the finite part rescaled to it.
        """
        K, L = self.grid.half, self.L
        mass = np.zeros(self.grid.n)
        tail_pos = tail_neg = 0.0
        if F is not None and bulk > 0:
            r = fft.irfft(F, L)
            np.maximum(r, 0.0, out=r)
            mass[K:] = r[: K + 1]
            mass[:K] = r[L - K:]
            tail_pos = float(r[K + 1: L // 2 + 1].sum())
            tail_neg = float(r[L // 2 + 1: L - K].sum())
            got = mass.sum() + tail_pos + tail_neg
            if got > 0:
                scale = bulk / got
                mass *= scale
                tail_pos *= scale
                tail_neg *= scale
        if extra is not None:
            mass += extra
        mass[K] += both
        return QuantizedDensity(self.grid, mass, tail_neg + neg_only, tail_pos + pos_only)

    def sum(self, terms: Sequence[tuple[QuantizedDensity, int]]) -> QuantizedDensity:
        specs = [(self.spectrum(p), n) for p, n in terms if n > 0]
        if sum(n for _, n in specs) > self.max_terms:
            raise ValueError("more terms than the kernel was sized for")
        pos, neg, both, bulk = self.saturation_parts(specs)
        return self.fold(self.product(specs), pos, neg, both, bulk)


@lru_cache(maxsize=16)
def sum_kernel(grid: Grid, max_terms: int) -> SumKernel:
    return SumKernel(grid, max_terms)


def convolve(p: QuantizedDensity, q: QuantizedDensity) -> QuantizedDensity:
    """Density of X + Y for independent X ~ p and Y ~ q."""
    if p.grid != q.grid:
        raise ValueError("densities live on different grids")
    return sum_kernel(p.grid, 2).sum([(p, 1), (q, 1)])


# ---------------------------------------------------------------------------
# check-node kernel


def llr_to_g(a):
    """-log tanh(a/2) for a >= 0; the map is its own inverse."""
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log1p(np.exp(-a)) - np.log(-np.expm1(-a))


@dataclass(frozen=True, eq=False)
class GSpectrum:
    """FFT over the g ladder of (S, D) = (pos + neg, pos - neg) and the erasure."""

    F: np.ndarray
    erasure: float


class GDomainKernel:
    """Tanh-rule combination on a geometric ladder of uniform g grids.

    Rung ``l`` covers ``[0, G_l]`` with ``bins`` steps, ``G_l = G_0 / ratio**l``.
    Neighbouring rungs hand over through a linear blend ``blend`` coarse cells
    wide, so every g is claimed with total weight one.
    """

    def __init__(self, grid: Grid, bins: int = 960, ratio: int = 4, blend: int = 16):
        if bins % ratio or bins // ratio <= blend or bins - blend * ratio <= bins // ratio:
            raise ValueError("bins, ratio and blend leave no room for the hand-over zones")
        self.grid = grid
        self.bins = bins
        self.ratio = ratio
        K, h = grid.half, grid.delta
        g_top = float(llr_to_g(h / 4))
        g_floor = float(llr_to_g(grid.llr_max))
        self.levels = 1 + max(0, math.ceil(math.log(g_top / (bins * g_floor)) / math.log(ratio)))
        self.tops = g_top * float(ratio) ** -np.arange(self.levels)
        self.steps = self.tops / bins
        self.L = fft.next_fast_len(2 * bins + 1, real=True)
        N1 = bins + 1

        # grid magnitude -> rung bins (column 0 is |x| = inf, i.e. g = 0)
        gk = np.concatenate([[0.0], llr_to_g(np.arange(1, K + 1) * h)])
        rows, cols, vals = [], [], []
        for lev in range(self.levels):
            idx = np.nonzero(gk <= self.tops[lev] * (1 + 1e-12))[0]
            pos = np.minimum(gk[idx] / self.steps[lev], bins)
            lo = np.minimum(np.floor(pos).astype(int), bins)
            w = pos - lo
            rows += [lev * N1 + lo, lev * N1 + np.minimum(lo + 1, bins)]
            cols += [idx, idx]
            vals += [1 - w, w]
        self.embed = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.levels * N1, K + 1))

        # ownership weights of each rung bin
        chi = np.ones((self.levels, N1))
        j = np.arange(N1)
        for lev in range(self.levels):
            if lev < self.levels - 1:
                lo = bins // ratio
                chi[lev, :lo] = np.clip((j[:lo] - (lo - blend)) / blend, 0.0, 1.0)
            if lev > 0:
                tail = j >= bins - blend * ratio
                chi[lev, tail] = (bins - j[tail]) / (blend * ratio)
        self.chi = chi

        # rung bins -> grid magnitude (row 0: x = 0, rows 1..K, row K+1: +inf)
        g = (self.steps[:, None] * j[None, :]).ravel()
        with np.errstate(divide="ignore"):
            x = np.where(g > 0, llr_to_g(np.maximum(g, 1e-300)), np.inf)
        src = np.arange(g.size)
        w_own = chi.ravel()
        sat = x > grid.llr_max
        pos = np.where(sat, 0.0, x / h)
        lo = np.floor(pos).astype(int)
        w = pos - lo
        r_lo = np.where(sat, K + 1, lo)
        r_hi = np.where(sat, K + 1, np.minimum(lo + 1, K))
        w_lo = np.where(sat, 1.0, 1 - w) * w_own
        w_hi = np.where(sat, 0.0, w) * w_own
        self.unembed = sparse.csr_matrix(
            (np.concatenate([w_lo, w_hi]), (np.concatenate([r_lo, r_hi]), np.concatenate([src, src]))),
            shape=(K + 2, g.size))

    @property
    def identity(self) -> np.ndarray:
        return np.ones((2, self.levels, self.L // 2 + 1), dtype=complex)

    def spectrum(self, p: QuantizedDensity) -> GSpectrum:
        K = self.grid.half
        pos = np.concatenate([[p.sat_pos], p.mass[K + 1:]])
        neg = np.concatenate([[p.sat_neg], p.mass[K - 1::-1]])
        ab = self.embed @ np.stack([pos, neg], axis=1)
        a = ab[:, 0].reshape(self.levels, -1)
        b = ab[:, 1].reshape(self.levels, -1)
        return GSpectrum(fft.rfft(np.stack([a + b, a - b]), self.L, axis=-1), p.erasure)

    def truncate(self, F: np.ndarray) -> np.ndarray:
        return fft.irfft(F, self.L, axis=-1)[..., : self.bins + 1]

    def multiply(self, F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
        return fft.rfft(self.truncate(F1 * F2), self.L, axis=-1)

    def power(self, F: np.ndarray, n: int, memo: dict | None = None, key=None) -> np.ndarray:
        """F**n in the truncated sense, by repeated squaring."""
        if n == 0:
            return self.identity
        if n == 1:
            return F
        if memo is not None and (key, n) in memo:
            return memo[key, n]
        half = self.power(F, n // 2, memo, key)
        out = self.multiply(half, half)
        if n % 2:
            out = self.multiply(out, F)
        if memo is not None:
            memo[key, n] = out
        return out

    def combine(self, terms: Sequence[tuple[GSpectrum, int]], memo: dict | None = None) -> tuple[np.ndarray, float]:
        """Real rung arrays (2, levels, bins+1) and erasure of the tanh-rule output."""
        F = None
        keep = 1.0
        for t, n in terms:
            if n == 0:
                continue
            keep *= (1.0 - t.erasure) ** n
            Fp = self.power(t.F, n, memo, id(t))
            F = Fp if F is None else self.multiply(F, Fp)
        if F is None:
            raise ValueError("tanh rule needs at least one input")
        return self.truncate(F), 1.0 - keep

    def density(self, SD: np.ndarray, erasure: float, extra: np.ndarray | None = None,
                extra_weight: float = 0.0) -> QuantizedDensity:
        """Back to the LLR grid.

        ``SD`` is a (possibly mixed) rung array with total weight
        ``1 - extra_weight``; ``extra`` is an LLR-domain mass vector mixed in
        as is.
        """
        K = self.grid.half
        a = np.maximum(0.5 * (SD[0] + SD[1]), 0.0).ravel()
        b = np.maximum(0.5 * (SD[0] - SD[1]), 0.0).ravel()
        pos = self.unembed @ a
        neg = self.unembed @ b
        finite = (1.0 - extra_weight) - erasure
        claimed = pos.sum() + neg.sum()
        if claimed > finite and claimed > 0:
            pos *= finite / claimed
            neg *= finite / claimed
            claimed = finite
        mass = np.zeros(self.grid.n)
        mass[K + 1:] = pos[1: K + 1]
        mass[K - 1::-1] = neg[1: K + 1]
        mass[K] = pos[0] + neg[0] + erasure + max(finite - claimed, 0.0)
        if extra is not None:
            mass += extra[0]
            return QuantizedDensity(self.grid, mass, float(neg[K + 1] + extra[1]),
                                    float(pos[K + 1] + extra[2]))
        return QuantizedDensity(self.grid, mass, float(neg[K + 1]), float(pos[K + 1]))


@lru_cache(maxsize=8)
def g_kernel(grid: Grid, bins: int = 960, ratio: int = 4, blend: int = 16) -> GDomainKernel:
    return GDomainKernel(grid, bins, ratio, blend)


def checknode_combine(p: QuantizedDensity, q: QuantizedDensity) -> QuantizedDensity:
    """Density of 2 atanh(tanh(X/2) tanh(Y/2)) for independent X ~ p, Y ~ q."""
    if p.grid != q.grid:
        raise ValueError("densities live on different grids")
    k = g_kernel(p.grid)
    SD, e = k.combine([(k.spectrum(p), 1), (k.spectrum(q), 1)])
    return k.density(SD, e)


def checknode_combine_exact(p: QuantizedDensity, q: QuantizedDensity) -> QuantizedDensity:
    """Slow pairwise reference for :func:`checknode_combine`.

    Every pair of cells is combined in closed form and the result split
    linearly onto its two nearest grid points.  Cost is O(n^2); meant for
    tests on small grids.
    """
    grid = p.grid
    K, h = grid.half, grid.delta
    xs = np.concatenate([[-np.inf], grid.points, [np.inf]])
    pm = np.concatenate([[p.sat_neg], p.mass, [p.sat_pos]])
    qm = np.concatenate([[q.sat_neg], q.mass, [q.sat_pos]])
    ip, iq = np.nonzero(pm)[0], np.nonzero(qm)[0]
    X, Y = np.meshgrid(xs[ip], xs[iq], indexing="ij")
    W = np.outer(pm[ip], qm[iq]).ravel()
    with np.errstate(invalid="ignore"):
        t = np.tanh(np.abs(X) / 2) * np.tanh(np.abs(Y) / 2)
        sign = np.sign(X) * np.sign(Y)
    mag = llr_to_g(llr_to_g(np.abs(X)) + llr_to_g(np.abs(Y)))
    z = (sign * mag).ravel()
    z = np.where(t.ravel() == 0, 0.0, z)
    out = np.zeros(grid.n)
    sat_neg = float(W[z < -grid.llr_max].sum())
    sat_pos = float(W[z > grid.llr_max].sum())
    inside = np.abs(z) <= grid.llr_max
    pos = z[inside] / h + K
    lo = np.minimum(np.floor(pos).astype(int), grid.n - 2)
    w = pos - lo
    np.add.at(out, lo, W[inside] * (1 - w))
    np.add.at(out, lo + 1, W[inside] * w)
    return QuantizedDensity(grid, out, sat_neg, sat_pos)


def mixture(parts: Iterable[tuple[float, QuantizedDensity]]) -> QuantizedDensity:
    parts = list(parts)
    grid = parts[0][1].grid
    m = np.zeros(grid.n)
    sn = sp = 0.0
    for w, p in parts:
        m += w * p.mass
        sn += w * p.sat_neg
        sp += w * p.sat_pos
    return QuantizedDensity(grid, m, sn, sp)
