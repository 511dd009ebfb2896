"""Threshold search by bisection over the noise level, and comparison metrics."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from scipy.optimize import brentq

from .ensemble import METHODS, MetEnsemble, rate
from .full_de import DeConfig, run_full_de
from .gauss_approx import APPROX_METHODS, cap_table, run_approx
from .hybrid import HybridConfig, run_hybrid

DEFAULT_TOL = 1e-4
MAX_EXPANSIONS = 4


class BracketError(RuntimeError):
    """No converging/non-converging pair of noise levels could be found."""


@dataclass
class ThresholdResult:
    sigma_star: float
    method: str
    bisection_steps: int
    bracket: tuple[float, float]
    probes: list[tuple[float, bool]] = field(default_factory=list)
    wall_time: float = 0.0
    tol: float = DEFAULT_TOL

    def to_dict(self) -> dict:
        return {"sigma_star": self.sigma_star, "method": self.method,
                "bisection_steps": self.bisection_steps, "bracket": list(self.bracket),
                "probes": [[s, c] for s, c in self.probes], "wall_time": self.wall_time,
                "tol": self.tol}


def default_config(method: str) -> DeConfig:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    return HybridConfig() if method == "hybrid" else DeConfig()


def converges(e: MetEnsemble, sigma_n: float, method: str, cfg: DeConfig | None = None) -> bool:
    """One probe: does ``method`` reach the target BER at ``sigma_n``?"""
    cfg = cfg if cfg is not None else default_config(method)
    if method == "full":
        return run_full_de(e, sigma_n, cfg)[0]
    if method in APPROX_METHODS:
        return run_approx(e, sigma_n, method, cfg)[0]
    if method == "hybrid":
        if not isinstance(cfg, HybridConfig):
            raise TypeError("hybrid needs a HybridConfig")
        return run_hybrid(e, sigma_n, cfg)[0]
    raise ValueError(f"method must be one of {METHODS}")


def shannon_sigma(r: float) -> float:
    """Noise level at which the BI-AWGN capacity equals ``r``."""
    if not 0 < r < 1:
        raise ValueError("rate must lie in (0, 1)")
    cap = cap_table()
    return brentq(lambda s: float(cap.capacity(2 / s ** 2)) - r, 0.05, 200.0, xtol=1e-12)


def default_bracket(e: MetEnsemble) -> tuple[float, float]:
    s = shannon_sigma(rate(e))
    return 0.5 * s, 1.2 * s


def find_threshold(e: MetEnsemble, method: str, cfg: DeConfig | None = None,
                   sigma_lo: float | None = None, sigma_hi: float | None = None,
                   tol: float = DEFAULT_TOL) -> ThresholdResult:
    """Bisect for the largest converging noise level.

    The bracket defaults to [0.5, 1.2] times the Shannon-limit noise level.
    If the lower end does not converge or the upper end does, the bracket
    is widened by doubling its width on the failing side, at most four
    times.  ``sigma_star`` is the last converging probe.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    cfg = cfg if cfg is not None else default_config(method)
    t0 = time.perf_counter()
    lo_d, hi_d = default_bracket(e) if sigma_lo is None or sigma_hi is None else (None, None)
    lo = sigma_lo if sigma_lo is not None else lo_d
    hi = sigma_hi if sigma_hi is not None else hi_d
    if not 0 < lo < hi:
        raise ValueError("need 0 < sigma_lo < sigma_hi")
    probes: list[tuple[float, bool]] = []

    def probe(s: float) -> bool:
        ok = converges(e, s, method, cfg)
        probes.append((s, ok))
        return ok

    lo_ok = probe(lo)
    hi_ok = probe(hi)
    for _ in range(MAX_EXPANSIONS):
        if lo_ok and not hi_ok:
            break
        width = hi - lo
        if not lo_ok:
            hi, lo = lo, lo - width if lo - width > 0 else lo / 2
            hi_ok, lo_ok = False, probe(lo)
        else:
            lo, hi = hi, hi + 2 * width
            lo_ok, hi_ok = True, probe(hi)
    if not (lo_ok and not hi_ok):
        raise BracketError(f"{method}: no bracket found (last tried [{lo:g}, {hi:g}])")
    steps = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
        steps += 1
    return ThresholdResult(lo, method, steps, (lo, hi), probes, time.perf_counter() - t0, tol)


def threshold_error(sigma_app: float, sigma_de: float) -> float:
    """|1 - sigma_app / sigma_de|."""
    if sigma_de <= 0:
        raise ValueError("sigma_de must be positive")
    return abs(1 - sigma_app / sigma_de)


def cpu_time_gain(t_de: float, t_app: float) -> float:
    """|t_de / t_app|."""
    if t_app == 0:
        raise ZeroDivisionError("t_app must be nonzero")
    return abs(t_de / t_app)


def _probe_task(args):
    e, s, method, cfg = args
    return converges(e, s, method, cfg)


def sweep_sigma(e: MetEnsemble, method: str, sigmas: Sequence[float],
                cfg: DeConfig | None = None, workers: int = 1) -> list[tuple[float, bool]]:
    """Convergence at each noise level of a grid; probes are independent."""
    cfg = cfg if cfg is not None else default_config(method)
    tasks = [(e, float(s), method, cfg) for s in sigmas]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            flags = list(pool.map(_probe_task, tasks))
    else:
        flags = [_probe_task(t) for t in tasks]
    return [(float(s), bool(f)) for s, f in zip(sigmas, flags)]


def steps_needed(width: float, tol: float) -> int:
    """Bisection steps to shrink ``width`` below ``tol``."""
    return max(0, math.ceil(math.log2(width / tol))) if width > tol else 0
