"""Degree-distribution search with the decoding threshold as cost.

A template is an ensemble document whose coefficients may be arithmetic
expressions in named parameters.  Check-side coefficients left as
``"auto"`` are completed by a linear program that restores socket
balance and the target rate.
"""

from __future__ import annotations

import ast
import json
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .ensemble import (BUILT_SOCKET_TOL, EnsembleSyntaxError, EnsembleValidationError,
                       MetEnsemble, ensemble_from_dict, rate)
from .full_de import DeConfig
from .threshold import DEFAULT_TOL, BracketError, converges, find_threshold

RATE_TOL = 1e-6
AUTO = "auto"

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.USub: operator.neg, ast.UAdd: operator.pos}


def eval_expr(expr, params: Mapping[str, float]) -> float:
    """Value of a numeric literal or an arithmetic expression over ``params``."""
    if isinstance(expr, (int, float)):
        return float(expr)
    if not isinstance(expr, str):
        raise EnsembleSyntaxError(f"coefficient must be a number or expression, got {expr!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in params:
                raise EnsembleSyntaxError(f"unknown parameter {node.id!r} in {expr!r}")
            return float(params[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise EnsembleSyntaxError(f"unsupported expression {expr!r}")

    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise EnsembleSyntaxError(f"bad expression {expr!r}: {exc}") from None
    return ev(tree)


class InfeasibleError(ValueError):
    """A parameter choice admits no valid ensemble."""


@dataclass
class EnsembleTemplate:
    """Ensemble document with parameterized coefficients.

    ``params`` holds the initial value of every parameter; ``free`` names
    the ones a search may move, each within ``bounds``.  Constraints
    between coefficients are written into the coefficient expressions
    themselves (e.g. ``"1 - a1 - a4"``).
    """

    doc: dict
    params: dict[str, float]
    free: list[str]
    bounds: dict[str, tuple[float, float]]
    target_rate: float
    name: str = "template"
    bracket: tuple[float, float] | None = None

    def __post_init__(self):
        for p in self.free:
            if p not in self.params:
                raise EnsembleSyntaxError(f"free parameter {p!r} has no initial value")
            if p not in self.bounds:
                raise EnsembleSyntaxError(f"free parameter {p!r} has no bounds")
            lo, hi = self.bounds[p]
            if not lo <= self.params[p] <= hi:
                raise EnsembleSyntaxError(f"initial {p} = {self.params[p]} outside bounds")
        if not 0 < self.target_rate < 1:
            raise EnsembleSyntaxError("target rate must lie in (0, 1)")

    def instantiate(self, values: Mapping[str, float] | None = None) -> MetEnsemble:
        """Ensemble for the given parameter values (others keep their initial value)."""
        params = dict(self.params)
        if values:
            unknown = set(values) - set(params)
            if unknown:
                raise KeyError(f"unknown parameters {sorted(unknown)}")
            params.update(values)
        for p in self.free:
            lo, hi = self.bounds[p]
            if not lo - 1e-12 <= params[p] <= hi + 1e-12:
                raise InfeasibleError(f"{p} = {params[p]} outside [{lo}, {hi}]")
        doc = json.loads(json.dumps(self.doc))
        for cls in doc["L"]:
            cls["coef"] = eval_expr(cls["coef"], params)
            if cls["coef"] < 0:
                raise InfeasibleError(f"negative variable coefficient {cls['coef']:g}")
        auto = [k for k, cls in enumerate(doc["R"]) if cls.get("coef", AUTO) == AUTO]
        for k, cls in enumerate(doc["R"]):
            if k not in auto:
                cls["coef"] = eval_expr(cls["coef"], params)
        if auto:
            _complete_checks(doc, auto, self.target_rate)
        doc.setdefault("name", self.name)
        try:
            e = ensemble_from_dict(doc, socket_tol=1e-9)
        except EnsembleValidationError as exc:
            raise InfeasibleError(str(exc)) from None
        if abs(rate(e) - self.target_rate) > RATE_TOL:
            raise InfeasibleError(f"rate {rate(e):.6f} differs from target {self.target_rate}")
        return e


def _complete_checks(doc: dict, auto: list[int], target_rate: float) -> None:
    """Fill the ``auto`` check coefficients by linear programming.

    Constraints: per edge-type socket balance and R(1) = L(1) - rate, with
    non-negative coefficients.  Objective: the sum of coef * sum(d_i^2),
    which favours concentrated check degrees.
    """
    m_e = doc["m_e"]
    vn = np.zeros(m_e)
    count_l = 0.0
    for cls in doc["L"]:
        vn += cls["coef"] * np.asarray(cls["d"], float)
        count_l += cls["coef"]
    fixed = np.zeros(m_e)
    count_fixed = 0.0
    for k, cls in enumerate(doc["R"]):
        if k not in auto:
            fixed += cls["coef"] * np.asarray(cls["d"], float)
            count_fixed += cls["coef"]
    D = np.array([doc["R"][k]["d"] for k in auto], float).T  # (m_e, n_auto)
    A = np.vstack([D, np.ones(len(auto))])
    b = np.concatenate([vn - fixed, [count_l - target_rate - count_fixed]])
    cost = (D ** 2).sum(axis=0)
    res = linprog(cost, A_eq=A, b_eq=b, bounds=[(0, None)] * len(auto), method="highs")
    if res.status != 0:
        raise InfeasibleError("no non-negative check completion balances the sockets")
    for k, c in zip(auto, res.x):
        doc["R"][k]["coef"] = float(max(c, 0.0))
    doc["R"] = [cls for cls in doc["R"] if cls["coef"] > 0]


def load_template(source) -> EnsembleTemplate:
    """Template from a path, a packaged template name, a JSON string or a mapping."""
    if isinstance(source, Mapping):
        doc = dict(source)
    else:
        text = None
        src = str(source)
        if src.lstrip().startswith("{"):
            text = src
        elif Path(src).exists():
            text = Path(src).read_text()
        else:
            from importlib import resources
            name = src if src.endswith(".json") else src + ".json"
            if not name.startswith("template_"):
                name = "template_" + name
            try:
                text = resources.files("metde.data").joinpath(name).read_text()
            except FileNotFoundError:
                raise FileNotFoundError(f"no template file or packaged template {source!r}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise EnsembleSyntaxError(f"template is not valid JSON: {exc}") from None
    for key in ("L", "R", "m_e", "m_r", "rate"):
        if key not in doc:
            raise EnsembleSyntaxError(f"template lacks {key!r}")
    params = {k: float(v) for k, v in doc.get("params", {}).items()}
    bounds = {k: (float(v[0]), float(v[1])) for k, v in doc.get("bounds", {}).items()}
    bracket = tuple(doc["bracket"]) if "bracket" in doc else None
    body = {k: doc[k] for k in ("m_e", "m_r", "L", "R")}
    if "name" in doc:
        body["name"] = doc["name"]
    return EnsembleTemplate(body, params, list(doc.get("free", [])), bounds, float(doc["rate"]),
                            doc.get("name", "template"), bracket)


@dataclass
class SweepPoint:
    value: float
    sigma_star: float | None
    reason: str = ""


def sweep_parameter(t: EnsembleTemplate, param: str, grid: Sequence[float], method: str,
                    cfg: DeConfig | None = None, tol: float = DEFAULT_TOL,
                    sigma_lo: float | None = None, sigma_hi: float | None = None) -> list[SweepPoint]:
    """Threshold at each grid value of one parameter; invalid points carry a reason."""
    if param not in t.free:
        raise ValueError(f"{param!r} is not a free parameter of the template")
    lo, hi = (sigma_lo, sigma_hi) if sigma_lo is not None else (t.bracket or (None, None))
    out = []
    for v in grid:
        try:
            e = t.instantiate({param: float(v)})
        except (InfeasibleError, EnsembleValidationError) as exc:
            out.append(SweepPoint(float(v), None, str(exc)))
            continue
        try:
            r = find_threshold(e, method, cfg, lo, hi, tol)
        except BracketError as exc:
            out.append(SweepPoint(float(v), None, str(exc)))
            continue
        out.append(SweepPoint(float(v), r.sigma_star))
    if all(p.sigma_star is None for p in out):
        raise InfeasibleError("no grid value gave a valid ensemble with a threshold")
    return out


@dataclass
class SearchResult:
    best: MetEnsemble
    sigma_star: float
    params: dict[str, float]
    history: list[tuple[dict, float | None]] = field(default_factory=list)


def optimize_ensemble(t: EnsembleTemplate, method: str, budget: int, seed: int = 0,
                      cfg: DeConfig | None = None, tol: float = DEFAULT_TOL,
                      step: float = 0.25, sigma_lo: float | None = None,
                      sigma_hi: float | None = None) -> SearchResult:
    """Randomized local search over the free parameters.

    Each candidate perturbs the incumbent by Gaussian steps scaled to the
    parameter ranges, shrinking geometrically over the budget.  A candidate
    is first probed just above the incumbent threshold; only if it decodes
    there is its threshold bisected.  ``budget`` counts candidates,
    including the initial point.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not t.free:
        raise ValueError("template has no free parameters")
    rng = np.random.default_rng(seed)
    lo, hi = (sigma_lo, sigma_hi) if sigma_lo is not None else (t.bracket or (None, None))
    best_params = {p: t.params[p] for p in t.free}
    try:
        best_e = t.instantiate(best_params)
    except InfeasibleError as exc:
        raise InfeasibleError(f"initial point is infeasible: {exc}") from None
    best_sigma = find_threshold(best_e, method, cfg, lo, hi, tol).sigma_star
    history: list[tuple[dict, float | None]] = [(dict(best_params), best_sigma)]
    span = np.array([t.bounds[p][1] - t.bounds[p][0] for p in t.free])
    decay = 0.05 ** (1 / max(budget - 1, 1))
    scale = step
    for _ in range(budget - 1):
        x = np.array([best_params[p] for p in t.free]) + scale * span * rng.standard_normal(len(t.free))
        x = np.clip(x, [t.bounds[p][0] for p in t.free], [t.bounds[p][1] for p in t.free])
        cand = dict(zip(t.free, map(float, x)))
        scale *= decay
        try:
            e = t.instantiate(cand)
        except InfeasibleError:
            history.append((cand, None))
            continue
        probe = best_sigma + tol
        if not converges(e, probe, method, cfg):
            history.append((cand, None))
            continue
        top = hi if hi is not None and hi > probe else None
        try:
            s = find_threshold(e, method, cfg, probe, top if top else probe * 1.2, tol).sigma_star
        except BracketError:
            history.append((cand, None))
            continue
        history.append((cand, s))
        if s > best_sigma:
            best_params, best_e, best_sigma = cand, e, s
    return SearchResult(best_e, best_sigma, best_params, history)


def template_to_dict(t: EnsembleTemplate) -> dict:
    doc = dict(t.doc)
    doc.update({"params": t.params, "free": t.free, "bounds": {k: list(v) for k, v in t.bounds.items()},
                "rate": t.target_rate})
    if t.bracket:
        doc["bracket"] = list(t.bracket)
    return doc


def _finite(x) -> bool:
    return x is not None and math.isfinite(x)
