"""MET-LDPC degree distributions: parsing, validation and derived quantities."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np

FIXTURE_SOCKET_TOL = 1e-3
BUILT_SOCKET_TOL = 1e-12
METHODS = ("full", "mean", "ber", "rca", "hybrid")


class EnsembleSyntaxError(ValueError):
    """The ensemble document is malformed."""


class EnsembleValidationError(ValueError):
    """The ensemble violates a structural invariant."""


@dataclass(frozen=True)
class VariableNodeClass:
    """A fraction ``coef`` of variable nodes with channel vector ``b`` and edge counts ``d``.

    ``b`` is one-hot of length ``m_r + 1``; index 0 means punctured.
    """

    coef: float
    b: tuple[int, ...]
    d: tuple[int, ...]

    @property
    def punctured(self) -> bool:
        return self.b[0] == 1

    @property
    def degree(self) -> int:
        return sum(self.d)


@dataclass(frozen=True)
class CheckNodeClass:
    coef: float
    d: tuple[int, ...]

    @property
    def degree(self) -> int:
        return sum(self.d)


@dataclass(frozen=True)
class MetEnsemble:
    """Node-perspective description ``L(r, x)``, ``R(x)`` of a MET-LDPC ensemble.

    Construction validates the structure and the per-edge-type socket balance
    to ``socket_tol``.
    """

    m_e: int
    m_r: int
    vn_classes: tuple[VariableNodeClass, ...]
    cn_classes: tuple[CheckNodeClass, ...]
    name: str = field(default="", compare=False)
    socket_tol: float = field(default=BUILT_SOCKET_TOL, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vn_classes", tuple(self.vn_classes))
        object.__setattr__(self, "cn_classes", tuple(self.cn_classes))
        self._validate()

    def _validate(self):
        if self.m_e < 1 or self.m_r < 1:
            raise EnsembleValidationError("m_e and m_r must be at least 1")
        if not self.vn_classes or not self.cn_classes:
            raise EnsembleValidationError("need at least one variable and one check class")
        for k, c in enumerate(self.vn_classes):
            if len(c.d) != self.m_e:
                raise EnsembleValidationError(f"L[{k}]: d has length {len(c.d)}, expected m_e={self.m_e}")
            if len(c.b) != self.m_r + 1:
                raise EnsembleValidationError(f"L[{k}]: b has length {len(c.b)}, expected m_r+1={self.m_r + 1}")
            if sorted(c.b) != [0] * self.m_r + [1]:
                raise EnsembleValidationError(f"L[{k}]: b must be one-hot, got {list(c.b)}")
            if c.coef < 0 or min(c.d) < 0:
                raise EnsembleValidationError(f"L[{k}]: negative coefficient or degree")
            if sum(c.d) < 1:
                raise EnsembleValidationError(f"L[{k}]: variable class has no edges")
        for k, c in enumerate(self.cn_classes):
            if len(c.d) != self.m_e:
                raise EnsembleValidationError(f"R[{k}]: d has length {len(c.d)}, expected m_e={self.m_e}")
            if c.coef < 0 or min(c.d) < 0:
                raise EnsembleValidationError(f"R[{k}]: negative coefficient or degree")
            if sum(c.d) < 2:
                raise EnsembleValidationError(f"R[{k}]: check classes need degree >= 2, got {sum(c.d)}")
        vs, cs = self.vn_sockets(), self.cn_sockets()
        bad = [i for i in range(self.m_e) if abs(vs[i] - cs[i]) > self.socket_tol]
        if bad:
            detail = "; ".join(f"edge type {i + 1}: variable side {vs[i]:.6g}, check side {cs[i]:.6g}"
                               for i in bad)
            raise EnsembleValidationError(f"socket imbalance: {detail}")
        for i in range(self.m_e):
            if vs[i] <= 0 or cs[i] <= 0:
                raise EnsembleValidationError(f"edge type {i + 1} has no sockets")
        r = rate(self)
        if not 0 < r < 1:
            raise EnsembleValidationError(f"rate {r:.6g} outside (0, 1)")

    def vn_sockets(self) -> np.ndarray:
        return sum((c.coef * np.asarray(c.d, float) for c in self.vn_classes), np.zeros(self.m_e))

    def cn_sockets(self) -> np.ndarray:
        return sum((c.coef * np.asarray(c.d, float) for c in self.cn_classes), np.zeros(self.m_e))

    @property
    def max_vn_degree(self) -> int:
        return max(c.degree for c in self.vn_classes)

    @property
    def max_cn_degree(self) -> int:
        return max(c.degree for c in self.cn_classes)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"m_e": self.m_e, "m_r": self.m_r}
        if self.name:
            out["name"] = self.name
        out["L"] = [{"coef": c.coef, "b": list(c.b), "d": list(c.d)} for c in self.vn_classes]
        out["R"] = [{"coef": c.coef, "d": list(c.d)} for c in self.cn_classes]
        return out


@dataclass(frozen=True)
class EdgePerspective:
    """Edge-perspective weights: ``lam[i, c]`` over variable classes, ``rho[i, c]`` over check classes."""

    lam: np.ndarray
    rho: np.ndarray

    def vn(self, i: int) -> list[tuple[int, float]]:
        return [(int(c), float(w)) for c, w in enumerate(self.lam[i]) if w > 0]

    def cn(self, i: int) -> list[tuple[int, float]]:
        return [(int(c), float(w)) for c, w in enumerate(self.rho[i]) if w > 0]


def _as_int_tuple(x, what: str) -> tuple[int, ...]:
    if not isinstance(x, (list, tuple)) or not x:
        raise EnsembleSyntaxError(f"{what} must be a non-empty list of integers")
    out = []
    for v in x:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            raise EnsembleSyntaxError(f"{what} must contain integers, got {v!r}")
        out.append(int(v))
    return tuple(out)


def _as_coef(x, what: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise EnsembleSyntaxError(f"{what}: coef must be a number, got {x!r}")
    return float(x)


def ensemble_from_dict(doc: Mapping, socket_tol: float | None = None, name: str = "") -> MetEnsemble:
    """Build an ensemble from the JSON-shaped mapping of the ensemble file format."""
    if not isinstance(doc, Mapping):
        raise EnsembleSyntaxError("ensemble document must be an object")
    for key in ("m_e", "L", "R"):
        if key not in doc:
            raise EnsembleSyntaxError(f"missing field {key!r}")
    try:
        m_e = int(doc["m_e"])
        m_r = int(doc.get("m_r", 1))
    except (TypeError, ValueError) as exc:
        raise EnsembleSyntaxError("m_e and m_r must be integers") from exc
    if not isinstance(doc["L"], list) or not isinstance(doc["R"], list):
        raise EnsembleSyntaxError("L and R must be lists")
    vns, cns = [], []
    for k, t in enumerate(doc["L"]):
        if not isinstance(t, Mapping) or not {"coef", "b", "d"} <= set(t):
            raise EnsembleSyntaxError(f"L[{k}] needs coef, b and d")
        vns.append(VariableNodeClass(_as_coef(t["coef"], f"L[{k}]"), _as_int_tuple(t["b"], f"L[{k}].b"),
                                     _as_int_tuple(t["d"], f"L[{k}].d")))
    for k, t in enumerate(doc["R"]):
        if not isinstance(t, Mapping) or not {"coef", "d"} <= set(t):
            raise EnsembleSyntaxError(f"R[{k}] needs coef and d")
        cns.append(CheckNodeClass(_as_coef(t["coef"], f"R[{k}]"), _as_int_tuple(t["d"], f"R[{k}].d")))
    if socket_tol is None:
        socket_tol = float(doc.get("socket_tol", FIXTURE_SOCKET_TOL))
    return MetEnsemble(m_e, m_r, tuple(vns), tuple(cns), name=name or str(doc.get("name", "")),
                       socket_tol=socket_tol)


def parse_ensemble(source: str | Mapping, socket_tol: float | None = None) -> MetEnsemble:
    """Parse a JSON ensemble document (text or already-decoded mapping).

    Documents are checked at the fixture tolerance unless they carry their
    own ``socket_tol`` or one is passed explicitly.
    """
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise EnsembleSyntaxError(f"not valid JSON: {exc}") from exc
    else:
        doc = source
    return ensemble_from_dict(doc, socket_tol)


def fixture_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("metde.data").iterdir()
                  if p.name.endswith(".json") and not p.name.startswith("template_"))


def load_ensemble(path_or_name: str | Path, socket_tol: float | None = None) -> MetEnsemble:
    """Load an ensemble from a file path or a shipped fixture name (``"fig1"``)."""
    p = Path(path_or_name)
    if p.suffix == ".json" and p.exists():
        text = p.read_text()
        stem = p.stem
    else:
        stem = p.stem if p.suffix == ".json" else str(path_or_name)
        res = resources.files("metde.data") / f"{stem}.json"
        if not res.is_file():
            raise FileNotFoundError(f"no ensemble file or fixture named {path_or_name!r}")
        text = res.read_text()
    e = parse_ensemble(text, socket_tol)
    if not e.name:
        object.__setattr__(e, "name", stem)
    return e


def rate(e: MetEnsemble) -> float:
    """Design rate ``L(1, 1) - R(1)``."""
    return float(sum(c.coef for c in e.vn_classes) - sum(c.coef for c in e.cn_classes))


def edge_perspective(e: MetEnsemble) -> EdgePerspective:
    vd = np.array([[c.coef * di for di in c.d] for c in e.vn_classes]).T
    cd = np.array([[c.coef * di for di in c.d] for c in e.cn_classes]).T
    vs, cs = vd.sum(axis=1), cd.sum(axis=1)
    for i in range(e.m_e):
        if vs[i] <= 0 or cs[i] <= 0:
            raise EnsembleValidationError(f"edge type {i + 1} has no sockets")
    return EdgePerspective(vd / vs[:, None], cd / cs[:, None])


def average_degrees(e: MetEnsemble) -> tuple[float, float]:
    dv = e.vn_sockets().sum() / sum(c.coef for c in e.vn_classes)
    dc = e.cn_sockets().sum() / sum(c.coef for c in e.cn_classes)
    return float(dv), float(dc)


COST_ROWS = ("sums", "multiplications", "lookups", "exponentials", "q_functions", "convolutions")


def cost_model(e: MetEnsemble, method: str, alpha: float | None = None) -> dict[str, dict[str, float]]:
    """Floating-point operations per edge per iteration, split by node side.

    ``alpha`` is the fraction of full-DE iterations and is used only for
    the hybrid method.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "hybrid":
        if alpha is None:
            raise ValueError("hybrid cost needs alpha")
        if not 0 <= alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    elif alpha is not None:
        raise ValueError("alpha applies only to the hybrid method")
    dv, dc = average_degrees(e)
    t = {row: {"vn": 0.0, "cn": 0.0} for row in COST_ROWS}
    if method == "full":
        t["convolutions"] = {"vn": dv, "cn": dc - 1}
    elif method == "mean":
        t["sums"] = {"vn": dv, "cn": dc}
        t["lookups"]["cn"] = dc
        t["exponentials"]["cn"] = dc - 1
    elif method == "ber":
        t["sums"] = {"vn": dv, "cn": 2 * dc + 1}
        t["multiplications"]["vn"] = 2.0
        t["exponentials"] = {"vn": 1.0, "cn": dc - 1}
        t["q_functions"]["vn"] = 1.0
    elif method == "rca":
        t["sums"] = {"vn": dv, "cn": dc - 1}
        t["lookups"] = {"vn": dv - 1, "cn": dc - 1}
    else:
        g = 1.0 - alpha
        t["sums"] = {"vn": g * dv, "cn": g * dc}
        t["lookups"]["cn"] = g * dc
        t["exponentials"]["cn"] = g * (dc - 1)
        t["convolutions"] = {"vn": alpha * dv, "cn": alpha * (dc - 1)}
    return t


def monitored_check(e: MetEnsemble) -> tuple[int, int]:
    """(check class, edge type) whose outgoing message is watched for Gaussianity.

    The class with the largest total degree (lowest index on ties) and its
    highest-degree edge type.
    """
    c = max(range(len(e.cn_classes)), key=lambda k: (e.cn_classes[k].degree, -k))
    d = e.cn_classes[c].d
    i = max(range(e.m_e), key=lambda k: (d[k], -k))
    return c, i
