import json

import numpy as np
import pytest

from metde.ensemble import EnsembleSyntaxError, rate
from metde.optimizer import (InfeasibleError, eval_expr, load_template, optimize_ensemble,
                             sweep_parameter, template_to_dict)
from metde.threshold import find_threshold

T = load_template("fig8")
TOL = 1e-3


def test_template_fields():
    assert T.free == ["a3"] and T.target_rate == 0.5
    assert T.bounds["a3"] == (0.05, 0.45)


def test_instantiation_reproduces_fig1():
    e = T.instantiate({"a3": 0.2})
    got = {tuple(c.d): c.coef for c in e.cn_classes}
    assert got.keys() == {(4, 1, 0, 0), (3, 2, 0, 0), (0, 0, 3, 1)}
    assert got[(4, 1, 0, 0)] == pytest.approx(0.4, abs=1e-9)
    assert got[(3, 2, 0, 0)] == pytest.approx(0.1, abs=1e-9)
    assert got[(0, 0, 3, 1)] == pytest.approx(0.2, abs=1e-9)


@pytest.mark.parametrize("a3", np.linspace(0.05, 0.45, 9))
def test_every_grid_instance_is_valid(a3):
    e = T.instantiate({"a3": float(a3)})
    assert np.abs(e.vn_sockets() - e.cn_sockets()).max() < 1e-9
    assert abs(rate(e) - 0.5) < 1e-6


def test_out_of_bounds_is_infeasible():
    with pytest.raises(InfeasibleError):
        T.instantiate({"a3": 0.6})
    with pytest.raises(KeyError):
        T.instantiate({"zz": 0.1})


def test_sweep_single_point_is_one_threshold():
    pts = sweep_parameter(T, "a3", [0.2], "mean", tol=TOL)
    ref = find_threshold(T.instantiate({"a3": 0.2}), "mean", None, *T.bracket, TOL)
    assert len(pts) == 1 and pts[0].sigma_star == ref.sigma_star


def test_sweep_reports_invalid_points():
    pts = sweep_parameter(T, "a3", [0.2, 0.9], "mean", tol=TOL)
    assert pts[0].sigma_star is not None
    assert pts[1].sigma_star is None and pts[1].reason


def test_sweep_all_invalid():
    with pytest.raises(InfeasibleError):
        sweep_parameter(T, "a3", [0.9, 1.0], "mean", tol=TOL)
    with pytest.raises(ValueError):
        sweep_parameter(T, "a1", [0.5], "mean")


def test_budget_one_is_initial_point():
    r = optimize_ensemble(T, "mean", 1, seed=0, tol=TOL)
    assert r.params == {"a3": 0.2} and len(r.history) == 1
    assert r.sigma_star == find_threshold(T.instantiate(), "mean", None, *T.bracket, TOL).sigma_star


def test_search_reproducible_and_not_worse_than_grid():
    a = optimize_ensemble(T, "mean", 25, seed=4, tol=TOL)
    b = optimize_ensemble(T, "mean", 25, seed=4, tol=TOL)
    assert a.params == b.params and a.sigma_star == b.sigma_star
    grid = sweep_parameter(T, "a3", [0.1, 0.15, 0.2, 0.25, 0.3], "mean", tol=TOL)
    best = max(p.sigma_star for p in grid if p.sigma_star is not None)
    assert a.sigma_star >= best - TOL
    for params, s in a.history:
        e = T.instantiate(params)
        assert np.abs(e.vn_sockets() - e.cn_sockets()).max() < 1e-9


def test_search_errors():
    with pytest.raises(ValueError):
        optimize_ensemble(T, "mean", 0)


@pytest.mark.parametrize("expr, val", [("1 - a1 - a3", 0.3), ("a3 * 2", 0.4), ("-a3 + 1", 0.8),
                                       (0.25, 0.25), ("(a1 + a3) / 2", 0.35)])
def test_eval_expr(expr, val):
    assert eval_expr(expr, {"a1": 0.5, "a3": 0.2}) == pytest.approx(val)


@pytest.mark.parametrize("expr", ["__import__('os')", "a1 ** 2", "b", "[1]", "1 +", None])
def test_eval_expr_rejects(expr):
    with pytest.raises(EnsembleSyntaxError):
        eval_expr(expr, {"a1": 0.5})


def test_load_template_sources(tmp_path):
    doc = template_to_dict(T)
    p = tmp_path / "t.json"
    p.write_text(json.dumps(doc))
    for src in (str(p), json.dumps(doc), doc, "template_fig8"):
        t = load_template(src)
        assert t.free == ["a3"] and t.target_rate == 0.5
    with pytest.raises(FileNotFoundError):
        load_template("nope")
    with pytest.raises(EnsembleSyntaxError):
        load_template({"L": [], "R": []})
