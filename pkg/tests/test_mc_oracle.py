import math

import numpy as np
import pytest

from metde.density import Grid
from metde.ensemble import load_ensemble, parse_ensemble
from metde.full_de import DeConfig, run_full_de
from metde.gauss_approx import q_func
from metde.mc_oracle import SAT, mc_de_run, tanh_rule

LDPC36 = load_ensemble("ldpc_3_6")
N = 200_000


def test_first_iteration_is_channel_ber():
    sigma = 0.9
    r = mc_de_run(LDPC36, sigma, 1, N, seed=3)
    p = q_func(1 / sigma)
    assert abs(r.ber[0] - p) < 3 * math.sqrt(p * (1 - p) / N)


def test_all_punctured_stays_at_half():
    e = parse_ensemble({"m_e": 1, "m_r": 1, "L": [{"coef": 1.0, "b": [1, 0], "d": [3]}],
                        "R": [{"coef": 0.5, "d": [6]}]})
    r = mc_de_run(e, 0.5, 4, 10_000)
    assert np.all(r.ber == 0.5)


def test_seeded_determinism():
    a = mc_de_run(LDPC36, 0.85, 3, 20_000, seed=9)
    b = mc_de_run(LDPC36, 0.85, 3, 20_000, seed=9)
    c = mc_de_run(LDPC36, 0.85, 3, 20_000, seed=10)
    np.testing.assert_array_equal(a.ber, b.ber)
    assert not np.array_equal(a.ber, c.ber)


def test_result_iterates_as_pairs():
    r = mc_de_run(LDPC36, 0.85, 2, 10_000)
    pairs = list(r)
    assert len(pairs) == 2 and pairs[0] == (r.ber[0], r.std_err[0])
    assert r.std_err[0] == pytest.approx(math.sqrt(r.ber[0] * (1 - r.ber[0]) / 10_000))


@pytest.mark.parametrize("kw", [{"N": 100}, {"iterations": 0}, {"sigma_n": 0.0}])
def test_parameter_validation(kw):
    args = dict(e=LDPC36, sigma_n=0.8, iterations=2, N=10_000)
    args.update(kw)
    with pytest.raises(ValueError):
        mc_de_run(**args)


def test_tanh_rule():
    x = np.array([2.0, -3.0, 0.0, 5.0])
    big = np.full(4, SAT)
    np.testing.assert_allclose(tanh_rule([x, big]), x, atol=1e-9)
    assert tanh_rule([x, np.zeros(4)]).tolist() == [0.0] * 4
    y = np.array([1.0, 1.0, 1.0, -1.0])
    ref = 2 * np.arctanh(np.tanh(x / 2) * np.tanh(y / 2))
    np.testing.assert_allclose(tanh_rule([x, y]), ref, atol=1e-12)


@pytest.mark.parametrize("name, sigma", [("ldpc_3_6", 0.8), ("fig1", 0.8)])
def test_ks_against_full_de(name, sigma):
    e = load_ensemble(name)
    iters = 10
    grid = Grid()
    mc = mc_de_run(e, sigma, iters, N, seed=1, keep_banks=True)
    _, tr = run_full_de(e, sigma, DeConfig(max_iterations=iters, target_ber=1e-300),
                        keep_densities=True)
    edges = grid.points + grid.delta / 2
    bound = 5 / math.sqrt(N)
    for k in range(iters):
        for i in range(e.m_e):
            p = tr.densities[k].f_v[i]
            if p.mass[grid.half] > 0.5:
                continue  # punctured edge still erased; both are point masses at 0
            cdf_de = p.sat_neg + np.cumsum(p.mass)
            s = np.sort(mc.banks[k].v[i])
            cdf_mc = np.searchsorted(s, edges, side="right") / s.size
            assert np.max(np.abs(cdf_de - cdf_mc)) < bound, (k, i)
