"""KL divergence of message densities from the symmetric Gaussian of equal mean.

Three experiments, selected with --experiment:

  lowrate    per-iteration check-message KL of the rate-1/10 reference
             code at several noise levels (all edge types)
  degree     first-iteration check-message KL versus check degree and
             noise level for a single-edge-type rate-1/10 ensemble
  punctured  per-iteration variable- and check-message KL of the
             rate-1/2 punctured code, 0.05 below its threshold

    python repro/gaussianity_kl.py --experiment lowrate --out kl.csv
"""

import math

from metde.density import checknode_combine, kl_to_symmetric_gaussian
from metde.channel import ChannelSpec, channel_llr_density
from metde.density import Grid
from metde.ensemble import load_ensemble
from metde.full_de import DeConfig, DensityEvolver
from metde.threshold import find_threshold

from common import parser, writer


def kl(p) -> float:
    try:
        return kl_to_symmetric_gaussian(p)
    except ValueError:
        return math.nan


def lowrate(w, sigmas, iters):
    e = load_ensemble("tab2_reference")
    w.writerow(["sigma", "iteration", "posterior_ber"] + [f"kl_u{i + 1}" for i in range(e.m_e)])
    for s in sigmas:
        ev = DensityEvolver(e, s, DeConfig())
        for it in range(1, iters + 1):
            ev.variable_half()
            b = ev.ber()
            ev.check_half()
            w.writerow([s, it, f"{b:.6g}"] + [f"{kl(u):.6g}" for u in ev.f_u])
            if b < 1e-10:
                break


def degree(w, sigmas, degrees):
    grid = Grid()
    w.writerow(["sigma", "check_degree", "kl_u"])
    for s in sigmas:
        ch = channel_llr_density(ChannelSpec(s), grid)
        u = ch
        for d in range(3, max(degrees) + 1):
            u = checknode_combine(u, ch)
            if d in degrees:
                w.writerow([s, d, f"{kl(u):.6g}"])


def punctured(w, iters, tol):
    e = load_ensemble("fig5_punctured")
    s = find_threshold(e, "full", None, 0.8, 1.1, tol).sigma_star - 0.05
    ev = DensityEvolver(e, s, DeConfig())
    w.writerow(["sigma", "iteration"] + [f"kl_v{i + 1}" for i in range(e.m_e)]
               + [f"kl_u{i + 1}" for i in range(e.m_e)])
    for it in range(1, iters + 1):
        fv = ev.variable_half()
        b = ev.ber()
        fu = ev.check_half()
        w.writerow([f"{s:.4f}", it] + [f"{kl(p):.6g}" for p in fv] + [f"{kl(p):.6g}" for p in fu])
        if b < 1e-10:
            break


def main():
    p = parser(__doc__)
    p.add_argument("--experiment", choices=("lowrate", "degree", "punctured"), default="lowrate")
    p.add_argument("--iterations", type=int, default=200)
    a = p.parse_args()
    f, w = writer(a.out)
    if a.experiment == "lowrate":
        lowrate(w, (2.0, 2.3, 2.5), a.iterations)
    elif a.experiment == "degree":
        degree(w, (1.0, 1.5, 2.0, 2.5), (3, 5, 7, 9, 11, 13, 15))
    else:
        punctured(w, a.iterations, a.tol)
    f.flush()


if __name__ == "__main__":
    main()
