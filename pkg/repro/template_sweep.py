"""Threshold of the rate-1/2 template family as the degree-one fraction a3 varies.

Each method sweeps the same a3 grid; points whose check-side completion
cannot be decoded are written with an empty threshold and the reason.

    python repro/template_sweep.py --methods mean hybrid full --out sweep.csv
"""

import numpy as np

from metde.optimizer import load_template, sweep_parameter

from common import parser, writer


def main():
    p = parser(__doc__)
    p.add_argument("--methods", nargs="+", default=["mean", "ber", "rca", "hybrid", "full"])
    p.add_argument("--points", type=int, default=9)
    a = p.parse_args()
    t = load_template("fig8")
    lo, hi = t.bounds["a3"]
    grid = np.round(np.linspace(lo, hi, a.points), 6)
    f, w = writer(a.out)
    w.writerow(["method", "a3", "sigma", "reason"])
    for m in a.methods:
        for pt in sweep_parameter(t, "a3", grid, m, tol=a.tol):
            w.writerow([m, pt.value, "" if pt.sigma_star is None else f"{pt.sigma_star:.5f}", pt.reason])
            f.flush()


if __name__ == "__main__":
    main()
