"""Thresholds of the designed rate-1/10 and rate-1/2 ensembles under every method.

Each designed ensemble (one per design method) is evaluated by full DE
and by the method that designed it, giving the two threshold columns of
the comparison tables.  Full-DE thresholds take 10-20 minutes each.

    python repro/designed_thresholds.py --family tab2 --out tab2.csv
"""

from metde.ensemble import load_ensemble, rate
from metde.threshold import default_bracket

from common import parser, timed_threshold, writer

METHODS = ("full", "hybrid", "mean", "ber", "rca")


def main():
    p = parser(__doc__)
    p.add_argument("--family", choices=("tab2", "tab3"), default="tab2")
    p.add_argument("--skip-full", action="store_true", help="only the design-method column")
    a = p.parse_args()
    f, w = writer(a.out)
    w.writerow(["ensemble", "rate", "design_method", "sigma_design", "sigma_full", "t_design_s", "t_full_s"])
    for m in METHODS:
        name = f"{a.family}_{m}"
        e = load_ensemble(name)
        lo, hi = default_bracket(e)
        s_d, t_d = timed_threshold(e, m, lo=lo, hi=hi, tol=a.tol)
        if m == "full" or a.skip_full:
            s_f, t_f = (s_d, t_d) if m == "full" else (float("nan"), float("nan"))
        else:
            s_f, t_f = timed_threshold(e, "full", lo=s_d * 0.95, hi=s_d * 1.05, tol=a.tol)
        w.writerow([name, f"{rate(e):.4f}", m, f"{s_d:.5f}", f"{s_f:.5f}", f"{t_d:.1f}", f"{t_f:.1f}"])
        f.flush()


if __name__ == "__main__":
    main()
