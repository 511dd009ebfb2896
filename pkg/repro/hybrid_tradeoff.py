"""Accuracy and cost of hybrid DE and the Gaussian approximations on codes A-G.

Experiments, selected with --experiment:

  caps     threshold error of hybrid DE (KL limit off) and of truncated
           full DE for several full-iteration caps
  kl       threshold error of hybrid DE for several KL targets (no cap)
  methods  threshold error and CPU-time gain of every method with respect
           to 1000-iteration full DE

Errors are |sigma - sigma_DE| / sigma_DE.  Expect several hours for the
full set; use --codes to run a subset.

    python repro/hybrid_tradeoff.py --experiment caps --codes E F --out caps.csv
"""

from metde.ensemble import load_ensemble, rate
from metde.full_de import DeConfig
from metde.hybrid import HybridConfig
from metde.threshold import cpu_time_gain, default_bracket, threshold_error

from common import parser, timed_threshold, writer

CAPS = (10, 20, 50, 100)
KL_TARGETS = (0.1, 0.04, 0.01, 0.004)


def main():
    p = parser(__doc__)
    p.add_argument("--experiment", choices=("caps", "kl", "methods"), default="caps")
    p.add_argument("--codes", nargs="+", default=list("ABCDEFG"))
    a = p.parse_args()
    f, w = writer(a.out)
    w.writerow(["code", "rate", "variant", "setting", "sigma", "sigma_de", "error", "wall_s", "gain"])
    for c in a.codes:
        e = load_ensemble(f"tab4_code_{c}")
        lo, hi = default_bracket(e)
        s_de, t_de = timed_threshold(e, "full", lo=lo, hi=hi, tol=a.tol)

        def row(variant, setting, s, t):
            w.writerow([c, f"{rate(e):.4f}", variant, setting, f"{s:.5f}", f"{s_de:.5f}",
                        f"{threshold_error(s, s_de):.5f}", f"{t:.1f}", f"{cpu_time_gain(t_de, t):.2f}"])
            f.flush()

        row("full", 1000, s_de, t_de)
        if a.experiment == "caps":
            for cap in CAPS:
                s, t = timed_threshold(e, "full", DeConfig(max_iterations=cap), s_de * 0.6, s_de + 1e-3, a.tol)
                row("truncated", cap, s, t)
                cfg = HybridConfig(max_full_de_iterations=cap, kl_target=0.0)
                s, t = timed_threshold(e, "hybrid", cfg, s_de * 0.95, s_de * 1.05, a.tol)
                row("hybrid", cap, s, t)
        elif a.experiment == "kl":
            for k in KL_TARGETS:
                cfg = HybridConfig(max_full_de_iterations=1000, kl_target=k)
                s, t = timed_threshold(e, "hybrid", cfg, s_de * 0.95, s_de * 1.05, a.tol)
                row("hybrid", k, s, t)
        else:
            for m in ("hybrid", "mean", "ber", "rca"):
                s, t = timed_threshold(e, m, None, s_de * 0.8, s_de * 1.1, a.tol)
                row(m, "default", s, t)


if __name__ == "__main__":
    main()
