"""Full DE against the sampled (Monte Carlo) message-passing oracle.

Writes both BER trajectories with the binomial standard error and the
z-score of their difference.

    python repro/mc_vs_de.py --ensemble tab4_code_E --sigma 0.95 --out mc.csv
"""

import numpy as np

from metde.ensemble import load_ensemble
from metde.full_de import DeConfig, run_full_de
from metde.mc_oracle import mc_de_run

from common import parser, writer


def main():
    p = parser(__doc__)
    p.add_argument("--ensemble", default="ldpc_3_6")
    p.add_argument("--sigma", type=float, default=0.85)
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args()
    e = load_ensemble(a.ensemble)
    _, tr = run_full_de(e, a.sigma, DeConfig(max_iterations=a.iterations, target_ber=1e-300))
    mc = mc_de_run(e, a.sigma, len(tr.posterior_ber), a.samples, a.seed)
    p_de = np.array(tr.posterior_ber)
    se = np.sqrt(np.maximum(p_de * (1 - p_de), 1e-300) / a.samples)
    f, w = writer(a.out)
    w.writerow(["iteration", "ber_de", "ber_mc", "se", "z"])
    for k in range(len(p_de)):
        w.writerow([k + 1, f"{p_de[k]:.6e}", f"{mc.ber[k]:.6e}", f"{se[k]:.3e}",
                    f"{(mc.ber[k] - p_de[k]) / se[k]:.2f}"])
    f.flush()


if __name__ == "__main__":
    main()
