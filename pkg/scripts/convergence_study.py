"""Grid convergence: manufactured micro/macro solutions and coupled self-convergence."""
import argparse
from pathlib import Path

import numpy as np

from twoscale.config import parse_config
from twoscale.verify import macro_poisson_error, micro_heat_errors, self_convergence

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-c", "--config", type=Path, default=ROOT / "configs" / "ref.json")
    ap.add_argument("--levels", type=int, default=3, help="coupled refinement levels")
    args = ap.parse_args()

    levels = (5, 9, 17, 33, 65)
    e = micro_heat_errors(levels)
    print("micro heat equation (k = 0, dt = 0.2 h^2)")
    print(f"{'n_y':>5} {'error':>12} {'order':>7}")
    for i, n in enumerate(levels):
        order = "" if i == 0 else f"{np.log2(e[i - 1] / e[i]):7.3f}"
        print(f"{n:5d} {e[i]:12.4e} {order}")

    print("\nmacro Poisson, max nodal error")
    prev = None
    for n in (17, 33, 65, 129, 257):
        err = macro_poisson_error(n)
        order = "" if prev is None else f"{np.log2(prev / err):7.3f}"
        print(f"{n:5d} {err:12.4e} {order}")
        prev = err

    cfg = parse_config(args.config)
    res = self_convergence(cfg.problem(), cfg.rho_I, cfg.k_values(), levels=args.levels)
    print("\ncoupled self-convergence (h/2, dt/4 per level), final-time density")
    print("n_y:", res["n_y"])
    print("successive differences:", ", ".join(f"{d:.4e}" for d in res["diffs"]))
    print("ratios:", ", ".join(f"{r:.3f}" for r in res["ratios"]))


if __name__ == "__main__":
    main()
