"""Forward run on a config plus the cheap diagnostics (mass balance, scaling)."""
import argparse
import time
from pathlib import Path

import numpy as np

from twoscale.config import parse_config
from twoscale.coupled import mass_defect, run_simulation, scaling_check, total_mass

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-c", "--config", type=Path, default=ROOT / "configs" / "ref.json")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = parse_config(args.config)
    print("assumptions ok" if cfg.report.ok else "assumption check failed")
    pb = cfg.problem(workers=args.workers)
    rho0 = cfg.initial_density(pb)
    k = cfg.k_values()

    t0 = time.perf_counter()
    traj = run_simulation(pb, rho0, k)
    print(f"{traj.n_steps} steps in {time.perf_counter() - t0:.2f}s, "
          f"coupling iterations {traj.iters.min()}..{traj.iters.max()}")
    print(f"pi range [{traj.pi.min():.4f}, {traj.pi.max():.4f}], "
          f"rho range [{traj.rho.min():.4f}, {traj.rho.max():.4f}]")

    masses = np.array([total_mass(r, pb) for r in traj.rho])
    print("total mass every 5 steps:", np.array2string(masses[::5], precision=6))
    print(f"max relative mass defect {mass_defect(traj, pb).max():.2e}")
    for lam in (0.5, 2.0, 10.0):
        print(f"scaling lambda={lam:g}: max relative deviation "
              f"{scaling_check(pb, rho0, k, lam)['max_rel_dev']:.2e}")


if __name__ == "__main__":
    main()
