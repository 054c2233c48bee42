"""Recover the Robin coefficient from synthetic Gamma_N traces at several noise levels."""
import argparse
from pathlib import Path

import numpy as np

from twoscale.config import parse_config
from twoscale.coupled import run_simulation
from twoscale.inverse import OutputLeastSquares, identify, make_measurements, weighted_sigma_min

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-c", "--config", type=Path, default=ROOT / "configs" / "ref.json")
    ap.add_argument("--profile", choices=("constant", "bump"), default="constant")
    ap.add_argument("--noise", type=float, nargs="*", default=[0.0, 1e-3, 1e-2])
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    cfg = parse_config(args.config)
    pb = cfg.problem()
    rho0 = cfg.initial_density(pb)
    y = np.linspace(0, 1, pb.micro.n_y)
    k_true = cfg.k_values() if args.profile == "constant" else 1.0 + 0.3 * np.sin(np.pi * y)
    k0 = 0.5 * k_true
    truth = run_simulation(pb, rho0, k_true)

    clean = OutputLeastSquares(pb, rho0, make_measurements(truth, pb))
    sv = weighted_sigma_min(clean.jacobian(k_true), pb)
    print(f"smallest weighted singular value of the trace Jacobian at k_true: {sv:.3e}")

    print(f"{'delta':>8} {'seed':>4} {'reason':>12} {'steps':>5} {'k error':>10} {'error/delta':>11}")
    for delta in args.noise:
        for seed in range(args.seeds if delta > 0 else 1):
            meas = make_measurements(truth, pb, delta, seed=seed)
            ols = OutputLeastSquares(pb, rho0, meas, gamma=cfg.inverse.gamma, k_ref=k0)
            res = identify(ols, k0, tol_g=cfg.inverse.tol_g, max_iter=cfg.inverse.max_iter,
                           tau=cfg.inverse.tau, q=cfg.inverse.q, k_true=k_true)
            ratio = f"{res.k_error / delta:11.2f}" if delta > 0 else ""
            print(f"{delta:8.0e} {seed:4d} {res.reason:>12} {res.steps:5d} {res.k_error:10.3e} {ratio}")


if __name__ == "__main__":
    main()
