"""Energy, data-stability, Frechet and inverse-stability harnesses on one config."""
import argparse
import json
from pathlib import Path

from twoscale import verify
from twoscale.config import parse_config

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-c", "--config", type=Path, default=ROOT / "configs" / "ref.json")
    ap.add_argument("--json", type=Path, default=None, help="write all reports here")
    args = ap.parse_args()

    cfg = parse_config(args.config)
    pb = cfg.problem()
    rho0 = cfg.initial_density(pb)
    k = cfg.k_values()
    reports = [
        verify.verify_energy(pb, k, seed=cfg.seed),
        verify.verify_data_stability(pb, cfg.rho_I, k),
        verify.verify_frechet(pb, rho0, k, seed=cfg.seed),
        verify.verify_neumann_map(pb, rho0, k),
        verify.verify_inverse_stability(pb, rho0, k, seed=cfg.seed),
    ]
    for rep in reports:
        print(rep.table())
    if args.json is not None:
        args.json.write_text(json.dumps([r.to_dict() for r in reports], indent=1, default=float))


if __name__ == "__main__":
    main()
