"""Command-line entry point: ``twoscale <subcommand> -c config.json``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import SolverConfig, parse_config
from .coupled import run_simulation
from .errors import SimulationError, StagnationError, TwoScaleError
from .inverse import OutputLeastSquares, identify, make_measurements
from .io import RunArtifacts, read_measurement, write_outputs
from . import verify

log = logging.getLogger("twoscale")

VERIFY = ("verify-scaling", "verify-frechet", "verify-energy", "verify-stability",
          "verify-neumann-map", "verify-assumptions")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twoscale", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", required=True, type=Path)
        p.add_argument("-o", "--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=1)
        return p

    common(sub.add_parser("solve", help="run the forward simulation"))
    p = common(sub.add_parser("measure", help="write Gamma_N traces as a measurement set"))
    p.add_argument("--noise", type=float, default=0.0, help="relative Gaussian noise level")
    p = common(sub.add_parser("invert", help="identify k from a measurement set"))
    p.add_argument("-m", "--measurement", required=True, type=Path)
    p.add_argument("--k0", default=None, help="initial k: a number or a file")
    p.add_argument("--gamma", type=float, default=None)
    for name in VERIFY:
        p = common(sub.add_parser(name))
        if name == "verify-scaling":
            p.add_argument("--lambda", dest="lambdas", type=float, action="append")
    return ap


def _k0(spec: str | None, cfg: SolverConfig) -> np.ndarray:
    if spec is None:
        return 0.5 * cfg.k_values()
    path = Path(spec)
    if path.exists():
        vals = (json.loads(path.read_text()) if path.suffix == ".json"
                else np.loadtxt(path, delimiter=",", ndmin=1))
        return np.asarray(vals, dtype=float).ravel()
    return np.full(cfg.n_y, float(spec))


def _out(args, cfg: SolverConfig) -> Path:
    return args.out if args.out is not None else cfg.base_dir / cfg.output_dir


def run(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    pb = cfg.problem(workers=args.workers)
    echo = cfg.to_dict()
    cmd = args.command

    if cmd in ("solve", "measure") and not cfg.report.ok and not cfg.allow_invalid:
        print("assumption check failed; set allow_invalid to override", file=sys.stderr)
        for c in cfg.report.failures():
            print(f"  {c['name']}: {c['detail']}", file=sys.stderr)
        return 1

    if cmd == "solve":
        try:
            traj = run_simulation(pb, cfg.initial_density(pb), cfg.k_values())
        except SimulationError as exc:
            write_outputs(RunArtifacts(echo, exc.trajectory, error=str(exc)), _out(args, cfg))
            print(f"error: {exc}", file=sys.stderr)
            return 1
        man = write_outputs(RunArtifacts(echo, traj, reports={"assumptions": cfg.report.to_dict()}),
                            _out(args, cfg))
        print(f"solved {traj.n_steps} steps, max coupling iterations {int(traj.iters.max(initial=0))}")
        print(f"manifest digest {man['digest']}")
        return 0

    if cmd == "measure":
        echo["noise"] = args.noise
        traj = run_simulation(pb, cfg.initial_density(pb), cfg.k_values())
        meas = make_measurements(traj, pb, args.noise, seed=cfg.seed)
        man = write_outputs(RunArtifacts(echo, measurement=meas), _out(args, cfg))
        print(f"wrote {meas.values.size} trace samples (noise {args.noise:g})")
        print(f"manifest digest {man['digest']}")
        return 0

    if cmd == "invert":
        meas = read_measurement(args.measurement)
        gamma = cfg.inverse.gamma if args.gamma is None else args.gamma
        k0 = _k0(args.k0, cfg)
        ols = OutputLeastSquares(pb, cfg.initial_density(pb), meas, gamma=gamma, k_ref=k0)
        io = cfg.inverse
        try:
            res = identify(ols, k0, tol_g=io.tol_g, max_iter=io.max_iter, tau=io.tau, q=io.q,
                           k_true=meas.k_true)
        except StagnationError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        echo.update(gamma=gamma, k0=k0.tolist(), measurement_provenance=meas.provenance)
        write_outputs(RunArtifacts(echo, reports={"identification": res.to_dict()}), _out(args, cfg))
        print(f"terminated by {res.reason} after {res.steps} iterations")
        print("k =", " ".join(f"{v:.6g}" for v in res.k))
        if res.k_error is not None:
            print(f"relative k error {res.k_error:.3e}")
        return 0

    k = cfg.k_values()
    rho = cfg.initial_density(pb)
    if cmd == "verify-scaling":
        rep = verify.verify_scaling(pb, rho, k, tuple(args.lambdas or (0.5, 2.0, 10.0)))
    elif cmd == "verify-frechet":
        rep = verify.verify_frechet(pb, rho, k, seed=cfg.seed)
    elif cmd == "verify-energy":
        rep = verify.verify_energy(pb, k, seed=cfg.seed)
    elif cmd == "verify-stability":
        rep = verify.verify_data_stability(pb, cfg.rho_I, k)
        inv = verify.verify_inverse_stability(pb, rho, k, seed=cfg.seed)
        rep.rows.extend(inv.rows)
        rep.data["inverse"] = inv.data
    elif cmd == "verify-neumann-map":
        rep = verify.verify_neumann_map(pb, rho, k)
    else:
        rep = verify.verify_assumptions(cfg)
    print(rep.table())
    if args.out is not None:
        write_outputs(RunArtifacts(echo, reports={cmd.replace("-", "_"): rep.to_dict()}), args.out)
    return 0 if rep.ok else 1


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except (TwoScaleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
