"""Acceptance suite on the reference configuration.

Each test prints one PASS/FAIL line; the lines are also repeated in the
pytest terminal summary.  Run directly with ``python3 tests/test_acceptance.py``
for just the table.
"""
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from twoscale import verify
from twoscale.cli import main as cli_main
from twoscale.config import parse_config
from twoscale.coupled import mass_defect, run_simulation
from twoscale.inverse import OutputLeastSquares, identify, make_measurements
from twoscale.model import NonlinearityMode
from twoscale.sensitivity import assemble_neumann_map

from conftest import ACCEPTANCE

REF = Path(__file__).resolve().parents[1] / "configs" / "ref.json"

SIGMA_MIN_PIN = 10.1824      # N-map sigma_min on the reference config
NOISE_CONSTANT_PIN = 75.16   # relative k error / delta, delta = 1e-3, noise seed 0
PIN_SLACK = 0.10


@pytest.fixture(scope="module")
def cfg():
    return parse_config(REF)


@pytest.fixture(scope="module")
def pb(cfg):
    return cfg.problem()


@pytest.fixture(scope="module")
def rho0(cfg, pb):
    return cfg.initial_density(pb)


def record(num: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {num:2d} {title}: {detail}"
    print(line)
    ACCEPTANCE.append(line)
    assert ok, line


def test_01_scaling(pb, rho0):
    rep = verify.verify_scaling(pb, rho0, 1.0, (0.5, 2.0, 10.0), tol=1e-8)
    worst = max(r["value"] for r in rep.rows)
    record(1, "degree-one scaling", rep.ok, f"max relative deviation {worst:.2e} (limit 1e-8)")


def test_02_equilibrium(pb):
    eq = pb.with_params(c_f=0.0, p_F=1.5 * pb.params.R)
    traj = run_simulation(eq, 1.5, np.linspace(0.5, 3.0, pb.micro.n_y))
    dev = float(np.max(np.abs(traj.rho - 1.5)))
    record(2, "equilibrium preserved", dev <= 1e-10, f"max deviation {dev:.2e} (limit 1e-10)")


def test_03_mass_identity(pb, rho0):
    runs = [(pb, rho0, 1.0), (pb, rho0, np.linspace(0.3, 4.0, pb.micro.n_y)),
            (pb.with_params(p_F=0.0), rho0, 2.0), (pb.with_params(p_F=2.0), 2.0 * rho0, 1.0),
            (replace(pb, mode=NonlinearityMode.LINEAR_TEST), rho0, 1.0),
            (pb.refined(), {"preset": "cosine", "base": 1.0, "amplitude": 0.5}, 1.0)]
    worst = max(float(mass_defect(run_simulation(p, r, k), p).max()) for p, r, k in runs)
    record(3, "discrete mass identity", worst <= 1e-9,
           f"max defect {worst:.2e} over {len(runs)} runs (limit 1e-9)")


def test_04_uniqueness(pb, rho0):
    rep = verify.verify_uniqueness(pb, rho0, n_guesses=5, seed=0)
    val = rep.rows[0]["value"]
    record(4, "Picard uniqueness", rep.ok, f"max pairwise difference {val:.2e} (limit 1e-9)")


def test_05_energy(pb):
    rep = verify.verify_energy(pb, 1.0, n_runs=10, seed=0, tol=0.2)
    record(5, "energy constant stable", rep.ok, f"relative change {rep.rows[-1]['value']:.3g} (limit 0.2)")


def test_06_data_stability(cfg, pb):
    rep = verify.verify_data_stability(pb, cfg.rho_I, 1.0, tol=0.3)
    record(6, "data stability", rep.ok,
           f"bound on 16 runs ok={rep.rows[0]['ok']}, c change {rep.rows[-1]['value']:.3g} (limit 0.3)")


def test_07_frechet(pb, rho0):
    rep = verify.verify_frechet(pb, rho0, 1.0, n_dirs=3, seed=0, limit=0.6)
    worst = max(r["value"] for r in rep.rows)
    record(7, "Taylor remainder ratios", rep.ok, f"max ratio {worst:.4f} (limit 0.6)")


def test_08_gradient(pb, rho0):
    meas = make_measurements(run_simulation(pb, rho0, 1.0), pb)
    ols = OutputLeastSquares(pb, rho0, meas, gamma=1e-3, k_ref=0.5)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(3):
        k = rng.uniform(0.5, 2.0, pb.micro.n_y)
        g = ols.wR * ols.gradient(k)
        fd = np.empty_like(k)
        for j in range(len(k)):
            e = np.zeros_like(k)
            e[j] = 1e-5
            fd[j] = (ols.objective(k + e) - ols.objective(k - e)) / 2e-5
        worst = max(worst, float(np.max(np.abs(fd - g) / np.abs(g))))
    record(8, "gradient vs central differences", worst <= 1e-4, f"max relative error {worst:.2e} (limit 1e-4)")


def test_09_neumann_map(pb, rho0):
    nm = assemble_neumann_map(1.0, run_simulation(pb, rho0, 1.0), pb)
    s = nm.sigma_min
    ok = s > 0 and abs(s / SIGMA_MIN_PIN - 1) <= PIN_SLACK
    record(9, "N-map injective", ok, f"sigma_min {s:.6g} (pinned {SIGMA_MIN_PIN} +-10%)")


def test_10_inverse_stability(pb, rho0):
    rep = verify.verify_inverse_stability(pb, rho0, 1.0, a=0.05, n_samples=10, seed=0)
    record(10, "local inverse stability", rep.ok,
           f"c_hat {rep.rows[0]['value']:.4g}, sigma_hat {rep.data['sigma_hat']:.3g}, "
           f"a/4 change {rep.rows[2]['value']:.3g}")


def test_11_recovery(pb, rho0):
    truth = run_simulation(pb, rho0, 1.0)
    clean = OutputLeastSquares(pb, rho0, make_measurements(truth, pb), gamma=1e-10, k_ref=0.5)
    a = identify(clean, 0.5, k_true=1.0)
    noisy = OutputLeastSquares(pb, rho0, make_measurements(truth, pb, 1e-3, seed=0),
                               gamma=1e-10, k_ref=0.5)
    b = identify(noisy, 0.5, k_true=1.0)
    bound = (1 + PIN_SLACK) * NOISE_CONSTANT_PIN * 1e-3
    ok = (a.k_error <= 1e-2 and a.steps <= 50
          and b.reason == "discrepancy" and b.k_error <= bound)
    record(11, "synthetic recovery", ok,
           f"clean error {a.k_error:.2e} in {a.steps} steps; noisy error {b.k_error:.4f} "
           f"(limit {bound:.4f}) by {b.reason}")


def test_12_convergence_order():
    e = verify.micro_heat_errors()
    order = float(np.min(np.log2(e[:-1] / e[1:])))
    err = verify.macro_poisson_error(257)
    record(12, "convergence order", order >= 1.9 and err <= 1e-4,
           f"micro order {order:.3f} (limit 1.9), macro error {err:.2e} (limit 1e-4)")


def test_13_determinism(tmp_path, capsys):
    outs = []
    for i, workers in enumerate((1, 4, 1)):
        d = tmp_path / f"run{i}"
        assert cli_main(["solve", "-c", str(REF), "-o", str(d), "--workers", str(workers)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
    capsys.readouterr()
    ok = outs[0] == outs[1] == outs[2]
    record(13, "byte-identical manifests", ok, "workers 1, 4, 1")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
