from dataclasses import replace

import numpy as np
import pytest

from twoscale.coupled import (Problem, advance_step, initial_density, mass_defect, run_simulation,
                              scaling_check, total_mass)
from twoscale.errors import SimulationError
from twoscale.grids import MacroGrid, MicroGrid
from twoscale.micro import assemble_micro_operator
from twoscale.model import NonlinearityMode as NM, SolverOptions
from twoscale.verify import self_convergence

from conftest import COSINE


def test_reference_run_shapes(ref_problem, ref_traj):
    N = ref_problem.params.n_steps
    assert ref_traj.pi.shape == (N + 1, 8)
    assert ref_traj.rho.shape == (N + 1, 8, 81)
    assert ref_traj.trace_N.shape == (N + 1, 8, 27)
    assert np.all(np.isfinite(ref_traj.rho))
    assert ref_traj.pi[:, [0, -1]].max() == 0.0


def test_coupling_iterations_bounded(ref_traj):
    assert ref_traj.iters.max() <= 20


def test_mass_identity(ref_problem, ref_traj):
    assert mass_defect(ref_traj, ref_problem).max() <= 1e-9


def test_equilibrium_state_is_kept():
    pb = Problem(MacroGrid(8), MicroGrid(9)).with_params(c_f=0.0, p_F=2.0, R=1.0)
    traj = run_simulation(pb, 2.0, np.linspace(0.5, 3, 9))
    assert np.all(traj.iters <= 2)
    assert np.max(np.abs(traj.rho - 2.0)) <= 1e-10
    assert np.max(np.abs(traj.pi)) <= 1e-10


def test_pure_decay_loses_mass():
    pb = Problem(MacroGrid(8), MicroGrid(9)).with_params(c_f=0.0, p_F=0.0)
    traj = run_simulation(pb, 1.0, 1.0)
    m = [total_mass(r, pb) for r in traj.rho]
    assert np.all(np.diff(m) < 0)


def test_one_step_degree_one_scaling(ref_problem, rng):
    pb = ref_problem
    op = assemble_micro_operator(pb.micro, 1.0, pb.params)
    rho0 = initial_density(COSINE, pb.macro, pb.micro)
    pi0 = rng.uniform(0, 1, 8)
    pi0[[0, -1]] = 0
    pi1, rho1, _ = advance_step(pi0, rho0, op, pb)
    for lam in (0.5, 3.0):
        big = pb.with_params(p_F=lam * pb.params.p_F)
        pi2, rho2, _ = advance_step(lam * pi0, lam * rho0, op, big)
        assert np.linalg.norm(pi2 - lam * pi1) <= 1e-9 * np.linalg.norm(lam * pi1)
        assert np.linalg.norm(rho2 - lam * rho1) <= 1e-9 * np.linalg.norm(lam * rho1)


def test_scaling_identity_is_trivial(ref_problem):
    assert scaling_check(ref_problem, COSINE, 1.0, 1.0)["max_rel_dev"] <= 1e-13


def test_scaling_rejects_bad_inputs(ref_problem):
    with pytest.raises(ValueError):
        scaling_check(ref_problem, COSINE, 1.0, 0.0)
    with pytest.raises(ValueError):
        scaling_check(replace(ref_problem, mode=NM.LINEAR_TEST), COSINE, 1.0, 2.0)


def test_workers_do_not_change_results(ref_problem, ref_traj):
    par = replace(ref_problem, options=replace(ref_problem.options, workers=4))
    other = run_simulation(par, COSINE, 1.0)
    assert np.array_equal(other.rho, ref_traj.rho)
    assert np.array_equal(other.pi, ref_traj.pi)
    assert par.digest() == ref_problem.digest()


def test_partial_trajectory_on_failure():
    pb = Problem(MacroGrid(8), MicroGrid(9), options=SolverOptions(max_couple=1))
    with pytest.raises(SimulationError) as info:
        run_simulation(pb, COSINE, 1.0)
    part = info.value.trajectory
    assert part.rho.shape[0] == 1 and part.t[0] == 0.0


def test_initial_density_presets():
    macro, micro = MacroGrid(4), MicroGrid(3)
    assert np.all(initial_density({"preset": "constant", "value": 2.5}, macro, micro) == 2.5)
    cos = initial_density(COSINE, macro, micro)
    assert cos.shape == (4, 9) and cos.min() > 0
    with pytest.raises(ValueError):
        initial_density(np.ones((3, 9)), macro, micro)
    with pytest.raises(ValueError):
        initial_density({"preset": "bogus"}, macro, micro)


@pytest.mark.slow
def test_self_convergence_ratio(ref_problem):
    res = self_convergence(ref_problem, COSINE, 1.0)
    assert 3.0 <= res["ratios"][0] <= 5.0
