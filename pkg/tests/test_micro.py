import numpy as np
import pytest
from hypothesis import given, strategies as st

from twoscale.errors import AdmissibilityError, LinearSolverError
from twoscale.grids import MicroGrid, NormKind, discrete_norm
from twoscale.micro import assemble_micro_operator, cg_rows, micro_boundary_flux, micro_step
from twoscale.model import ModelParams
from twoscale.verify import micro_heat_errors

# Step operator for n_y=3, dt=0.01, D=1, R=1, k=1, Robin edge y1=0, assembled by
# hand with ghost-node elimination: 1/h^2 = 4, boundary rows [2, -2], Robin
# term 2k/h = 4, so dt*D/h^2 = dt*R*2k/h = 0.04.
HAND_3x3 = np.array([
    [1.20, -0.08, 0.00, -0.08, 0.00, 0.00, 0.00, 0.00, 0.00],
    [-0.04, 1.20, -0.04, 0.00, -0.08, 0.00, 0.00, 0.00, 0.00],
    [0.00, -0.08, 1.20, 0.00, 0.00, -0.08, 0.00, 0.00, 0.00],
    [-0.04, 0.00, 0.00, 1.16, -0.08, 0.00, -0.04, 0.00, 0.00],
    [0.00, -0.04, 0.00, -0.04, 1.16, -0.04, 0.00, -0.04, 0.00],
    [0.00, 0.00, -0.04, 0.00, -0.08, 1.16, 0.00, 0.00, -0.04],
    [0.00, 0.00, 0.00, -0.08, 0.00, 0.00, 1.16, -0.08, 0.00],
    [0.00, 0.00, 0.00, 0.00, -0.08, 0.00, -0.04, 1.16, -0.04],
    [0.00, 0.00, 0.00, 0.00, 0.00, -0.08, 0.00, -0.08, 1.16],
])

P = ModelParams(dt=0.01, D=1.0, R=1.0, p_F=1.0)


def test_hand_assembled_operator():
    op = assemble_micro_operator(MicroGrid(3), 1.0, P)
    assert np.allclose(op.matrix.toarray(), HAND_3x3, atol=1e-15)


def test_system_symmetric_and_m_matrix():
    op = assemble_micro_operator(MicroGrid(9), np.linspace(0.5, 2, 9), P)
    S = op.system.toarray()
    assert np.array_equal(S, S.T)
    off = S - np.diag(np.diag(S))
    assert np.all(off <= 0)


def test_pure_neumann_conserves():
    g = MicroGrid(9)
    op = assemble_micro_operator(g, 0.0, P, check=False)
    rows = (op.matrix - np.eye(g.size)).sum(axis=1)
    assert np.allclose(rows, 0.0, atol=1e-12)


@pytest.mark.parametrize("k", [0.0, 0.1, 1.0, 10.0, 1e3])
def test_step_operator_eigenvalues_at_least_one(k):
    g = MicroGrid(7)
    op = assemble_micro_operator(g, k, P, check=False)
    ev = np.linalg.eigvals(op.matrix.toarray())
    assert np.max(np.abs(ev.imag)) < 1e-10
    assert ev.real.min() >= 1 - 1e-12


def test_inadmissible_k_rejected():
    with pytest.raises(AdmissibilityError):
        assemble_micro_operator(MicroGrid(5), 100.0, P)


def test_equilibrium_preserved():
    g = MicroGrid(9)
    op = assemble_micro_operator(g, np.linspace(0.3, 3, 9), P)
    pi = 0.7
    rho = np.full(g.size, (pi + P.p_F) / P.R)
    out = micro_step(rho, pi, op, P)
    assert np.max(np.abs(out - rho)) <= 1e-12


def _mass_defect(rho0, rho1, pi, op, p):
    g = op.grid
    lhs = (g.mass @ rho1 - g.mass @ rho0) / p.dt
    rhs = op.robin_mass @ (pi + p.p_F - p.R * rho1[g.robin_nodes])
    return lhs, rhs


def test_decay_and_mass_identity():
    g = MicroGrid(9)
    p = ModelParams(p_F=0.0, dt=0.01)
    op = assemble_micro_operator(g, 1.0, p)
    rho = np.ones(g.size)
    masses = [g.mass @ rho]
    for _ in range(10):
        new = micro_step(rho, 0.0, op, p)
        lhs, rhs = _mass_defect(rho, new, 0.0, op, p)
        assert abs(lhs - rhs) <= 1e-10 * abs(rhs)
        rho = new
        masses.append(g.mass @ rho)
    assert np.all(np.diff(masses) < 0)


def test_flux_formula():
    g = MicroGrid(5)
    p = ModelParams(p_F=0.0, R=1.0)
    rho = np.zeros(g.size)
    assert np.allclose(micro_boundary_flux(rho, 1.0, 2.0, p, g), 2.0)
    k = np.linspace(0.5, 1.5, 5)
    rho = np.random.default_rng(0).uniform(0, 1, g.size)
    a = micro_boundary_flux(rho, 0.3, k, p, g)
    assert np.allclose(micro_boundary_flux(rho, 0.3, 2 * k, p, g), 2 * a)
    eq = np.full(g.size, (0.3 + p.p_F) / p.R)
    assert np.allclose(micro_boundary_flux(eq, 0.3, k, p, g), 0.0)


@given(seed=st.integers(0, 2**16), dt=st.floats(1e-4, 10.0))
def test_energy_dissipation_without_source(seed, dt):
    g = MicroGrid(7)
    p = ModelParams(p_F=0.0, dt=dt)
    r = np.random.default_rng(seed)
    op = assemble_micro_operator(g, r.uniform(0.1, 10, 7), p)
    rho = r.standard_normal(g.size)
    new = micro_step(rho, 0.0, op, p)
    assert (discrete_norm(new, NormKind.L2_TWOSCALE, micro=g)
            <= discrete_norm(rho, NormKind.L2_TWOSCALE, micro=g) * (1 + 1e-12))


def test_positivity_random_inputs(rng):
    g = MicroGrid(9)
    for _ in range(100):
        p = ModelParams(p_F=rng.uniform(0, 2), dt=rng.uniform(1e-3, 1.0))
        op = assemble_micro_operator(g, rng.uniform(0.1, 10, 9), p)
        rho = rng.uniform(0, 1, (3, g.size)) * (rng.uniform(size=(3, g.size)) > 0.3)
        pi = rng.uniform(0, 1, 3)
        out = micro_step(rho, pi, op, p)
        assert out.min() >= -1e-13


def test_batched_rows_match_single_rows(rng):
    g = MicroGrid(9)
    op = assemble_micro_operator(g, rng.uniform(0.5, 2, 9), P)
    rho = rng.uniform(0, 2, (5, g.size))
    pi = rng.uniform(0, 1, 5)
    batch = micro_step(rho, pi, op, P)
    for i in range(5):
        assert np.array_equal(batch[i], micro_step(rho[i:i + 1], pi[i:i + 1], op, P)[0])


def test_cg_reports_non_convergence():
    g = MicroGrid(9)
    op = assemble_micro_operator(g, 1.0, P)
    b = np.random.default_rng(0).standard_normal((1, g.size))
    with pytest.raises(LinearSolverError) as info:
        cg_rows(op.system, b, np.zeros_like(b), 1e-14, 2)
    assert info.value.residual > 0


def test_neumann_heat_convergence_order():
    e = micro_heat_errors()
    orders = np.log2(e[:-1] / e[1:])
    assert orders.min() >= 1.9, orders
