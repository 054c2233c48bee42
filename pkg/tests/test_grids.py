import numpy as np
import pytest
from hypothesis import given, strategies as st

from twoscale.errors import ConfigError, ShapeError
from twoscale.grids import (EDGES, NEUMANN, ROBIN, Boundary, MacroGrid, NormKind,
                            build_micro_grid, discrete_norm, extract_trace, poincare_constant)


def test_micro_grid_3_left_counts():
    g = build_micro_grid(3, "left")
    assert g.size == 9
    assert np.sum(g.tags == ROBIN) == 3
    assert np.sum(g.tags == NEUMANN) == 5
    assert np.sum(g.tags == 0) == 1
    y1, _ = g.coords
    assert np.all(y1[g.tags == ROBIN] == 0.0)
    assert g.boundary_weight[g.tags == ROBIN].sum() == 1.0


@pytest.mark.parametrize("side", EDGES)
def test_boundary_measures(side):
    g = build_micro_grid(17, side)
    assert abs(g.robin_weights.sum() - 1.0) < 1e-12
    assert abs(g.boundary_weight[g.tags == ROBIN].sum() - 1.0) < 1e-12
    assert abs(g.neumann_trace_weights.sum() - 3.0) < 1e-12
    assert abs(g.mass.sum() - 1.0) < 1e-12
    # Robin corners belong to Gamma_R only
    assert set(np.flatnonzero(g.tags == ROBIN)) == set(g.robin_nodes)


@pytest.mark.parametrize("n, side", [(2, "left"), (3, "middle"), (4.5, "top")])
def test_micro_grid_rejects_bad_input(n, side):
    with pytest.raises(ConfigError):
        build_micro_grid(n, side)


def test_macro_norms():
    grid = MacroGrid(9)
    assert discrete_norm(np.ones(9), NormKind.L2_MACRO, grid) == pytest.approx(1.0, abs=1e-15)
    fine = MacroGrid(1025)
    assert discrete_norm(fine.x, NormKind.L2_MACRO, fine) == pytest.approx(1 / np.sqrt(3), abs=1e-4)


def test_h1y_of_constant_vanishes():
    macro, micro = MacroGrid(5), build_micro_grid(9)
    u = np.ones((5, micro.size))
    assert discrete_norm(u, NormKind.H1Y_SEMINORM, macro, micro) == pytest.approx(0.0, abs=1e-12)


def test_h1y_of_linear_field():
    macro, micro = MacroGrid(5), build_micro_grid(9)
    y1, _ = micro.coords
    # |grad y1|^2 integrates to 1 over the unit cell
    assert discrete_norm(y1, NormKind.H1Y_SEMINORM, macro, micro) == pytest.approx(1.0, rel=1e-12)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        discrete_norm(np.ones(4), NormKind.L2_MACRO, MacroGrid(5))
    micro = build_micro_grid(5)
    with pytest.raises(ShapeError):
        discrete_norm(np.ones((3, 7)), NormKind.L2_TWOSCALE, MacroGrid(3), micro)


def test_traces_on_linear_field():
    micro = build_micro_grid(5, "left")
    y1, _ = micro.coords
    rho = np.tile(y1, (3, 1))
    assert np.all(extract_trace(rho, micro, Boundary.GAMMA_R) == 0.0)
    tn = extract_trace(rho, micro, Boundary.GAMMA_N)[0]
    right, bottom, top = tn[:5], tn[5:10], tn[10:]
    assert np.all(right == 1.0)
    ramp = np.linspace(0, 1, 5)
    assert np.allclose(bottom, ramp) and np.allclose(top, ramp)
    const = np.full((3, micro.size), 2.5)
    assert np.all(extract_trace(const, micro, Boundary.GAMMA_N) == 2.5)


def test_poincare_constant():
    assert poincare_constant(MacroGrid(257)) == pytest.approx(1 / np.pi**2, abs=1e-3)
    assert poincare_constant(MacroGrid(257, 2.0)) == pytest.approx(4 / np.pi**2, abs=4e-3)
    assert abs(poincare_constant(MacroGrid(129)) - poincare_constant(MacroGrid(257))) < 1e-3


def test_poincare_matches_dense_eigensolver():
    g = MacroGrid(20, 1.5)
    n = g.n_x - 2
    L = (2 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)) / g.h**2
    assert poincare_constant(g) == pytest.approx(1 / np.linalg.eigvalsh(L)[0], rel=1e-12)


def test_poincare_inequality_random_fields(rng):
    g = MacroGrid(33)
    c_p = poincare_constant(g)
    for _ in range(200):
        u = rng.standard_normal(g.n_x)
        u[0] = u[-1] = 0.0
        l2 = discrete_norm(u, NormKind.L2_MACRO, g) ** 2
        h1 = discrete_norm(u, NormKind.H1_MACRO_SEMINORM, g) ** 2
        assert l2 <= c_p * h1 * (1 + 1e-12)


def _trace_ratio_bound(n_y, rng, n=200):
    macro, micro = MacroGrid(5), build_micro_grid(n_y)
    y1, y2 = micro.coords
    worst = 0.0
    for _ in range(n):
        # smooth random fields so the fitted constant reflects the continuous inequality
        c = rng.standard_normal((5, 3, 3))
        u = sum(c[:, a, b][:, None] * np.cos(a * np.pi * y1) * np.cos(b * np.pi * y2)
                for a in range(3) for b in range(3))
        tr = np.sqrt(discrete_norm(extract_trace(u, micro, Boundary.GAMMA_R), NormKind.L2_TRACE_GAMMA_R, macro, micro) ** 2
                     + discrete_norm(extract_trace(u, micro, Boundary.GAMMA_N), NormKind.L2_TRACE_GAMMA_N, macro, micro) ** 2)
        rhs = (discrete_norm(u, NormKind.L2_TWOSCALE, macro, micro)
               + discrete_norm(u, NormKind.H1Y_SEMINORM, macro, micro))
        worst = max(worst, tr / rhs)
    return worst


def test_trace_inequality_constant_is_stable():
    c9 = _trace_ratio_bound(9, np.random.default_rng(7))
    c17 = _trace_ratio_bound(17, np.random.default_rng(7))
    assert np.isfinite(c9) and c9 > 0
    assert abs(c17 / c9 - 1) <= 0.2


@given(lam=st.one_of(st.just(0.0), st.floats(1e-6, 1e3), st.floats(-1e3, -1e-6)),
       seed=st.integers(0, 2**16))
def test_norms_absolutely_homogeneous(lam, seed):
    r = np.random.default_rng(seed)
    macro, micro = MacroGrid(6), build_micro_grid(5)
    u = r.standard_normal((6, micro.size))
    for kind in (NormKind.L2_TWOSCALE, NormKind.H1Y_SEMINORM):
        a = discrete_norm(lam * u, kind, macro, micro)
        b = abs(lam) * discrete_norm(u, kind, macro, micro)
        assert a == pytest.approx(b, rel=1e-13, abs=1e-300)
    v = r.standard_normal(6)
    assert discrete_norm(lam * v, NormKind.L2_MACRO, macro) == pytest.approx(
        abs(lam) * discrete_norm(v, NormKind.L2_MACRO, macro), rel=1e-13, abs=1e-300)


def test_norm_zero_only_for_zero_field(rng):
    macro, micro = MacroGrid(4), build_micro_grid(3)
    assert discrete_norm(np.zeros((4, 9)), NormKind.L2_TWOSCALE, macro, micro) == 0.0
    u = np.zeros((4, 9))
    u[2, 4] = 1e-3
    assert discrete_norm(u, NormKind.L2_TWOSCALE, macro, micro) > 0.0
