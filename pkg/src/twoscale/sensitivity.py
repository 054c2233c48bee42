"""Derivative of the discrete forward map with respect to the Robin coefficient.

The linearised step is solved exactly.  Per macro node the micro response
splits into v = v0 + u(x) w, where w = S^-1 (dt B_k 1), so the macro update
reduces to one tridiagonal solve with a diagonal shift.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupled import Problem, Trajectory, run_simulation
from .errors import AdmissibilityError
from .grids import Boundary, extract_trace, time_weights, twoscale_h1_sq
from .macro import solve_shifted
from .micro import MicroOperator, assemble_micro_operator
from .model import check_admissible, f_partials, micro_average


@dataclass
class SensitivityTrajectory:
    u: np.ndarray        # (n_dir, N+1, n_x)
    v: np.ndarray        # (n_dir, N+1, n_x, n_y**2)
    trace_N: np.ndarray  # (n_dir, N+1, n_x, 3 n_y)

    def single(self) -> "SensitivityTrajectory":
        return SensitivityTrajectory(self.u[0], self.v[0], self.trace_N[0])


def _solve_rows(op: MicroOperator, rhs: np.ndarray) -> np.ndarray:
    """S^-1 applied to every trailing micro vector of ``rhs``."""
    flat = rhs.reshape(-1, op.grid.size)
    return op.factor.solve(flat.T).T.reshape(rhs.shape)


def solve_sensitivity(base: Trajectory, k, d, problem: Problem, *, offset=None,
                      op: MicroOperator | None = None) -> SensitivityTrajectory:
    """Tangent (u, v) of the forward run ``base`` in direction(s) ``d``.

    ``d`` has shape (n_y,) or (n_dir, n_y); the result always carries a
    leading direction axis.  The Robin source is d (pi + p_F - R rho) taken
    from the base run at the new time level.
    """
    p, macro, micro = problem.params, problem.macro, problem.micro
    if op is None:
        op = assemble_micro_operator(micro, k, p)
    D = np.atleast_2d(np.asarray(d, dtype=float))
    nd, N = D.shape[0], base.n_steps
    off = p.p_F if offset is None else np.asarray(offset, dtype=float)
    rn = micro.robin_nodes
    bw = micro.robin_weights

    w_rhs = np.zeros(micro.size)
    w_rhs[rn] = p.dt * op.robin_mass
    w = op.factor.solve(w_rhs)
    mw = float(w @ micro.mass)

    u = np.zeros((nd, N + 1, macro.n_x))
    v = np.zeros((nd, N + 1, macro.n_x, micro.size))
    for n in range(N):
        pi1, rho1 = base.pi[n + 1], base.rho[n + 1]
        drive = (np.broadcast_to(pi1[:, None] + off, (macro.n_x, micro.n_y))
                 - p.R * rho1[:, rn])                                  # (n_x, n_y)
        rhs = v[:, n] * micro.mass
        rhs[:, :, rn] += p.dt * bw * D[:, None, :] * drive[None]
        v0 = _solve_rows(op, rhs)
        a, b = f_partials(pi1, micro_average(rho1, micro), p, problem.mode)
        m0 = v0 @ micro.mass                                           # (nd, n_x)
        for i in range(nd):
            u[i, n + 1] = solve_shifted(b * m0[i], p.diffusivity, a + b * mw, macro)
        v[:, n + 1] = v0 + u[:, n + 1, :, None] * w
    trace = extract_trace(v, micro, Boundary.GAMMA_N)
    return SensitivityTrajectory(u, v, trace)


def trace_jacobian(base: Trajectory, k, problem: Problem, **kw) -> np.ndarray:
    """Gamma_N trace Jacobian, shape (N+1, n_x, 3 n_y, n_y); columns = nodal directions."""
    sens = solve_sensitivity(base, k, np.eye(problem.micro.n_y), problem, **kw)
    return np.moveaxis(sens.trace_N, 0, -1)


@dataclass
class NeumannMapMatrix:
    matrix: np.ndarray            # rows (step, macro node, Gamma_R node), one column per direction
    singular_values: np.ndarray
    c0: float                     # min of the base density on Gamma_R over all t, x
    warnings: list

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1])


def neumann_map_columns(base: Trajectory, k_star, g, problem: Problem,
                        op: MicroOperator | None = None) -> np.ndarray:
    """Robin flux of omega(g) for each direction in ``g``: shape (n_dir, N, n_x, n_y).

    omega solves the cell heat equation with -D grad omega . n + k* R omega =
    -g rho(k*) on Gamma_R, zero data elsewhere and omega(0) = 0; the flux is
    read off this boundary relation.
    """
    p, macro, micro = problem.params, problem.macro, problem.micro
    if op is None:
        op = assemble_micro_operator(micro, k_star, p)
    G = np.atleast_2d(np.asarray(g, dtype=float))
    rn, bw = micro.robin_nodes, micro.robin_weights
    N = base.n_steps
    om = np.zeros((G.shape[0], macro.n_x, micro.size))
    flux = np.empty((G.shape[0], N, macro.n_x, micro.n_y))
    for n in range(N):
        rho_r = base.rho[n + 1][:, rn]                                 # (n_x, n_y)
        rhs = om * micro.mass
        rhs[:, :, rn] -= p.dt * bw * G[:, None, :] * rho_r[None]
        om = _solve_rows(op, rhs)
        flux[:, n] = -G[:, None, :] * rho_r[None] - op.k * p.R * om[:, :, rn]
    return flux


def assemble_neumann_map(k_star, base: Trajectory, problem: Problem, *,
                         c0_min: float = 1e-3) -> NeumannMapMatrix:
    micro = problem.micro
    c0 = float(base.rho[:, :, micro.robin_nodes].min())
    warnings = []
    if c0 < c0_min:
        warnings.append(f"positivity hypothesis violated: min rho(k*) on Gamma_R = {c0:.3e} < {c0_min:g}")
    cols = neumann_map_columns(base, k_star, np.eye(micro.n_y), problem)
    mat = cols.reshape(micro.n_y, -1).T
    sv = np.linalg.svd(mat, compute_uv=False)
    return NeumannMapMatrix(mat, sv, c0, warnings)


def remainder_norm(base: Trajectory, pert: Trajectory, v: np.ndarray, eps: float,
                   problem: Problem) -> float:
    """||rho(k + eps d) - rho(k) - eps v||_{L2(0,T; L2(Omega; H1(Y)))} / eps."""
    diff = pert.rho - base.rho - eps * v
    sq = twoscale_h1_sq(diff, problem.macro, problem.micro)
    wt = time_weights(base.n_steps, problem.params.dt)
    return float(np.sqrt(wt @ sq)) / eps


def frechet_check(problem: Problem, rho_I, k, d, eps_list=(1e-2, 5e-3, 2.5e-3)) -> dict:
    """Taylor remainders r(eps) and their successive ratios."""
    p = problem.params
    k = check_admissible(k, p, problem.micro.n_y)
    d = np.asarray(d, dtype=float)
    for eps in eps_list:
        kk = k + eps * d
        if kk.min() < p.k_min or kk.max() > p.k_max:
            raise AdmissibilityError(f"k + eps d leaves the admissible set for eps={eps:g}")
    base = run_simulation(problem, rho_I, k)
    v = solve_sensitivity(base, k, d, problem).single().v
    r = [remainder_norm(base, run_simulation(problem, rho_I, k + e * d), v, e, problem)
         for e in eps_list]
    ratios = [r[i + 1] / r[i] for i in range(len(r) - 1)]
    orders = [float(np.log(r[i] / r[i + 1]) / np.log(eps_list[i] / eps_list[i + 1]))
              for i in range(len(r) - 1)]
    return {"eps": list(eps_list), "r": r, "ratios": ratios, "orders": orders}
