"""Implicit Euler step for the cell problems on Y.

With lumped mass M, Neumann stiffness K and Robin boundary mass B_k the step
solves

    (M + dt D K + dt R B_k) rho^{n+1} = M rho^n + dt B_k (pi + p_F)

which is the M-scaled form of (I + dt D L + dt R B) rho^{n+1} = ... with
L = M^-1 K.  The left matrix is symmetric positive definite and an M-matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import LinearSolverError
from .grids import MicroGrid
from .model import ModelParams, check_admissible


@dataclass(frozen=True, eq=False)
class MicroOperator:
    grid: MicroGrid
    k: np.ndarray          # Robin values along the Robin edge
    dt: float
    D: float
    R: float
    system: sp.csr_matrix  # M + dt D K + dt R B_k

    @property
    def mass(self) -> np.ndarray:
        return self.grid.mass

    @cached_property
    def robin_mass(self) -> np.ndarray:
        """Boundary weight times k at each Robin node (diagonal of B_k there)."""
        return self.grid.robin_weights * self.k

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        """Step operator I + dt M^-1 (D K + R B_k) acting on nodal values."""
        minv = sp.diags(1.0 / self.grid.mass)
        n = self.grid.size
        return (sp.identity(n) + minv @ (self.system - sp.diags(self.grid.mass))).tocsr()

    @cached_property
    def factor(self):
        return splu(self.system.tocsc())


def assemble_micro_operator(grid: MicroGrid, k, params: ModelParams, *, dt: float | None = None,
                            check: bool = True) -> MicroOperator:
    """Build the implicit-Euler system for Robin values ``k``.

    ``check=False`` skips the admissibility test (used to switch the Robin
    term off in verification runs).
    """
    k = np.asarray(k, dtype=float)
    if k.ndim == 0:
        k = np.full(grid.n_y, float(k))
    if check:
        k = check_admissible(k, params, grid.n_y)
    dt = params.dt if dt is None else dt
    b = np.zeros(grid.size)
    b[grid.robin_nodes] = grid.robin_weights * k
    system = (sp.diags(grid.mass) + (dt * params.D) * grid.stiffness
              + sp.diags((dt * params.R) * b)).tocsr()
    return MicroOperator(grid, k.copy(), dt, params.D, params.R, system)


def cg_rows(A: sp.csr_matrix, B: np.ndarray, X0: np.ndarray, tol: float,
            maxiter: int) -> tuple[np.ndarray, int]:
    """Jacobi-preconditioned conjugate gradients for A x_i = b_i, one system per row of B.

    Convergence is judged on the unpreconditioned residual ||b - A x|| <=
    tol ||b||.  Each row is frozen once converged, so the result for a row
    does not depend on which other rows share the batch.
    """
    X = np.array(X0, dtype=float, copy=True)
    B = np.asarray(B, dtype=float)
    dinv = 1.0 / A.diagonal()
    bnorm = np.sqrt(np.sum(B * B, axis=1))
    R = B - (A @ X.T).T
    rnorm = np.sqrt(np.sum(R * R, axis=1))
    zero = bnorm == 0.0
    X[zero] = 0.0
    active = ~zero & (rnorm > tol * bnorm)
    Z = R * dinv
    rz = np.sum(R * Z, axis=1)
    P = Z.copy()
    it = 0
    while active.any():
        if it >= maxiter:
            worst = float(np.max(rnorm[active] / bnorm[active]))
            raise LinearSolverError(f"CG did not converge in {maxiter} iterations", worst)
        idx = np.flatnonzero(active)
        p = P[idx]
        Ap = (A @ p.T).T
        alpha = rz[idx] / np.sum(p * Ap, axis=1)
        X[idx] += alpha[:, None] * p
        r = R[idx] - alpha[:, None] * Ap
        z = r * dinv
        rz_new = np.sum(r * z, axis=1)
        beta = rz_new / rz[idx]
        R[idx] = r
        P[idx] = z + beta[:, None] * p
        rz[idx] = rz_new
        rnorm[idx] = np.sqrt(np.sum(r * r, axis=1))
        active[idx] = rnorm[idx] > tol * bnorm[idx]
        it += 1
    return X, it


def robin_rhs(op: MicroOperator, rho: np.ndarray, robin_data: np.ndarray) -> np.ndarray:
    """M rho + dt B_k * robin_data, rows = macro nodes."""
    rhs = rho * op.grid.mass
    rhs[:, op.grid.robin_nodes] += op.dt * op.robin_mass * robin_data
    return rhs


def micro_step(rho_x, pi_x, op: MicroOperator, params: ModelParams, *, offset=None,
               tol: float = 1e-12, maxiter: int | None = None, x0=None) -> np.ndarray:
    """One implicit Euler step for one or many cell problems.

    ``rho_x`` is a micro field or a two-scale array; ``pi_x`` the macro
    pressure at the matching node(s).  The Robin data are pi + ``offset``
    with ``offset`` defaulting to p_F; an array offset of shape (n_y,) or
    (n_x, n_y) gives node-wise data along the Robin edge.  CG starts from
    ``x0`` (default ``rho_x``).
    """
    rho = np.asarray(rho_x, dtype=float)
    single = rho.ndim == 1
    rho2 = np.atleast_2d(rho)
    pi = np.atleast_1d(np.asarray(pi_x, dtype=float))
    offset = params.p_F if offset is None else offset
    data = pi[:, None] + np.asarray(offset, dtype=float)
    data = np.broadcast_to(data, (rho2.shape[0], op.grid.n_y))
    rhs = robin_rhs(op, rho2, data)
    maxiter = 10 * op.grid.size if maxiter is None else maxiter
    start = rho2 if x0 is None else np.atleast_2d(np.asarray(x0, dtype=float))
    out, _ = cg_rows(op.system, rhs, start, tol, maxiter)
    return out[0] if single else out


def micro_boundary_flux(rho_x, pi_x, k, params: ModelParams, grid: MicroGrid) -> np.ndarray:
    """Robin flux k_j (pi + p_F - R rho_j) at the Gamma_R nodes."""
    rho = np.asarray(rho_x, dtype=float)
    trace = rho[..., grid.robin_nodes]
    pi = np.asarray(pi_x, dtype=float)
    if pi.ndim:
        pi = pi[:, None]
    return np.asarray(k, dtype=float) * (pi + params.p_F - params.R * trace)
