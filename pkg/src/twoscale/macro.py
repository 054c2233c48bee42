"""Macro elliptic problem -A rho_F pi'' = f(pi, rho) with pi = 0 on the boundary."""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .errors import FixedPointError
from .grids import MacroGrid, MicroGrid, NormKind, discrete_norm
from .model import ModelParams, NonlinearityMode, eval_f_avg, micro_average


def _banded(grid: MacroGrid, coeff: float, shift=None) -> np.ndarray:
    n = grid.n_x - 2
    c = coeff / grid.h**2
    ab = np.zeros((3, n))
    ab[0, 1:] = -c
    ab[1, :] = 2 * c
    ab[2, :-1] = -c
    if shift is not None:
        ab[1, :] -= shift
    return ab


def solve_poisson(source, coeff: float, grid: MacroGrid) -> np.ndarray:
    """u with -coeff u'' = source at interior nodes and u = 0 at both ends."""
    source = np.asarray(source, dtype=float)
    u = np.zeros(grid.n_x)
    u[grid.interior] = solve_banded((1, 1), _banded(grid, coeff), source[grid.interior])
    return u


def solve_shifted(source, coeff: float, shift, grid: MacroGrid) -> np.ndarray:
    """u with -coeff u'' - shift * u = source, u = 0 at both ends (linearised macro step)."""
    source = np.asarray(source, dtype=float)
    shift = np.broadcast_to(np.asarray(shift, dtype=float), (grid.n_x,))
    u = np.zeros(grid.n_x)
    u[grid.interior] = solve_banded((1, 1), _banded(grid, coeff, shift[grid.interior]),
                                    source[grid.interior])
    return u


def solve_elliptic(rho, params: ModelParams, mode: NonlinearityMode, guess, macro: MacroGrid,
                   micro: MicroGrid, *, amplitude: float = 1.0, tol: float = 1e-10,
                   maxiter: int = 200, history: list | None = None) -> np.ndarray:
    """Picard iteration pi <- solve_poisson(f(pi, rho)).

    Stops once ||pi_new - pi|| <= tol * max(||pi||, 1) in the macro L2 norm.
    Update norms are appended to ``history`` when given.
    """
    m = micro_average(rho, micro)
    return picard_from_average(m, params, mode, guess, macro, amplitude=amplitude, tol=tol,
                               maxiter=maxiter, history=history)


def picard_from_average(m, params, mode, guess, macro, *, amplitude=1.0, tol=1e-10, maxiter=200,
                        history=None) -> np.ndarray:
    coeff = params.diffusivity
    pi = np.array(guess, dtype=float, copy=True) if np.ndim(guess) else np.full(macro.n_x, float(guess))
    pi[0] = pi[-1] = 0.0
    upd = np.inf
    for _ in range(maxiter):
        new = solve_poisson(eval_f_avg(pi, m, params, mode, amplitude), coeff, macro)
        upd = discrete_norm(new - pi, NormKind.L2_MACRO, macro)
        scale = max(discrete_norm(pi, NormKind.L2_MACRO, macro), 1.0)
        if history is not None:
            history.append(upd)
        pi = new
        if upd <= tol * scale:
            return pi
    raise FixedPointError(f"Picard iteration did not converge in {maxiter} iterations", upd)


def initial_pressure(rho_I, params: ModelParams, mode: NonlinearityMode, macro: MacroGrid,
                     micro: MicroGrid, **kw) -> np.ndarray:
    """Macro pressure slaved to the initial micro state (starts from pi = 0)."""
    return solve_elliptic(rho_I, params, mode, np.zeros(macro.n_x), macro, micro, **kw)
