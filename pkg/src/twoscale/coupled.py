"""Time loop coupling the macro elliptic solve and the micro implicit steps."""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CouplingError, SimulationError
from .grids import Boundary, MacroGrid, MicroGrid, NormKind, discrete_norm, extract_trace
from .macro import initial_pressure, solve_elliptic
from .micro import MicroOperator, assemble_micro_operator, micro_step
from .model import ModelParams, NonlinearityMode, SolverOptions


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything a forward solve needs apart from k and the initial density."""

    macro: MacroGrid
    micro: MicroGrid
    params: ModelParams = field(default_factory=ModelParams)
    mode: NonlinearityMode = NonlinearityMode.POWER_MEAN
    options: SolverOptions = field(default_factory=SolverOptions)

    def with_params(self, **changes) -> "Problem":
        return replace(self, params=replace(self.params, **changes))

    def refined(self) -> "Problem":
        """n_y -> 2 n_y - 1 and dt -> dt / 4."""
        return replace(self, micro=MicroGrid(2 * self.micro.n_y - 1, self.micro.robin_side),
                       params=replace(self.params, dt=self.params.dt / 4))

    def describe(self) -> dict:
        return {"n_x": self.macro.n_x, "L_x": self.macro.L_x, "n_y": self.micro.n_y,
                "robin_side": self.micro.robin_side, "mode": self.mode.value,
                "params": self.params.to_dict(),
                "options": {k: v for k, v in self.options.to_dict().items() if k != "workers"}}

    def digest(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @property
    def max_lin(self) -> int:
        o = self.options.max_lin
        return 10 * self.micro.size if o is None else o


@dataclass
class Trajectory:
    t: np.ndarray        # (N+1,)
    pi: np.ndarray       # (N+1, n_x)
    rho: np.ndarray      # (N+1, n_x, n_y**2)
    trace_N: np.ndarray  # (N+1, n_x, 3 n_y)
    iters: np.ndarray    # (N,) coupling iterations per step
    k: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return len(self.t) - 1


# ---------------------------------------------------------------- initial data

def initial_density(spec, macro: MacroGrid, micro: MicroGrid) -> np.ndarray:
    """Two-scale initial density from a preset description.

    ``spec`` is a number (constant), an array of shape (n_x, n_y**2), or a
    dict ``{"preset": "constant", "value": c}`` /
    ``{"preset": "cosine", "base": b, "amplitude": a}``.  The cosine preset
    is b + a cos(pi y1) cos(pi y2) (1 + x (L_x - x)).
    """
    shape = (macro.n_x, micro.size)
    if isinstance(spec, (int, float)):
        return np.full(shape, float(spec))
    if isinstance(spec, np.ndarray):
        if spec.shape != shape:
            raise ValueError(f"initial density must have shape {shape}, got {spec.shape}")
        return spec.astype(float)
    preset = spec.get("preset", "constant")
    if preset == "constant":
        return np.full(shape, float(spec.get("value", 1.0)))
    if preset == "cosine":
        y1, y2 = micro.coords
        x = macro.x
        base = float(spec.get("base", 1.0))
        amp = float(spec.get("amplitude", 0.5))
        xs = 1.0 + x * (macro.L_x - x)
        return base + amp * np.outer(xs, np.cos(np.pi * y1) * np.cos(np.pi * y2))
    raise ValueError(f"unknown initial density preset {preset!r}")


# ---------------------------------------------------------------- stepping

def _micro_map(rho_n, pi, op, problem: Problem, offset, x0):
    """Micro steps for all macro nodes; rows are split across workers."""
    o = problem.options
    if o.workers <= 1 or rho_n.shape[0] < 2:
        return micro_step(rho_n, pi, op, problem.params, offset=offset, tol=o.tol_lin,
                          maxiter=problem.max_lin, x0=x0)
    chunks = np.array_split(np.arange(rho_n.shape[0]), min(o.workers, rho_n.shape[0]))
    off = None if offset is None else np.broadcast_to(
        np.asarray(offset, dtype=float), (rho_n.shape[0], problem.micro.n_y))

    def run(idx):
        return micro_step(rho_n[idx], pi[idx], op, problem.params,
                          offset=None if off is None else off[idx],
                          tol=o.tol_lin, maxiter=problem.max_lin, x0=x0[idx])

    with ThreadPoolExecutor(max_workers=o.workers) as ex:
        parts = list(ex.map(run, chunks))
    return np.concatenate(parts, axis=0)


def advance_step(pi_n, rho_n, op: MicroOperator, problem: Problem, *, offset=None,
                 amplitude: float = 1.0, history: list | None = None):
    """One time step: alternate micro steps and macro solves until pi settles.

    Returns (pi, rho, iterations) where ``rho`` is the micro step driven by
    the returned ``pi``; the macro equation then holds to ``tol_couple``.
    """
    o = problem.options
    macro, micro = problem.macro, problem.micro
    pi = np.array(pi_n, dtype=float, copy=True)
    upd = np.inf
    rho = np.asarray(rho_n, dtype=float)
    for j in range(1, o.max_couple + 1):
        rho = _micro_map(rho_n, pi, op, problem, offset, rho)
        new = solve_elliptic(rho, problem.params, problem.mode, pi, macro, micro,
                             amplitude=amplitude, tol=o.tol_picard, maxiter=o.max_picard)
        upd = discrete_norm(new - pi, NormKind.L2_MACRO, macro)
        if history is not None:
            history.append(upd)
        if upd <= o.tol_couple * max(discrete_norm(pi, NormKind.L2_MACRO, macro), 1.0):
            return pi, rho, j
        pi = pi + o.relax * (new - pi)
    raise CouplingError(f"coupling did not converge in {o.max_couple} iterations", upd)


def run_simulation(problem: Problem, rho_I, k, *, offset=None, amplitude: float = 1.0,
                   op: MicroOperator | None = None) -> Trajectory:
    """Solve the coupled system on [0, T] with implicit Euler steps of size dt.

    ``offset`` replaces p_F in the Robin data (pi + offset); the remaining
    keywords are hooks for verification runs.
    """
    p = problem.params
    macro, micro = problem.macro, problem.micro
    rho0 = initial_density(rho_I, macro, micro)
    if op is None:
        op = assemble_micro_operator(micro, k, p)
    N = p.n_steps
    o = problem.options
    pi0 = initial_pressure(rho0, p, problem.mode, macro, micro, amplitude=amplitude,
                           tol=o.tol_picard, maxiter=o.max_picard)
    t = np.arange(N + 1) * p.dt
    pis = np.empty((N + 1, macro.n_x))
    rhos = np.empty((N + 1, macro.n_x, micro.size))
    iters = np.zeros(N, dtype=int)
    pis[0], rhos[0] = pi0, rho0
    meta = {"config_digest": problem.digest(), "n_x": macro.n_x, "n_y": micro.n_y,
            "n_steps": N}
    for n in range(N):
        try:
            pis[n + 1], rhos[n + 1], iters[n] = advance_step(
                pis[n], rhos[n], op, problem, offset=offset, amplitude=amplitude)
        except Exception as exc:  # flush the partial trajectory
            part = Trajectory(t[: n + 1], pis[: n + 1], rhos[: n + 1],
                              extract_trace(rhos[: n + 1], micro, Boundary.GAMMA_N),
                              iters[:n], op.k.copy(), dict(meta, error=str(exc)))
            raise SimulationError(exc, part) from exc
    trace = extract_trace(rhos, micro, Boundary.GAMMA_N)
    return Trajectory(t, pis, rhos, trace, iters, op.k.copy(), meta)


# ---------------------------------------------------------------- diagnostics

def total_mass(rho: np.ndarray, problem: Problem) -> float:
    """sum_x w_x int_Y rho."""
    return float(problem.macro.weights @ (rho @ problem.micro.mass))


def mass_defect(traj: Trajectory, problem: Problem, *, offset=None) -> np.ndarray:
    """Relative defect of the per-step two-scale mass balance.

    (M(rho^{n+1}) - M(rho^n)) / dt is compared with the total Robin flux at
    t_{n+1}; the defect is scaled by the gross flux magnitude.
    """
    p, micro, macro = problem.params, problem.micro, problem.macro
    off = p.p_F if offset is None else np.asarray(offset, dtype=float)
    bw = micro.robin_weights * traj.k
    out = np.empty(traj.n_steps)
    for n in range(traj.n_steps):
        lhs = (total_mass(traj.rho[n + 1], problem) - total_mass(traj.rho[n], problem)) / p.dt
        data = np.broadcast_to(traj.pi[n + 1][:, None] + off, (macro.n_x, micro.n_y))
        tr = traj.rho[n + 1][:, micro.robin_nodes]
        rhs = macro.weights @ ((data - p.R * tr) @ bw)
        gross = macro.weights @ ((np.abs(data) + p.R * np.abs(tr)) @ bw)
        out[n] = abs(lhs - rhs) / max(abs(lhs), abs(rhs), gross, np.finfo(float).tiny)
    return out


def scaling_check(problem: Problem, rho_I, k, lam: float) -> dict:
    """Run with (rho_I, p_F) and (lam rho_I, lam p_F); compare lam * first run to the second."""
    if problem.mode is not NonlinearityMode.POWER_MEAN:
        raise ValueError("scaling check needs the power-mean nonlinearity")
    rho0 = initial_density(rho_I, problem.macro, problem.micro)
    if lam <= 0 or rho0.min() <= 0:
        raise ValueError("scaling check needs lam > 0 and strictly positive data")
    a = run_simulation(problem, rho0, k)
    scaled = problem.with_params(p_F=lam * problem.params.p_F)
    b = run_simulation(scaled, lam * rho0, k)

    def rel(x, y):
        ny = np.linalg.norm(y)
        return float(np.linalg.norm(x - y) / ny) if ny > 0 else float(np.linalg.norm(x))

    devs = [max(rel(lam * a.pi[n], b.pi[n]), rel(lam * a.rho[n], b.rho[n]))
            for n in range(a.n_steps + 1)]
    return {"lambda": lam, "max_rel_dev": max(devs), "per_step": devs}
