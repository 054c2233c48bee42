"""Numerical verification harnesses behind the ``verify-*`` commands.

Each harness returns a :class:`Report` whose rows carry the measured value,
the limit it is checked against and a pass flag.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .coupled import Problem, initial_density, mass_defect, run_simulation, scaling_check
from .grids import MacroGrid, MicroGrid, NormKind, discrete_norm, macro_h1_sq, time_weights, twoscale_h1_sq
from .inverse import OutputLeastSquares, make_measurements, stability_scan, weighted_sigma_min
from .macro import solve_elliptic, solve_poisson
from .micro import assemble_micro_operator, micro_step
from .model import ModelParams, NonlinearityMode
from .sensitivity import assemble_neumann_map, frechet_check


@dataclass
class Report:
    name: str
    rows: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def add(self, name: str, value, limit, ok: bool, **extra) -> None:
        self.rows.append({"name": name, "value": value, "limit": limit, "ok": bool(ok), **extra})

    @property
    def ok(self) -> bool:
        return all(r["ok"] for r in self.rows)

    def table(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.ok else 'FAIL'}"]
        for r in self.rows:
            v = r["value"]
            vs = f"{v:.6g}" if isinstance(v, float) else str(v)
            lines.append(f"  [{'ok' if r['ok'] else 'FAIL':>4}] {r['name']}: {vs} (limit {r['limit']})")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok, "rows": self.rows, "data": self.data}


def solution_norm_sq(traj, problem: Problem) -> float:
    """||pi||^2_{L2(0,T;H1)} + ||rho||^2_{L2(0,T;L2(Omega;H1(Y)))} (trapezoid in time)."""
    wt = time_weights(traj.n_steps, problem.params.dt)
    return float(wt @ (macro_h1_sq(traj.pi, problem.macro)
                       + twoscale_h1_sq(traj.rho, problem.macro, problem.micro)))


def difference_norm_sq(a, b, problem: Problem) -> float:
    wt = time_weights(a.n_steps, problem.params.dt)
    dpi, drho = b.pi - a.pi, b.rho - a.rho
    return float(wt @ (macro_h1_sq(dpi, problem.macro)
                       + twoscale_h1_sq(drho, problem.macro, problem.micro)))


# ---------------------------------------------------------------- scaling

def verify_scaling(problem: Problem, rho_I, k, lambdas=(0.5, 2.0, 10.0), tol: float = 1e-8) -> Report:
    rep = Report("scaling")
    for lam in lambdas:
        dev = scaling_check(problem, rho_I, k, lam)["max_rel_dev"]
        rep.add(f"lambda={lam:g} max_rel_dev", dev, tol, dev <= tol)
    return rep


# ---------------------------------------------------------------- uniqueness

def verify_uniqueness(problem: Problem, rho_I, n_guesses: int = 5, seed: int = 0,
                      scale: float = 10.0) -> Report:
    """Picard solves of the macro problem from random guesses agree pairwise."""
    rep = Report("uniqueness")
    o = problem.options
    rho0 = initial_density(rho_I, problem.macro, problem.micro)
    rng = np.random.default_rng(seed)
    sols = []
    for _ in range(n_guesses):
        guess = scale * rng.uniform(0.0, 1.0, problem.macro.n_x)
        sols.append(solve_elliptic(rho0, problem.params, problem.mode, guess, problem.macro,
                                   problem.micro, tol=o.tol_picard, maxiter=o.max_picard))
    worst = max(float(np.max(np.abs(a - b))) for i, a in enumerate(sols) for b in sols[i + 1:])
    rep.add("max pairwise difference", worst, 10 * o.tol_picard, worst <= 10 * o.tol_picard)
    return rep


# ---------------------------------------------------------------- mass balance

def verify_mass(problem: Problem, rho_I, k, tol: float = 1e-9) -> Report:
    rep = Report("mass identity")
    traj = run_simulation(problem, rho_I, k)
    d = float(mass_defect(traj, problem).max())
    rep.add("max relative defect", d, tol, d <= tol)
    return rep


# ---------------------------------------------------------------- energy estimate

def energy_family(problem: Problem, n_runs: int = 10, seed: int = 0) -> list[tuple]:
    """Seeded (g, v_I) data; g given on Omega x Gamma_R, v_I on Omega x Y, both positive.

    Shapes are smooth functions of the coordinates so the same family can be
    sampled on refined grids.
    """
    rng = np.random.default_rng(seed)
    macro, micro = problem.macro, problem.micro
    x = macro.x / macro.L_x
    s = np.linspace(0.0, 1.0, micro.n_y)
    y1, y2 = micro.coords
    fam = []
    for _ in range(n_runs):
        cg, cv = rng.uniform(0.1, 2.0, 2)
        mg, mv = rng.integers(1, 4, 2)
        g = cg * (1.0 + 0.5 * np.outer(np.sin(np.pi * x), np.cos(mg * np.pi * s)))
        v_I = cv * (1.0 + 0.5 * np.outer(1.0 + x * (1 - x), np.cos(mv * np.pi * y1) * np.cos(np.pi * y2)))
        fam.append((g, v_I))
    return fam


def energy_ratios(problem: Problem, k, n_runs: int = 10, seed: int = 0) -> np.ndarray:
    """LHS / RHS of the energy estimate over the seeded data family.

    The Robin condition -D grad v . n + k (R v - u) = g is realised with
    Robin data u + g / k in the forward solver.
    """
    kk = np.broadcast_to(np.asarray(k, dtype=float), (problem.micro.n_y,))
    wt = time_weights(problem.params.n_steps, problem.params.dt)
    macro, micro = problem.macro, problem.micro
    out = []
    for g, v_I in energy_family(problem, n_runs, seed):
        traj = run_simulation(problem, v_I, kk, offset=g / kk)
        lhs = solution_norm_sq(traj, problem)
        g_sq = ((g * g) @ micro.robin_weights) @ macro.weights
        v_sq = ((v_I * v_I) @ micro.mass) @ macro.weights
        out.append(lhs / (float(wt.sum()) * g_sq + v_sq))
    return np.array(out)


def verify_energy(problem: Problem, k, n_runs: int = 10, seed: int = 0, tol: float = 0.2) -> Report:
    rep = Report("energy estimate")
    coarse = energy_ratios(problem, k, n_runs, seed)
    fine_pb = problem.refined()
    fine = energy_ratios(fine_pb, refine_k(k, problem, fine_pb), n_runs, seed)
    c0, c1 = float(coarse.max()), float(fine.max())
    rep.data.update(coarse=coarse.tolist(), fine=fine.tolist())
    rep.add("fitted constant (coarse)", c0, "finite, > 0", np.isfinite(c0) and c0 > 0)
    rep.add("fitted constant (refined)", c1, "finite, > 0", np.isfinite(c1) and c1 > 0)
    rel = abs(c1 / c0 - 1.0)
    rep.add("relative change under refinement", rel, tol, rel <= tol)
    return rep


# ---------------------------------------------------------------- data stability

MAGNITUDES = (0.1, 0.05, 0.025, 0.0125)


def data_stability_ratios(problem: Problem, rho_I, k, magnitudes=MAGNITUDES) -> dict:
    """Solution difference^2 / (||dk||^2 + |dA| + |dD| + ||drho_I||^2) for one-at-a-time sweeps."""
    p, macro, micro = problem.params, problem.macro, problem.micro
    k = np.broadcast_to(np.asarray(k, dtype=float), (micro.n_y,)).copy()
    rho0 = initial_density(rho_I, macro, micro)
    base = run_simulation(problem, rho0, k)
    out = {}
    for name in ("k", "A", "D", "rho_I"):
        rows = []
        for s in magnitudes:
            if name == "k":
                dk = s * k
                traj = run_simulation(problem, rho0, k + dk)
                data = float(micro.robin_weights @ (dk * dk))
            elif name == "rho_I":
                drho = s * rho0
                traj = run_simulation(problem, rho0 + drho, k)
                data = float(((drho * drho) @ micro.mass) @ macro.weights)
            else:
                val = getattr(p, name)
                traj = run_simulation(problem.with_params(**{name: val * (1 + s)}), rho0, k)
                data = abs(val * s)
            rows.append(difference_norm_sq(base, traj, problem) / data)
        out[name] = rows
    return out


def verify_data_stability(problem: Problem, rho_I, k, tol: float = 0.3) -> Report:
    rep = Report("data stability")
    fine_pb = problem.refined()
    fine_rho = _refine_density(rho_I, problem, fine_pb)
    coarse = data_stability_ratios(problem, rho_I, k)
    fine = data_stability_ratios(fine_pb, fine_rho, refine_k(k, problem, fine_pb))
    c0 = max(max(v) for v in coarse.values())
    c1 = max(max(v) for v in fine.values())
    rep.data.update(coarse=coarse, fine=fine)
    n_runs = sum(len(v) for v in coarse.values())
    rep.add(f"bound holds on all {n_runs} runs (c={c0:.4g})", n_runs, "ratio <= c",
            all(r <= c0 for v in coarse.values() for r in v))
    rel = abs(c1 / c0 - 1.0)
    rep.add("relative change of c under refinement", rel, tol, rel <= tol)
    return rep


def refine_k(k, coarse: Problem, fine: Problem) -> np.ndarray:
    """Nodal k on Gamma_R carried to a finer micro grid by linear interpolation."""
    kk = np.broadcast_to(np.asarray(k, dtype=float), (coarse.micro.n_y,))
    return np.interp(np.linspace(0, 1, fine.micro.n_y), np.linspace(0, 1, coarse.micro.n_y), kk)


def _refine_density(rho_I, coarse: Problem, fine: Problem):
    """Presets are resolution independent; explicit arrays are not supported on refinement."""
    if isinstance(rho_I, np.ndarray):
        raise ValueError("refinement studies need a preset initial density")
    return rho_I


# ---------------------------------------------------------------- self convergence

def restrict_micro(rho: np.ndarray, fine: Problem, coarse: Problem) -> np.ndarray:
    """Injection of fine micro fields onto the coarse nodes (n_y_f = 2 n_y_c - 1)."""
    nf, nc = fine.micro.n_y, coarse.micro.n_y
    if nf != 2 * nc - 1:
        raise ValueError(f"micro grids {nf} and {nc} are not nested")
    r = rho.reshape(rho.shape[:-1] + (nf, nf))[..., ::2, ::2]
    return r.reshape(rho.shape[:-1] + (nc * nc,))


def self_convergence(problem: Problem, rho_I, k, levels: int = 3) -> dict:
    """Final-time density differences between successive refinements.

    Each refinement halves h and quarters dt, so the differences shrink by
    about 4 for a scheme of order h^2 + dt.
    """
    probs = [problem]
    for _ in range(levels - 1):
        probs.append(probs[-1].refined())
    finals = []
    for pb in probs:
        finals.append(run_simulation(pb, _refine_density(rho_I, problem, pb),
                                     refine_k(k, problem, pb)).rho[-1])
    diffs = []
    for i in range(levels - 1):
        d = finals[i] - restrict_micro(finals[i + 1], probs[i + 1], probs[i])
        diffs.append(discrete_norm(d, NormKind.L2_TWOSCALE, probs[i].macro, probs[i].micro))
    ratios = [diffs[i] / diffs[i + 1] for i in range(len(diffs) - 1)]
    return {"n_y": [pb.micro.n_y for pb in probs], "diffs": diffs, "ratios": ratios}


def micro_heat_errors(levels=(9, 17, 33), T: float = 0.05, D: float = 1.0) -> np.ndarray:
    """Errors against exp(-2 D pi^2 t) cos(pi y1) cos(pi y2) with insulated cell walls.

    Uses k = 0 and dt = 0.2 h^2, so the expected order in h is 2.
    """
    errs = []
    for n in levels:
        g = MicroGrid(n)
        steps = int(round(T / (0.2 * g.h**2)))
        p = ModelParams(D=D, dt=T / steps, T=T, p_F=0.0)
        op = assemble_micro_operator(g, 0.0, p, check=False)
        y1, y2 = g.coords
        shape = np.cos(np.pi * y1) * np.cos(np.pi * y2)
        rho = shape.copy()
        for _ in range(steps):
            rho = micro_step(rho, 0.0, op, p)
        exact = np.exp(-2 * D * np.pi**2 * T) * shape
        errs.append(discrete_norm(rho - exact, NormKind.L2_TWOSCALE, micro=g))
    return np.array(errs)


def macro_poisson_error(n_x: int = 257) -> float:
    """Max nodal error for -u'' = pi^2 sin(pi x), u(0) = u(1) = 0."""
    g = MacroGrid(n_x)
    u = solve_poisson(np.pi**2 * np.sin(np.pi * g.x), 1.0, g)
    return float(np.max(np.abs(u - np.sin(np.pi * g.x))))


# ---------------------------------------------------------------- differentiability

def verify_frechet(problem: Problem, rho_I, k, n_dirs: int = 3, seed: int = 0,
                   limit: float = 0.6) -> Report:
    rep = Report("frechet")
    rng = np.random.default_rng(seed)
    for i in range(n_dirs):
        d = rng.uniform(-1.0, 1.0, problem.micro.n_y)
        res = frechet_check(problem, rho_I, k, d)
        worst = max(res["ratios"])
        rep.add(f"direction {i} max r(eps/2)/r(eps)", worst, limit, worst <= limit, r=res["r"])
    return rep


# ---------------------------------------------------------------- N map

def verify_neumann_map(problem: Problem, rho_I, k, c0_min: float = 1e-3) -> Report:
    rep = Report("neumann map")
    base = run_simulation(problem, rho_I, k)
    nm = assemble_neumann_map(k, base, problem, c0_min=c0_min)
    rep.data["singular_values"] = nm.singular_values.tolist()
    rep.add("sigma_min", nm.sigma_min, "> 0", nm.sigma_min > 0)
    rep.add("min rho(k*) on Gamma_R", nm.c0, f">= {c0_min:g}", nm.c0 >= c0_min)
    return rep


# ---------------------------------------------------------------- inverse stability

def verify_inverse_stability(problem: Problem, rho_I, k_star, a: float = 0.05, n_samples: int = 10,
                             seed: int = 0) -> Report:
    rep = Report("local inverse stability")
    k_star = np.broadcast_to(np.asarray(k_star, dtype=float), (problem.micro.n_y,)).copy()
    base = run_simulation(problem, rho_I, k_star)
    ols = OutputLeastSquares(problem, rho_I, make_measurements(base, problem))
    sigma = weighted_sigma_min(ols.jacobian(k_star), problem)
    wide = stability_scan(problem, rho_I, k_star, a, n_samples, seed)
    narrow = stability_scan(problem, rho_I, k_star, a / 4, n_samples, seed)
    rep.data.update(sigma_hat=sigma, wide=wide.to_dict(), narrow=narrow.to_dict())
    rep.add("c_hat", wide.c_hat, "> 0", wide.c_hat > 0)
    rep.add("c_hat / sigma_hat", wide.c_hat / sigma, ">= 0.5", wide.c_hat >= 0.5 * sigma)
    rel = abs(narrow.c_hat / wide.c_hat - 1.0)
    rep.add("relative change of c_hat for a/4", rel, 0.5, rel < 0.5)
    return rep


def verify_assumptions(cfg) -> Report:
    rep = Report("assumptions")
    report = cfg.validate()
    for c in report.checks:
        rep.add(c["name"], c.get("product", c.get("defect", "ok" if c["ok"] else "violated")), c["detail"], c["ok"])
    if cfg.mode is NonlinearityMode.POWER_MEAN:
        pb = cfg.problem()
        rep.rows.extend(verify_uniqueness(pb, cfg.initial_density(pb), seed=cfg.seed).rows)
    return rep
