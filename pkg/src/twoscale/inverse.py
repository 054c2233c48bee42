"""Identification of the Robin coefficient from Gamma_N traces."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coupled import Problem, Trajectory, run_simulation
from .errors import StagnationError
from .grids import time_weights
from .model import check_admissible
from .sensitivity import trace_jacobian


@dataclass
class MeasurementSet:
    values: np.ndarray            # (N+1, n_x, 3 n_y) Gamma_N traces
    noise: float = 0.0            # relative noise level delta
    provenance: str = ""          # digest of the generating configuration
    noise_norm: float = 0.0       # expected noise size in the measurement norm
    k_true: np.ndarray | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        return {"shape": list(self.values.shape), "values": self.values.ravel().tolist(),
                "noise": self.noise, "noise_norm": self.noise_norm, "provenance": self.provenance,
                "k_true": None if self.k_true is None else self.k_true.tolist(), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "MeasurementSet":
        vals = np.array(d["values"], dtype=float).reshape(d["shape"])
        if not np.all(np.isfinite(vals)):
            raise ValueError("measurement values must be finite")
        k_true = None if d.get("k_true") is None else np.array(d["k_true"], dtype=float)
        return cls(vals, float(d.get("noise", 0.0)), d.get("provenance", ""),
                   float(d.get("noise_norm", 0.0)), k_true, d.get("seed"))


def measurement_weights(problem: Problem) -> np.ndarray:
    """Quadrature weights of L2(0,T; L2(Omega; L2(Gamma_N))) on the trace array."""
    p, macro, micro = problem.params, problem.macro, problem.micro
    wt = time_weights(p.n_steps, p.dt)
    return wt[:, None, None] * macro.weights[None, :, None] * micro.neumann_trace_weights[None, None, :]


def make_measurements(traj: Trajectory, problem: Problem, noise: float = 0.0,
                      seed: int | None = None) -> MeasurementSet:
    """Gamma_N traces of ``traj`` with optional i.i.d. Gaussian noise relative to the signal RMS."""
    vals = traj.trace_N.copy()
    rms = float(np.sqrt(np.mean(vals**2)))
    noise_norm = 0.0
    if noise > 0:
        rng = np.random.default_rng(seed)
        vals = vals + noise * rms * rng.standard_normal(vals.shape)
        noise_norm = noise * rms * float(np.sqrt(measurement_weights(problem).sum()))
    return MeasurementSet(vals, noise, traj.meta.get("config_digest", ""), noise_norm,
                          traj.k.copy(), seed)


class OutputLeastSquares:
    """J(k) = 1/2 ||trace(rho(k)) - meas||^2 + gamma/2 ||k - k_ref||^2_{L2(Gamma_R)}."""

    def __init__(self, problem: Problem, rho_I, meas: MeasurementSet, gamma: float = 0.0,
                 k_ref=None, cache_size: int = 8):
        self.problem = problem
        self.rho_I = rho_I
        self.meas = meas
        self.gamma = gamma
        n = problem.micro.n_y
        self.k_ref = np.zeros(n) if k_ref is None else np.broadcast_to(
            np.asarray(k_ref, dtype=float), (n,)).copy()
        self.W = measurement_weights(problem)
        if self.W.shape != meas.values.shape:
            raise ValueError(f"measurement shape {meas.values.shape} does not match {self.W.shape}")
        self.wR = problem.micro.robin_weights
        self._cache: dict[bytes, Trajectory] = {}
        self._cache_size = cache_size
        self.n_forward = 0

    def _k(self, k) -> np.ndarray:
        return check_admissible(k, self.problem.params, self.problem.micro.n_y)

    def forward(self, k) -> Trajectory:
        k = self._k(k)
        key = k.tobytes()
        if key not in self._cache:
            if len(self._cache) >= self._cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = run_simulation(self.problem, self.rho_I, k)
            self.n_forward += 1
        return self._cache[key]

    def residual(self, k) -> np.ndarray:
        return self.forward(k).trace_N - self.meas.values

    def residual_norm(self, k) -> float:
        r = self.residual(k)
        return float(np.sqrt(np.sum(self.W * r * r)))

    def objective(self, k) -> float:
        k = self._k(k)
        r = self.residual(k)
        dk = k - self.k_ref
        return 0.5 * float(np.sum(self.W * r * r)) + 0.5 * self.gamma * float(self.wR @ (dk * dk))

    def jacobian(self, k) -> np.ndarray:
        """Trace Jacobian flattened to (rows, n_y)."""
        k = self._k(k)
        J = trace_jacobian(self.forward(k), k, self.problem)
        return J.reshape(-1, J.shape[-1])

    def gradient(self, k, J: np.ndarray | None = None) -> np.ndarray:
        """L2(Gamma_R) gradient: its weighted inner product with d is the derivative along d."""
        k = self._k(k)
        J = self.jacobian(k) if J is None else J
        r = (self.W * self.residual(k)).ravel()
        return (J.T @ r) / self.wR + self.gamma * (k - self.k_ref)

    def l2R(self, g) -> float:
        return float(np.sqrt(self.wR @ (g * g)))


@dataclass
class IdentificationResult:
    k: np.ndarray
    objective: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    residual_norm: list = field(default_factory=list)
    steps: int = 0
    reason: str = ""
    k_error: float | None = None
    iterates: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"k": self.k.tolist(), "objective": self.objective, "grad_norm": self.grad_norm,
                "residual_norm": self.residual_norm, "steps": self.steps, "reason": self.reason,
                "k_error": self.k_error}


def identify(ols: OutputLeastSquares, k0, *, tol_g: float = 1e-9, max_iter: int = 50,
             tau: float = 1.2, q: float = 0.85, mu0: float = 0.0, c1: float = 1e-4,
             max_halvings: int = 30, k_true=None) -> IdentificationResult:
    """Projected, damped Gauss-Newton with Armijo backtracking.

    The step solves (J^T W J + (gamma + mu) W_R) s = -W_R g and the update
    is clipped into [k_min, k_max].  On clean data mu shrinks after full
    steps and grows after backtracking.  On noisy data mu is chosen so that
    the linearised residual equals ``q`` times the current one (regularising
    Levenberg-Marquardt), which together with the discrepancy stop
    ||r|| <= tau * delta keeps the weakly determined modes from blowing up.
    """
    p = ols.problem.params
    k = ols._k(k0).copy()
    wR = ols.wR
    delta = ols.meas.noise_norm if ols.meas.noise > 0 else 0.0
    res = IdentificationResult(k)
    mu = mu0
    obj = ols.objective(k)
    for it in range(max_iter + 1):
        J = ols.jacobian(k)
        g = ols.gradient(k, J)
        gn = ols.l2R(g)
        rn = ols.residual_norm(k)
        res.objective.append(obj)
        res.grad_norm.append(gn)
        res.residual_norm.append(rn)
        res.iterates.append(k.copy())
        res.steps = it
        if gn <= tol_g:
            res.reason = "gradient_tol"
            break
        if delta > 0 and rn <= tau * delta:
            res.reason = "discrepancy"
            break
        if it == max_iter:
            res.reason = "max_iter"
            break
        JW = J * ols.W.reshape(-1, 1)
        if delta > 0:
            mu = _lm_parameter(J, ols.W.ravel(), wR, ols.residual(k).ravel(), g, ols.gamma, q)
        H = J.T @ JW + (ols.gamma + mu) * np.diag(wR)
        s = _projected_newton_step(H, wR * g, k, p.k_min, p.k_max)
        found = False
        for direction in (s, -g):
            eta = 1.0
            for halving in range(max_halvings + 1):
                k_new = np.clip(k + eta * direction, p.k_min, p.k_max)
                obj_new = ols.objective(k_new)
                if obj_new <= obj + c1 * float(wR @ (g * (k_new - k))):
                    found = True
                    break
                eta *= 0.5
            if found:
                break
        if not found:
            raise StagnationError(
                f"line search failed after {max_halvings} halvings at iteration {it}",
                {"iteration": it, "objective": obj, "grad_norm": gn, "k": k.tolist()})
        scale = float(np.trace(H)) / len(k)
        if delta == 0:
            mu = mu / 3.0 if halving == 0 else max(3.0 * mu, 1e-6 * scale)
        k, obj = k_new, obj_new
    res.k = k
    if k_true is not None:
        kt = np.broadcast_to(np.asarray(k_true, dtype=float), k.shape)
        res.k_error = ols.l2R(k - kt) / ols.l2R(kt)
    return res


def _lm_parameter(J, W, wR, r, g, gamma, q, iters: int = 200) -> float:
    """mu with ||r + J s(mu)||_W = q ||r||_W, by bisection in log(mu)."""
    sw = np.sqrt(W)
    target = q * np.sqrt(np.sum(W * r * r))
    JtWJ = J.T @ (J * W[:, None])
    Wd = np.diag(wR)

    def lin_res(mu):
        s = np.linalg.solve(JtWJ + (gamma + mu) * Wd, -wR * g)
        return float(np.linalg.norm(sw * (r + J @ s)))

    scale = float(np.trace(JtWJ)) / len(wR)
    lo, hi = np.log(1e-16 * scale), np.log(1e6 * scale)
    if lin_res(np.exp(lo)) >= target:
        return 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if lin_res(np.exp(mid)) > target:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-6:
            break
    return float(np.exp(lo))


def _projected_newton_step(H, grad, k, lo, hi):
    """Newton step on the free variables; bound-active ones (gradient pushing outward) stay put."""
    tiny = 1e-14 * max(1.0, hi)
    active = ((k <= lo + tiny) & (grad > 0)) | ((k >= hi - tiny) & (grad < 0))
    s = np.zeros_like(k)
    free = ~active
    if free.any():
        s[free] = np.linalg.solve(H[np.ix_(free, free)], -grad[free])
    return s


@dataclass
class StabilityScanReport:
    meas_dist: list
    coef_dist: list
    ratios: list
    c_hat: float
    a: float
    degenerate: int = 0

    def to_dict(self) -> dict:
        return {"meas_dist": self.meas_dist, "coef_dist": self.coef_dist, "ratios": self.ratios,
                "c_hat": self.c_hat, "a": self.a, "degenerate": self.degenerate}


def sample_ball(k_star: np.ndarray, a: float, wR: np.ndarray, rng) -> np.ndarray:
    """Uniform sample of {k : ||k - k*||_{L2(Gamma_R)} <= a}."""
    n = len(k_star)
    z = rng.standard_normal(n)
    z /= np.sqrt(np.sum(z * z))
    r = a * rng.uniform() ** (1.0 / n)
    return k_star + r * z / np.sqrt(wR)


def trace_distance(t1: Trajectory, t2: Trajectory, problem: Problem) -> float:
    d = t2.trace_N - t1.trace_N
    return float(np.sqrt(np.sum(measurement_weights(problem) * d * d)))


def stability_scan(problem: Problem, rho_I, k_star, a: float, n_samples: int = 10,
                   seed: int = 0, pairs=None) -> StabilityScanReport:
    """Ratios ||trace(k2) - trace(k1)|| / ||k2 - k1|| over seeded pairs in V(k*, a)."""
    p = problem.params
    k_star = check_admissible(k_star, p, problem.micro.n_y)
    wR = problem.micro.robin_weights
    if pairs is None:
        if n_samples < 2:
            raise ValueError("need at least two samples")
        rng = np.random.default_rng(seed)
        pairs = [(sample_ball(k_star, a, wR, rng), sample_ball(k_star, a, wR, rng))
                 for _ in range(n_samples)]
    md, cd, ratios, degenerate = [], [], [], 0
    for k1, k2 in pairs:
        k1 = check_admissible(k1, p, len(k_star))
        k2 = check_admissible(k2, p, len(k_star))
        dk = float(np.sqrt(wR @ ((k2 - k1) ** 2)))
        if dk == 0.0:
            degenerate += 1
            continue
        dm = trace_distance(run_simulation(problem, rho_I, k1), run_simulation(problem, rho_I, k2),
                            problem)
        md.append(dm)
        cd.append(dk)
        ratios.append(dm / dk)
    c_hat = min(ratios) if ratios else float("nan")
    return StabilityScanReport(md, cd, ratios, c_hat, a, degenerate)


def weighted_sigma_min(J: np.ndarray, problem: Problem) -> float:
    """Smallest singular value of the trace Jacobian between the weighted L2 spaces."""
    W = measurement_weights(problem).ravel()
    wR = problem.micro.robin_weights
    Jw = np.sqrt(W)[:, None] * J / np.sqrt(wR)[None, :]
    return float(np.linalg.svd(Jw, compute_uv=False)[-1])
