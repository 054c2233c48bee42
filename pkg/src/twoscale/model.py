"""Physical parameters, the nonlinearity f and the structural assumption checks."""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import AdmissibilityError, ConfigError
from .grids import MacroGrid, MicroGrid, poincare_constant


class NonlinearityMode(enum.Enum):
    POWER_MEAN = "power_mean"
    LINEAR_TEST = "linear_test"  # verification only, violates alpha, beta > 0


@dataclass(frozen=True)
class ModelParams:
    A: float = 1.0
    D: float = 1.0
    rho_F: float = 1.0
    p_F: float = 1.0
    R: float = 1.0
    T: float = 0.2
    dt: float = 0.01
    alpha: float = 0.5
    beta: float = 0.5
    c_f: float = 8.0
    eps_reg: float = 1e-8
    k_min: float = 0.1
    k_max: float = 10.0

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def diffusivity(self) -> float:
        """Coefficient A * rho_F in front of the macro Laplacian."""
        return self.A * self.rho_F

    def structural_errors(self) -> list[tuple[str, str]]:
        """(key, reason) for every violated positivity/bound constraint."""
        errs = []
        for key in ("A", "D", "rho_F", "R", "T", "dt"):
            if not getattr(self, key) > 0:
                errs.append((key, "must be > 0"))
        for key in ("p_F", "c_f", "eps_reg"):
            if not getattr(self, key) >= 0:
                errs.append((key, "must be >= 0"))
        if not (0 < self.k_min <= self.k_max):
            errs.append(("k_min", "need 0 < k_min <= k_max"))
        if self.dt > self.T:
            errs.append(("dt", "must not exceed T"))
        return errs

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SolverOptions:
    tol_lin: float = 1e-12
    max_lin: int | None = None  # default 10 * n_y**2
    tol_picard: float = 1e-10
    max_picard: int = 200
    tol_couple: float = 1e-9
    max_couple: int = 100
    relax: float = 1.0
    workers: int = 1

    def to_dict(self) -> dict:
        return asdict(self)


def check_admissible(k, params: ModelParams, n_robin: int | None = None) -> np.ndarray:
    """Validate membership of nodal Robin values in [k_min, k_max]."""
    k = np.asarray(k, dtype=float)
    if n_robin is not None:
        if k.ndim == 0:
            k = np.full(n_robin, float(k))
        if k.shape != (n_robin,):
            raise AdmissibilityError(f"expected {n_robin} Robin values, got shape {k.shape}")
    if not np.all(np.isfinite(k)):
        raise AdmissibilityError("Robin coefficient has non-finite values")
    lo, hi = k.min(), k.max()
    if lo < params.k_min or hi > params.k_max:
        raise AdmissibilityError(
            f"Robin coefficient range [{lo:g}, {hi:g}] outside [{params.k_min:g}, {params.k_max:g}]")
    return k


def micro_average(rho_x: np.ndarray, grid: MicroGrid) -> np.ndarray | float:
    """Trapezoid cell average over Y; works row-wise on two-scale arrays."""
    avg = np.asarray(rho_x) @ grid.mass
    return float(avg) if np.ndim(avg) == 0 else avg


def _clamp(s, eps):
    return np.maximum(s, eps)


def eval_f(pi, rho, params: ModelParams, mode: NonlinearityMode, micro: MicroGrid,
           amplitude: float = 1.0) -> np.ndarray:
    """Macro source f(pi, rho)(x); ``amplitude`` multiplies the whole term."""
    m = micro_average(rho, micro)
    return eval_f_avg(pi, m, params, mode, amplitude)


def eval_f_avg(pi, m, params: ModelParams, mode: NonlinearityMode,
               amplitude: float = 1.0) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    m = np.asarray(m, dtype=float)
    if mode is NonlinearityMode.LINEAR_TEST:
        return amplitude * params.c_f * m * np.ones_like(pi)
    eps = params.eps_reg
    return (amplitude * params.c_f) * _clamp(pi, eps) ** params.alpha * _clamp(m, eps) ** params.beta


def f_partials(pi, m, params: ModelParams, mode: NonlinearityMode):
    """(df/dpi, df/dm) at (pi, m); zero inside the clamped region."""
    pi = np.asarray(pi, dtype=float)
    m = np.asarray(m, dtype=float)
    if mode is NonlinearityMode.LINEAR_TEST:
        return np.zeros_like(pi), np.full_like(pi, params.c_f)
    eps = params.eps_reg
    a, b = params.alpha, params.beta
    P, Q = _clamp(pi, eps), _clamp(m, eps)
    with np.errstate(divide="ignore", invalid="ignore"):
        dpi = np.where(pi > eps, params.c_f * a * P ** (a - 1) * Q ** b, 0.0)
        dm = np.where(m > eps, params.c_f * b * P ** a * Q ** (b - 1), 0.0)
    return dpi, dm


@dataclass(frozen=True)
class SampleBox:
    """Operating range for the Lipschitz estimate: u in [u_lo, u_hi], v in [v_lo, v_hi]."""

    u_lo: float
    u_hi: float
    v_lo: float
    v_hi: float

    def __post_init__(self):
        if not (self.u_lo <= self.u_hi and self.v_lo <= self.v_hi):
            raise ConfigError("sample_box", f"empty box {self}")


def estimate_lipschitz_constant(params: ModelParams, mode: NonlinearityMode, box: SampleBox,
                                n_samples: int = 65) -> float:
    """Largest difference quotient |f(u1,v)-f(u2,v)| / |u1-u2| over a sampled grid."""
    if box is None:
        raise ConfigError("sample_box", "a sample box is required")
    if mode is NonlinearityMode.LINEAR_TEST:
        return 0.0
    us = np.linspace(box.u_lo, box.u_hi, n_samples)
    vs = np.linspace(box.v_lo, box.v_hi, n_samples)
    if box.u_hi == box.u_lo:
        # degenerate interval: fall back to the derivative
        dpi, _ = f_partials(np.full_like(vs, box.u_lo), vs, params, mode)
        return float(np.max(np.abs(dpi)))
    best = 0.0
    for v in vs:
        fu = eval_f_avg(us, v, params, mode)
        # neighbouring pairs dominate for concave/convex f in u
        q = np.abs(np.diff(fu)) / np.diff(us)
        best = max(best, float(q.max()))
    return best


@dataclass
class AssumptionReport:
    ok: bool
    checks: list[dict] = field(default_factory=list)

    def failures(self) -> list[dict]:
        return [c for c in self.checks if not c["ok"]]

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": self.checks}


def validate_assumptions(params: ModelParams, macro: MacroGrid, mode: NonlinearityMode,
                         box: SampleBox | None = None) -> AssumptionReport:
    """Check positivity, the exponent sum and the uniqueness condition C* c_P < 1.

    The uniqueness check uses C* / (A rho_F) so that the condition refers to
    the normalised equation -Laplace(pi) = f / (A rho_F).  Without a sample
    box it is reported as skipped.
    """
    checks = []
    for key, reason in params.structural_errors():
        checks.append({"name": "positivity", "key": key, "ok": False, "detail": reason})
    if not any(c["name"] == "positivity" for c in checks):
        checks.append({"name": "positivity", "ok": True, "detail": "all parameters in range"})

    if mode is NonlinearityMode.POWER_MEAN:
        s = params.alpha + params.beta
        ok = params.alpha > 0 and params.beta > 0 and abs(s - 1.0) <= 1e-12
        checks.append({"name": "homogeneity", "key": "alpha+beta", "ok": bool(ok),
                       "defect": float(abs(s - 1.0)),
                       "detail": "alpha+beta=1" if ok else "alpha+beta≠1 or non-positive exponent"})
    else:
        checks.append({"name": "homogeneity", "ok": True, "detail": "skipped (linear test mode)"})

    c_p = poincare_constant(macro)
    if box is None and mode is NonlinearityMode.POWER_MEAN:
        checks.append({"name": "uniqueness", "ok": True, "detail": "skipped (no sample box)",
                       "c_P": c_p})
    else:
        c_star = estimate_lipschitz_constant(params, mode, box) if box is not None else 0.0
        prod = c_star * c_p / params.diffusivity
        checks.append({"name": "uniqueness", "ok": bool(prod < 1.0), "margin": 1.0 - prod,
                       "C_star": c_star, "c_P": c_p, "product": prod,
                       "detail": "C*c_P<1" if prod < 1.0 else "C*c_P>=1"})
    return AssumptionReport(ok=all(c["ok"] for c in checks), checks=checks)
