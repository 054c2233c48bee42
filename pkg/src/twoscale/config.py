"""JSON experiment configuration with strict key checking."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .coupled import Problem, initial_density
from .errors import AdmissibilityError, ConfigError
from .grids import EDGES, MacroGrid, MicroGrid
from .macro import initial_pressure
from .model import (AssumptionReport, ModelParams, NonlinearityMode, SampleBox, SolverOptions,
                    check_admissible, micro_average, validate_assumptions)


@dataclass(frozen=True)
class InverseOptions:
    gamma: float = 1e-10
    tol_g: float = 1e-9
    max_iter: int = 50
    tau: float = 1.2
    q: float = 0.85


@dataclass
class SolverConfig:
    n_x: int = 8
    n_y: int = 9
    L_x: float = 1.0
    robin_side: str = "left"
    model: ModelParams = field(default_factory=ModelParams)
    mode: NonlinearityMode = NonlinearityMode.POWER_MEAN
    solver: SolverOptions = field(default_factory=SolverOptions)
    inverse: InverseOptions = field(default_factory=InverseOptions)
    rho_I: object = field(default_factory=lambda: {"preset": "cosine", "base": 1.0, "amplitude": 0.5})
    k: object = 1.0
    lipschitz_box: list | None = None
    output_dir: str = "out"
    seed: int = 0
    allow_invalid: bool = False
    base_dir: Path = field(default=Path("."), repr=False, compare=False)
    report: AssumptionReport | None = field(default=None, repr=False, compare=False)

    # ------------------------------------------------------------ derived
    def problem(self, workers: int | None = None) -> Problem:
        opts = self.solver if workers is None else replace(self.solver, workers=workers)
        return Problem(MacroGrid(self.n_x, self.L_x), MicroGrid(self.n_y, self.robin_side),
                       self.model, self.mode, opts)

    def initial_density(self, problem: Problem | None = None) -> np.ndarray:
        problem = problem or self.problem()
        spec = self.rho_I
        if isinstance(spec, dict) and "file" in spec:
            arr = _load_array(self.base_dir / spec["file"])
            return initial_density(arr.reshape(problem.macro.n_x, problem.micro.size),
                                   problem.macro, problem.micro)
        return initial_density(spec, problem.macro, problem.micro)

    def k_values(self) -> np.ndarray:
        spec = self.k
        if isinstance(spec, dict):
            spec = _load_array(self.base_dir / spec["file"]).ravel()
        return check_admissible(spec, self.model, self.n_y)

    def sample_box(self) -> SampleBox:
        """Explicit box, or the operating range of (pi, cell averages) at t = 0."""
        if self.lipschitz_box is not None:
            return SampleBox(*map(float, self.lipschitz_box))
        pb = self.problem()
        rho0 = self.initial_density(pb)
        pi0 = initial_pressure(rho0, self.model, self.mode, pb.macro, pb.micro,
                               tol=self.solver.tol_picard, maxiter=self.solver.max_picard)
        m = micro_average(rho0, pb.micro)
        inner = pi0[pb.macro.interior]
        return SampleBox(float(inner.min()), float(inner.max()), float(m.min()), float(m.max()))

    def validate(self) -> AssumptionReport:
        box = self.sample_box() if self.mode is NonlinearityMode.POWER_MEAN else None
        self.report = validate_assumptions(self.model, MacroGrid(self.n_x, self.L_x), self.mode, box)
        return self.report

    def to_dict(self) -> dict:
        """Canonical echo; round-trips through :func:`config_from_dict`."""
        return {"n_x": self.n_x, "n_y": self.n_y, "L_x": self.L_x, "robin_side": self.robin_side,
                "model": asdict(self.model), "mode": self.mode.value,
                "solver": {k: v for k, v in asdict(self.solver).items() if k != "workers"},
                "inverse": asdict(self.inverse), "rho_I": self.rho_I,
                "k": self.k.tolist() if isinstance(self.k, np.ndarray) else self.k,
                "lipschitz_box": self.lipschitz_box, "output_dir": self.output_dir,
                "seed": self.seed, "allow_invalid": self.allow_invalid}


def _load_array(path: Path) -> np.ndarray:
    if not path.exists():
        raise ConfigError("file", f"no such file: {path}")
    if path.suffix == ".json":
        return np.asarray(json.loads(path.read_text(encoding="utf-8")), dtype=float)
    return np.loadtxt(path, delimiter=",", ndmin=1)


def _section(cls, data, key):
    if not isinstance(data, dict):
        raise ConfigError(key, "must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{key}.{unknown[0]}", "unknown key")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(key, str(exc)) from exc


_TOP = {"n_x", "n_y", "L_x", "robin_side", "model", "mode", "solver", "inverse", "rho_I", "k",
        "lipschitz_box", "output_dir", "seed", "allow_invalid"}


def config_from_dict(data: dict, base_dir: Path | str = ".") -> SolverConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(data) - _TOP)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    kw = {k: v for k, v in data.items() if k not in ("model", "solver", "inverse", "mode")}
    cfg = SolverConfig(**kw, base_dir=Path(base_dir))
    cfg.model = _section(ModelParams, data.get("model", {}), "model")
    cfg.solver = _section(SolverOptions, data.get("solver", {}), "solver")
    if "workers" in data.get("solver", {}):
        raise ConfigError("solver.workers", "worker count is a command-line option")
    cfg.inverse = _section(InverseOptions, data.get("inverse", {}), "inverse")
    try:
        cfg.mode = NonlinearityMode(data.get("mode", "power_mean"))
    except ValueError as exc:
        raise ConfigError("mode", f"unknown mode {data.get('mode')!r}") from exc
    _check(cfg)
    return cfg


def _check(cfg: SolverConfig) -> None:
    for key in ("n_x", "n_y"):
        v = getattr(cfg, key)
        if not isinstance(v, int) or isinstance(v, bool) or v < 3:
            raise ConfigError(key, f"need an integer >= 3, got {v!r}")
    if cfg.robin_side not in EDGES:
        raise ConfigError("robin_side", f"must be one of {EDGES}")
    if not (isinstance(cfg.L_x, (int, float)) and cfg.L_x > 0):
        raise ConfigError("L_x", "must be positive")
    for key, reason in cfg.model.structural_errors():
        raise ConfigError(f"model.{key}", reason)
    m = cfg.model
    if cfg.mode is NonlinearityMode.POWER_MEAN:
        if not (m.alpha > 0 and m.beta > 0):
            raise ConfigError("model.alpha", "exponents must be positive")
        if abs(m.alpha + m.beta - 1.0) > 1e-12:
            raise ConfigError("alpha+beta", f"must equal 1, got {m.alpha + m.beta:g}")
    if not 0 < cfg.solver.relax <= 1:
        raise ConfigError("solver.relax", "must lie in (0, 1]")
    if cfg.lipschitz_box is not None:
        if len(cfg.lipschitz_box) != 4:
            raise ConfigError("lipschitz_box", "expected [u_lo, u_hi, v_lo, v_hi]")
        SampleBox(*cfg.lipschitz_box)
    try:
        cfg.k_values()
    except AdmissibilityError as exc:
        raise ConfigError("k", str(exc)) from exc
    rho = cfg.initial_density()
    if not np.all(np.isfinite(rho)):
        raise ConfigError("rho_I", "initial density must be finite")


def parse_config(path) -> SolverConfig:
    """Read, validate and default a JSON config; attaches the assumption report."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"no such file: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"malformed JSON in {path}: {exc}") from exc
    cfg = config_from_dict(data, path.parent)
    cfg.validate()
    return cfg
