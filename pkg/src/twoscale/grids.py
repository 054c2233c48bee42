"""Tensor-product grids for the macro interval and the micro unit cell.

Micro fields are stored flattened with node index ``i1 * n_y + i2`` where
``y1 = i1 * h`` and ``y2 = i2 * h``.  Two-scale fields are arrays of shape
``(n_x, n_y**2)``: one micro field per macro node.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigvalsh_tridiagonal

from .errors import ConfigError, ShapeError

EDGES = ("left", "right", "bottom", "top")

ROBIN = 1
NEUMANN = 2


class NormKind(enum.Enum):
    L2_MACRO = "l2_macro"
    H1_MACRO_SEMINORM = "h1_macro_seminorm"
    L2_TWOSCALE = "l2_twoscale"
    H1Y_SEMINORM = "h1y_seminorm"
    L2_TRACE_GAMMA_R = "l2_trace_gamma_r"
    L2_TRACE_GAMMA_N = "l2_trace_gamma_n"


class Boundary(enum.Enum):
    GAMMA_R = "gamma_r"
    GAMMA_N = "gamma_n"


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class MacroGrid:
    n_x: int
    L_x: float = 1.0

    def __post_init__(self):
        if int(self.n_x) != self.n_x or self.n_x < 3:
            raise ConfigError("n_x", f"need an integer >= 3, got {self.n_x!r}")
        if not self.L_x > 0:
            raise ConfigError("L_x", f"need a positive length, got {self.L_x!r}")

    @property
    def h(self) -> float:
        return self.L_x / (self.n_x - 1)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L_x, self.n_x)

    @cached_property
    def weights(self) -> np.ndarray:
        return trapezoid_weights(self.n_x, self.h)

    @property
    def interior(self) -> slice:
        return slice(1, self.n_x - 1)


@dataclass(frozen=True, eq=False)
class MicroGrid:
    """Unit square with one Robin edge; the other three edges are Neumann.

    ``tags`` holds ROBIN/NEUMANN for boundary nodes and 0 for interior
    nodes.  The corners of the Robin edge are tagged ROBIN.  Traces on the
    Neumann part are taken edge by edge (endpoints included), so the
    Neumann quadrature weights sum to 3 exactly.
    """

    n_y: int
    robin_side: str = "left"
    h: float = field(init=False)

    def __post_init__(self):
        if int(self.n_y) != self.n_y or self.n_y < 3:
            raise ConfigError("n_y", f"need an integer >= 3, got {self.n_y!r}")
        if self.robin_side not in EDGES:
            raise ConfigError("robin_side", f"must be one of {EDGES}, got {self.robin_side!r}")
        object.__setattr__(self, "h", 1.0 / (self.n_y - 1))

    @property
    def size(self) -> int:
        return self.n_y * self.n_y

    def edge_nodes(self, edge: str) -> np.ndarray:
        """Flat node indices along ``edge`` in increasing coordinate order."""
        n = self.n_y
        r = np.arange(n)
        if edge == "left":
            return r  # i1 = 0
        if edge == "right":
            return (n - 1) * n + r
        if edge == "bottom":
            return r * n  # i2 = 0
        if edge == "top":
            return r * n + n - 1
        raise ConfigError("edge", f"unknown edge {edge!r}")

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        g = np.linspace(0.0, 1.0, self.n_y)
        y1, y2 = np.meshgrid(g, g, indexing="ij")
        return y1.ravel(), y2.ravel()

    @cached_property
    def neumann_edges(self) -> tuple[str, ...]:
        return tuple(e for e in EDGES if e != self.robin_side)

    @cached_property
    def robin_nodes(self) -> np.ndarray:
        return self.edge_nodes(self.robin_side)

    @cached_property
    def robin_weights(self) -> np.ndarray:
        return trapezoid_weights(self.n_y, self.h)

    @cached_property
    def neumann_trace_nodes(self) -> np.ndarray:
        return np.concatenate([self.edge_nodes(e) for e in self.neumann_edges])

    @cached_property
    def neumann_trace_weights(self) -> np.ndarray:
        w = trapezoid_weights(self.n_y, self.h)
        return np.concatenate([w for _ in self.neumann_edges])

    @cached_property
    def tags(self) -> np.ndarray:
        tags = np.zeros(self.size, dtype=np.int8)
        for e in self.neumann_edges:
            tags[self.edge_nodes(e)] = NEUMANN
        tags[self.robin_nodes] = ROBIN
        return tags

    @cached_property
    def boundary_weight(self) -> np.ndarray:
        """Per-node boundary quadrature weight.

        Robin nodes carry their weight along the Robin edge only; Neumann
        nodes carry the sum over the Neumann edges they lie on.
        """
        bw = np.zeros(self.size)
        bw[self.neumann_trace_nodes] = 0.0
        np.add.at(bw, self.neumann_trace_nodes, self.neumann_trace_weights)
        bw[self.robin_nodes] = self.robin_weights
        return bw

    @cached_property
    def mass(self) -> np.ndarray:
        """Lumped (trapezoid) cell weights; they sum to |Y| = 1."""
        w = trapezoid_weights(self.n_y, self.h)
        return np.outer(w, w).ravel()

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Symmetric 5-point Neumann stiffness K with u^T K u ~ int |grad u|^2."""
        n, h = self.n_y, self.h
        main = np.full(n, 2.0)
        main[0] = main[-1] = 1.0
        k1 = sp.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1]) / h
        m1 = sp.diags(trapezoid_weights(n, h))
        return (sp.kron(k1, m1) + sp.kron(m1, k1)).tocsr()


def build_micro_grid(n_y: int, robin_side: str = "left") -> MicroGrid:
    return MicroGrid(n_y, robin_side)


def time_weights(n_steps: int, dt: float) -> np.ndarray:
    """Trapezoid weights over t_0, ..., t_N."""
    return trapezoid_weights(n_steps + 1, dt) if n_steps > 0 else np.zeros(1)


def _check(field: np.ndarray, shape: tuple[int, ...], what: str) -> None:
    if field.shape != shape:
        raise ShapeError(f"{what}: expected shape {shape}, got {field.shape}")


def discrete_norm(field, kind: NormKind, macro: MacroGrid | None = None,
                  micro: MicroGrid | None = None) -> float:
    """Trapezoid approximation of a continuous norm.

    Two-scale kinds accept a single micro field (shape ``(n_y**2,)``), in
    which case the macro integral is dropped.  Trace kinds expect arrays
    from :func:`extract_trace`.
    """
    u = np.asarray(field, dtype=float)
    if kind is NormKind.L2_MACRO:
        _check(u, (macro.n_x,), "macro field")
        return float(np.sqrt(np.sum(macro.weights * u * u)))
    if kind is NormKind.H1_MACRO_SEMINORM:
        _check(u, (macro.n_x,), "macro field")
        du = np.diff(u)
        return float(np.sqrt(np.sum(du * du) / macro.h))

    if kind is NormKind.L2_TWOSCALE:
        if u.ndim == 1:
            _check(u, (micro.size,), "micro field")
            return float(np.sqrt(np.sum(micro.mass * u * u)))
        _check(u, (macro.n_x, micro.size), "two-scale field")
        return float(np.sqrt(np.sum(macro.weights * ((u * u) @ micro.mass))))
    if kind is NormKind.H1Y_SEMINORM:
        if u.ndim == 1:
            _check(u, (micro.size,), "micro field")
            return float(np.sqrt(max(u @ (micro.stiffness @ u), 0.0)))
        _check(u, (macro.n_x, micro.size), "two-scale field")
        sq = np.sum(u * (micro.stiffness @ u.T).T, axis=1)
        return float(np.sqrt(max(np.sum(macro.weights * sq), 0.0)))

    if kind is NormKind.L2_TRACE_GAMMA_R:
        w = micro.robin_weights
    elif kind is NormKind.L2_TRACE_GAMMA_N:
        w = micro.neumann_trace_weights
    else:
        raise ValueError(f"unknown norm kind {kind!r}")
    if u.ndim == 1:
        _check(u, (w.size,), "trace")
        return float(np.sqrt(np.sum(w * u * u)))
    _check(u, (macro.n_x, w.size), "trace")
    return float(np.sqrt(np.sum(macro.weights * ((u * u) @ w))))


def extract_trace(rho: np.ndarray, micro: MicroGrid, which: Boundary) -> np.ndarray:
    """Restriction to Gamma_R (edge order) or Gamma_N (edge by edge).

    Works on any array whose last axis is the micro node index.
    """
    rho = np.asarray(rho)
    if rho.shape[-1] != micro.size:
        raise ShapeError(f"last axis must have {micro.size} micro nodes, got {rho.shape[-1]}")
    nodes = micro.robin_nodes if which is Boundary.GAMMA_R else micro.neumann_trace_nodes
    return rho[..., nodes]


def poincare_constant(grid: MacroGrid) -> float:
    """1 / smallest eigenvalue of the discrete Dirichlet Laplacian."""
    n = grid.n_x - 2
    if n == 1:
        return grid.h**2 / 2.0
    d = np.full(n, 2.0 / grid.h**2)
    e = np.full(n - 1, -1.0 / grid.h**2)
    lam = eigvalsh_tridiagonal(d, e, select="i", select_range=(0, 0))[0]
    return float(1.0 / lam)


def twoscale_h1_sq(rho: np.ndarray, macro: MacroGrid, micro: MicroGrid) -> np.ndarray:
    """||.||^2 in L2(Omega; H1(Y)) for every leading index of ``rho`` (..., n_x, n_y**2)."""
    l2 = (rho * rho) @ micro.mass
    flat = rho.reshape(-1, micro.size)
    grad = np.sum(flat * (micro.stiffness @ flat.T).T, axis=1).reshape(rho.shape[:-1])
    return (l2 + grad) @ macro.weights


def macro_h1_sq(pi: np.ndarray, macro: MacroGrid) -> np.ndarray:
    """||.||^2 in H1(Omega) for every leading index of ``pi`` (..., n_x)."""
    return (pi * pi) @ macro.weights + np.sum(np.diff(pi, axis=-1) ** 2, axis=-1) / macro.h


def trace_sq(trace: np.ndarray, macro: MacroGrid, weights: np.ndarray) -> np.ndarray:
    """||.||^2 in L2(Omega; L2(edge set)) for every leading index of ``trace`` (..., n_x, m)."""
    return ((trace * trace) @ weights) @ macro.weights
