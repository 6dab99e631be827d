"""Discrete fractional operators on uniform grids.

Left/right Riemann-Liouville integrals and the left Caputo derivative are
computed by product integration: the data is treated as piecewise-constant
on cells (left-node value) and the weakly singular kernel is integrated
exactly over each cell. This gives O(h) accuracy without any regularization
of the kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "GridFn",
    "FracWeights",
    "rl_integral_left",
    "rl_integral_right",
    "rl_integral_right_at",
    "caputo_derivative_left",
    "reconstruct_trajectory",
    "window_variation",
]


class FracDomainError(ValueError):
    """Raised when an order parameter is outside its admissible range."""


class GridMismatchError(ValueError):
    """Raised when grids or dimensions of composite operands disagree."""


@dataclass(frozen=True)
class Grid:
    """Uniform mesh on [a, b] with nodes t_k = a + k*h, k = 0..n_cells."""

    a: float
    b: float
    n_cells: int

    def __post_init__(self):
        if not (self.a < self.b):
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if self.n_cells < 2:
            raise ValueError(f"need n_cells >= 2, got {self.n_cells}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_cells

    @property
    def n_nodes(self) -> int:
        return self.n_cells + 1

    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.n_nodes)

    def node_index(self, t: float, tol: float = 1e-9) -> int:
        """Index of the node equal to t; raises if t is not a node."""
        k = round((t - self.a) / self.h)
        if k < 0 or k > self.n_cells or abs(self.a + k * self.h - t) > tol * max(1.0, abs(t)):
            raise GridMismatchError(f"t={t} is not a grid node")
        return int(k)


@dataclass(frozen=True)
class GridFn:
    """Vector-valued samples on the nodes of a grid, shape (n_nodes, dim)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.n_nodes:
            raise GridMismatchError(
                f"expected {self.grid.n_nodes} rows, got {v.shape[0]}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("GridFn values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_callable(cls, grid: Grid, f) -> "GridFn":
        """Sample f(t) (scalar or vector valued) at the grid nodes."""
        rows = np.array([np.atleast_1d(f(t)) for t in grid.nodes()], dtype=float)
        return cls(grid, rows)

    @classmethod
    def constant(cls, grid: Grid, value) -> "GridFn":
        row = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(row, (grid.n_nodes, 1)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(self, values: np.ndarray) -> "GridFn":
        return GridFn(self.grid, values)


def _check_same_grid(f: GridFn, g: GridFn):
    if f.grid != g.grid:
        raise GridMismatchError("operands live on different grids")
    if f.dim != g.dim:
        raise GridMismatchError(f"dimension mismatch: {f.dim} vs {g.dim}")


@dataclass(frozen=True)
class FracWeights:
    """Exact kernel moments of the RL kernel over uniform cells.

    weights[m] = ((m+1)^alpha - m^alpha) * h^alpha / Gamma(alpha + 1), the
    exact integral of (t-s)^(alpha-1)/Gamma(alpha) over a cell at lag m.
    """

    alpha: float
    h: float
    weights: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, alpha: float, h: float, n_cells: int) -> "FracWeights":
        if alpha <= 0:
            raise FracDomainError(f"need alpha > 0, got {alpha}")
        m = np.arange(n_cells, dtype=float)
        w = ((m + 1.0) ** alpha - m**alpha) * h**alpha / math.gamma(alpha + 1.0)
        w.setflags(write=False)
        return cls(alpha, h, w)


def _weights(alpha: float, grid: Grid) -> np.ndarray:
    return FracWeights.build(alpha, grid.h, grid.n_cells).weights


def rl_integral_left(u: GridFn, alpha: float) -> GridFn:
    """Left RL integral of order alpha >= 0, sampled at all nodes.

    u is treated as piecewise-constant on cells (left value); the kernel is
    integrated exactly per cell. Value at t=a is 0 for alpha > 0; alpha = 0
    is the identity.
    """
    if alpha < 0:
        raise FracDomainError(f"need alpha >= 0, got {alpha}")
    if alpha == 0:
        return u
    w = _weights(alpha, u.grid)
    n = u.grid.n_cells
    out = np.zeros_like(u.values)
    for d in range(u.dim):
        cells = u.values[:-1, d]
        # node k accumulates sum_{i<k} u_i * w_{k-1-i}
        out[1:, d] = np.convolve(cells, w)[:n]
    return u.with_values(out)


def rl_integral_right(u: GridFn, alpha: float) -> GridFn:
    """Right RL integral of order alpha >= 0, sampled at all nodes.

    Mirror of :func:`rl_integral_left` with kernel (s-t)^(alpha-1)/Gamma(alpha);
    the value at t=b is exactly 0 for alpha > 0.
    """
    if alpha < 0:
        raise FracDomainError(f"need alpha >= 0, got {alpha}")
    if alpha == 0:
        return u
    w = _weights(alpha, u.grid)
    n = u.grid.n_cells
    out = np.zeros_like(u.values)
    for d in range(u.dim):
        # node k accumulates sum_{i>=k} u_i * w_{i-k}; correlate by reversal
        cells = u.values[:-1, d][::-1]
        out[:n, d] = np.convolve(cells, w)[:n][::-1]
    return u.with_values(out)


def rl_integral_right_at(w: GridFn, order: float, t: float) -> np.ndarray:
    """Right RL integral of order in (0, 1) evaluated at one point t.

    Integrates the kernel exactly against the piecewise-constant cell data;
    returns the exact zero vector when t = b.
    """
    if not (0.0 < order < 1.0):
        raise FracDomainError(f"need order in (0,1), got {order}")
    grid = w.grid
    if t >= grid.b:
        return np.zeros(w.dim)
    nodes = grid.nodes()
    lo = np.maximum(nodes[:-1], t)
    hi = nodes[1:]
    mask = hi > t
    moments = np.zeros(grid.n_cells)
    moments[mask] = ((hi[mask] - t) ** order - (lo[mask] - t) ** order) / math.gamma(
        order + 1.0
    )
    return moments @ w.values[:-1]


def caputo_derivative_left(x: GridFn, alpha: float) -> GridFn:
    """Left Caputo derivative of order alpha in (0, 1] (L1-type scheme).

    Forward difference quotients on cells, treated as piecewise-constant, are
    fed through the left RL integral of order 1-alpha. For alpha = 1 the
    difference quotients themselves are returned (last node repeats the last
    cell value).
    """
    if not (0.0 < alpha <= 1.0):
        raise FracDomainError(f"need alpha in (0,1], got {alpha}")
    h = x.grid.h
    diff = np.diff(x.values, axis=0) / h
    if alpha == 1.0:
        vals = np.vstack([diff, diff[-1:]])
        return x.with_values(vals)
    padded = np.vstack([diff, diff[-1:]])  # node n_cells value unused by quadrature
    return rl_integral_left(x.with_values(padded), 1.0 - alpha)


def reconstruct_trajectory(u: GridFn, y: np.ndarray, alpha: float) -> GridFn:
    """Trajectory x = y + I^alpha[u] with x(a) = y exactly."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (u.dim,):
        raise GridMismatchError(f"initial value has dim {y.shape}, control has dim {u.dim}")
    if not (0.0 < alpha <= 1.0):
        raise FracDomainError(f"need alpha in (0,1], got {alpha}")
    integ = rl_integral_left(u, alpha)
    return u.with_values(integ.values + y)


def window_variation(
    grid: Grid, alpha: float, tau: float, h: float, v: np.ndarray
) -> GridFn:
    """Closed-form I^alpha of the indicator v*1_[tau, tau+h), at the nodes.

    Zero on [a, tau]; (t-tau)^alpha v / Gamma(1+alpha) on [tau, tau+h];
    ((t-tau)^alpha - (t-(tau+h))^alpha) v / Gamma(1+alpha) afterwards. The
    nodes are evaluated exactly, no quadrature is involved.
    """
    if not (0.0 < alpha <= 1.0):
        raise FracDomainError(f"need alpha in (0,1], got {alpha}")
    if not (grid.a <= tau < tau + h <= grid.b):
        raise ValueError(f"window [{tau}, {tau + h}] outside [{grid.a}, {grid.b}]")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    t = grid.nodes()
    ga = math.gamma(1.0 + alpha)
    left = np.where(t > tau, (t - tau).clip(min=0.0) ** alpha, 0.0)
    right = np.where(t > tau + h, (t - (tau + h)).clip(min=0.0) ** alpha, 0.0)
    profile = (left - right) / ga
    return GridFn(grid, profile[:, None] * v[None, :])
