"""Problem definition and trajectory representation.

A problem couples a fractional differentiation order alpha, a cost-weight
order beta, a Mayer cost phi(xa, xb), a Lagrangian L(x, u, t) and optional
mixed endpoint constraints g(xa, xb) in S for a closed convex S. Candidate
trajectories are stored as the pair (u, y) with x(t) = y + I^alpha[u](t), so
the Caputo-derivative relation u = cD^alpha[x] holds by construction.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .expr import Expr, differentiate, free_variables, parse
from .frac_ops import Grid, GridFn, reconstruct_trajectory

__all__ = [
    "ConvexSet",
    "WholeSpace",
    "Singleton",
    "Box",
    "Ball",
    "Product",
    "ProblemSpec",
    "TrajectoryPair",
    "validate",
    "standard_constraint",
]


# -- closed convex target sets -------------------------------------------------


class ConvexSet:
    """Base of the closed convex sets supported as constraint targets."""

    __slots__ = ()

    @property
    def dim(self) -> int:
        raise NotImplementedError


@dataclass(frozen=True)
class WholeSpace(ConvexSet):
    n: int

    @property
    def dim(self) -> int:
        return self.n


@dataclass(frozen=True)
class Singleton(ConvexSet):
    point: tuple

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(p) for p in self.point))

    @property
    def dim(self) -> int:
        return len(self.point)


@dataclass(frozen=True)
class Box(ConvexSet):
    """Componentwise bounds; +-inf entries encode axis-aligned half-spaces."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi):
            raise ValueError("box bounds must have equal length")
        if any(l > u for l, u in zip(lo, hi)):
            raise ValueError("box requires lower <= upper componentwise")

    @property
    def dim(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class Ball(ConvexSet):
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.radius < 0:
            raise ValueError("ball radius must be nonnegative")

    @property
    def dim(self) -> int:
        return len(self.center)


@dataclass(frozen=True)
class Product(ConvexSet):
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("product of zero sets")

    @property
    def dim(self) -> int:
        return sum(f.dim for f in self.factors)


# -- problem and trajectory ----------------------------------------------------

_diff = functools.lru_cache(maxsize=None)(differentiate)


@dataclass(frozen=True)
class ProblemSpec:
    """Bolza problem data: orders, grid, costs and endpoint constraints."""

    alpha: float
    beta: float
    grid: Grid
    dim: int
    phi: Expr
    lagrangian: Expr
    constraint_map: Optional[tuple] = None  # tuple of Expr in (xa, xb)
    target_set: Optional[ConvexSet] = None

    def __post_init__(self):
        if self.constraint_map is not None:
            object.__setattr__(self, "constraint_map", tuple(self.constraint_map))

    @property
    def n_constraints(self) -> int:
        return 0 if self.constraint_map is None else len(self.constraint_map)

    # cached partial-derivative trees; indices follow the 1-based variables
    def d_phi(self, stem: str) -> tuple:
        """Gradient of phi with respect to xa ('xa') or xb ('xb')."""
        return tuple(_diff(self.phi, f"{stem}{i + 1}") for i in range(self.dim))

    def d2_phi(self, stem_row: str, stem_col: str) -> tuple:
        return tuple(
            tuple(
                _diff(_diff(self.phi, f"{stem_row}{i + 1}"), f"{stem_col}{j + 1}")
                for j in range(self.dim)
            )
            for i in range(self.dim)
        )

    def d_lagrangian(self, stem: str) -> tuple:
        """Gradient of L with respect to x ('x') or u ('u')."""
        return tuple(_diff(self.lagrangian, f"{stem}{i + 1}") for i in range(self.dim))

    def d2_lagrangian(self, stem_row: str, stem_col: str) -> tuple:
        return tuple(
            tuple(
                _diff(_diff(self.lagrangian, f"{stem_row}{i + 1}"), f"{stem_col}{j + 1}")
                for j in range(self.dim)
            )
            for i in range(self.dim)
        )

    def d_constraints(self, stem: str) -> tuple:
        """Jacobian rows of g with respect to xa or xb (shape j x n)."""
        if self.constraint_map is None:
            return ()
        return tuple(
            tuple(_diff(g, f"{stem}{i + 1}") for i in range(self.dim))
            for g in self.constraint_map
        )


@dataclass(frozen=True)
class TrajectoryPair:
    """Candidate trajectory parametrized by (u, y): x = y + I^alpha[u]."""

    u: GridFn
    y: np.ndarray
    radius: Optional[float] = None  # optional sup-norm bound on u

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if y.shape != (self.u.dim,):
            raise ValueError(f"y has shape {y.shape}, control has dim {self.u.dim}")
        if not np.all(np.isfinite(y)):
            raise ValueError("initial value must be finite")
        if self.radius is not None and self.u.sup_norm() > self.radius + 1e-12:
            raise ValueError("control exceeds the declared radius bound")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    def state(self, alpha: float) -> GridFn:
        return reconstruct_trajectory(self.u, self.y, alpha)


def validate(spec: ProblemSpec) -> list:
    """Collect every invariant violation as a '<path>: message' string."""
    issues = []
    if not (0.0 < spec.alpha <= 1.0):
        issues.append(f"alpha: out of (0,1]: {spec.alpha}")
    if not (spec.beta > 0.0):
        issues.append(f"beta: must be positive: {spec.beta}")
    if spec.dim < 1:
        issues.append(f"dim: must be a positive integer: {spec.dim}")
    endpoint_vars = {"t"}
    for i in range(spec.dim):
        endpoint_vars |= {f"xa{i + 1}", f"xb{i + 1}"}
    lag_vars = {"t"}
    for i in range(spec.dim):
        lag_vars |= {f"x{i + 1}", f"u{i + 1}"}
    bad = free_variables(spec.phi) - endpoint_vars
    if bad:
        issues.append(f"phi: uses non-endpoint variables {sorted(bad)}")
    bad = free_variables(spec.lagrangian) - lag_vars
    if bad:
        issues.append(f"lagrangian: uses non-running variables {sorted(bad)}")
    if (spec.constraint_map is None) != (spec.target_set is None):
        issues.append("constraint: map and target set must be given together")
    if spec.constraint_map is not None and spec.target_set is not None:
        if len(spec.constraint_map) != spec.target_set.dim:
            issues.append(
                f"constraint: map has {len(spec.constraint_map)} components but "
                f"target set has dimension {spec.target_set.dim}"
            )
        for k, g in enumerate(spec.constraint_map):
            bad = free_variables(g) - endpoint_vars
            if bad:
                issues.append(f"constraint[{k}]: uses non-endpoint variables {sorted(bad)}")
    issues.extend(_validate_set(spec.target_set, "target_set"))
    return issues


def _validate_set(s: Optional[ConvexSet], path: str) -> list:
    if s is None:
        return []
    issues = []
    if isinstance(s, Box):
        for i, (lo, hi) in enumerate(zip(s.lower, s.upper)):
            if lo > hi:
                issues.append(f"{path}.box[{i}]: lower > upper")
    if isinstance(s, Ball) and s.radius < 0:
        issues.append(f"{path}.ball: negative radius")
    if isinstance(s, Product):
        for i, f in enumerate(s.factors):
            issues.extend(_validate_set(f, f"{path}.factors[{i}]"))
    return issues


def standard_constraint(kind: str, n: int, x_a=None, x_b=None):
    """The (g, S) pair for the common endpoint-constraint shapes.

    kind is one of 'free', 'fixed_initial', 'fixed_both', 'periodic'.
    """
    identity = tuple(
        parse(name, n)
        for name in [f"xa{i + 1}" for i in range(n)] + [f"xb{i + 1}" for i in range(n)]
    )
    if kind == "free":
        return identity, WholeSpace(2 * n)
    if kind == "fixed_initial":
        point = np.broadcast_to(np.asarray(x_a, dtype=float), (n,))
        return identity, Product((Singleton(tuple(point)), WholeSpace(n)))
    if kind == "fixed_both":
        pa = np.broadcast_to(np.asarray(x_a, dtype=float), (n,))
        pb = np.broadcast_to(np.asarray(x_b, dtype=float), (n,))
        return identity, Singleton(tuple(pa) + tuple(pb))
    if kind == "periodic":
        gap = tuple(parse(f"xb{i + 1} - xa{i + 1}", n) for i in range(n))
        return gap, Singleton((0.0,) * n)
    raise ValueError(f"unknown constraint kind {kind!r}")
