"""Projection, distance and normal-cone tests for the supported convex sets."""

from __future__ import annotations

import numpy as np

from .model import Ball, Box, ConvexSet, Product, Singleton, WholeSpace

__all__ = ["project", "dist", "dist_sq_gradient", "in_normal_cone", "normal_cone_basis"]

DEFAULT_CONE_TOL = 1e-9


def _check_dim(s: ConvexSet, z: np.ndarray) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (s.dim,):
        raise ValueError(f"point has shape {z.shape}, set has dimension {s.dim}")
    return z


def project(s: ConvexSet, z) -> np.ndarray:
    """Nearest point of s to z (unique, idempotent, 1-Lipschitz)."""
    z = _check_dim(s, z)
    if isinstance(s, WholeSpace):
        return z.copy()
    if isinstance(s, Singleton):
        return np.array(s.point)
    if isinstance(s, Box):
        return np.clip(z, s.lower, s.upper)
    if isinstance(s, Ball):
        center = np.array(s.center)
        gap = z - center
        norm = float(np.linalg.norm(gap))
        if norm <= s.radius:
            return z.copy()
        return center + gap * (s.radius / norm)
    if isinstance(s, Product):
        parts = []
        off = 0
        for f in s.factors:
            parts.append(project(f, z[off : off + f.dim]))
            off += f.dim
        return np.concatenate(parts)
    raise TypeError(f"unsupported set {type(s).__name__}")


def dist(s: ConvexSet, z) -> float:
    z = _check_dim(s, z)
    return float(np.linalg.norm(z - project(s, z)))


def dist_sq_gradient(s: ConvexSet, z) -> np.ndarray:
    """Gradient of the squared distance to s: 2 (z - P_s(z))."""
    z = _check_dim(s, z)
    return 2.0 * (z - project(s, z))


def in_normal_cone(s: ConvexSet, z, d, tol: float = DEFAULT_CONE_TOL) -> bool:
    """Decide d in N_s[z] analytically for the supported set shapes.

    z must lie in s up to tol (checked).
    """
    z = _check_dim(s, z)
    d = _check_dim(s, d)
    if dist(s, z) > tol:
        raise ValueError("point is not in the set within tolerance")
    if isinstance(s, WholeSpace):
        return bool(np.linalg.norm(d) <= tol)
    if isinstance(s, Singleton):
        return True
    if isinstance(s, Box):
        lo = np.array(s.lower)
        hi = np.array(s.upper)
        for zi, di, l, u in zip(z, d, lo, hi):
            at_lower = zi <= l + tol
            at_upper = zi >= u - tol
            if at_lower and at_upper:
                continue  # degenerate interval: any direction is normal
            if at_upper and di < -tol:
                return False
            if at_lower and di > tol:
                return False
            if not at_lower and not at_upper and abs(di) > tol:
                return False
        return True
    if isinstance(s, Ball):
        center = np.array(s.center)
        gap = z - center
        if float(np.linalg.norm(gap)) < s.radius - tol:
            return bool(np.linalg.norm(d) <= tol)
        if s.radius <= tol:
            return True
        # boundary: the cone is the outward ray along z - center
        outward = gap / np.linalg.norm(gap)
        t = float(d @ outward)
        return t >= -tol and bool(np.linalg.norm(d - t * outward) <= tol)
    if isinstance(s, Product):
        off = 0
        for f in s.factors:
            if not in_normal_cone(f, z[off : off + f.dim], d[off : off + f.dim], tol):
                return False
            off += f.dim
        return True
    raise TypeError(f"unsupported set {type(s).__name__}")


def normal_cone_basis(s: ConvexSet, z, tol: float = DEFAULT_CONE_TOL) -> np.ndarray:
    """Orthonormal basis of the smallest linear subspace containing N_s[z].

    Returned as a (dim, k) matrix; k = 0 means the cone is trivially {0}.
    Used by the multiplier extraction to restrict the least-squares fit.
    """
    z = _check_dim(s, z)
    if isinstance(s, WholeSpace):
        return np.zeros((s.dim, 0))
    if isinstance(s, Singleton):
        return np.eye(s.dim)
    if isinstance(s, Box):
        cols = []
        for i, (zi, l, u) in enumerate(zip(z, s.lower, s.upper)):
            if zi <= l + tol or zi >= u - tol:
                e = np.zeros(s.dim)
                e[i] = 1.0
                cols.append(e)
        return np.column_stack(cols) if cols else np.zeros((s.dim, 0))
    if isinstance(s, Ball):
        center = np.array(s.center)
        gap = z - center
        norm = float(np.linalg.norm(gap))
        if s.radius <= tol:
            return np.eye(s.dim)
        if norm < s.radius - tol:
            return np.zeros((s.dim, 0))
        return (gap / norm)[:, None]
    if isinstance(s, Product):
        blocks = []
        off = 0
        for f in s.factors:
            sub = normal_cone_basis(f, z[off : off + f.dim], tol)
            lifted = np.zeros((s.dim, sub.shape[1]))
            lifted[off : off + f.dim, :] = sub
            blocks.append(lifted)
            off += f.dim
        return np.hstack(blocks) if blocks else np.zeros((s.dim, 0))
    raise TypeError(f"unsupported set {type(s).__name__}")
