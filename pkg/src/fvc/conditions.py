"""Computable first- and second-order necessary-condition residuals.

Everything is reported in integrated form so that no weakly singular quantity
is differentiated numerically. The residuals vanish (up to quadrature error)
exactly when the candidate satisfies the Euler-Lagrange equation, the
transversality conditions (with multiplier when endpoint constraints are
present) and the weighted Legendre condition.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .convex import in_normal_cone, normal_cone_basis, project
from .expr import evaluate
from .frac_ops import Grid, GridFn, rl_integral_right
from .functional import (
    beta_cell_weights,
    constraint_value,
    endpoint_env,
    eval_matrix,
    eval_profile,
    eval_vector,
    running_env,
)
from .model import ProblemSpec, TrajectoryPair

__all__ = [
    "ResidualReport",
    "RegularityError",
    "el_residual",
    "transversality_residuals",
    "extract_multiplier",
    "legendre_check",
    "rigidity_probe",
    "moments",
    "build_report",
]

DEFAULT_LEGENDRE_TOL = 1e-10
REGULARITY_SV_TOL = 1e-8


class RegularityError(ValueError):
    """The endpoint-constraint Jacobian is not surjective at the candidate."""


@dataclass(frozen=True)
class ResidualReport:
    """All necessary-condition residuals of one candidate trajectory."""

    el_residual_sup: float
    el_residual_profile: GridFn
    transversality_a: float
    transversality_b: float
    legendre_min_eig_profile: np.ndarray
    legendre_ok: bool
    adjoint_p: GridFn
    psi: Optional[np.ndarray] = None
    psi_in_cone: Optional[bool] = None

    def to_dict(self) -> dict:
        return {
            "el_residual_sup": self.el_residual_sup,
            "el_residual_profile": self.el_residual_profile.values.tolist(),
            "transversality_a": self.transversality_a,
            "transversality_b": self.transversality_b,
            "legendre_min_eig_profile": self.legendre_min_eig_profile.tolist(),
            "legendre_ok": self.legendre_ok,
            "psi": None if self.psi is None else self.psi.tolist(),
            "psi_in_cone": self.psi_in_cone,
            "adjoint_p": self.adjoint_p.values.tolist(),
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


# -- shared profiles -------------------------------------------------------------


def _beta_weight_nodes(grid: Grid, beta: float) -> np.ndarray:
    """(b-t)^(beta-1)/Gamma(beta) at the nodes; the t=b entry is zeroed when
    beta < 1 (it multiplies cell data that the quadrature never reads)."""
    gaps = (grid.b - grid.nodes()).clip(min=0.0)
    with np.errstate(divide="ignore"):
        w = gaps ** (beta - 1.0) / math.gamma(beta)
    if beta < 1.0:
        w[-1] = 0.0
    return w


def _weighted_profiles(spec: ProblemSpec, traj: TrajectoryPair):
    """w = weight * d2L and the plain d1L profile along the trajectory."""
    x = traj.state(spec.alpha)
    env = running_env(spec, x, traj.u)
    n_nodes = spec.grid.n_nodes
    d1 = eval_profile(spec.d_lagrangian("x"), env, n_nodes)
    d2 = eval_profile(spec.d_lagrangian("u"), env, n_nodes)
    weight = _beta_weight_nodes(spec.grid, spec.beta)
    w = GridFn(spec.grid, weight[:, None] * d2)
    return x, w, d1


def _tail_integral(grid: Grid, beta: float, d1: np.ndarray) -> np.ndarray:
    """int_t^b (b-s)^(beta-1)/Gamma(beta) d1L(s) ds at every node t."""
    cells = beta_cell_weights(grid, beta)[:, None] * d1[:-1]
    tail = np.zeros_like(d1)
    tail[:-1] = np.cumsum(cells[::-1], axis=0)[::-1]
    return tail


# -- the residuals ---------------------------------------------------------------


def el_residual(spec: ProblemSpec, traj: TrajectoryPair):
    """Integrated Euler-Lagrange residual profile and its sup norm.

    r(t) = I^(1-alpha)_right[w](t) - I^(1-alpha)_right[w](b)
           + int_t^b (b-s)^(beta-1)/Gamma(beta) d1L(s) ds,
    which vanishes identically along stationary trajectories.
    """
    x, w, d1 = _weighted_profiles(spec, traj)
    iw = rl_integral_right(w, 1.0 - spec.alpha)
    tail = _tail_integral(spec.grid, spec.beta, d1)
    r = iw.values - iw.values[-1] + tail
    profile = GridFn(spec.grid, r)
    return profile, float(np.max(np.abs(r)))


def transversality_residuals(spec: ProblemSpec, traj: TrajectoryPair, psi=None):
    """Norms of the endpoint stationarity defects at a and b.

    With psi omitted the unconstrained form is checked; otherwise the
    constraint Jacobians enter with the multiplier. The right integral at b
    is exactly zero for alpha < 1, so that residual reduces bitwise to the
    norm of the phi/constraint terms.
    """
    x, w, _ = _weighted_profiles(spec, traj)
    iw = rl_integral_right(w, 1.0 - spec.alpha)
    i_a, i_b = iw.values[0], iw.values[-1]
    ep = endpoint_env(spec, x.values[0], x.values[-1])
    dphi_a = eval_vector(spec.d_phi("xa"), ep)
    dphi_b = eval_vector(spec.d_phi("xb"), ep)
    vec_a = i_a - dphi_a
    vec_b = i_b + dphi_b
    if psi is not None:
        psi = np.atleast_1d(np.asarray(psi, dtype=float))
        if psi.shape != (spec.n_constraints,):
            raise ValueError(
                f"psi has shape {psi.shape}, problem has {spec.n_constraints} constraints"
            )
        ga = eval_matrix(spec.d_constraints("xa"), ep)
        gb = eval_matrix(spec.d_constraints("xb"), ep)
        vec_a = vec_a + ga.T @ psi
        vec_b = vec_b - gb.T @ psi
    return float(np.linalg.norm(vec_a)), float(np.linalg.norm(vec_b))


def extract_multiplier(spec: ProblemSpec, traj: TrajectoryPair):
    """Least-squares multiplier for the constrained transversality system.

    Solves the 2n stacked endpoint equations for psi restricted to the span
    of the normal cone at g(x(a), x(b)), then checks -psi against the cone.
    Returns (psi, cone_ok, (residual_a, residual_b)).
    """
    if spec.constraint_map is None:
        raise ValueError("problem has no endpoint constraints")
    x, w, _ = _weighted_profiles(spec, traj)
    iw = rl_integral_right(w, 1.0 - spec.alpha)
    ep = endpoint_env(spec, x.values[0], x.values[-1])
    ga = eval_matrix(spec.d_constraints("xa"), ep)
    gb = eval_matrix(spec.d_constraints("xb"), ep)
    dg = np.hstack([ga, gb])
    sv = np.linalg.svd(dg, compute_uv=False)
    if sv.size == 0 or sv[-1] < REGULARITY_SV_TOL:
        raise RegularityError(
            f"constraint Jacobian is rank deficient (smallest singular value {sv[-1] if sv.size else 0.0:.2e})"
        )
    g_val = constraint_value(spec, x.values[0], x.values[-1])
    g_feas = project(spec.target_set, g_val)
    basis = normal_cone_basis(spec.target_set, g_feas)
    dphi_a = eval_vector(spec.d_phi("xa"), ep)
    dphi_b = eval_vector(spec.d_phi("xb"), ep)
    system = np.vstack([ga.T, -gb.T])
    rhs = np.concatenate([dphi_a - iw.values[0], -(dphi_b + iw.values[-1])])
    psi = np.zeros(spec.n_constraints)
    if basis.shape[1] > 0:
        coeffs, *_ = np.linalg.lstsq(system @ basis, rhs, rcond=None)
        psi = basis @ coeffs
    # the cone test runs at the nearest feasible point so slightly infeasible
    # numerical candidates still get a meaningful verdict
    cone_ok = in_normal_cone(spec.target_set, g_feas, -psi, tol=1e-6)
    residuals = transversality_residuals(spec, traj, psi)
    return psi, cone_ok, residuals


def legendre_check(spec: ProblemSpec, traj: TrajectoryPair, tol: float = DEFAULT_LEGENDRE_TOL):
    """Minimum-eigenvalue profile of the weighted control Hessian of L.

    The node t=a is never checked (almost-everywhere condition) and t=b is
    skipped when beta < 1 (unbounded weight); skipped entries replicate the
    nearest checked value so the profile stays plottable. Returns
    (profile, min over checked nodes >= -tol).
    """
    x = traj.state(spec.alpha)
    env = running_env(spec, x, traj.u)
    n, n_nodes = spec.dim, spec.grid.n_nodes
    hess = np.empty((n_nodes, n, n))
    rows = spec.d2_lagrangian("u", "u")
    for i in range(n):
        for j in range(n):
            hess[:, i, j] = np.broadcast_to(evaluate(rows[i][j], env), (n_nodes,))
    weight = _beta_weight_nodes(spec.grid, spec.beta)
    sym = 0.5 * (hess + np.transpose(hess, (0, 2, 1)))
    eigs = np.linalg.eigvalsh(sym)[:, 0] * weight
    lo, hi = 1, n_nodes if spec.beta >= 1.0 else n_nodes - 1
    profile = eigs.copy()
    profile[0] = eigs[lo]
    if hi < n_nodes:
        profile[hi:] = eigs[hi - 1]
    ok = bool(np.min(eigs[lo:hi]) >= -tol)
    return GridFn(spec.grid, profile), ok


# -- memory rigidity probe -------------------------------------------------------


def rigidity_probe(
    alpha: float,
    u_left: GridFn,
    window,
    fit_degree: int = 0,
    n_eval: int = 200,
) -> float:
    """Sup-norm defect of a polynomial fit to the memory term on a window.

    Psi(t) = int_a^c (t-s)^(alpha-1)/Gamma(alpha) u_left(s) ds is evaluated on
    a fine grid of [c, d] (c = right end of u_left's grid, so the kernel is
    nonsingular) and fitted by a degree fit_degree polynomial in least
    squares. The residual is zero only for u_left identically zero.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"need alpha in (0,1), got {alpha}")
    c, d = float(window[0]), float(window[1])
    grid = u_left.grid
    if not (grid.b <= c < d):
        raise ValueError(f"window [{c}, {d}] must sit right of the data interval")
    if fit_degree < 0:
        raise ValueError("fit_degree must be nonnegative")
    t_eval = np.linspace(c, d, n_eval)
    s_nodes = grid.nodes()
    # exact cell moments of the kernel: shape (n_eval, n_cells)
    gaps_lo = t_eval[:, None] - s_nodes[None, :-1]
    gaps_hi = t_eval[:, None] - s_nodes[None, 1:]
    mom = (gaps_lo**alpha - gaps_hi.clip(min=0.0) ** alpha) / math.gamma(alpha + 1.0)
    psi = mom @ u_left.values[:-1]
    # centered abscissa keeps the Vandermonde fit well conditioned
    tc = (t_eval - 0.5 * (c + d)) / (0.5 * (d - c))
    vand = np.vander(tc, fit_degree + 1)
    coeffs, *_ = np.linalg.lstsq(vand, psi, rcond=None)
    return float(np.max(np.abs(psi - vand @ coeffs)))


def moments(u_left: GridFn, max_k: int) -> np.ndarray:
    """Monomial moments int_a^c (s-a)^k u(s) ds for k = 0..max_k."""
    if max_k < 0:
        raise ValueError("max_k must be nonnegative")
    grid = u_left.grid
    s = grid.nodes() - grid.a
    out = np.empty((max_k + 1, u_left.dim))
    for k in range(max_k + 1):
        cell = (s[1:] ** (k + 1) - s[:-1] ** (k + 1)) / (k + 1)
        out[k] = cell @ u_left.values[:-1]
    return out[:, 0] if u_left.dim == 1 else out


# -- assembled report ------------------------------------------------------------


def _adjoint_profile(spec: ProblemSpec, traj: TrajectoryPair, psi) -> GridFn:
    """Adjoint vector p combining the endpoint weight and the memory term.

    The t=b node is zeroed when alpha < 1 (unbounded kernel weight there)."""
    grid = spec.grid
    x = traj.state(spec.alpha)
    env = running_env(spec, x, traj.u)
    ep = endpoint_env(spec, x.values[0], x.values[-1])
    d1 = eval_profile(spec.d_lagrangian("x"), env, grid.n_nodes)
    weight_beta = _beta_weight_nodes(spec.grid, spec.beta)
    memory = rl_integral_right(GridFn(grid, weight_beta[:, None] * d1), spec.alpha)
    endpoint = eval_vector(spec.d_phi("xb"), ep)
    if psi is not None:
        gb = eval_matrix(spec.d_constraints("xb"), ep)
        endpoint = endpoint - gb.T @ np.asarray(psi, dtype=float)
    gaps = (grid.b - grid.nodes()).clip(min=0.0)
    with np.errstate(divide="ignore"):
        w_alpha = gaps ** (spec.alpha - 1.0) / math.gamma(spec.alpha)
    if spec.alpha < 1.0:
        w_alpha[-1] = 0.0
    return GridFn(grid, w_alpha[:, None] * endpoint[None, :] + memory.values)


def build_report(
    spec: ProblemSpec, traj: TrajectoryPair, legendre_tol: float = DEFAULT_LEGENDRE_TOL
) -> ResidualReport:
    """Evaluate every necessary-condition residual for one candidate."""
    profile, sup = el_residual(spec, traj)
    psi = None
    cone_ok = None
    if spec.constraint_map is not None:
        psi, cone_ok, (res_a, res_b) = extract_multiplier(spec, traj)
    else:
        res_a, res_b = transversality_residuals(spec, traj)
    leg_profile, leg_ok = legendre_check(spec, traj, legendre_tol)
    return ResidualReport(
        el_residual_sup=sup,
        el_residual_profile=profile,
        transversality_a=res_a,
        transversality_b=res_b,
        legendre_min_eig_profile=leg_profile.values[:, 0],
        legendre_ok=leg_ok,
        adjoint_p=_adjoint_profile(spec, traj, psi),
        psi=psi,
        psi_in_cone=cone_ok,
    )
