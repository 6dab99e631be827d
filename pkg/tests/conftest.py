import numpy as np
import pytest

from fvc import Grid, GridFn, ProblemSpec, TrajectoryPair, parse


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def classic_spec(n_cells=128, alpha=1.0, beta=1.0):
    """Free-endpoint instance: phi = x(b), L = (x^2 + u^2)/2 on [0, 1]."""
    return ProblemSpec(
        alpha=alpha,
        beta=beta,
        grid=Grid(0.0, 1.0, n_cells),
        dim=1,
        phi=parse("xb1", 1),
        lagrangian=parse("0.5*(x1^2 + u1^2)", 1),
    )


def classic_oracle(grid):
    """Analytic stationary point of classic_spec: x'' = x, x'(0)=0, x'(1)=-1."""
    t = grid.nodes()
    x = -np.cosh(t) / np.sinh(1.0)
    u = -np.sinh(t) / np.sinh(1.0)
    return x, u


def oracle_trajectory(grid):
    x, u = classic_oracle(grid)
    return TrajectoryPair(GridFn(grid, u), np.array([x[0]]))


def zero_trajectory(grid, dim=1):
    return TrajectoryPair(GridFn.constant(grid, np.zeros(dim)), np.zeros(dim))
