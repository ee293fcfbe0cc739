import numpy as np
import pytest

from cpslab.pathgen import SamplePath, TimeGrid


def make_path(values, horizon=1.0, seed=0, tag="hand"):
    values = np.asarray(values, dtype=float)
    return SamplePath(TimeGrid(horizon, len(values) - 1), values, seed, tag)


def linear_path(knots, n_steps=1024, horizon=1.0, seed=0):
    """Piecewise-linear path through (t, x) knots, sampled on a uniform grid."""
    grid = TimeGrid(horizon, n_steps)
    ts, xs = zip(*knots)
    return SamplePath(grid, np.interp(grid.times, ts, xs), seed, "hand")


@pytest.fixture
def path_factory():
    return make_path
