import numpy as np
import pytest

from nonlocal_limit import (
    Grid1D,
    PiecewiseConstantProfile,
    linear_velocity,
    default_datum_profile,
    sample_profile,
)


@pytest.fixture(scope="session")
def datum_profile():
    return default_datum_profile()


@pytest.fixture(scope="session")
def default_velocity():
    return linear_velocity()


def aligned_datum_field(n_cells=90):
    """The reference datum sampled on [-1, 2] with breakpoint-aligned cells
    (n_cells divisible by 9 aligns 0, 1/3 and 2/3 with interfaces)."""
    assert n_cells % 9 == 0
    grid = Grid1D(x_min=-1.0, x_max=2.0, n_cells=n_cells)
    return sample_profile(default_datum_profile(), grid)


def constant_profile(level):
    return PiecewiseConstantProfile(breakpoints=np.array([]), levels=np.array([level]))


def step_profile(position=0.0, left=0.0, right=1.0):
    return PiecewiseConstantProfile(
        breakpoints=np.array([position]), levels=np.array([left, right])
    )
