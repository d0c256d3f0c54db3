import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from nonlocal_limit import (
    CellField,
    Grid1D,
    KernelSpec,
    interface_to_cells,
    mirror_field,
    nonlocal_constant,
    nonlocal_exponential,
    nonlocal_term,
    reconstruct_density,
    sample_profile,
    total_variation,
)

from conftest import constant_profile, step_profile


def exp_average_quadrature(q, x, eta):
    """Independent adaptive-quadrature oracle for the downstream exponential
    average (1/eta) * integral_x^inf exp((x-y)/eta) q(y) dy."""
    grid = q.grid
    # constant tail beyond the window integrates in closed form
    total = grid.right_farfield * np.exp((x - grid.x_max) / eta)
    if x < grid.x_min:
        piece, _ = quad(
            lambda y: np.exp((x - y) / eta) / eta * grid.left_farfield,
            x, grid.x_min,
        )
        total += piece
    edges = grid.interfaces
    for i in range(grid.n_cells):
        lo = max(edges[i], x)
        hi = edges[i + 1]
        if hi <= lo:
            continue
        piece, _ = quad(
            lambda y, c=q.values[i]: np.exp((x - y) / eta) / eta * c, lo, hi
        )
        total += piece
    return total


def random_field(seed, n_cells=64, span=(0.0, 1.0), hi=2.0):
    rng = np.random.default_rng(seed)
    grid = Grid1D(
        span[0], span[1], n_cells,
        left_farfield=float(rng.uniform(0, hi)),
        right_farfield=float(rng.uniform(0, hi)),
    )
    return CellField(grid=grid, values=rng.uniform(0.0, hi, n_cells))


bounded_values = arrays(
    np.float64,
    st.integers(min_value=2, max_value=48),
    elements=st.floats(min_value=0.0, max_value=4.0, allow_nan=False,
                       allow_infinity=False, width=64),
)
farfields = st.floats(min_value=0.0, max_value=4.0, allow_nan=False)
etas = st.floats(min_value=1e-3, max_value=10.0, allow_nan=False)


class TestKernelSpec:
    def test_rejects_bad_family_and_orientation(self):
        with pytest.raises(ValueError):
            KernelSpec(family="gaussian", eta=0.1)
        with pytest.raises(ValueError):
            KernelSpec(family="exponential", eta=0.1, orientation="sideways")

    @pytest.mark.parametrize("eta", [0.0, -1.0, np.nan])
    def test_rejects_nonpositive_eta(self, eta):
        with pytest.raises(ValueError):
            KernelSpec(family="exponential", eta=eta)


class TestExponential:
    def test_constant_state_is_fixed(self):
        field = sample_profile(constant_profile(0.8), Grid1D(-1.0, 1.0, 32))
        w = nonlocal_exponential(field, eta=0.3)
        np.testing.assert_allclose(w.values, 0.8, rtol=1e-14)

    def test_step_at_minus_eta(self):
        # average of the unit step evaluated one kernel width upstream of the
        # jump: exp(-1), cross-checked against the quadrature oracle
        eta = 0.25
        field = sample_profile(step_profile(0.0), Grid1D(-1.0, 1.0, 8))
        w = nonlocal_exponential(field, eta)
        idx = 3  # interface at -0.25 = -eta
        assert field.grid.interfaces[idx] == pytest.approx(-eta)
        assert w.values[idx] == pytest.approx(np.exp(-1.0), rel=1e-13)
        oracle = exp_average_quadrature(field, -eta, eta)
        assert w.values[idx] == pytest.approx(oracle, rel=1e-11)

    def test_datum_at_half(self, datum_profile):
        # only the rightmost plateau contributes on (1/3, 2/3):
        # W(0.5) = exp((0.5 - 2/3)/eta) = exp(-5/3) for eta = 0.1
        eta = 0.1
        grid = Grid1D(-1.0, 2.0, 18)  # dx = 1/6 aligns 0, 1/3, 1/2 and 2/3
        field = sample_profile(datum_profile, grid)
        w = nonlocal_exponential(field, eta)
        idx = 9
        assert grid.interfaces[idx] == pytest.approx(0.5)
        assert w.values[idx] == pytest.approx(np.exp(-5.0 / 3.0), rel=1e-13)
        oracle = exp_average_quadrature(field, 0.5, eta)
        assert w.values[idx] == pytest.approx(oracle, rel=1e-11)

    @pytest.mark.parametrize("seed", [0, 1])
    @pytest.mark.parametrize("eta", [0.02, 0.17, 1.3])
    def test_recursion_matches_quadrature_oracle_everywhere(self, seed, eta):
        field = random_field(seed)
        w = nonlocal_exponential(field, eta)
        oracle = np.array(
            [exp_average_quadrature(field, x, eta) for x in field.grid.interfaces]
        )
        np.testing.assert_allclose(w.values, oracle, rtol=1e-10)

    def test_eta_below_cell_width_returns_cell_values(self):
        field = random_field(7)
        dx = field.grid.dx
        w = nonlocal_exponential(field, eta=dx / 50.0)
        np.testing.assert_allclose(w.values[:-1], field.values, atol=1e-12)

    def test_rejects_nonpositive_eta(self):
        field = random_field(0)
        with pytest.raises(ValueError):
            nonlocal_exponential(field, 0.0)


class TestConstant:
    def test_constant_state_is_fixed(self):
        field = sample_profile(constant_profile(0.8), Grid1D(-1.0, 1.0, 32))
        w = nonlocal_constant(field, eta=0.3)
        np.testing.assert_allclose(w.values, 0.8, rtol=1e-14)

    def test_step_half_window(self):
        # window [-eta/2, eta/2] splits evenly across the jump
        eta = 0.5
        field = sample_profile(step_profile(0.0), Grid1D(-1.0, 1.0, 8))
        w = nonlocal_constant(field, eta)
        idx = 3  # interface at -0.25 = -eta/2
        assert w.values[idx] == pytest.approx(0.5, abs=1e-14)

    def test_datum_window_split(self, datum_profile):
        # x = 2/3 - eta/2: half the window on the zero plateau, half on the
        # unit plateau
        eta = 1.0 / 6.0
        grid = Grid1D(-1.0, 2.0, 36)  # dx = 1/12
        field = sample_profile(datum_profile, grid)
        w = nonlocal_constant(field, eta)
        idx = 19  # interface at 7/12 = 2/3 - eta/2
        assert grid.interfaces[idx] == pytest.approx(2.0 / 3.0 - eta / 2.0)
        assert w.values[idx] == pytest.approx(0.5, abs=1e-13)

    def test_window_longer_than_domain_uses_farfield(self):
        field = sample_profile(step_profile(0.0), Grid1D(-1.0, 1.0, 16))
        w = nonlocal_constant(field, eta=100.0)
        # almost the whole window sits in the right far-field state 1
        assert w.values[0] == pytest.approx(1.0, abs=0.02)

    def test_rejects_nonpositive_eta(self):
        field = random_field(0)
        with pytest.raises(ValueError):
            nonlocal_constant(field, -0.1)


class TestReconstruction:
    def test_constant_roundtrip(self):
        field = sample_profile(constant_profile(1.3), Grid1D(0.0, 1.0, 16))
        w = nonlocal_exponential(field, eta=0.2)
        back = reconstruct_density(w, eta=0.2)
        np.testing.assert_allclose(back.values, 1.3, rtol=1e-13)

    @pytest.mark.parametrize("eta", [0.005, 0.05, 0.5])
    def test_randomized_roundtrip(self, eta):
        for seed in range(5):
            field = random_field(seed, n_cells=256, hi=1.0)
            w = nonlocal_exponential(field, eta)
            back = reconstruct_density(w, eta)
            assert float(np.max(np.abs(back.values - field.values))) <= 1e-12

    def test_small_eta_limit_returns_left_interface(self):
        field = random_field(3)
        eta = field.grid.dx / 40.0
        w = nonlocal_exponential(field, eta)
        back = reconstruct_density(w, eta)
        np.testing.assert_allclose(back.values, w.values[:-1], atol=1e-12)

    def test_ill_conditioned_eta_raises(self):
        field = random_field(0)
        w = nonlocal_exponential(field, eta=1.0)
        with pytest.raises(ValueError, match="ill-conditioned"):
            reconstruct_density(w, eta=1e18)


class TestOrientation:
    def test_upstream_step_value(self):
        # left-looking average of the unit step at x = +eta: 1 - exp(-1)
        eta = 0.25
        field = sample_profile(step_profile(0.0), Grid1D(-1.0, 1.0, 8))
        w = nonlocal_term(field, KernelSpec("exponential", eta, "upstream"))
        idx = 5  # interface at +0.25
        assert field.grid.interfaces[idx] == pytest.approx(eta)
        assert w.values[idx] == pytest.approx(1.0 - np.exp(-1.0), rel=1e-13)

    @pytest.mark.parametrize("family", ["exponential", "constant"])
    def test_upstream_is_mirrored_downstream(self, family):
        field = random_field(11)
        eta = 0.13
        up = nonlocal_term(field, KernelSpec(family, eta, "upstream"))
        down_mirrored = nonlocal_term(mirror_field(field), KernelSpec(family, eta))
        np.testing.assert_allclose(up.values, down_mirrored.values[::-1], rtol=1e-14)

    def test_interface_to_cells_uses_left_interface(self):
        field = random_field(2)
        w = nonlocal_exponential(field, eta=0.1)
        np.testing.assert_array_equal(interface_to_cells(w).values, w.values[:-1])


@settings(max_examples=40, deadline=None)
@given(values=bounded_values, left=farfields, right=farfields, eta=etas)
@pytest.mark.parametrize("kernel", [nonlocal_exponential, nonlocal_constant])
def test_averaging_bounds(kernel, values, left, right, eta):
    grid = Grid1D(0.0, 1.0, len(values), left_farfield=left, right_farfield=right)
    field = CellField(grid=grid, values=values)
    w = kernel(field, eta)
    lo = min(float(np.min(values)), left, right)
    hi = max(float(np.max(values)), left, right)
    slack = 1e-12 * max(1.0, hi)
    assert float(np.min(w.values)) >= lo - slack
    assert float(np.max(w.values)) <= hi + slack


@settings(max_examples=40, deadline=None)
@given(values=bounded_values, left=farfields, right=farfields, eta=etas)
@pytest.mark.parametrize("kernel", [nonlocal_exponential, nonlocal_constant])
def test_kernel_contracts_total_variation(kernel, values, left, right, eta):
    grid = Grid1D(0.0, 1.0, len(values), left_farfield=left, right_farfield=right)
    field = CellField(grid=grid, values=values)
    w = kernel(field, eta)
    tv_q = total_variation(field)
    assert total_variation(w) <= tv_q * (1.0 + 1e-12) + 1e-12


@settings(max_examples=30, deadline=None)
@given(
    values=bounded_values,
    eta=st.floats(min_value=0.05, max_value=2.0, allow_nan=False),
    a=st.floats(min_value=-2.0, max_value=2.0, allow_nan=False),
    b=st.floats(min_value=-2.0, max_value=2.0, allow_nan=False),
)
def test_exponential_average_is_linear(values, eta, a, b):
    n = len(values)
    rng = np.random.default_rng(n)
    other = rng.uniform(0.0, 4.0, n)
    grid1 = Grid1D(0.0, 1.0, n, left_farfield=0.5, right_farfield=1.5)
    grid2 = Grid1D(0.0, 1.0, n, left_farfield=1.0, right_farfield=0.25)
    combined_grid = Grid1D(
        0.0, 1.0, n,
        left_farfield=a * 0.5 + b * 1.0,
        right_farfield=a * 1.5 + b * 0.25,
    )
    w1 = nonlocal_exponential(CellField(grid=grid1, values=values), eta)
    w2 = nonlocal_exponential(CellField(grid=grid2, values=other), eta)
    combined = CellField(grid=combined_grid, values=a * values + b * other)
    w_combined = nonlocal_exponential(combined, eta)
    np.testing.assert_allclose(
        w_combined.values, a * w1.values + b * w2.values, atol=1e-10, rtol=1e-10
    )


@pytest.mark.parametrize("kernel", [nonlocal_exponential, nonlocal_constant])
def test_cost_scales_linearly(kernel):
    def best_time(n):
        rng = np.random.default_rng(n)
        field = CellField(
            grid=Grid1D(0.0, 1.0, n, right_farfield=1.0),
            values=rng.uniform(0.0, 1.0, n),
        )
        timings = []
        for _ in range(7):
            start = time.perf_counter()
            kernel(field, eta=0.01)
            timings.append(time.perf_counter() - start)
        return min(timings)

    base = best_time(200_000)
    doubled = best_time(400_000)
    assert doubled / base <= 2.5
