"""Measured quantities: total variation, L1 metrics, residuals, identity gap.

All functions are pure and read-only over immutable fields and run reports.
Total variation always includes the seam jumps to the far-field states, so
window truncation cannot hide boundary variation.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np

from .core import CellField, InterfaceField, VelocityModel
from .kernels import nonlocal_exponential
from .report import RunReport

if TYPE_CHECKING:  # avoid an import cycle; FluxModel is only a type here
    from .local_reference import FluxModel

# A test function's time support must be covered by at least this many
# snapshot intervals for the space-time quadrature to be meaningful.
MIN_SNAPSHOTS_PER_SUPPORT = 50

_SUPPORT_VANISH_TOL = 1e-14
_DERIV_CHECK_TOL = 1e-6
_DERIV_CHECK_STEP = 1e-5


@dataclass(frozen=True)
class Window:
    """Spatial window for localized L1 measurements."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi) and self.lo < self.hi):
            raise ValueError(f"invalid window [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class TestFunction:
    """A compactly supported C^1 test function phi(t, x).

    ``support`` is the rectangle (t_lo, t_hi, x_lo, x_hi) outside which phi
    vanishes.  Construction samples the boundary neighbourhood to confirm the
    vanishing and cross-checks the supplied derivatives against central
    finite differences.
    """

    eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dt_eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dx_eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    support: tuple[float, float, float, float]

    def __post_init__(self):
        t_lo, t_hi, x_lo, x_hi = self.support
        if not (t_lo < t_hi and x_lo < x_hi):
            raise ValueError(f"invalid support rectangle {self.support}")
        self._check_vanishing()
        self._check_derivatives()

    def _check_vanishing(self):
        t_lo, t_hi, x_lo, x_hi = self.support
        dt_pad, dx_pad = 1e-9 * (t_hi - t_lo), 1e-9 * (x_hi - x_lo)
        t_in = np.linspace(t_lo, t_hi, 9)
        x_in = np.linspace(x_lo, x_hi, 9)
        outside = []
        for t in np.concatenate([t_in, [t_lo - dt_pad, t_hi + dt_pad]]):
            for x in (x_lo - dx_pad, x_hi + dx_pad):
                outside.append((t, x))
        for x in np.concatenate([x_in, [x_lo - dx_pad, x_hi + dx_pad]]):
            for t in (t_lo - dt_pad, t_hi + dt_pad):
                outside.append((t, x))
        for t, x in outside:
            if abs(float(self.eval(t, x))) > _SUPPORT_VANISH_TOL:
                raise ValueError(
                    f"test function does not vanish outside its support at ({t}, {x})"
                )

    def _check_derivatives(self):
        t_lo, t_hi, x_lo, x_hi = self.support
        t = np.linspace(t_lo, t_hi, 9)[1:-1]
        x = np.linspace(x_lo, x_hi, 9)[1:-1]
        tt, xx = np.meshgrid(t, x)
        h = _DERIV_CHECK_STEP
        fd_t = (self.eval(tt + h, xx) - self.eval(tt - h, xx)) / (2 * h)
        fd_x = (self.eval(tt, xx + h) - self.eval(tt, xx - h)) / (2 * h)
        scale = 1.0 + max(
            float(np.max(np.abs(self.dt_eval(tt, xx)))),
            float(np.max(np.abs(self.dx_eval(tt, xx)))),
        )
        err_t = float(np.max(np.abs(fd_t - self.dt_eval(tt, xx))))
        err_x = float(np.max(np.abs(fd_x - self.dx_eval(tt, xx))))
        if max(err_t, err_x) > _DERIV_CHECK_TOL * scale:
            raise ValueError(
                "test-function derivatives disagree with finite differences "
                f"(max error {max(err_t, err_x):.3e})"
            )


def bump_test_function(
    t_center: float,
    t_radius: float,
    x_center: float,
    x_radius: float,
    amplitude: float = 1.0,
) -> TestFunction:
    """Separable polynomial bump amplitude * b(u_t) * b(u_x), b(u) = (1-u^2)^3.

    C^2 with compact support; the derivatives are supplied analytically.
    """

    def b(u):
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) < 1.0
        return np.where(inside, (1.0 - u**2) ** 3, 0.0)

    def db(u):
        u = np.asarray(u, dtype=float)
        inside = np.abs(u) < 1.0
        return np.where(inside, -6.0 * u * (1.0 - u**2) ** 2, 0.0)

    def phi(t, x):
        return amplitude * b((np.asarray(t) - t_center) / t_radius) * b(
            (np.asarray(x) - x_center) / x_radius
        )

    def phi_t(t, x):
        return (
            amplitude
            / t_radius
            * db((np.asarray(t) - t_center) / t_radius)
            * b((np.asarray(x) - x_center) / x_radius)
        )

    def phi_x(t, x):
        return (
            amplitude
            / x_radius
            * b((np.asarray(t) - t_center) / t_radius)
            * db((np.asarray(x) - x_center) / x_radius)
        )

    return TestFunction(
        eval=phi,
        dt_eval=phi_t,
        dx_eval=phi_x,
        support=(t_center - t_radius, t_center + t_radius,
                 x_center - x_radius, x_center + x_radius),
    )


def total_variation_of(values: np.ndarray, left_farfield: float,
                       right_farfield: float) -> float:
    """Sum of absolute jumps including the seams to the far-field states."""
    return float(
        np.sum(np.abs(np.diff(values)))
        + abs(values[0] - left_farfield)
        + abs(values[-1] - right_farfield)
    )


def total_variation(field: CellField | InterfaceField) -> float:
    """Total variation of a stored field, far-field seam jumps included."""
    grid = field.grid
    return total_variation_of(field.values, grid.left_farfield, grid.right_farfield)


def interface_to_cells(w: InterfaceField) -> CellField:
    """Restrict an interface field to cells using each cell's left interface.

    One-sided on purpose: the restriction error is first order in dx, which
    is the consistency order of everything downstream of it.
    """
    return CellField(grid=w.grid, values=w.values[:-1])


def _window_weights(grid, window: Window) -> np.ndarray:
    span = grid.x_max - grid.x_min
    tol = 1e-12 * span
    if window.lo < grid.x_min - tol or window.hi > grid.x_max + tol:
        raise ValueError(
            f"window [{window.lo}, {window.hi}] exceeds the grid domain "
            f"[{grid.x_min}, {grid.x_max}]"
        )
    edges = grid.interfaces
    overlap = np.minimum(edges[1:], window.hi) - np.maximum(edges[:-1], window.lo)
    return np.maximum(overlap, 0.0)


def _compatible_values(a: CellField, b: CellField) -> np.ndarray:
    """Values of ``b`` on ``a``'s grid; ``b`` may be an integer refinement."""
    ga, gb = a.grid, b.grid
    span = ga.x_max - ga.x_min
    if abs(ga.x_min - gb.x_min) > 1e-12 * span or abs(ga.x_max - gb.x_max) > 1e-12 * span:
        raise ValueError("fields live on different domains")
    if gb.n_cells == ga.n_cells:
        return b.values
    if gb.n_cells % ga.n_cells == 0:
        factor = gb.n_cells // ga.n_cells
        return b.values.reshape(ga.n_cells, factor).mean(axis=1)
    raise ValueError(
        f"grids are incompatible: {gb.n_cells} cells is not an integer "
        f"refinement of {ga.n_cells}"
    )


def l1_distance(a: CellField, b: CellField, window: Window) -> float:
    """L1 distance over ``window`` with exact fractional end-cell weights.

    ``b`` may live on an integer refinement of ``a``'s grid; it is then
    cell-averaged down before comparison.
    """
    weights = _window_weights(a.grid, window)
    return float(np.sum(weights * np.abs(a.values - _compatible_values(a, b))))


def _paired_snapshots(report_a: RunReport, report_b: RunReport):
    if len(report_a.snapshots) != len(report_b.snapshots):
        raise ValueError(
            f"snapshot schedules differ: {len(report_a.snapshots)} vs "
            f"{len(report_b.snapshots)} snapshots"
        )
    slack = report_a.dt_used + report_b.dt_used + 1e-12
    for snap_a, snap_b in zip(report_a.snapshots, report_b.snapshots):
        if abs(snap_a.time - snap_b.time) > slack:
            raise ValueError(
                f"snapshot times diverge: {snap_a.time} vs {snap_b.time}"
            )
        yield snap_a, snap_b


def sup_time_l1(report_a: RunReport, report_b: RunReport, window: Window,
                compare: str = "q") -> float:
    """Max-over-snapshots L1 window distance between two runs.

    ``compare="q"`` measures the densities of both runs; ``compare="w"``
    measures report_a's nonlocal term (restricted to cells) against
    report_b's density, which is how a nonlocal term is held against a local
    reference.
    """
    if compare not in ("q", "w"):
        raise ValueError(f"unknown comparison {compare!r}")
    worst = 0.0
    for snap_a, snap_b in _paired_snapshots(report_a, report_b):
        if compare == "w":
            if snap_a.w is None:
                raise ValueError("report_a carries no nonlocal term to compare")
            field_a = interface_to_cells(snap_a.w)
        else:
            field_a = snap_a.q
        worst = max(worst, l1_distance(field_a, snap_b.q, window))
    return worst


def wq_identity_gap(q: CellField, w: InterfaceField, eta: float) -> float:
    """| ||W - q||_L1(domain) - eta * TV(W) | for a kernel output W.

    In the continuum the two sides agree exactly for the exponential kernel;
    the discrete gap is an O(dx/eta) restriction term.
    """
    l1 = float(q.grid.dx * np.sum(np.abs(interface_to_cells(w).values - q.values)))
    return abs(l1 - eta * total_variation(w))


def _midpoint_cells(w_values: np.ndarray) -> np.ndarray:
    return 0.5 * (w_values[:-1] + w_values[1:])


def _check_snapshot_density(report: RunReport, phi: TestFunction):
    t_lo, t_hi = max(phi.support[0], 0.0), phi.support[1]
    times = report.snapshot_times
    if times[0] > 1e-12:
        raise ValueError("weak-form quadrature needs an initial snapshot at t = 0")
    if times[-1] < t_hi - 1e-12:
        raise ValueError(
            f"snapshots end at t = {times[-1]:g} but the test function is "
            f"supported up to t = {t_hi:g}"
        )
    duration = t_hi - t_lo
    # only intervals meeting the support feed the quadrature
    overlapping = (times[1:] > t_lo) & (times[:-1] < t_hi)
    spacing = float(np.max(np.diff(times)[overlapping])) if np.any(overlapping) else 0.0
    if duration > 0 and spacing > duration / MIN_SNAPSHOTS_PER_SUPPORT + 1e-15:
        raise ValueError(
            f"snapshot spacing {spacing:g} is too coarse for a test function "
            f"supported over {duration:g}"
        )


def _spacetime_quadrature(report: RunReport, phi: TestFunction,
                          integrand, initial_integrand) -> float:
    """Midpoint-rule quadrature of a weak form over the report's snapshots.

    ``integrand(t_mid, x, q_mid, w_mid)`` returns the pointwise integrand on
    cell centers; fields are averaged between consecutive snapshots.  The
    initial term uses the t = 0 snapshot.
    """
    _check_snapshot_density(report, phi)
    grid = report.grid
    x = grid.cell_centers
    dx = grid.dx
    total = 0.0
    snaps = report.snapshots
    for left, right in zip(snaps[:-1], snaps[1:]):
        dt = right.time - left.time
        if dt <= 0:
            continue
        t_mid = 0.5 * (left.time + right.time)
        if t_mid >= phi.support[1] or t_mid <= phi.support[0]:
            continue
        q_mid = 0.5 * (left.q.values + right.q.values)
        w_mid = None
        if left.w is not None and right.w is not None:
            w_mid = _midpoint_cells(0.5 * (left.w.values + right.w.values))
        total += dt * dx * float(np.sum(integrand(t_mid, x, q_mid, w_mid)))
    q0 = snaps[0].q.values
    total += dx * float(np.sum(initial_integrand(x, q0)))
    return total


def weak_residual(report: RunReport, velocity: VelocityModel, mode: str,
                  phi: TestFunction) -> float:
    """Absolute space-time weak-form residual of a run against ``phi``.

    ``mode="nonlocal"`` uses the recorded nonlocal term in the flux velocity;
    ``mode="local"`` evaluates the velocity on the density itself.
    """
    if mode not in ("nonlocal", "local"):
        raise ValueError(f"unknown weak-form mode {mode!r}")

    def integrand(t, x, q, w):
        if mode == "nonlocal":
            if w is None:
                raise ValueError("nonlocal weak form needs recorded nonlocal terms")
            speed = velocity.eval(w)
        else:
            speed = velocity.eval(q)
        return phi.dt_eval(t, x) * q + phi.dx_eval(t, x) * speed * q

    def initial(x, q0):
        return phi.eval(0.0, x) * q0

    return abs(_spacetime_quadrature(report, phi, integrand, initial))


def entropy_residual(report: RunReport, flux: "FluxModel", k: float,
                     phi: TestFunction) -> float:
    """Signed Kruzhkov-pair residual; admissibility requires it >= -tolerance.

    Quadrature of |q-k| dphi/dt + sgn(q-k)(f(q)-f(k)) dphi/dx plus the
    initial term with |q0-k|.  ``phi`` must be nonnegative.
    """
    t_lo, t_hi, x_lo, x_hi = phi.support
    tt, xx = np.meshgrid(np.linspace(t_lo, t_hi, 17), np.linspace(x_lo, x_hi, 17))
    if float(np.min(phi.eval(tt, xx))) < -_SUPPORT_VANISH_TOL:
        raise ValueError("entropy residual requires a nonnegative test function")
    f_k = float(flux.f(k))

    def integrand(t, x, q, w):
        sign = np.sign(q - k)
        return np.abs(q - k) * phi.dt_eval(t, x) + sign * (flux.f(q) - f_k) * phi.dx_eval(t, x)

    def initial(x, q0):
        return np.abs(q0 - k) * phi.eval(0.0, x)

    return _spacetime_quadrature(report, phi, integrand, initial)


def transport_residual_w(report: RunReport, velocity: VelocityModel,
                         eta: float) -> float:
    """Residual of the transport equation satisfied by the nonlocal term.

    For downstream exponential runs the nonlocal term obeys

        dW/dt + V(W) dW/dx + (1/eta) * integral_x^inf exp((x-y)/eta)
                                        V'(W) dW/dy W dy = 0.

    The time derivative is a first-order forward difference between
    consecutive snapshots, the space derivative is centered on interior
    interfaces, and the source reuses the O(n) exponential recursion on the
    cell-centered composition V'(W) dW/dx W (which vanishes in the
    far-fields).  Returns the max over snapshot pairs of the spatial L1 norm.
    """
    snaps = report.snapshots
    if len(snaps) < 2:
        raise ValueError("transport residual needs at least two snapshots")
    grid = report.grid
    dx = grid.dx
    worst = 0.0
    source_grid = None
    for left, right in zip(snaps[:-1], snaps[1:]):
        if left.w is None or right.w is None:
            raise ValueError("transport residual needs recorded nonlocal terms")
        dt = right.time - left.time
        if dt <= 0:
            continue
        w = left.w.values
        dw_dt = (right.w.values - left.w.values) / dt
        dw_dx = (w[2:] - w[:-2]) / (2.0 * dx)

        w_cells = _midpoint_cells(w)
        slope_cells = (w[1:] - w[:-1]) / dx
        g = velocity.deriv(w_cells) * slope_cells * w_cells
        if source_grid is None:
            source_grid = dataclasses.replace(grid, left_farfield=0.0, right_farfield=0.0)
        source = nonlocal_exponential(CellField(grid=source_grid, values=g), eta)

        interior = slice(1, grid.n_cells)
        residual = (
            dw_dt[interior]
            + velocity.eval(w[interior]) * dw_dx
            + source.values[interior]
        )
        worst = max(worst, float(dx * np.sum(np.abs(residual))))
    return worst
