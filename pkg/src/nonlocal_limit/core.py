"""Domain geometry, density fields, piecewise-constant profiles and velocity models.

Everything here is immutable after construction (frozen dataclasses, read-only
arrays) so instances can be shared freely across concurrent runs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

# Monotonicity of a velocity model is validated by sampling its derivative.
MODE_CHECK_SAMPLES = 1001
_MODE_CHECK_SLACK = 1e-12


def _as_readonly_array(values, *, name: str, length: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell partition of [x_min, x_max] with constant far-field states.

    Cell i occupies [x_min + i*dx, x_min + (i+1)*dx); interface i+1/2 sits at
    x_min + (i+1)*dx.  The far-field values are the constant continuation of
    the density outside the truncated window.
    """

    x_min: float
    x_max: float
    n_cells: int
    left_farfield: float = 0.0
    right_farfield: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if not self.x_min < self.x_max:
            raise ValueError(f"x_min must be < x_max, got [{self.x_min}, {self.x_max}]")
        if self.n_cells < 2:
            raise ValueError(f"n_cells must be >= 2, got {self.n_cells}")
        if not (np.isfinite(self.left_farfield) and np.isfinite(self.right_farfield)):
            raise ValueError("far-field values must be finite")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_cells

    @property
    def interfaces(self) -> np.ndarray:
        """Positions of the n_cells + 1 interfaces, interface -1/2 first."""
        return np.linspace(self.x_min, self.x_max, self.n_cells + 1)

    @property
    def cell_centers(self) -> np.ndarray:
        edges = self.interfaces
        return 0.5 * (edges[:-1] + edges[1:])


@dataclass(frozen=True)
class CellField:
    """Cell-averaged density values on a Grid1D at one time instant."""

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self,
            "values",
            _as_readonly_array(self.values, name="cell values", length=self.grid.n_cells),
        )


@dataclass(frozen=True)
class InterfaceField:
    """Values sampled at the n_cells + 1 interfaces of a Grid1D.

    Houses nonlocal-term samples; when produced from a density field by a
    unit-mass kernel the values lie between the extremes of that density
    (far-fields included).
    """

    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self,
            "values",
            _as_readonly_array(
                self.values, name="interface values", length=self.grid.n_cells + 1
            ),
        )


@dataclass(frozen=True)
class PiecewiseConstantProfile:
    """A piecewise-constant function on the real line.

    ``levels`` has one more entry than ``breakpoints`` and covers the pieces
    (-inf, b1), [b1, b2), ..., [bk, inf).  Levels are nonnegative, matching
    the admissible initial data of the model.
    """

    breakpoints: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        bp = _as_readonly_array(self.breakpoints, name="breakpoints")
        lv = _as_readonly_array(self.levels, name="levels", length=bp.shape[0] + 1)
        if bp.shape[0] > 0 and not np.all(np.diff(bp) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(lv < 0):
            raise ValueError("levels must be nonnegative")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "levels", lv)

    def value_at(self, x) -> np.ndarray:
        """Pointwise evaluation (right-continuous at breakpoints)."""
        idx = np.searchsorted(self.breakpoints, np.asarray(x, dtype=float), side="right")
        return self.levels[idx]

    def antiderivative(self, x) -> np.ndarray:
        """Exact antiderivative, anchored so that it vanishes at the first
        breakpoint (at 0 for a constant profile)."""
        x = np.asarray(x, dtype=float)
        bp, lv = self.breakpoints, self.levels
        if bp.shape[0] == 0:
            return lv[0] * x
        # integral accumulated at each breakpoint, starting from bp[0]
        seg = lv[1:-1] * np.diff(bp)
        accum = np.concatenate([[0.0], np.cumsum(seg)])
        idx = np.searchsorted(bp, x, side="right")
        anchor = bp[np.maximum(idx - 1, 0)]
        base = accum[np.maximum(idx - 1, 0)]
        return base + self.levels[idx] * (x - anchor)

    def cell_averages(self, edges: np.ndarray) -> np.ndarray:
        """Exact averages over the cells delimited by ``edges``.

        Clamped to the level extremes: the true averages lie there, and the
        clamp removes the cancellation noise of differencing the
        antiderivative on fine grids.
        """
        integral = self.antiderivative(edges)
        averages = np.diff(integral) / np.diff(edges)
        return np.clip(averages, np.min(self.levels), np.max(self.levels))


@dataclass(frozen=True)
class VelocityModel:
    """Velocity law V with its derivative and admissible density range.

    ``mode`` declares the monotonicity on the admissible range: "decreasing"
    (the default modelling assumption, pairs with the downstream kernel
    orientation) or "increasing" (pairs with upstream).  The declared mode is
    checked at construction by sampling ``deriv`` on MODE_CHECK_SAMPLES
    points; a violation is a constructor error.  The recorded Lipschitz
    constant is the largest sampled |deriv|.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]
    admissible_range: tuple[float, float]
    mode: str = "decreasing"
    lipschitz_constant: float = dataclasses.field(init=False, default=np.nan)

    def __post_init__(self):
        s_min, s_max = self.admissible_range
        if not (np.isfinite(s_min) and np.isfinite(s_max) and s_min < s_max):
            raise ValueError(f"invalid admissible_range [{s_min}, {s_max}]")
        if self.mode not in ("decreasing", "increasing"):
            raise ValueError(f"unknown velocity mode {self.mode!r}")
        s = np.linspace(s_min, s_max, MODE_CHECK_SAMPLES)
        d = np.asarray(self.deriv(s), dtype=float)
        v = np.asarray(self.eval(s), dtype=float)
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(v))):
            raise ValueError("velocity model is non-finite on the admissible range")
        slack = _MODE_CHECK_SLACK * max(1.0, np.max(np.abs(d)))
        if self.mode == "decreasing" and np.any(d > slack):
            s_bad = s[np.argmax(d)]
            raise ValueError(
                f"velocity declared decreasing but deriv({s_bad:g}) = {np.max(d):g} > 0"
            )
        if self.mode == "increasing" and np.any(d < -slack):
            s_bad = s[np.argmin(d)]
            raise ValueError(
                f"velocity declared increasing but deriv({s_bad:g}) = {np.min(d):g} < 0"
            )
        object.__setattr__(self, "lipschitz_constant", float(np.max(np.abs(d))))

    def max_abs_speed(self) -> float:
        """Largest |V| on the admissible range (sampled)."""
        s = np.linspace(*self.admissible_range, MODE_CHECK_SAMPLES)
        return float(np.max(np.abs(self.eval(s))))

    def covers(self, lo: float, hi: float) -> bool:
        s_min, s_max = self.admissible_range
        slack = 1e-12 * max(1.0, abs(s_min), abs(s_max))
        return s_min - slack <= lo and hi <= s_max + slack


def linear_velocity(v_max: float = 1.0, s_max: float = 1.0) -> VelocityModel:
    """V(s) = v_max * (1 - s/s_max) on [0, s_max]; the default model."""
    return VelocityModel(
        eval=lambda s: v_max * (1.0 - np.asarray(s, dtype=float) / s_max),
        deriv=lambda s: np.full_like(np.asarray(s, dtype=float), -v_max / s_max),
        admissible_range=(0.0, s_max),
        mode="decreasing",
    )


def constant_velocity(value: float, s_max: float = 1.0) -> VelocityModel:
    """V identically ``value``; the nonlocal coupling is inert."""
    return VelocityModel(
        eval=lambda s: np.full_like(np.asarray(s, dtype=float), value),
        deriv=lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        admissible_range=(0.0, s_max),
        mode="decreasing",
    )


def quadratic_velocity(v_max: float = 1.0, s_max: float = 1.0) -> VelocityModel:
    """V(s) = v_max * (1 - (s/s_max)^2) on [0, s_max]."""
    return VelocityModel(
        eval=lambda s: v_max * (1.0 - (np.asarray(s, dtype=float) / s_max) ** 2),
        deriv=lambda s: -2.0 * v_max * np.asarray(s, dtype=float) / s_max**2,
        admissible_range=(0.0, s_max),
        mode="decreasing",
    )


def linear_increasing_velocity(v_max: float = 1.0, s_max: float = 1.0) -> VelocityModel:
    """V(s) = v_max * (s/s_max - 1) on [0, s_max]; pairs with upstream kernels."""
    return VelocityModel(
        eval=lambda s: v_max * (np.asarray(s, dtype=float) / s_max - 1.0),
        deriv=lambda s: np.full_like(np.asarray(s, dtype=float), v_max / s_max),
        admissible_range=(0.0, s_max),
        mode="increasing",
    )


def default_datum_profile() -> PiecewiseConstantProfile:
    """The reference three-jump datum: 1/2 on (0, 1/3), 0 on (1/3, 2/3), 1 beyond 2/3."""
    return PiecewiseConstantProfile(
        breakpoints=np.array([0.0, 1.0 / 3.0, 2.0 / 3.0]),
        levels=np.array([0.0, 0.5, 0.0, 1.0]),
    )


def sample_profile(profile: PiecewiseConstantProfile, grid: Grid1D) -> CellField:
    """Cell-average ``profile`` onto ``grid``.

    The resulting field lives on a copy of ``grid`` whose far-field states are
    the profile's outermost levels, so the truncation is exact for data that
    are constant outside the window.
    """
    sampled_grid = dataclasses.replace(
        grid,
        left_farfield=float(profile.levels[0]),
        right_farfield=float(profile.levels[-1]),
    )
    return CellField(grid=sampled_grid, values=profile.cell_averages(grid.interfaces))


def total_mass(q: CellField) -> float:
    """Mass dx * sum(q) inside the truncated window only."""
    return float(q.grid.dx * np.sum(q.values))
