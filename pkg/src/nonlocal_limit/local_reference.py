"""Godunov-scheme reference for the local conservation law.

The monotone Godunov flux makes this solver TV-diminishing with an exact
discrete maximum principle, so it serves as the entropy-solution target that
the nonlocal runs are measured against on refined grids.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .core import CellField, VelocityModel
from .diagnostics import total_variation_of
from .errors import NumericalBlowupError
from .report import RunReport, Snapshot

_GOLDEN_TOL = 1e-12
_UNIMODAL_SAMPLES = 2001
_RANGE_SLACK = 1e-12


def _golden_section_max(f, lo: float, hi: float, tol: float = _GOLDEN_TOL) -> float:
    """Argmax of a unimodal f on [lo, hi] to absolute tolerance ``tol``."""
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _validate_unimodal(f, s_range: tuple[float, float], s_star: float):
    s = np.linspace(*s_range, _UNIMODAL_SAMPLES)
    values = np.asarray(f(s), dtype=float)
    slack = _RANGE_SLACK * max(1.0, float(np.max(np.abs(values))))
    rising = s[:-1] < s_star
    diffs = np.diff(values)
    if np.any(diffs[rising] < -slack) or np.any(diffs[~rising] > slack):
        raise ValueError(
            "flux is not unimodal on the admissible range; only velocity "
            "models with single-peaked flux s -> V(s)*s are supported"
        )


def critical_density(velocity: VelocityModel) -> float:
    """Density maximizing the flux V(s)*s on the admissible range.

    Golden-section search to 1e-12 absolute; validates unimodality of the
    flux by sampling and raises on failure.
    """

    def f(s):
        return velocity.eval(s) * np.asarray(s, dtype=float)

    s_star = _golden_section_max(f, *velocity.admissible_range)
    _validate_unimodal(f, velocity.admissible_range, s_star)
    return s_star


@dataclass(frozen=True)
class FluxModel:
    """Flux f(s) = V(s)*s with its precomputed critical density."""

    velocity: VelocityModel
    critical_density: float = dataclasses.field(init=False, default=np.nan)

    def __post_init__(self):
        object.__setattr__(self, "critical_density", critical_density(self.velocity))

    def f(self, s):
        return self.velocity.eval(s) * np.asarray(s, dtype=float)

    def max_wave_speed(self) -> float:
        """Largest |f'| on the admissible range (sampled)."""
        s = np.linspace(*self.velocity.admissible_range, _UNIMODAL_SAMPLES)
        f_prime = self.velocity.eval(s) + s * self.velocity.deriv(s)
        return float(np.max(np.abs(f_prime)))


def _check_in_range(values, flux: FluxModel, what: str):
    s_min, s_max = flux.velocity.admissible_range
    slack = _RANGE_SLACK * max(1.0, abs(s_min), abs(s_max))
    arr = np.asarray(values, dtype=float)
    if float(np.min(arr)) < s_min - slack or float(np.max(arr)) > s_max + slack:
        raise ValueError(
            f"{what} leaves the admissible range [{s_min}, {s_max}]: "
            f"[{float(np.min(arr)):g}, {float(np.max(arr)):g}]"
        )


def _godunov_values(a, b, flux: FluxModel):
    f_a = flux.f(a)
    f_b = flux.f(b)
    s_star = flux.critical_density
    f_star = float(flux.f(s_star))
    decreasing_max = np.where(
        (np.asarray(b) <= s_star) & (s_star <= np.asarray(a)),
        f_star,
        np.maximum(f_a, f_b),
    )
    return np.where(np.asarray(a) <= np.asarray(b), np.minimum(f_a, f_b), decreasing_max)


def godunov_flux(a, b, flux: FluxModel):
    """Entropy-consistent interface flux between left state a and right state b.

    Closed form from the critical density: the minimum of a unimodal f over
    [a, b] sits at an endpoint, the maximum over [b, a] at an endpoint or at
    the critical density.  Accepts scalars or arrays.
    """
    _check_in_range(a, flux, "left state")
    _check_in_range(b, flux, "right state")
    result = _godunov_values(a, b, flux)
    if np.ndim(result) == 0:
        return float(result)
    return result


def solve_local(q0: CellField, flux: FluxModel, cfl: float, t_end: float,
                snapshot_times=()) -> RunReport:
    """Godunov integration of the local law; same report contract as the
    nonlocal solver with the nonlocal-term fields omitted."""
    if not (0.0 < cfl <= 1.0):
        raise ValueError(f"cfl must lie in (0, 1], got {cfl}")
    if not (np.isfinite(t_end) and t_end > 0):
        raise ValueError(f"t_end must be positive, got {t_end}")
    grid = q0.grid
    _check_in_range(q0.values, flux, "initial data")
    _check_in_range([grid.left_farfield, grid.right_farfield], flux, "far-field state")

    wave_speed = flux.max_wave_speed()
    if wave_speed == 0.0:
        dt = t_end
    else:
        dt = cfl * grid.dx / wave_speed
        dt = t_end / max(1, int(np.ceil(t_end / dt - 1e-9)))
    n_steps = max(1, int(round(t_end / dt)))
    lam = dt / grid.dx

    times = np.array(snapshot_times, dtype=float)
    if times.size == 0:
        wanted = np.array([n_steps], dtype=int)
    else:
        wanted = np.clip(np.rint(times / dt).astype(int), 0, n_steps)

    snapshots: list[Snapshot] = []
    tv_q = np.empty(n_steps + 1)
    mass = np.empty(n_steps + 1)
    boundary_flux = 0.0
    q_min = np.inf
    q_max = -np.inf

    values = q0.values.copy()
    for step in range(n_steps + 1):
        tv_q[step] = total_variation_of(values, grid.left_farfield, grid.right_farfield)
        mass[step] = grid.dx * float(np.sum(values))
        q_min = min(q_min, float(np.min(values)))
        q_max = max(q_max, float(np.max(values)))
        for _ in range(int(np.sum(wanted == step))):
            snapshots.append(
                Snapshot(time=step * dt, q=CellField(grid=grid, values=values), w=None)
            )
        if step == n_steps:
            break
        left_states = np.concatenate([[grid.left_farfield], values])
        right_states = np.concatenate([values, [grid.right_farfield]])
        fluxes = _godunov_values(left_states, right_states, flux)
        boundary_flux += dt * (fluxes[-1] - fluxes[0])
        values = values - lam * np.diff(fluxes)
        if not np.all(np.isfinite(values)):
            raise NumericalBlowupError(
                f"non-finite density after step {step + 1} (t = {(step + 1) * dt:g})",
                step=step + 1,
            )

    return RunReport(
        dt_used=dt,
        n_steps=n_steps,
        snapshots=tuple(snapshots),
        tv_q_series=tv_q,
        tv_w_series=None,
        mass_series=mass,
        boundary_flux_integral=boundary_flux,
        q_min_overall=q_min,
        q_max_overall=q_max,
    )
