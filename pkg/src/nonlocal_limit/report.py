"""Run records shared by the nonlocal and local solvers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CellField, Grid1D, InterfaceField


@dataclass(frozen=True)
class Snapshot:
    """State captured at the completed step nearest a requested time.

    ``w`` is None for local runs, which carry no nonlocal term.
    """

    time: float
    q: CellField
    w: InterfaceField | None


def _readonly(series, n_entries: int, name: str) -> np.ndarray:
    arr = np.array(series, dtype=float, copy=True)
    if arr.shape != (n_entries,):
        raise ValueError(f"{name} must have one entry per step plus the initial state")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RunReport:
    """Time series and snapshots for one solver run.

    Per-step series carry n_steps + 1 entries (initial state included).  The
    boundary flux integral accumulates the net outflow through the window
    edges, so mass(T) - mass(0) = -boundary_flux_integral up to rounding.
    The overall q extremes cover every step, not only the snapshots.
    """

    dt_used: float
    n_steps: int
    snapshots: tuple[Snapshot, ...]
    tv_q_series: np.ndarray
    tv_w_series: np.ndarray | None
    mass_series: np.ndarray
    boundary_flux_integral: float
    q_min_overall: float
    q_max_overall: float

    def __post_init__(self):
        n = self.n_steps + 1
        object.__setattr__(self, "tv_q_series", _readonly(self.tv_q_series, n, "tv_q_series"))
        object.__setattr__(self, "mass_series", _readonly(self.mass_series, n, "mass_series"))
        if self.tv_w_series is not None:
            object.__setattr__(
                self, "tv_w_series", _readonly(self.tv_w_series, n, "tv_w_series")
            )
        if not self.snapshots:
            raise ValueError("a run report needs at least one snapshot")

    @property
    def grid(self) -> Grid1D:
        return self.snapshots[0].q.grid

    @property
    def snapshot_times(self) -> np.ndarray:
        return np.array([snap.time for snap in self.snapshots])

    def final_q(self) -> CellField:
        return self.snapshots[-1].q
