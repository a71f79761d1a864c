"""Uniform time-state mesh in (tau, x, m) with tau = T - t."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams

_MESH_TOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    x_lo: float = -30.0
    x_hi: float = 30.0
    h1: float = 0.5
    h2: float = 0.25
    delta: float = 0.1


def _steps(lo: float, hi: float, h: float, what: str) -> int:
    if not hi > lo:
        raise ValueError(f"{what}: lower bound {lo} must be below upper bound {hi}")
    if not h > 0:
        raise ValueError(f"{what}: step must be positive, got {h}")
    ratio = (hi - lo) / h
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > _MESH_TOL:
        raise ValueError(f"{what}: ({hi} - {lo}) / {h} = {ratio!r} is not an integer")
    return n


@dataclass(frozen=True)
class Grid:
    spec: GridSpec
    T: float
    m_lo: float
    m_hi: float
    n_tau: int = field(init=False)
    n_x: int = field(init=False)
    n_m: int = field(init=False)

    def __post_init__(self):
        sp = self.spec
        if not sp.x_lo < 0 < sp.x_hi:
            raise ValueError("the x range must contain the target level 0 strictly inside")
        object.__setattr__(self, "n_x", _steps(sp.x_lo, sp.x_hi, sp.h1, "x") + 1)
        object.__setattr__(self, "n_m", _steps(self.m_lo, self.m_hi, sp.h2, "m") + 1)
        object.__setattr__(self, "n_tau", _steps(0.0, self.T, sp.delta, "tau") + 1)

    # levels are built by multiplication so they never drift from lo + k h
    @property
    def tau_levels(self) -> np.ndarray:
        return np.arange(self.n_tau) * self.spec.delta

    @property
    def x_levels(self) -> np.ndarray:
        return self.spec.x_lo + np.arange(self.n_x) * self.spec.h1

    @property
    def m_levels(self) -> np.ndarray:
        return self.m_lo + np.arange(self.n_m) * self.spec.h2

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_tau, self.n_x, self.n_m)

    @property
    def size(self) -> int:
        return self.n_tau * self.n_x * self.n_m

    def flat_index(self, i_tau, i_x, i_m):
        return (np.asarray(i_tau) * self.n_x + i_x) * self.n_m + i_m

    def unflat_index(self, k):
        k = np.asarray(k)
        i_m = k % self.n_m
        rest = k // self.n_m
        return rest // self.n_x, rest % self.n_x, i_m

    def neighbor(self, i_x: int, i_m: int, dx: int, dm: int) -> tuple[int, int] | None:
        """Index of (i_x + dx, i_m + dm), or None off the mesh (no wraparound)."""
        j_x, j_m = i_x + dx, i_m + dm
        if 0 <= j_x < self.n_x and 0 <= j_m < self.n_m:
            return j_x, j_m
        return None

    def tau_index(self, tau: float) -> int:
        k = int(round(tau / self.spec.delta))
        if abs(k * self.spec.delta - tau) > 1e-9 or not 0 <= k < self.n_tau:
            raise ValueError(f"tau={tau} is not a grid level")
        return k

    def nearest_m_index(self, m: float) -> int:
        k = int(round((m - self.m_lo) / self.spec.h2))
        return min(max(k, 0), self.n_m - 1)


def build_grid(spec: GridSpec, params: ModelParams) -> Grid:
    grid = Grid(spec, params.T, params.m_lo, params.m_hi)
    report = validate_ratio(spec, params, scan_stencils=False)
    if not report.in_suggested_interval and not report.no_learning:
        warnings.warn(report.summary(), stacklevel=2)
    return grid


@dataclass
class RatioReport:
    ratio: float
    interval: tuple[float, float] | None
    in_suggested_interval: bool
    no_learning: bool
    worst_negative_entry: float | None = None
    worst_clamped_mass: float | None = None
    clamped_nodes: int | None = None

    def summary(self) -> str:
        if self.no_learning:
            return "no-learning mode (s = 0): ratio constraint vacuous"
        lo, hi = self.interval
        msg = (f"h1/h2 = {self.ratio:g} is {'inside' if self.in_suggested_interval else 'outside'}"
               f" the suggested interval ({lo:g}, {hi:g})")
        if self.worst_clamped_mass is not None:
            msg += (f"; worst negative stencil entry {self.worst_negative_entry:.3g},"
                    f" worst clamped mass {self.worst_clamped_mass:.3g}"
                    f" at {self.clamped_nodes} clamped (tau, m) nodes")
        return msg

    def as_dict(self) -> dict[str, object]:
        return {
            "ratio": self.ratio,
            "interval": self.interval,
            "in_suggested_interval": self.in_suggested_interval,
            "no_learning": self.no_learning,
            "worst_negative_entry": self.worst_negative_entry,
            "worst_clamped_mass": self.worst_clamped_mass,
            "clamped_nodes": self.clamped_nodes,
        }


def validate_ratio(spec: GridSpec, params: ModelParams, *, scan_stencils: bool = True,
                   mode: str = "positive-corrected") -> RatioReport:
    """Check h1/h2 against the interval (s / (b (1 + s T)), s / b) and, optionally,
    measure how much negative stencil mass the clamping removes on the mesh."""
    ratio = spec.h1 / spec.h2
    if params.s == 0:
        report = RatioReport(ratio, None, False, True)
    else:
        lo = params.s / (params.b * (1.0 + params.s * params.T))
        hi = params.s / params.b
        report = RatioReport(ratio, (lo, hi), lo < ratio < hi, False)
    if scan_stencils:
        from .solver import slice_stencils

        grid = Grid(spec, params.T, params.m_lo, params.m_hi)
        worst_neg, worst_mass, count = 0.0, 0.0, 0
        for k in range(1, grid.n_tau):
            st = slice_stencils(grid, params, grid.tau_levels[k], mode)
            # belief-boundary rows are mirrored, never stepped
            raw, mass = st.raw[:, 1:-1], st.clamped_mass[1:-1]
            worst_neg = min(worst_neg, float(raw.min()))
            worst_mass = max(worst_mass, float(mass.max()))
            count += int((mass > 0).sum())
        report.worst_negative_entry = worst_neg
        report.worst_clamped_mass = worst_mass
        report.clamped_nodes = count
    return report
