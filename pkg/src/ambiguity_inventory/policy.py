"""Region labels, barrier/target curves and the worst-case belief tilt."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .grid import Grid
from .model import ModelParams, from_aux_coordinates, riccati_variance, to_aux_coordinates
from .solver import ValueField


class RegionLabel(IntEnum):
    CONTINUATION = 0
    LOWER = 1
    UPPER = 2


def default_tolerance(field: ValueField) -> float:
    # Jacobi stops with neighbours up to `tol` apart from their final copy, so a
    # difference quotient can sit 2 tol / h1 off its threshold
    return 1e-9 + 2.0 * field.options.tol / field.grid.spec.h1


def classify(field: ValueField, params: ModelParams | None = None, grid: Grid | None = None,
             tol_cls: float | None = None) -> np.ndarray:
    """Label every node; returns an int8 array of ``RegionLabel`` values.

    Lower control where the forward difference is at most -ell, upper control
    where the backward difference is at least u; ties go to the control label.
    """
    params = params or field.params
    grid = grid or field.grid
    tol = default_tolerance(field) if tol_cls is None else tol_cls
    v = field.values
    h1 = grid.spec.h1
    labels = np.zeros(v.shape, dtype=np.int8)
    fwd = (v[:, 1:, :] - v[:, :-1, :]) / h1
    lower = np.zeros(v.shape, dtype=bool)
    upper = np.zeros(v.shape, dtype=bool)
    lower[:, :-1, :] = fwd <= -params.ell + tol
    upper[:, 1:, :] = fwd >= params.uu - tol
    lower[:, 0, :] = True
    upper[:, -1, :] = True
    labels[upper] = RegionLabel.UPPER
    labels[lower] = RegionLabel.LOWER
    return labels


@dataclass(frozen=True)
class BarrierSet:
    """Barrier and target curves indexed by (tau level, m level).

    Absent barriers are -inf (lower) and +inf (upper).
    """
    tau_levels: np.ndarray
    m_levels: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    target: np.ndarray
    delta: float
    T: float
    params: ModelParams
    islands: int = 0

    def S_at(self, tau: float) -> float:
        return riccati_variance(self.params.s, self.params.T - self.tau_levels[self.tau_index(tau)])

    def tau_index(self, tau: float) -> int:
        k = int(round(tau / self.delta))
        if not 0 <= k < len(self.tau_levels) or abs(self.tau_levels[k] - tau) > 1e-9:
            raise ValueError(f"tau={tau} is not a grid level")
        return k

    def at_tau(self, tau: float) -> dict[str, np.ndarray]:
        k = self.tau_index(tau)
        return {"m": self.m_levels, "lower": self.lower[k], "target": self.target[k],
                "upper": self.upper[k]}

    def aux_curves(self, tau: float) -> dict[str, np.ndarray]:
        """Barrier and target curves in the auxiliary coordinates (x1, x2)."""
        k = self.tau_index(tau)
        S = self.S_at(tau)
        return {name: np.stack(to_aux_coordinates(getattr(self, name)[k], self.m_levels,
                                                  S, self.params))
                for name in ("lower", "target", "upper")}

    def plotting_coordinate(self, tau: float, x1, x2) -> np.ndarray:
        """Belief level m = (S / b)(x1 - x2) recovered from auxiliary coordinates."""
        return from_aux_coordinates(np.asarray(x1), np.asarray(x2), self.S_at(tau), self.params)[1]


def extract_barriers(labels: np.ndarray, field: ValueField, grid: Grid | None = None) -> BarrierSet:
    grid = grid or field.grid
    x = grid.x_levels
    is_lower = labels == RegionLabel.LOWER
    is_upper = labels == RegionLabel.UPPER
    xs = x[None, :, None]
    lower = np.where(is_lower, xs, -np.inf).max(axis=1)
    upper = np.where(is_upper, xs, np.inf).min(axis=1)

    # argmin over x with ties toward the smaller |x|: scan in order of |x|
    order = np.argsort(np.abs(x), kind="stable")
    v = field.values[:, order, :]
    target = x[order][np.argmin(v, axis=1)]

    # labels must read L..L C..C U..U along x; anything else is an island
    rank = np.where(is_lower, 0, np.where(is_upper, 2, 1))
    bad = (np.diff(rank, axis=1) < 0).any(axis=1)
    islands = int(bad.sum())
    if islands:
        warnings.warn(f"non-monotone region labels in {islands} (tau, m) rows; "
                      "the mesh may be under-resolved", stacklevel=2)
    return BarrierSet(grid.tau_levels.copy(), grid.m_levels.copy(), lower, upper, target,
                      grid.spec.delta, grid.T, field.params, islands)


def worst_case_drift(field: ValueField, i_x: int, i_m: int, tau: float,
                     grid: Grid | None = None, params: ModelParams | None = None) -> float:
    """gamma * S * (b V_x + S V_m) from central differences at an interior node."""
    grid = grid or field.grid
    params = params or field.params
    if not (0 < i_x < grid.n_x - 1 and 0 < i_m < grid.n_m - 1):
        raise ValueError("worst_case_drift needs an interior node")
    v = field.slice(tau)
    S = riccati_variance(params.s, params.T - tau)
    vx = (v[i_x + 1, i_m] - v[i_x - 1, i_m]) / (2 * grid.spec.h1)
    vm = (v[i_x, i_m + 1] - v[i_x, i_m - 1]) / (2 * grid.spec.h2)
    return params.gamma * S * (params.b * vx + S * vm)


def continuation_width(barriers: BarrierSet, tau: float) -> np.ndarray:
    k = barriers.tau_index(tau)
    return barriers.upper[k] - barriers.lower[k]

