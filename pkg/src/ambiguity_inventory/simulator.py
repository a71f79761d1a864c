"""Monte-Carlo simulation of the filtered inventory (X, M, S) under a barrier policy.

Every path draws its normals from its own generator seeded by (seed, path
index), so results do not depend on how paths are blocked.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NumericalError
from .model import ModelParams
from .policy import BarrierSet

_BLOCK = 2048


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    n_paths: int = 10_000
    seed: int = 0
    controls_enabled: bool = True
    ground_truth_mode: bool = False
    reflect: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")


@dataclass(frozen=True)
class PathRecord:
    t: np.ndarray
    x: np.ndarray
    m: np.ndarray
    S: np.ndarray
    cumulative_holding_cost: np.ndarray
    cumulative_lower_control: np.ndarray
    cumulative_upper_control: np.ndarray
    discounted_total_cost: np.ndarray

    COLUMNS = ("t", "x", "m", "S", "holding", "lower_control", "upper_control", "total")

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.t, self.x, self.m, self.S, self.cumulative_holding_cost,
                                self.cumulative_lower_control, self.cumulative_upper_control,
                                self.discounted_total_cost])


@dataclass(frozen=True)
class BatchResult:
    """Per-path totals plus (x, m, X1 - X2) at the requested observation times."""
    total: np.ndarray
    holding: np.ndarray
    lower_control: np.ndarray
    upper_control: np.ndarray
    theta: np.ndarray
    obs_times: np.ndarray
    obs_x: np.ndarray
    obs_m: np.ndarray
    obs_gap: np.ndarray


def _n_steps(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"horizon {T} is not a multiple of dt={dt}")
    return n


def _policy_tables(barriers: BarrierSet | None, params: ModelParams, controls: bool):
    if controls:
        if barriers is None:
            raise ValueError("controls are enabled but no barriers were given")
        if abs(barriers.T - params.T) > 1e-12:
            raise ValueError("barrier horizon does not match the model horizon")
        lower = np.ascontiguousarray(barriers.lower, dtype=float)
        upper = np.ascontiguousarray(barriers.upper, dtype=float)
        return lower, upper, barriers.delta, float(barriers.m_levels[0]), \
            float(barriers.m_levels[1] - barriers.m_levels[0])
    empty = np.full((1, 1), -np.inf), np.full((1, 1), np.inf)
    return empty[0], empty[1], 1.0, 0.0, 1.0


def _path_normals(seed: int, index: int, n_steps: int, ground_truth: bool):
    rng = np.random.default_rng((seed, index))
    theta_z = rng.standard_normal() if ground_truth else 0.0
    return theta_z, rng.standard_normal(n_steps)


def simulate_batch(x0: float, m0: float, barriers: BarrierSet | None, params: ModelParams,
                   cfg: SimConfig, obs_times=()) -> BatchResult:
    n_steps = _n_steps(params.T, cfg.dt)
    obs_times = np.asarray(obs_times, dtype=float)
    obs_steps = np.array([_n_steps(t, cfg.dt) if t > 0 else 0 for t in obs_times],
                         dtype=np.int64)
    if np.any(np.diff(obs_steps) < 0) or np.any(obs_steps > n_steps):
        raise ValueError("observation times must be increasing and within the horizon")
    if cfg.ground_truth_mode and params.s <= 0:
        raise ValueError("ground-truth mode needs a positive prior variance s")
    if not params.m_lo <= m0 <= params.m_hi:
        raise ValueError(f"m0={m0} outside [{params.m_lo}, {params.m_hi}]")
    lower, upper, delta, grid_m_lo, h2 = _policy_tables(barriers, params, cfg.controls_enabled)

    n = cfg.n_paths
    K = len(obs_steps)
    out = {k: np.empty(n) for k in ("total", "hold", "lctl", "uctl", "theta")}
    obs = {k: np.empty((n, K)) for k in ("x", "m", "gap")}
    no_record = np.empty((0, 8))
    for start in range(0, n, _BLOCK):
        stop = min(start + _BLOCK, n)
        z = np.empty((stop - start, n_steps))
        theta = np.empty(stop - start)
        for r, i in enumerate(range(start, stop)):
            tz, z[r] = _path_normals(cfg.seed, i, n_steps, cfg.ground_truth_mode)
            theta[r] = m0 + math.sqrt(params.s) * tz
        blk = slice(start, stop)
        status = _kernels.simulate_block(
            z, theta, float(x0), float(m0), params.a, params.b, params.s, params.rho,
            params.ell, params.uu, params.c_lo, params.c_hi, cfg.dt,
            params.m_lo, params.m_hi, cfg.reflect, cfg.controls_enabled, cfg.ground_truth_mode,
            lower, upper, delta, params.T, grid_m_lo, h2,
            obs_steps, obs["x"][blk], obs["m"][blk], obs["gap"][blk],
            out["hold"][blk], out["lctl"][blk], out["uctl"][blk], out["total"][blk],
            no_record)
        if status >= 0:
            raise NumericalError(f"ill-posed policy (lower barrier >= upper barrier) met by "
                                 f"path {start + status}")
        out["theta"][blk] = theta
    return BatchResult(out["total"], out["hold"], out["lctl"], out["uctl"], out["theta"],
                       obs_times, obs["x"], obs["m"], obs["gap"])


def simulate_path(barriers: BarrierSet | None, params: ModelParams, cfg: SimConfig,
                  x0: float = 0.0, m0: float | None = None, path_index: int = 0) -> PathRecord:
    """Full time series of one path. ``path_index`` picks the same noise
    substream that path would get inside a batch."""
    m0 = params.m0 if m0 is None else m0
    if not params.m_lo <= m0 <= params.m_hi:
        raise ValueError(f"m0={m0} outside [{params.m_lo}, {params.m_hi}]")
    if cfg.ground_truth_mode and params.s <= 0:
        raise ValueError("ground-truth mode needs a positive prior variance s")
    n_steps = _n_steps(params.T, cfg.dt)
    tz, z = _path_normals(cfg.seed, path_index, n_steps, cfg.ground_truth_mode)
    return _single(z, tz, x0, m0, barriers, params, cfg)


def _single(z, tz, x0, m0, barriers, params, cfg) -> PathRecord:
    lower, upper, delta, grid_m_lo, h2 = _policy_tables(barriers, params, cfg.controls_enabled)
    n_steps = z.size
    rec = np.empty((n_steps + 1, 8))
    scratch = [np.empty(1) for _ in range(4)]
    no_obs = np.empty((1, 0))
    status = _kernels.simulate_block(
        z[None, :], np.array([m0 + math.sqrt(params.s) * tz]), float(x0), float(m0),
        params.a, params.b, params.s, params.rho, params.ell, params.uu, params.c_lo,
        params.c_hi, cfg.dt, params.m_lo, params.m_hi, cfg.reflect, cfg.controls_enabled,
        cfg.ground_truth_mode, lower, upper, delta, params.T, grid_m_lo, h2,
        np.empty(0, dtype=np.int64), no_obs, no_obs.copy(), no_obs.copy(), *scratch, rec)
    if status >= 0:
        raise NumericalError("ill-posed policy (lower barrier >= upper barrier)")
    return PathRecord(*rec.T.copy())


def monte_carlo_cost(x0: float, m0: float, barriers: BarrierSet | None, params: ModelParams,
                     cfg: SimConfig) -> tuple[float, float]:
    """Sample mean and standard error of the discounted total cost."""
    if cfg.n_paths < 1000:
        raise ValueError("monte_carlo_cost needs at least 1000 paths")
    total = simulate_batch(x0, m0, barriers, params, cfg).total
    return float(total.mean()), float(total.std(ddof=1) / math.sqrt(total.size))
