"""Markov chain approximation of the ambiguity-adjusted singular control problem.

Slices are marched in tau = T - t. Inside a slice the Bellman operator is
iterated with Jacobi sweeps until the sup-norm change drops below ``tol``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import NumericalError
from .grid import Grid, GridSpec, build_grid
from .model import ModelParams, holding_cost, riccati_variance

MODES = ("positive-corrected", "paper-verbatim")

# (dx, dm) in grid steps; the last entry regresses to the previous tau slice
DIRECTIONS = ("x+", "x-", "m+", "m-", "++", "--", "tau")
OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (0, 0))

# entries this small relative to the row total are rounding noise, not clamping
_ZERO_TOL = 1e-12


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"unknown stencil mode {mode!r}; expected one of {MODES}")


def stencil_rates(m, S, params: ModelParams, spec: GridSpec, mode: str) -> np.ndarray:
    """Unnormalized transition rates, shape (7,) + shape(m)."""
    _check_mode(mode)
    m = np.asarray(m, dtype=float)
    b, h1, h2 = params.b, spec.h1, spec.h2
    drift = params.a - m * b
    cross = b * S / (h1 * h2)
    if mode == "positive-corrected":
        ax = b * b / (2 * h1 * h1) - cross / 2
        am = S * S / (2 * h2 * h2) - cross / 2
        t_rate = 1.0 / spec.delta
    else:
        ax = b * b / (2 * h1 * h1) - cross
        am = S * S / (2 * h2 * h2) - cross
        t_rate = 2.0 / spec.delta
    diag = cross / 2
    ones = np.ones_like(m)
    return np.stack([
        ax + np.maximum(drift, 0.0) / h1,
        ax + np.maximum(-drift, 0.0) / h1,
        am * ones,
        am * ones,
        diag * ones,
        diag * ones,
        t_rate * ones,
    ])


def _clamp(rates: np.ndarray):
    scale = np.abs(rates).sum(axis=0)
    rates = np.where(np.abs(rates) <= _ZERO_TOL * scale, 0.0, rates)
    neg = np.maximum(-rates, 0.0).sum(axis=0)
    kept = np.maximum(rates, 0.0)
    total = kept.sum(axis=0)
    return kept / total, 1.0 / total, neg / total, rates / total


@dataclass(frozen=True)
class Stencil:
    """Transition law of the approximating chain at one node.

    ``probs`` follows ``DIRECTIONS``; ``raw`` is the pre-clamp row scaled by the
    same interval, so its negative entries show what clamping removed.
    """
    probs: np.ndarray
    dt: float
    clamped_mass: float
    raw: np.ndarray
    S: float

    def as_dict(self) -> dict[str, float]:
        return dict(zip(DIRECTIONS, map(float, self.probs)))


@dataclass(frozen=True)
class SliceStencils:
    tau: float
    S: float
    probs: np.ndarray          # (7, n_m)
    dt: np.ndarray             # (n_m,)
    clamped_mass: np.ndarray   # (n_m,)
    raw: np.ndarray            # (7, n_m)


def slice_stencils(grid: Grid, params: ModelParams, tau: float,
                   mode: str = "positive-corrected") -> SliceStencils:
    # every node in an m-row shares the stencil: coefficients do not depend on x
    S = riccati_variance(params.s, params.T - tau)
    rates = stencil_rates(grid.m_levels, S, params, grid.spec, mode)
    probs, dt, mass, raw = _clamp(rates)
    return SliceStencils(float(tau), float(S), probs, dt, mass, raw)


def continuation_stencil(i_x: int, i_m: int, tau: float, grid: Grid, params: ModelParams,
                         mode: str = "positive-corrected") -> Stencil:
    if not 0 <= i_x < grid.n_x:
        raise IndexError(f"i_x={i_x} outside the mesh")
    if not 0 < i_m < grid.n_m - 1:
        raise ValueError("continuation stencils are defined at interior belief levels only")
    S = riccati_variance(params.s, params.T - tau)
    rates = stencil_rates(grid.m_levels[i_m], S, params, grid.spec, mode)
    probs, dt, mass, raw = _clamp(rates)
    return Stencil(probs, float(dt), float(mass), raw, float(S))


def upwind_gradient_pair(vslice: np.ndarray, i_x: int, i_m: int, tau: float,
                         grid: Grid, params: ModelParams) -> tuple[float, float]:
    """Positive part of the forward combined difference and negative part of the
    backward one, b dV/dx + S dV/dm, as nonnegative magnitudes.

    At mesh edges the missing neighbour is replaced by the node itself, which
    zeroes that one-sided difference.
    """
    S = riccati_variance(params.s, params.T - tau)
    h1, h2 = grid.spec.h1, grid.spec.h2
    v0 = vslice[i_x, i_m]
    xp = vslice[i_x + 1, i_m] if i_x + 1 < grid.n_x else v0
    xm = vslice[i_x - 1, i_m] if i_x > 0 else v0
    mp = vslice[i_x, i_m + 1] if i_m + 1 < grid.n_m else v0
    mm = vslice[i_x, i_m - 1] if i_m > 0 else v0
    fwd = params.b * (xp - v0) / h1 + S * (mp - v0) / h2
    bwd = params.b * (v0 - xm) / h1 + S * (v0 - mm) / h2
    return max(fwd, 0.0), max(-bwd, 0.0)


@dataclass(frozen=True)
class TiltedStencil:
    """Tilted law: T-hat at the node equals ``beta * sum(qbar V) + f * dt_q``."""
    qbar: np.ndarray
    dt_q: float
    beta: float
    kappa: np.ndarray


def tilted_stencil(vslice: np.ndarray, i_x: int, i_m: int, tau: float, grid: Grid,
                   params: ModelParams, mode: str = "positive-corrected") -> TiltedStencil:
    st = continuation_stencil(i_x, i_m, tau, grid, params, mode)
    dp, dm = upwind_gradient_pair(vslice, i_x, i_m, tau, grid, params)
    half = 0.5 * params.gamma * st.S * (dp + dm)
    kx, km = half * params.b / grid.spec.h1, half * st.S / grid.spec.h2
    kappa = np.zeros(7)
    if dp > 0:
        kappa[0], kappa[2] = kx, km
    if dm > 0:
        kappa[1], kappa[3] = kx, km
    e = math.exp(-params.rho * st.dt)
    qsum = kappa.sum()
    qbar = (e * st.probs + st.dt * kappa) / (e + st.dt * qsum)
    return TiltedStencil(qbar, st.dt / (1.0 + st.dt * qsum),
                         (e + st.dt * qsum) / (1.0 + st.dt * qsum), kappa)


@dataclass(frozen=True)
class _SliceOperator:
    probs: np.ndarray
    dt: np.ndarray
    disc: np.ndarray
    fx: np.ndarray
    S: float

    @classmethod
    def build(cls, grid: Grid, params: ModelParams, tau: float, mode: str):
        st = slice_stencils(grid, params, tau, mode)
        return cls(np.ascontiguousarray(st.probs), st.dt, np.exp(-params.rho * st.dt),
                   np.asarray(holding_cost(grid.x_levels, params), dtype=float), st.S)

    def sweep(self, vo, vn, prev, grid: Grid, params: ModelParams, tilted: bool) -> float:
        return _kernels.jacobi_sweep(
            vo, vn, prev, self.probs, self.dt, self.disc, self.fx,
            grid.spec.h1, grid.spec.h2, params.b, self.S, params.gamma,
            params.ell, params.uu, tilted)


def _apply(prev_slice, iterate, tau, grid, params, mode, tilted):
    prev = np.ascontiguousarray(prev_slice, dtype=float)
    vo = np.ascontiguousarray(iterate, dtype=float)
    if prev.shape != (grid.n_x, grid.n_m) or vo.shape != prev.shape:
        raise ValueError(f"slices must have shape {(grid.n_x, grid.n_m)}")
    if grid.n_x < 3 or grid.n_m < 3:
        raise ValueError("the operator needs at least three levels in x and in m")
    out = np.empty_like(vo)
    op = _SliceOperator.build(grid, params, tau, mode)
    res = op.sweep(vo, out, prev, grid, params, tilted)
    if not math.isfinite(res):
        _raise_nonfinite(out, tau, grid)
    return out


def bellman_apply(prev_slice, iterate, tau, grid, params, mode="positive-corrected"):
    """One application of T: min of the continuation, lower-control and
    upper-control branches, with belief-boundary mirroring."""
    return _apply(prev_slice, iterate, tau, grid, params, mode, tilted=False)


def bellman_apply_q(prev_slice, iterate, tau, grid, params, mode="positive-corrected"):
    """One application of T-hat, the operator whose continuation branch uses the
    tilted probabilities. It has the same fixed points as T."""
    return _apply(prev_slice, iterate, tau, grid, params, mode, tilted=True)


def _raise_nonfinite(vslice, tau, grid):
    bad = np.argwhere(~np.isfinite(vslice))[0]
    raise NumericalError(
        f"non-finite value at tau={tau:g}, x={grid.x_levels[bad[0]]:g}, "
        f"m={grid.m_levels[bad[1]]:g}")


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-8
    max_inner_iters: int = 10_000
    mode: str = "positive-corrected"
    clamp_limit: float = 0.05
    clamp_action: str = "warn"      # or "abort"
    operator: str = "T"             # iterate T or the tilted "T-hat"

    def __post_init__(self):
        _check_mode(self.mode)
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be at least 1")
        if self.clamp_action not in ("warn", "abort"):
            raise ValueError("clamp_action must be 'warn' or 'abort'")
        if self.operator not in ("T", "T-hat"):
            raise ValueError("operator must be 'T' or 'T-hat'")


@dataclass(frozen=True)
class ValueField:
    grid: Grid
    params: ModelParams
    values: np.ndarray                      # (n_tau, n_x, n_m)
    options: SolveOptions = field(default_factory=SolveOptions)
    sweeps: np.ndarray | None = None        # Jacobi sweeps used per slice
    residuals: np.ndarray | None = None     # final sup-norm change per slice
    clamped_mass: np.ndarray | None = None  # worst clamped mass per slice

    def slice(self, tau: float) -> np.ndarray:
        return self.values[self.grid.tau_index(tau)]

    def at(self, tau: float, x: float, m: float) -> float:
        """Value at the grid node nearest to (x, m) on the tau level."""
        g = self.grid
        i_x = int(round((x - g.spec.x_lo) / g.spec.h1))
        if not 0 <= i_x < g.n_x:
            raise ValueError(f"x={x} outside the mesh")
        return float(self.values[g.tau_index(tau), i_x, g.nearest_m_index(m)])


def solve(params: ModelParams, spec: GridSpec, opts: SolveOptions | None = None) -> ValueField:
    opts = opts or SolveOptions()
    grid = build_grid(spec, params)
    if grid.n_x < 3 or grid.n_m < 3:
        raise ValueError("the solver needs at least three levels in x and in m")
    values = np.zeros(grid.shape)
    sweeps = np.zeros(grid.n_tau, dtype=np.int64)
    residuals = np.zeros(grid.n_tau)
    masses = np.zeros(grid.n_tau)
    tilted = opts.operator == "T-hat"
    taus = grid.tau_levels
    warned = False
    for k in range(1, grid.n_tau):
        op = _SliceOperator.build(grid, params, taus[k], opts.mode)
        st_mass = float(slice_stencils(grid, params, taus[k], opts.mode).clamped_mass[1:-1].max())
        masses[k] = st_mass
        if st_mass > opts.clamp_limit:
            msg = (f"clamped stencil mass {st_mass:.3g} exceeds {opts.clamp_limit:g} "
                   f"at tau={taus[k]:g}")
            if opts.clamp_action == "abort":
                raise NumericalError(msg)
            if not warned:
                warnings.warn(msg, stacklevel=2)
                warned = True
        prev = values[k - 1]
        vo = prev.copy()
        vn = np.empty_like(vo)
        last, rising = math.inf, 0
        for it in range(1, opts.max_inner_iters + 1):
            res = op.sweep(vo, vn, prev, grid, params, tilted)
            if not math.isfinite(res):
                _raise_nonfinite(vn, taus[k], grid)
            vo, vn = vn, vo
            if res <= opts.tol:
                break
            rising = rising + 1 if res > last else 0
            if rising >= 5:
                raise NumericalError(
                    f"residual increased for 5 consecutive sweeps at tau={taus[k]:g} "
                    f"(last {res:.3g})")
            last = res
        else:
            raise NumericalError(
                f"no convergence within {opts.max_inner_iters} sweeps at tau={taus[k]:g}; "
                f"last residual {res:.3g}")
        values[k] = vo
        sweeps[k] = it
        residuals[k] = res
    values.setflags(write=False)
    return ValueField(grid, params, values, opts, sweeps, residuals, masses)


@dataclass(frozen=True)
class ConsistencyReport:
    """Per-node moment errors of the chain, each divided by the interval dt.

    Arrays have shape (n_tau - 1, n_m) for tau = delta..T; belief-boundary rows
    are NaN because they carry no stencil.
    """
    tau: np.ndarray
    mean_x_err: np.ndarray
    var_x_err: np.ndarray
    mean_m_err: np.ndarray
    var_m_err: np.ndarray
    cov_err: np.ndarray
    clamped: np.ndarray
    drift: np.ndarray

    def worst(self, unclamped_only: bool = True) -> dict[str, float]:
        mask = ~self.clamped if unclamped_only else np.ones_like(self.clamped)
        out = {}
        for name in ("mean_x_err", "var_x_err", "mean_m_err", "var_m_err", "cov_err"):
            arr = getattr(self, name)[mask]
            arr = arr[np.isfinite(arr)]
            out[name] = float(arr.max()) if arr.size else 0.0
        return out


def local_consistency_report(grid: Grid, params: ModelParams,
                             mode: str = "positive-corrected") -> ConsistencyReport:
    h1, h2 = grid.spec.h1, grid.spec.h2
    dx = np.array([o[0] for o in OFFSETS], dtype=float)[:, None] * h1
    dm = np.array([o[1] for o in OFFSETS], dtype=float)[:, None] * h2
    drift = params.a - grid.m_levels * params.b
    rows = {k: [] for k in ("mx", "vx", "mm", "vm", "cv", "cl")}
    for tau in grid.tau_levels[1:]:
        st = slice_stencils(grid, params, tau, mode)
        p, dt = st.probs, st.dt
        S = st.S
        ex, em = (p * dx).sum(0), (p * dm).sum(0)
        vx = (p * dx * dx).sum(0) - ex * ex
        vm = (p * dm * dm).sum(0) - em * em
        cv = (p * dx * dm).sum(0) - ex * em
        rows["mx"].append(np.abs(ex / dt - drift))
        rows["vx"].append(np.abs(vx / dt - params.b ** 2))
        rows["mm"].append(np.abs(em / dt))
        rows["vm"].append(np.abs(vm / dt - S * S))
        rows["cv"].append(np.abs(cv / dt - params.b * S))
        rows["cl"].append(st.clamped_mass > 0)
    arr = {k: np.array(v) for k, v in rows.items()}
    for k in ("mx", "vx", "mm", "vm", "cv"):
        arr[k][:, [0, -1]] = np.nan
    clamped = arr["cl"].copy()
    clamped[:, [0, -1]] = True
    return ConsistencyReport(grid.tau_levels[1:].copy(), arr["mx"], arr["vx"], arr["mm"],
                             arr["vm"], arr["cv"], clamped, drift)
