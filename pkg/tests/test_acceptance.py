"""Acceptance suite. Every test carries a ``criterion`` marker; the conftest
prints one PASS/FAIL line per criterion once the run ends.

Solves at the default mesh are cached per module. Solves that feed geometric
checks use tol = 1e-9 because Jacobi leaves edge lag proportional to tol in
second differences.
"""
from __future__ import annotations

import math
import time
import warnings

import numpy as np
import pytest

from ambiguity_inventory import artifacts
from ambiguity_inventory.cli import main
from ambiguity_inventory.config import PRESETS, ExperimentConfig
from ambiguity_inventory.experiment import run_experiment
from ambiguity_inventory.grid import GridSpec, build_grid
from ambiguity_inventory.model import (
    ModelParams,
    belief_tail_probability,
    riccati_variance,
)
from ambiguity_inventory.policy import RegionLabel, classify, extract_barriers
from ambiguity_inventory.simulator import SimConfig, monte_carlo_cost, simulate_batch
from ambiguity_inventory.solver import (
    SolveOptions,
    bellman_apply,
    bellman_apply_q,
    local_consistency_report,
    slice_stencils,
    solve,
)

SPEC = GridSpec()
BASE = ModelParams()
FINE = SolveOptions(tol=1e-9)
H1 = SPEC.h1
MC_PATHS = 100_000
MC_DT = 0.01


def criterion(number, name):
    return pytest.mark.criterion(number, name)


_CACHE: dict[tuple, object] = {}


def solved(params: ModelParams, opts: SolveOptions = FINE):
    key = (params, opts)
    if key not in _CACHE:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _CACHE[key] = solve(params, SPEC, opts)
    return _CACHE[key]


def barriers_of(field):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return extract_barriers(classify(field), field)


def slack(params: ModelParams) -> float:
    return 2 * H1 * max(params.c_lo, params.c_hi)


# 1 -------------------------------------------------------------------------

CLASSICAL = BASE.with_(gamma=0.0, s=0.0, ell=1e6, uu=1e6)
CLASSICAL_PROBES = [(-8.0, 1.0), (-6.0, 0.0), (-4.0, -1.0), (-2.0, 1.0), (0.0, 0.0),
                    (0.0, 1.0), (2.0, -1.0), (4.0, 0.0), (6.0, 1.0), (8.0, -1.0)]


@criterion(1, "fixed-point correctness in the classical limit")
def test_classical_limit_matches_monte_carlo(record_property):
    field = solved(CLASSICAL)
    worst = -math.inf
    failures = []
    for i, (x0, m0) in enumerate(CLASSICAL_PROBES):
        cfg = SimConfig(dt=MC_DT, n_paths=MC_PATHS, seed=100 + i, controls_enabled=False)
        est, se = monte_carlo_cost(x0, m0, None, CLASSICAL, cfg)
        v = field.at(CLASSICAL.T, x0, m0)
        allowed = 3 * se + slack(CLASSICAL)
        worst = max(worst, abs(v - est) - allowed)
        if abs(v - est) > allowed:
            failures.append((x0, m0, v, est, se))
    record_property("worst |V - MC| minus allowance", f"{worst:.3g}")
    assert not failures, failures


# 2 -------------------------------------------------------------------------

@criterion(2, "contraction of the slice operator and inner convergence")
def test_inner_iterations_converge_at_default_tolerance(record_property):
    field = solved(BASE, SolveOptions(tol=1e-8))
    record_property("max sweeps per slice", int(field.sweeps.max()))
    assert field.sweeps.max() < field.options.max_inner_iters
    assert np.all(field.residuals[1:] <= 1e-8)


@criterion(2, "contraction of the slice operator and inner convergence")
def test_random_pairs_contract(record_property):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        grid = build_grid(SPEC, BASE)
    rng = np.random.default_rng(0)
    worst_ratio, worst_excess, violations = 0.0, -math.inf, 0
    for _ in range(100):
        k = int(rng.integers(1, grid.n_tau))
        # smallest interpolation interval on this slice
        factor = math.exp(-BASE.rho * float(slice_stencils(grid, BASE, grid.tau_levels[k]).dt[1:-1].min()))
        prev, v1, v2 = (rng.uniform(0, 1, (grid.n_x, grid.n_m)) for _ in range(3))
        gap_in = np.abs(v1 - v2).max()
        gap_out = np.abs(bellman_apply(prev, v1, grid.tau_levels[k], grid, BASE)
                         - bellman_apply(prev, v2, grid.tau_levels[k], grid, BASE)).max()
        worst_ratio = max(worst_ratio, gap_out / gap_in)
        worst_excess = max(worst_excess, gap_out / gap_in - factor)
        violations += gap_out > factor * gap_in + 1e-12
    record_property("worst ratio minus per-slice bound e^{-rho dt_min}", f"{worst_excess:.6f}")
    record_property("worst observed ratio", f"{worst_ratio:.6f}")
    record_property("violations out of 100", violations)
    assert violations == 0


# 3 -------------------------------------------------------------------------

@criterion(3, "T and the tilted operator agree")
@pytest.mark.parametrize("gamma", [0.0, 20.0])
def test_tilted_operator_equivalence(gamma, record_property):
    field = solved(BASE.with_(gamma=gamma))
    g, v = field.grid, field.values
    gap = 0.0
    for k in range(1, g.n_tau):
        t = bellman_apply(v[k - 1], v[k], g.tau_levels[k], g, field.params)
        q = bellman_apply_q(v[k - 1], v[k], g.tau_levels[k], g, field.params)
        gap = max(gap, float(np.abs(t - q).max()))
    bound = 1e-9 * (1 + float(np.abs(v).max()))
    record_property(f"gamma={gamma:g} max |TV - T^V|", f"{gap:.3g} (bound {bound:.3g})")
    assert gap <= bound


# 4 -------------------------------------------------------------------------

@criterion(4, "local consistency of positive-corrected stencils")
@pytest.mark.parametrize("s", [BASE.s, 0.0])
def test_local_consistency(s, record_property):
    params = BASE.with_(s=s)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        grid = build_grid(SPEC, params)
    rep = local_consistency_report(grid, params, "positive-corrected")
    ok = ~rep.clamped
    assert ok.any()
    allowed = max(SPEC.h1, SPEC.h2) * (np.abs(rep.drift) + params.b + params.s)
    allowed = np.broadcast_to(allowed, rep.var_x_err.shape)
    mean_err = float(rep.mean_x_err[ok].max())
    assert mean_err <= 1e-12
    assert np.all(rep.var_x_err[ok] <= allowed[ok])
    assert np.all(rep.var_m_err[ok] <= allowed[ok])
    record_property(f"s={s:g} unclamped nodes", int(ok.sum()))
    record_property(f"s={s:g} worst drift error", f"{mean_err:.3g}")


# 5 -------------------------------------------------------------------------

@criterion(5, "value increases with ambiguity aversion")
def test_value_monotone_in_gamma(record_property):
    v0, v20, v40 = (solved(BASE.with_(gamma=g)).values for g in (0.0, 20.0, 40.0))
    d1, d2 = float((v20 - v0).min()), float((v40 - v20).min())
    record_property("min V20 - V0", f"{d1:.3g}")
    record_property("min V40 - V20", f"{d2:.3g}")
    assert d1 >= -1e-8 and d2 >= -1e-8


# 6 -------------------------------------------------------------------------

def _edges(params, tau=None):
    bs = barriers_of(solved(params))
    k = bs.tau_index(params.T if tau is None else tau)
    return bs.lower[k], bs.upper[k], bs.m_levels


@criterion(6, "continuation regions nest")
def test_regions_shrink_with_gamma(record_property):
    (l0, u0, _), (l20, u20, _), (l40, u40, _) = (_edges(BASE.with_(gamma=g))
                                                 for g in (0.0, 20.0, 40.0))
    eps = 1e-9
    shift = min(float((l20 - l0).min()), float((l40 - l20).min()),
                float((u0 - u20).min()), float((u20 - u40).min()))
    record_property("worst inward shift (negative = outward)", f"{shift:.3g}")
    assert shift >= -H1 - eps


@criterion(6, "continuation regions nest")
@pytest.mark.parametrize("parameter,values,direction", [
    ("rho", (0.2, 0.3, 0.4), "expand"),
    ("s", (0.0, 0.1, 0.2), "shrink"),
])
def test_regions_move_with_parameter(parameter, values, direction, record_property):
    j = int(np.argmin(np.abs(_edges(BASE)[2] - BASE.a / BASE.b)))
    rows = [_edges(BASE.with_(**{parameter: v})) for v in values]
    widths = [(float(lo[j]), float(hi[j])) for lo, hi, _ in rows]
    sign = 1.0 if direction == "expand" else -1.0
    worst = math.inf
    for (lo_a, hi_a), (lo_b, hi_b) in zip(widths, widths[1:]):
        worst = min(worst, sign * (lo_a - lo_b), sign * (hi_b - hi_a))
    record_property(f"{parameter} intervals at m=a/b", widths)
    assert worst >= -H1 - 1e-9


# 7 -------------------------------------------------------------------------

@criterion(7, "free-boundary geometry")
def test_target_at_zero_trend_belief(record_property):
    bs = barriers_of(solved(BASE))
    j = int(np.argmin(np.abs(bs.m_levels - BASE.a / BASE.b)))
    target = float(bs.target[bs.tau_index(BASE.T), j])
    record_property("target at m=a/b", target)
    assert abs(target) <= 2 * H1


@criterion(7, "free-boundary geometry")
def test_smooth_fit_at_lower_barrier(record_property):
    field = solved(BASE)
    labels = classify(field)
    v = field.values
    worst, count = 0.0, 0
    for k in range(1, field.grid.n_tau):
        for j in range(1, field.grid.n_m - 1):
            idx = np.flatnonzero(labels[k, :, j] == RegionLabel.LOWER)
            i = int(idx.max())
            if i + 1 >= field.grid.n_x - 1:
                continue
            fwd = (v[k, i + 1, j] - v[k, i, j]) / H1
            worst = max(worst, abs(fwd + BASE.ell))
            count += 1
    record_property("lower-barrier nodes checked", count)
    record_property("max |forward difference + ell|", f"{worst:.3g}")
    assert count > 0
    assert worst <= slack(BASE)


@criterion(7, "free-boundary geometry")
def test_convex_in_x(record_property):
    v = solved(BASE).values
    second = v[:, 2:, :] - 2 * v[:, 1:-1, :] + v[:, :-2, :]
    low = float(second.min())
    record_property("min second difference", f"{low:.3g}")
    assert low >= -1e-8


# 8 -------------------------------------------------------------------------

SYMMETRIC = BASE.with_(a=0.0, c_lo=1.0, c_hi=1.0, ell=2.0, uu=2.0, m0=0.0)


@criterion(8, "symmetry under (x, m) -> (-x, -m)")
def test_symmetric_field_and_barriers(record_property):
    field = solved(SYMMETRIC)
    v = field.values
    err = float(np.abs(v - v[:, ::-1, ::-1]).max())
    bs = barriers_of(field)
    mirror = float(np.abs(bs.lower + bs.upper[:, ::-1]).max())
    record_property("max |V(x,m) - V(-x,-m)|", f"{err:.3g}")
    record_property("max barrier mirror error", f"{mirror:.3g}")
    assert err <= 1e-9
    assert mirror <= H1


# 9 -------------------------------------------------------------------------

FILTER_TIMES = (1.0, 5.0, 20.0)


def _three_se(samples):
    return 3 * samples.std(ddof=1) / math.sqrt(samples.size)


@criterion(9, "filter statistics")
def test_belief_variance_and_tail(record_property):
    cfg = SimConfig(dt=MC_DT, n_paths=MC_PATHS, seed=7, controls_enabled=False, reflect=False)
    res = simulate_batch(0.0, BASE.m0, None, BASE, cfg, obs_times=FILTER_TIMES)
    for k, t in enumerate(FILTER_TIMES):
        dev = res.obs_m[:, k] - BASE.m0
        target = BASE.s ** 2 * t / (1 + BASE.s * t)
        sq = dev ** 2
        record_property(f"Var M at t={t:g}", f"{sq.mean():.5f} vs {target:.5f}")
        assert abs(sq.mean() - target) <= _three_se(sq)
    hit = (np.abs(res.obs_m[:, -1] - BASE.m0) > 0.1).astype(float)
    p = belief_tail_probability(0.1, 20.0, BASE.s)
    record_property("tail probability h=0.1, t=20", f"{hit.mean():.4f} vs {p:.4f}")
    assert abs(hit.mean() - p) <= _three_se(hit)


@criterion(9, "filter statistics")
def test_ground_truth_posterior_error(record_property):
    cfg = SimConfig(dt=MC_DT, n_paths=MC_PATHS, seed=8, controls_enabled=False,
                    reflect=False, ground_truth_mode=True)
    res = simulate_batch(0.0, BASE.m0, None, BASE, cfg, obs_times=FILTER_TIMES)
    for k, t in enumerate(FILTER_TIMES):
        sq = (res.theta - res.obs_m[:, k]) ** 2
        target = riccati_variance(BASE.s, t)
        record_property(f"E(theta - M)^2 at t={t:g}", f"{sq.mean():.5f} vs {target:.5f}")
        assert abs(sq.mean() - target) <= _three_se(sq)


# 10 ------------------------------------------------------------------------

ROBUST_PROBES = [(0.0, 0.0), (-2.0, 1.0), (2.0, -1.0), (3.0, 0.0), (-3.0, 0.5)]


@criterion(10, "robust value dominates reference-measure cost")
def test_reference_cost_below_robust_value(record_property):
    field = solved(BASE)
    bs = barriers_of(field)
    worst = -math.inf
    for i, (x0, m0) in enumerate(ROBUST_PROBES):
        cfg = SimConfig(dt=MC_DT, n_paths=MC_PATHS, seed=200 + i)
        est, se = monte_carlo_cost(x0, m0, bs, BASE, cfg)
        v = field.at(BASE.T, x0, m0)
        excess = est - (v + 3 * se + slack(BASE))
        worst = max(worst, excess)
        record_property(f"({x0:g}, {m0:g}) MC vs V", f"{est:.4f} +- {se:.4f} vs {v:.4f}")
    assert worst <= 0


# 11 ------------------------------------------------------------------------

@criterion(11, "reproducibility and I/O")
def test_reruns_are_byte_identical(tmp_path):
    runs = []
    for n in range(2):
        out = tmp_path / f"run{n}"
        for verb in ("barriers", "simulate"):
            assert main([verb, "--out", str(out)]) == 0
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert set(runs[0]) == {"barriers.csv", "barriers.svg", "path.csv", "cost.csv"}
    assert runs[0] == runs[1]


@criterion(11, "reproducibility and I/O")
def test_field_csv_round_trip(tmp_path, record_property):
    field = solved(BASE)
    path = artifacts.write_field_csv(field, tmp_path / "field.csv")
    levels, values, labels = artifacts.read_field_csv(path)
    # lossless at 12 significant digits: every value reads back as its own rounding
    rounded = np.vectorize(lambda v: float(format(v, ".12g")))(field.values)
    mismatches = int((values != rounded).sum())
    record_property("values differing from their 12-digit rounding", mismatches)
    assert mismatches == 0
    np.testing.assert_array_equal(labels, classify(field))
    np.testing.assert_array_equal(levels["m"], field.grid.m_levels)


@criterion(11, "reproducibility and I/O")
def test_all_sweeps_within_budget(tmp_path, record_property):
    start = time.perf_counter()
    for name, preset in PRESETS.items():
        out = tmp_path / name
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = run_experiment(ExperimentConfig(experiment="sweep", sweep=name, output_dir=out))
        assert (out / f"sweep_{name}.svg").exists()
        assert len(res.barriers) == len(preset.values)
    elapsed = time.perf_counter() - start
    record_property("eight sweeps wall time (s)", f"{elapsed:.1f}")
    assert elapsed <= 30 * 60
