"""Run one configured experiment end to end and write its artifacts."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from . import artifacts
from .config import ExperimentConfig
from .grid import validate_ratio
from .policy import BarrierSet, classify, extract_barriers
from .simulator import monte_carlo_cost, simulate_path
from .solver import ValueField, solve


@dataclass
class RunResult:
    files: list[Path] = field(default_factory=list)
    barriers: dict[str, BarrierSet] = field(default_factory=dict)
    fields: dict[str, ValueField] = field(default_factory=dict)
    summary: dict[str, float] = field(default_factory=dict)


def _metadata(cfg: ExperimentConfig, **extra) -> dict[str, object]:
    report = validate_ratio(cfg.grid, cfg.params, mode=cfg.solver.mode)
    return {**cfg.resolved(), **extra, "ratio_report": report.summary()}


def _solve(cfg: ExperimentConfig) -> tuple[ValueField, BarrierSet]:
    fld = solve(cfg.params, cfg.grid, cfg.solver)
    return fld, extract_barriers(classify(fld), fld)


def _value_tag(v: float) -> str:
    return format(v, "g")


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = RunResult()
    verb = cfg.experiment

    if verb == "solve":
        fld = solve(cfg.params, cfg.grid, cfg.solver)
        res.fields["base"] = fld
        res.files.append(artifacts.write_field_csv(fld, out / "field.csv", meta=_metadata(cfg)))
        return res

    if verb == "barriers":
        fld, bs = _solve(cfg)
        meta = _metadata(cfg)
        res.fields["base"], res.barriers["base"] = fld, bs
        res.files.append(artifacts.write_barriers_csv(bs, out / "barriers.csv", meta=meta))
        res.files.append(artifacts.render_barriers_svg([("base", bs)], cfg.plot_tau,
                                                       out / "barriers.svg", meta=meta))
        return res

    if verb == "simulate":
        fld, bs = _solve(cfg)
        meta = _metadata(cfg)
        m0 = cfg.params.m0
        rec = simulate_path(bs, cfg.params, cfg.sim, x0=cfg.x0, m0=m0)
        est, se = monte_carlo_cost(cfg.x0, m0, bs, cfg.params, cfg.sim)
        value = fld.at(cfg.params.T, cfg.x0, m0)
        res.summary = {"estimate": est, "std_error": se, "value_at_start": value}
        res.barriers["base"] = bs
        res.files.append(artifacts.write_path_csv(rec, out / "path.csv", meta=meta))
        res.files.append(artifacts.write_summary_csv(
            [{"x0": float(cfg.x0), "m0": float(m0), "n_paths": cfg.sim.n_paths,
              "estimate": est, "std_error": se, "value_at_start": value}],
            out / "cost.csv", meta=meta))
        return res

    return _run_sweep(cfg, out, res)


def _run_sweep(cfg: ExperimentConfig, out: Path, res: RunResult) -> RunResult:
    preset = cfg.preset
    overlay = []
    shared = None
    for value, params in preset.members(cfg.params):
        tag = _value_tag(value)
        label = f"{preset.parameter} = {tag}"
        member_cfg = replace(cfg, params=params)
        if preset.varies_horizon_level:
            shared = shared or _solve(member_cfg)
            bs = shared[1]
            tau, taus = value, [value]
        else:
            bs = _solve(member_cfg)[1]
            tau, taus = cfg.plot_tau, None
        meta = _metadata(member_cfg, sweep_value=float(value))
        stem = f"barriers_{preset.name}_{tag}"
        res.barriers[label] = bs
        res.files.append(artifacts.write_barriers_csv(bs, out / f"{stem}.csv", taus=taus,
                                                      meta=meta))
        res.files.append(artifacts.render_barriers_svg([(label, bs)], tau,
                                                       out / f"{stem}.svg", meta=meta))
        overlay.append((label, bs, tau))
    meta = {**_metadata(cfg), "sweep_values": " ".join(_value_tag(v) for v in preset.values)}
    title = ("barriers across tau levels" if preset.varies_horizon_level
             else f"{preset.parameter} sweep at tau = {cfg.plot_tau:g}")
    res.files.append(artifacts.render_barriers_svg(overlay, cfg.plot_tau,
                                                   out / f"sweep_{preset.name}.svg",
                                                   title=title, meta=meta))
    return res
