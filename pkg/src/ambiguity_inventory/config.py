"""Flat ``key = value`` experiment configuration and the comparative-statics presets."""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .grid import Grid, GridSpec
from .model import ModelParams
from .simulator import SimConfig
from .solver import MODES, SolveOptions

VERBS = ("solve", "barriers", "simulate", "sweep")


@dataclass(frozen=True)
class SweepPreset:
    name: str
    parameter: str
    values: tuple[float, ...]
    base: ModelParams = field(default_factory=ModelParams)

    @property
    def varies_horizon_level(self) -> bool:
        # the tau preset reads several levels off a single solve
        return self.parameter == "tau"

    def members(self, base: ModelParams | None = None) -> list[tuple[float, ModelParams]]:
        base = base or self.base
        if self.varies_horizon_level:
            return [(v, base) for v in self.values]
        return [(v, base.with_(**{self.parameter: v})) for v in self.values]


PRESETS: dict[str, SweepPreset] = {p.name: p for p in (
    SweepPreset("gamma", "gamma", (0.0, 20.0, 40.0)),
    SweepPreset("tau", "tau", (6.0, 10.0, 20.0)),
    SweepPreset("b", "b", (0.1, 0.2, 0.3)),
    SweepPreset("s", "s", (0.0, 0.1, 0.2)),
    SweepPreset("rho", "rho", (0.2, 0.3, 0.4)),
    SweepPreset("ell", "ell", (2.0, 3.0, 4.0)),
    SweepPreset("a", "a", (0.0, 0.2, 0.3)),
    SweepPreset("c_lo", "c_lo", (1.0, 2.0, 3.0)),
)}


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams = field(default_factory=ModelParams)
    grid: GridSpec = field(default_factory=GridSpec)
    sim: SimConfig = field(default_factory=SimConfig)
    solver: SolveOptions = field(default_factory=SolveOptions)
    experiment: str = "solve"
    sweep: str | None = None
    output_dir: Path = Path("out")
    x0: float = 0.0
    tau_plot: float | None = None

    @property
    def plot_tau(self) -> float:
        return self.params.T if self.tau_plot is None else self.tau_plot

    @property
    def preset(self) -> SweepPreset:
        return PRESETS[self.sweep]

    def resolved(self) -> dict[str, object]:
        """Every setting, in a fixed order, for metadata headers."""
        out: dict[str, object] = {"experiment": self.experiment}
        if self.sweep is not None:
            out["sweep"] = self.sweep
        for group in (self.params, self.grid, self.sim, self.solver):
            out.update({f.name: getattr(group, f.name) for f in fields(group)})
        out["x0"] = self.x0
        out["tau_plot"] = self.plot_tau
        return out


_BOOL = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}

_GROUPS = {
    "params": {f.name: f.type for f in fields(ModelParams)},
    "grid": {f.name: f.type for f in fields(GridSpec)},
    "sim": {f.name: f.type for f in fields(SimConfig)},
    "solver": {f.name: f.type for f in fields(SolveOptions)},
}
_TOP = {"experiment", "sweep", "output_dir", "x0", "tau_plot"}


def _convert(key: str, raw: str, kind: str, lineno: int):
    where = f"line {lineno}: {key}"
    try:
        if kind == "bool":
            return _BOOL[raw.lower()]
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except (KeyError, ValueError):
        raise ConfigError(f"{where}: expected a {kind}, got {raw!r}") from None
    return raw


def _kind(annotation) -> str:
    name = annotation if isinstance(annotation, str) else getattr(annotation, "__name__", "")
    return "str" if name.startswith("str") else name


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    cfg = base or ExperimentConfig()
    updates: dict[str, dict[str, object]] = {g: {} for g in _GROUPS}
    top: dict[str, object] = {}
    lines: dict[str, int] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (p.strip() for p in line.split("=", 1))
        if not raw:
            raise ConfigError(f"line {lineno}: {key} has no value")
        if key in lines:
            raise ConfigError(f"line {lineno}: {key} repeats line {lines[key]}")
        lines[key] = lineno
        if key in _TOP:
            if key in ("x0", "tau_plot"):
                top[key] = _convert(key, raw, "float", lineno)
            else:
                top[key] = raw
            continue
        for group, spec in _GROUPS.items():
            if key in spec:
                updates[group][key] = _convert(key, raw, _kind(spec[key]), lineno)
                break
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")

    def build(group: str, current):
        try:
            return replace(current, **updates[group])
        except ValueError as exc:
            keys = ", ".join(f"{k} (line {lines[k]})" for k in updates[group])
            raise ConfigError(f"{exc} [from {keys}]") from None

    experiment, sweep = cfg.experiment, cfg.sweep
    if "experiment" in top:
        parts = str(top["experiment"]).split()
        experiment = parts[0]
        if len(parts) > 1:
            sweep = parts[1]
    if "sweep" in top:
        sweep = str(top["sweep"])
    new = ExperimentConfig(
        params=build("params", cfg.params),
        grid=build("grid", cfg.grid),
        sim=build("sim", cfg.sim),
        solver=build("solver", cfg.solver),
        experiment=experiment,
        sweep=sweep,
        output_dir=Path(str(top.get("output_dir", cfg.output_dir))),
        x0=float(top.get("x0", cfg.x0)),
        tau_plot=top.get("tau_plot", cfg.tau_plot),
    )
    return validate(new, lines)


def validate(cfg: ExperimentConfig, lines: dict[str, int] | None = None) -> ExperimentConfig:
    lines = lines or {}

    def at(key):
        return f"line {lines[key]}: " if key in lines else ""

    if cfg.experiment not in VERBS:
        raise ConfigError(f"{at('experiment')}experiment must be one of {VERBS}, "
                          f"got {cfg.experiment!r}")
    if cfg.experiment == "sweep":
        if cfg.sweep is None:
            raise ConfigError(f"{at('experiment')}sweep needs a preset name: "
                              f"{sorted(PRESETS)}")
        if cfg.sweep not in PRESETS:
            raise ConfigError(f"{at('sweep')}unknown sweep preset {cfg.sweep!r}; "
                              f"choose from {sorted(PRESETS)}")
    if cfg.solver.mode not in MODES:
        raise ConfigError(f"{at('mode')}mode must be one of {MODES}")
    try:
        Grid(cfg.grid, cfg.params.T, cfg.params.m_lo, cfg.params.m_hi)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    tau = cfg.plot_tau
    steps = tau / cfg.grid.delta
    if not 0 < tau <= cfg.params.T or abs(steps - round(steps)) > 1e-9:
        raise ConfigError(f"{at('tau_plot')}tau_plot={tau} must be a positive grid level "
                          f"no larger than T")
    if cfg.sim.dt > cfg.grid.delta / 2 + 1e-15:
        raise ConfigError(f"{at('dt')}simulation dt={cfg.sim.dt} must not exceed delta/2")
    return cfg


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return validate(ExperimentConfig())
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
