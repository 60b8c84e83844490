"""Solver constants, the run-config schema, and config-file loading.

A run config is a YAML (or JSON) mapping with three sections -- ``problem``,
``solver`` and ``experiment`` -- each a flat table of scalar or list values.
Every key has a default (see ``SCHEMA``); unknown keys are rejected.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Sequence

import yaml


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Trust-region and sampling constants shared by the ASTRO solvers.

    ``delta0`` and ``delta_max`` default to problem-derived values when None.
    ``alpha0`` may be a scalar (same for every lower fidelity) or a vector.
    """

    delta0: Sequence[float] | float | None = None
    delta_max: float | None = None
    eta: float = 0.1
    mu: float = 100.0
    gamma1: float = 1.5
    gamma2: float = 0.75
    kappa: float = 1.0
    zeta: float = 0.1
    sigma_lb: float = 1e-3
    alpha0: Sequence[float] | float = 1.0
    alpha_th: float = 0.5
    c_lambda: float = 2.0
    lambda_min: float = 2.0
    initial_reps: int = 3
    batch_growth: float = 0.1
    min_radius: float = 1e-8
    nm_reps: int = 30
    crn_across_points: bool = False

    def __post_init__(self):
        checks = [
            (0 < self.eta < 1, "eta must lie in (0, 1)"),
            (self.mu > 0, "mu must be positive"),
            (self.gamma1 > 1, "gamma1 must exceed 1"),
            (0 < self.gamma2 < 1, "gamma2 must lie in (0, 1)"),
            (self.kappa > 0, "kappa must be positive"),
            (self.zeta > 0, "zeta must be positive"),
            (self.sigma_lb > 0, "sigma_lb must be positive"),
            (self.alpha_th > 0, "alpha_th must be positive"),
            (self.c_lambda > 0, "c_lambda must be positive"),
            (self.lambda_min >= 1, "lambda_min must be >= 1"),
            (self.initial_reps >= 2, "initial_reps must be >= 2"),
            (self.batch_growth >= 0, "batch_growth must be >= 0"),
            (self.min_radius > 0, "min_radius must be positive"),
            (self.nm_reps >= 1, "nm_reps must be >= 1"),
            (self.delta_max is None or self.delta_max > 0, "delta_max must be positive"),
        ]
        alphas = self.alpha0 if isinstance(self.alpha0, (list, tuple)) else [self.alpha0]
        checks.append((all(a > 0 for a in alphas), "alpha0 entries must be positive"))
        if self.delta0 is not None:
            radii = self.delta0 if isinstance(self.delta0, (list, tuple)) else [self.delta0]
            checks.append((all(r > 0 for r in radii), "delta0 entries must be positive"))
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def lambda_at(self, k: int) -> float:
        return lambda_at(self, k)


def lambda_at(config: SolverConfig, k: int) -> float:
    """Sample-size lower bound: max(lambda_min, c_lambda * ln(k + 2))."""
    if k < 0:
        raise ValueError("iteration index must be >= 0")
    return max(config.lambda_min, config.c_lambda * math.log(k + 2))


# -- run-config schema -------------------------------------------------------

@dataclass(frozen=True)
class Option:
    default: Any
    kind: type | tuple
    help: str


_SOLVER_HELP = {
    "delta0": "initial trust-region radii, scalar or one per fidelity (null: 0.08*box diameter)",
    "delta_max": "maximum highest-fidelity radius (null: 10*delta0)",
    "eta": "success-ratio threshold in (0,1)",
    "mu": "criticality constant for the gradient certification test",
    "gamma1": "radius/correlation expansion factor (>1)",
    "gamma2": "radius/correlation contraction factor in (0,1)",
    "kappa": "adaptive-sampling constant",
    "zeta": "sufficient-reduction constant",
    "sigma_lb": "lower bound on standard-deviation estimates",
    "alpha0": "initial correlation score, scalar or one per lower fidelity",
    "alpha_th": "correlation threshold for consulting a lower fidelity",
    "c_lambda": "lambda_k = max(lambda_min, c_lambda*ln(k+2))",
    "lambda_min": "floor of the lambda_k schedule",
    "initial_reps": "replications per level before any moment estimate",
    "batch_growth": "refinement batch = max(1, ceil(batch_growth*n)); 0 means one at a time",
    "min_radius": "radius floor below which a lower fidelity is skipped",
    "nm_reps": "replications per point for Nelder-Mead",
    "crn_across_points": "ASTRO solvers reuse replication j's random numbers at every point (off: streams keyed by point)",
}

SCHEMA: dict[str, dict[str, Option]] = {
    "problem": {
        "name": Option("rosenbrock_mf", str, "rosenbrock_mf | sscont"),
        "dimension": Option(2, int, "Rosenbrock dimension"),
        "noise_sigma": Option(1.0, float, "Rosenbrock noise scale; Var(E_i) = noise_sigma^2/d"),
        "f2_variant": Option("printed", str, "printed | sum (denominator of the level-2 Rosenbrock)"),
        "theta": Option([400.0], (float, list), "inventory mean demand per period (list = sweep)"),
        "ell": Option([3.0], (float, list), "inventory mean lead time (list = sweep)"),
        "holding": Option(1.0, float, "inventory holding cost per unit-period"),
        "backorder": Option(4.0, float, "inventory backorder cost per unit-period"),
        "fixed": Option(36.0, float, "inventory fixed cost per order"),
        "unit": Option(2.0, float, "inventory variable cost per unit ordered"),
        "horizons": Option([100, 50, 30], list, "inventory run length per fidelity"),
        "x0": Option(None, (list, type(None)), "initial point, or list of initial points (null: problem default)"),
    },
    "solver": {
        f.name: Option(f.default, bool if isinstance(f.default, bool) else (float, int, list, type(None)),
                       _SOLVER_HELP[f.name])
        for f in fields(SolverConfig)
    },
    "experiment": {
        "solvers": Option(["astro_mfdf", "astro_df", "nelder_mead"], list, "solvers to run"),
        "budget": Option(500.0, float, "budget per run, in highest-fidelity query units"),
        "macroreps": Option(20, int, "independent runs per (solver, problem)"),
        "n_post": Option(200, int, "post-evaluation replications per recommended point"),
        "seed": Option(0, int, "master seed"),
        "jobs": Option(1, int, "parallel macro-replications"),
        "out": Option("results", str, "output directory"),
        "plots": Option(False, bool, "write PNG plots of curves and profiles"),
        "gap": Option(0.10, float, "solvability optimality-gap threshold"),
        "grid": Option(101, int, "budget-fraction grid size for curves"),
        "ref_reps": Option(10000, int, "replications used to refine the reference optimum"),
    },
}

SOLVERS = ("astro_mfdf", "astro_df", "nelder_mead")


def _type_ok(value, kind) -> bool:
    kinds = kind if isinstance(kind, tuple) else (kind,)
    for k in kinds:
        if k is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return True
        if k is int and isinstance(value, int) and not isinstance(value, bool):
            return True
        if k is bool and isinstance(value, bool):
            return True
        if k not in (float, int, bool) and isinstance(value, k):
            return True
    return False


@dataclass
class RunSpec:
    problem: dict = field(default_factory=dict)
    solver: SolverConfig = field(default_factory=SolverConfig)
    experiment: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"problem": dict(self.problem), "solver": asdict(self.solver),
                "experiment": dict(self.experiment)}


def _set(doc: dict, dotted: str, value) -> None:
    section, _, key = dotted.partition(".")
    if not key:
        raise ConfigError(f"override {dotted!r} must be section.key")
    doc.setdefault(section, {})
    if not isinstance(doc[section], dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    doc[section][key] = value


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    key, raw = item.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value of {key!r}: {exc}") from None
    return key.strip(), value


def build_spec(doc: dict | None, overrides: Sequence[tuple[str, Any]] = ()) -> RunSpec:
    doc = {} if doc is None else {k: dict(v) if isinstance(v, dict) else v for k, v in doc.items()}
    for key, value in overrides:
        _set(doc, key, value)
    unknown_sections = set(doc) - set(SCHEMA)
    if unknown_sections:
        raise ConfigError(f"unknown config sections: {sorted(unknown_sections)}")
    resolved: dict[str, dict] = {}
    for section, options in SCHEMA.items():
        given = doc.get(section) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        unknown = set(given) - set(options)
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
        values = {}
        for key, opt in options.items():
            value = given.get(key, opt.default)
            if value is not None or key in given:
                if not _type_ok(value, opt.kind) and not (value is None and opt.default is None):
                    raise ConfigError(f"{section}.{key}: bad value {value!r}")
            values[key] = value
        resolved[section] = values
    try:
        solver = SolverConfig(**resolved["solver"])
    except (TypeError, ConfigError) as exc:
        raise ConfigError(f"solver: {exc}") from None
    exp = resolved["experiment"]
    bad = [s for s in exp["solvers"] if s not in SOLVERS]
    if bad:
        raise ConfigError(f"unknown solvers {bad}; choose from {list(SOLVERS)}")
    if exp["budget"] <= 0 or exp["macroreps"] < 1 or exp["n_post"] < 2 or exp["jobs"] < 1:
        raise ConfigError("experiment: budget > 0, macroreps >= 1, n_post >= 2, jobs >= 1 required")
    if resolved["problem"]["name"] not in ("rosenbrock_mf", "sscont"):
        raise ConfigError(f"unknown problem {resolved['problem']['name']!r}")
    return RunSpec(resolved["problem"], solver, exp)


def load_config(path: str | Path | None, overrides: Sequence[tuple[str, Any]] = ()) -> RunSpec:
    doc = None
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if doc is not None and not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return build_spec(doc, overrides)


def schema_help() -> str:
    lines = []
    for section, options in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, opt in options.items():
            lines.append(f"  {section}.{key} (default {opt.default!r}): {opt.help}")
    return "\n".join(lines)


def with_overrides(config: SolverConfig, **kw) -> SolverConfig:
    return replace(config, **kw)
