import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from utils import formulas, linalg, magnus, models, quadrature, reference
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

MODULE_CONFIGS = {
    "linalg": linalg.CONFIG,
    "quadrature": quadrature.CONFIG,
    "magnus": magnus.CONFIG,
    "formulas": formulas.CONFIG,
    "reference": reference.CONFIG,
    "models": models.CONFIG,
}

EXPERIMENTS = ("dt_sweep", "mu_sweep", "ising_bench", "norm_ratio", "export_gates", "evolve")

# grid key of every experiment that sweeps something
GRID_KEYS = {"dt_sweep": "dt", "mu_sweep": "mu", "ising_bench": "N", "norm_ratio": "dt"}

SLOPE_EXPERIMENTS = ("dt_sweep", "mu_sweep", "ising_bench")

DEFAULTS = {
    "formulas": ["midpoint", "mft", "nine_exp", "suzuki4"],
    "assignment": "both",
    "oracle_tol": 1e-12,
    "cross_check": None,
    "out": None,
    "workers": 1,
}


@dataclass
class SweepConfig:
    experiment: str
    formulas: list
    assignment: str = "both"
    grid: list = field(default_factory=list)
    oracle_tol: float = 1e-12
    cross_check: str = None
    out: str = None
    workers: int = 1
    params: dict = field(default_factory=dict)

    @property
    def assignments(self):
        if self.assignment == "both":
            return [models.Assignment.TERM_A_TO_X, models.Assignment.TERM_A_TO_Y]
        return [models.Assignment(self.assignment)]

    @property
    def formula_ids(self):
        return [formulas.FormulaId(f) for f in self.formulas]


def _read(path):
    """Parse a YAML or JSON file by extension"""
    with open(path, "r") as f:
        if os.path.splitext(path)[1].lower() in (".yml", ".yaml"):
            return yaml.safe_load(f) or {}
        return json.load(f)


def load_bench_config(path="config/bench.json"):
    """Load per-module tolerance settings"""
    try:
        return _read(path)
    except Exception as e:
        logger.error(f"Error loading bench configuration {path}: {str(e)}")
        return None


def load_sweep_config(path="config/sweeps.yaml"):
    """Load experiment grids and assertion bands"""
    try:
        return _read(path)
    except Exception as e:
        logger.error(f"Error loading sweep configuration {path}: {str(e)}")
        return None


def apply_overrides(settings):
    """Push module sections of ``settings`` into the module CONFIG dicts"""
    applied = []
    for section, values in (settings or {}).items():
        target = MODULE_CONFIGS.get(section)
        if target is None or not isinstance(values, dict):
            continue
        for key, value in values.items():
            if key not in target:
                raise ConfigError(f"unknown setting {section}.{key}")
            target[key] = value
            applied.append(f"{section}.{key}")
    if applied:
        logger.debug(f"configuration overrides: {', '.join(applied)}")
    return applied


def expand_grid(entry, integer=False):
    """A list as given, or {min, max, points} expanded log-spaced"""
    if isinstance(entry, dict):
        try:
            values = np.geomspace(float(entry["min"]), float(entry["max"]), int(entry["points"]))
        except (KeyError, ValueError) as e:
            raise ConfigError(f"grid needs min, max and points: {entry}") from e
        values = values.tolist()
    else:
        values = [float(v) for v in entry]
    if integer:
        values = [int(round(v)) for v in values]
    return values


def validate(cfg):
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {cfg.experiment!r}")
    try:
        cfg.formula_ids
        cfg.assignments
    except ValueError as e:
        raise ConfigError(str(e)) from e
    if cfg.experiment in GRID_KEYS:
        grid = cfg.grid
        if any(v <= 0 for v in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError(f"{cfg.experiment} grid must be positive and strictly increasing: {grid}")
        if cfg.experiment in SLOPE_EXPERIMENTS and len(grid) < reference.CONFIG["min_fit_points"]:
            raise ConfigError(f"{cfg.experiment} needs at least {reference.CONFIG['min_fit_points']} grid points")
    if cfg.oracle_tol < reference.CONFIG["min_oracle_tol"]:
        raise ConfigError(f"oracle tolerance {cfg.oracle_tol:g} is below {reference.CONFIG['min_oracle_tol']:g}")
    return cfg


def build_sweep_config(experiment, file_settings=None, flag_settings=None):
    """Merge defaults <- file section <- command-line flags into a validated SweepConfig"""
    merged = dict(DEFAULTS)
    merged.update((file_settings or {}).get(experiment, {}) or {})
    merged.update({k: v for k, v in (flag_settings or {}).items() if v is not None})

    grid_key = GRID_KEYS.get(experiment)
    grid = expand_grid(merged.pop(grid_key), integer=grid_key == "N") if grid_key in merged else []
    known = {"formulas", "assignment", "oracle_tol", "cross_check", "out", "workers"}
    if isinstance(merged["formulas"], str):
        merged["formulas"] = [f.strip() for f in merged["formulas"].split(",") if f.strip()]

    cfg = SweepConfig(
        experiment=experiment,
        formulas=list(merged["formulas"]),
        assignment=merged["assignment"],
        grid=grid,
        oracle_tol=float(merged["oracle_tol"]),
        cross_check=merged["cross_check"],
        out=merged["out"],
        workers=int(merged["workers"]),
        params={k: v for k, v in merged.items() if k not in known},
    )
    return validate(cfg)
