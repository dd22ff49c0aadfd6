# -*- coding: utf-8 -*-
""" JSON run configuration: frozen config records, named analytic forms and shipped presets"""

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from barriers import VARIANTS
from geometry import ConvexPolytope, read_polytope
from solver import MAProblem, build_problem
from utils import DEFAULT_OUTPUT_DIR, MASS_TOL, OUTPUT_DIR_ENV, SCHEMA_VERSION, ConfigError, GeometryError

PRESETS_DIR = Path(__file__).resolve().parent / "presets"

DENSITIES = ("constant", "one_plus_x1", "one_plus_x1_squared")
BOUNDARY_FORMS = ("zero", "affine", "half_norm_squared", "quartic_manufactured")
DOMAIN_KINDS = ("box", "regular_polygon", "simplex", "file")
EXPERIMENT_CHECKS = ("amp", "modulus_bound", "comparison", "manufactured", "equivariance", "holder", "sobolev",
                     "divergence", "converse", "log_probe")
BARRIER_CHECKS = ("determinant_consistency", "barrier_lower_bound", "barrier_upper_bound", "convexity_certificate",
                  "amp_profile")


def _check_keys(record, cls, path: str) -> Dict:
    if not isinstance(record, dict):
        raise ConfigError(f"{path} must be a JSON object", field=path)
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(record) - allowed)
    if unknown:
        raise ConfigError(f"Unknown field {path}.{unknown[0]}", field=f"{path}.{unknown[0]}")
    return {key: tuple(value) if isinstance(value, list) else value for key, value in record.items()}


def _build(cls, record, path: str):
    try:
        return cls(**_check_keys(record, cls, path))
    except TypeError as err:
        raise ConfigError(f"Invalid {path}: {err}", field=path) from err


def _require(condition: bool, message: str, field_name: str) -> None:
    if not condition:
        raise ConfigError(message, field=field_name)


@dataclass(frozen=True)
class DomainConfig:
    kind: str = "box"
    lower: Tuple[float, ...] = (0.0, 0.0)
    upper: Tuple[float, ...] = (1.0, 1.0)
    sides: int = 64
    radius: float = 1.0
    center: Tuple[float, ...] = (0.0, 0.0)
    dimension: int = 2
    path: Optional[str] = None

    def __post_init__(self):
        _require(self.kind in DOMAIN_KINDS, f"Unknown domain kind {self.kind}", "domain.kind")
        _require(self.kind != "file" or bool(self.path), "Domain of kind 'file' needs a path", "domain.path")

    def build(self) -> ConvexPolytope:
        try:
            if self.kind == "box":
                return ConvexPolytope.box(self.lower, self.upper)
            if self.kind == "regular_polygon":
                return ConvexPolytope.regular_polygon(self.sides, self.radius, self.center)
            if self.kind == "simplex":
                return ConvexPolytope.from_vertices(np.vstack([np.zeros(self.dimension), np.eye(self.dimension)]))
            return read_polytope(self.path)
        except (GeometryError, OSError) as err:
            raise ConfigError(f"Cannot build domain: {getattr(err, 'message', err)}", field="domain") from err


@dataclass(frozen=True)
class MeshConfig:
    """ Refinement schedule: spacings and refinement layer counts, broadcast against each other."""
    spacings: Tuple[float, ...] = (0.05,)
    refine_normal: Optional[Tuple[float, ...]] = None
    refine_levels: Tuple[int, ...] = (0,)

    def __post_init__(self):
        _require(len(self.spacings) > 0 and all(s > 0 for s in self.spacings), "Spacings must be positive",
                 "mesh.spacings")
        _require(len(self.refine_levels) > 0 and all(int(k) == k and k >= 0 for k in self.refine_levels),
                 "Refinement levels must be nonnegative integers", "mesh.refine_levels")
        _require(len(self.spacings) == 1 or len(self.refine_levels) == 1
                 or len(self.spacings) == len(self.refine_levels),
                 "Spacings and refinement levels must have matching lengths", "mesh")

    def schedule(self) -> List[Tuple[float, int]]:
        count = max(len(self.spacings), len(self.refine_levels))
        spacings = self.spacings * count if len(self.spacings) == 1 else self.spacings
        levels = self.refine_levels * count if len(self.refine_levels) == 1 else self.refine_levels
        return [(float(s), int(k)) for s, k in zip(spacings, levels)]


@dataclass(frozen=True)
class ProblemConfig:
    density: str = "constant"
    density_scale: float = 1.0
    boundary: str = "zero"
    boundary_coefficients: Tuple[float, ...] = ()
    upper_bound: Optional[float] = None
    lower_bound: Optional[float] = None
    tol: float = MASS_TOL
    max_iters: int = 200

    def __post_init__(self):
        _require(self.density in DENSITIES, f"Unknown density {self.density}", "problem.density")
        _require(self.boundary in BOUNDARY_FORMS, f"Unknown boundary data {self.boundary}", "problem.boundary")
        _require(self.density_scale >= 0, "Density scale must be nonnegative", "problem.density_scale")
        _require(self.tol > 0, "Solver tolerance must be positive", "problem.tol")
        _require(self.max_iters > 0, "max_iters must be positive", "problem.max_iters")


def density_form(name: str, scale: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    if name == "constant":
        return lambda x: np.full(np.atleast_2d(x).shape[0], scale)
    if name == "one_plus_x1":
        return lambda x: scale * (1.0 + np.atleast_2d(x)[:, 0])
    if name == "one_plus_x1_squared":
        return lambda x: scale * (1.0 + np.atleast_2d(x)[:, 0] ** 2)
    raise ConfigError(f"Unknown density {name}", field="problem.density")


def boundary_form(name: str, coefficients: Tuple[float, ...] = (), dimension: int = 2) \
        -> Callable[[np.ndarray], np.ndarray]:
    if name == "zero":
        return lambda x: np.zeros(np.atleast_2d(x).shape[0])
    if name == "affine":
        if len(coefficients) != dimension + 1:
            raise ConfigError(f"Affine boundary data needs {dimension + 1} coefficients",
                              field="problem.boundary_coefficients")
        slope = np.asarray(coefficients[:dimension], dtype=float)
        return lambda x: np.atleast_2d(x) @ slope + coefficients[dimension]
    if name == "half_norm_squared":
        return lambda x: 0.5 * np.sum(np.atleast_2d(x) ** 2, axis=1)
    if name == "quartic_manufactured":
        return lambda x: 0.5 * np.sum(np.atleast_2d(x) ** 2, axis=1) + np.atleast_2d(x)[:, 0] ** 4 / 12.0
    raise ConfigError(f"Unknown boundary data {name}", field="problem.boundary")


def exact_solution(problem: ProblemConfig) -> Optional[Callable[[np.ndarray], np.ndarray]]:
    """ The closed-form solution when the boundary data is the trace of a known solution of the equation."""
    if problem.density_scale != 1.0:
        return None
    if (problem.boundary, problem.density) in (("half_norm_squared", "constant"),
                                               ("quartic_manufactured", "one_plus_x1_squared")):
        return boundary_form(problem.boundary)
    return None


@dataclass(frozen=True)
class ExperimentSettings:
    holder_range: Tuple[float, float] = (0.55, 0.80)
    manufactured_tol: float = 5e-2
    sobolev_grid: Tuple[Tuple[float, float], ...] = ((1.5, 0.0), (2.0, 0.5))
    alpha: Optional[float] = None
    affine_maps: int = 3
    probe_band: Optional[Tuple[float, float]] = None
    divergence_p: Optional[float] = None
    control_p: Optional[float] = None

    def __post_init__(self):
        _require(len(self.holder_range) == 2 and self.holder_range[0] < self.holder_range[1],
                 "holder_range must be an increasing pair", "settings.holder_range")
        _require(all(len(pair) == 2 for pair in self.sobolev_grid), "sobolev_grid entries are [p, beta] pairs",
                 "settings.sobolev_grid")
        _require(self.affine_maps >= 0, "affine_maps must be nonnegative", "settings.affine_maps")
        _require(self.manufactured_tol > 0, "manufactured_tol must be positive", "settings.manufactured_tol")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    domain: DomainConfig
    mesh: MeshConfig
    problem: ProblemConfig
    checks: Tuple[str, ...] = ()
    settings: ExperimentSettings = field(default_factory=ExperimentSettings)

    def __post_init__(self):
        for check in self.checks:
            _require(check in EXPERIMENT_CHECKS, f"Unknown check {check}", "checks")

    def build_domain(self) -> ConvexPolytope:
        return self.domain.build()

    def refine_face(self, domain: ConvexPolytope) -> Optional[int]:
        if self.mesh.refine_normal is None:
            return None
        try:
            return domain.face_index(self.mesh.refine_normal)
        except GeometryError as err:
            raise ConfigError(f"No face with outward normal {list(self.mesh.refine_normal)}",
                              field="mesh.refine_normal") from err

    def build_problem(self, spacing: float, levels: int, tol_scale: float = 1.0) -> Tuple[MAProblem, float]:
        """ The problem at one stage of the schedule, with its solver tolerance."""
        domain = self.build_domain()
        problem = self.problem
        density = density_form(problem.density, problem.density_scale)
        upper = problem.upper_bound
        if upper is None:
            upper = float(np.max(density(domain.vertices)))
            upper = upper if upper > 0 else 1.0
        lower = problem.lower_bound
        if lower is None and problem.density == "constant":
            lower = problem.density_scale
        built = build_problem(domain, density, boundary_form(problem.boundary, problem.boundary_coefficients,
                                                             domain.dimension),
                              spacing=spacing, upper_bound=upper, lower_bound=lower,
                              refine_face=self.refine_face(domain), refine_levels=levels, name=self.name)
        return built, problem.tol * tol_scale


def parse_experiment(record: Dict, source: str = "config") -> ExperimentConfig:
    _require(isinstance(record, dict), f"{source} must hold a JSON object", "config")
    allowed = {"schema_version", "name", "domain", "mesh", "problem", "checks", "settings"}
    unknown = sorted(set(record) - allowed)
    _require(not unknown, f"Unknown field {unknown[0] if unknown else ''}", unknown[0] if unknown else "config")
    _require(record.get("schema_version") == SCHEMA_VERSION,
             f"Unsupported schema_version {record.get('schema_version')}, expected {SCHEMA_VERSION}",
             "schema_version")
    settings = _check_keys(record.get("settings", {}), ExperimentSettings, "settings")
    if "sobolev_grid" in settings:
        settings["sobolev_grid"] = tuple(tuple(pair) for pair in settings["sobolev_grid"])
    try:
        settings = ExperimentSettings(**settings)
    except TypeError as err:
        raise ConfigError(f"Invalid settings: {err}", field="settings") from err
    return ExperimentConfig(name=str(record.get("name", source)),
                            domain=_build(DomainConfig, record.get("domain", {}), "domain"),
                            mesh=_build(MeshConfig, record.get("mesh", {}), "mesh"),
                            problem=_build(ProblemConfig, record.get("problem", {}), "problem"),
                            checks=tuple(record.get("checks", ())), settings=settings)


@dataclass(frozen=True)
class BarrierConfig:
    dimensions: Tuple[int, ...] = (2, 3, 4, 5)
    epsilons: Tuple[float, ...] = (0.1, 0.25, 0.5)
    variants: Tuple[str, ...] = VARIANTS
    samples: int = 100
    fd_tol: float = 1e-6
    upper_bound_override: Optional[float] = None
    checks: Tuple[str, ...] = BARRIER_CHECKS

    def __post_init__(self):
        _require(all(int(n) == n and n >= 2 for n in self.dimensions), "Dimensions must be integers >= 2",
                 "barriers.dimensions")
        _require(all(0 < eps <= 0.5 for eps in self.epsilons), "Epsilon must lie in (0, 1/2]", "barriers.epsilons")
        _require(all(v in VARIANTS for v in self.variants), "Unknown barrier variant", "barriers.variants")
        _require(self.samples > 0, "samples must be positive", "barriers.samples")
        _require(self.fd_tol > 0, "fd_tol must be positive", "barriers.fd_tol")
        for check in self.checks:
            _require(check in BARRIER_CHECKS, f"Unknown check {check}", "barriers.checks")


def parse_barrier_config(record: Dict) -> BarrierConfig:
    _require(isinstance(record, dict), "Barrier config must hold a JSON object", "config")
    unknown = sorted(set(record) - {"schema_version", "barriers"})
    _require(not unknown, f"Unknown field {unknown[0] if unknown else ''}", unknown[0] if unknown else "config")
    _require(record.get("schema_version") == SCHEMA_VERSION,
             f"Unsupported schema_version {record.get('schema_version')}, expected {SCHEMA_VERSION}",
             "schema_version")
    return _build(BarrierConfig, record.get("barriers", {}), "barriers")


def read_json(path) -> Dict:
    try:
        with open(path, encoding="utf-8") as in_file:
            return json.load(in_file)
    except OSError as err:
        raise ConfigError(f"Cannot read config {path}: {err}", field="config") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"Config {path} is not valid JSON: {err}", field="config") from err


def preset_names() -> List[str]:
    return sorted(p.stem for p in PRESETS_DIR.glob("*.json"))


def load_preset(name: str) -> ExperimentConfig:
    path = PRESETS_DIR / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"Unknown preset {name}. Available presets: {', '.join(preset_names())}", field="preset")
    return parse_experiment(read_json(path), source=name)


def load_experiment(path) -> ExperimentConfig:
    return parse_experiment(read_json(path), source=Path(path).stem)


def load_barrier_config(path) -> BarrierConfig:
    return parse_barrier_config(read_json(path))


@dataclass(frozen=True)
class RunConfig:
    """ Resolved command line: command, inputs, output root, seed and tolerance scale."""
    command: str
    config_path: Optional[Path] = None
    preset: Optional[str] = None
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    seed: int = 0
    tol_scale: float = 1.0
    workers: int = 1

    def __post_init__(self):
        _require(self.tol_scale > 0, "--tol-scale must be positive", "tol_scale")
        _require(self.workers >= 1, "--workers must be at least 1", "workers")


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)
