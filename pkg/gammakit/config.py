"""
Run configurations: JSON files validated with pydantic, and the code that
turns a validated configuration into a Problem.

A minimal configuration:

    {
      "physics": "conductivity",
      "grid": {"dim": 2, "resolution": 64},
      "geometry": {"kind": "checkerboard"},
      "phases": [{"sigma": 4.0}, {"sigma": 1.0}]
    }
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import microstructure
from . import physics as ph
from .errors import ConfigError, GammakitError
from .fields import Grid
from .gfld import read_field
from .microstructure import PhaseMap
from .physics import CATALOG, Problem
from .solver import SolveOptions
from .tensors import isotropic_compliance, isotropic_stiffness, sym_size

logger = logging.getLogger(__name__)

# A scalar, a vector, or a matrix given as nested rows.
Tensor = Union[float, List[float], List[List[float]]]

PHYSICS_TAGS: Tuple[str, ...] = tuple(entry.tag for entry in CATALOG)

# Phase parameters each physics needs.
REQUIRED_PHASE_KEYS: Dict[str, Tuple[str, ...]] = {
    "conductivity": ("sigma",),
    "antiplane": ("c1313", "c2323"),
    "torsion": ("c1313", "c2323"),
    "magnetostatics": ("mu",),
    "thermoelectric": ("L11", "L12", "L21", "L22"),
    "dielectric-cg": ("eps_real", "eps_imag"),
    "magnetotransport": ("sigma_s",),
    "elasticity": ("bulk", "shear"),
    "thermoelasticity": ("bulk", "shear", "thermal_expansion", "heat_capacity"),
    "coupled-eme": ("bulk", "shear", "permittivity", "permeability"),
    "viscoelastic-cg": ("bulk", "shear", "bulk_loss", "shear_loss"),
    "graphene": ("sigma0",),
    "oseen": ("density", "viscosity"),
}


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(StrictModel):
    dim: Literal[2, 3] = 2
    resolution: Optional[int] = None
    samples: Optional[List[int]] = None
    lengths: Optional[List[float]] = None

    @model_validator(mode="after")
    def _one_size(self):
        if (self.resolution is None) == (self.samples is None):
            raise ValueError("give exactly one of resolution and samples")
        if self.samples is not None and len(self.samples) != self.dim:
            raise ValueError(f"samples needs {self.dim} entries")
        return self

    def build(self) -> Grid:
        samples = self.samples or [self.resolution] * self.dim  # type: ignore[list-item]
        return Grid(tuple(samples), tuple(self.lengths or ()))


class UniformGeometry(StrictModel):
    kind: Literal["uniform"]


class CheckerboardGeometry(StrictModel):
    kind: Literal["checkerboard"]
    squares: int = 2


class LaminateGeometry(StrictModel):
    kind: Literal["laminate"]
    axis: int = 0
    fractions: List[float] = [0.5, 0.5]


class DiskGeometry(StrictModel):
    kind: Literal["disk"]
    radius: float = Field(gt=0)


class CosineGeometry(StrictModel):
    """
    One phase whose moduli are scaled by mean + amplitude·cos(2πx/length).
    """

    kind: Literal["cosine"]
    axis: int = 0
    mean: float = 2.0
    amplitude: float = 1.0


class VoxelGeometry(StrictModel):
    kind: Literal["voxels"]
    path: str


Geometry = Union[
    UniformGeometry,
    CheckerboardGeometry,
    LaminateGeometry,
    DiskGeometry,
    CosineGeometry,
    VoxelGeometry,
]


class PhaseConfig(StrictModel):
    sigma: Optional[Tensor] = None
    mu: Optional[Tensor] = None
    magnetization: Optional[List[float]] = None
    L11: Optional[Tensor] = None
    L12: Optional[Tensor] = None
    L21: Optional[Tensor] = None
    L22: Optional[Tensor] = None
    eps_real: Optional[Tensor] = None
    eps_imag: Optional[Tensor] = None
    sigma_s: Optional[Tensor] = None
    sigma_a: Optional[Tensor] = None
    bulk: Optional[float] = None
    shear: Optional[float] = None
    bulk_loss: Optional[float] = None
    shear_loss: Optional[float] = None
    thermal_expansion: Optional[float] = None
    heat_capacity: Optional[float] = None
    c1313: Optional[float] = None
    c1323: float = 0.0
    c2323: Optional[float] = None
    piezoelectric: Optional[List[List[float]]] = None
    piezomagnetic: Optional[List[List[float]]] = None
    permittivity: Optional[Tensor] = None
    magnetoelectric: Optional[Tensor] = None
    permeability: Optional[Tensor] = None
    sigma0: Optional[float] = None
    diffusion: float = 0.0
    density: Optional[float] = None
    viscosity: Optional[float] = None
    # Per-phase source, in the same shape as a constant source.
    source: Optional[List[float]] = None


class ConstantSource(StrictModel):
    kind: Literal["constant"]
    value: List[float]


class GfldSource(StrictModel):
    kind: Literal["gfld"]
    path: str


class Mode(StrictModel):
    index: List[int]
    amplitude: List[float]


class ModesSource(StrictModel):
    """
    Σ amplitude·cos(k·x) over the listed lattice modes; a real field.
    """

    kind: Literal["modes"]
    modes: List[Mode]


Source = Union[ConstantSource, GfldSource, ModesSource]


class SolverConfig(StrictModel):
    tolerance: float = Field(default=1e-10, gt=0, lt=1)
    max_iterations: Optional[int] = Field(default=None, ge=1)
    method: Literal["auto", "hermitian-cg", "general-krylov"] = "auto"
    precondition: bool = True
    restart: int = Field(default=50, ge=1)
    reference_medium: Optional[List[List[float]]] = None


class RunConfig(StrictModel):
    physics: str
    grid: GridConfig
    geometry: Geometry = Field(
        default_factory=lambda: UniformGeometry(kind="uniform"), discriminator="kind"
    )
    phases: List[PhaseConfig]
    source: Optional[Source] = Field(default=None, discriminator="kind")
    # Mean field of a cell solve; the infinite-body form is solved without it.
    applied_field: Optional[List[float]] = None
    solver: SolverConfig = Field(default_factory=SolverConfig)
    penalty: Optional[float] = Field(default=None, gt=0)
    twist: float = 0.0
    velocity: Optional[List[float]] = None
    convection_sign: Literal[1, -1] = 1
    temperature: float = 0.0
    # Homogenization: restrict the mean subspace to these components.
    components: Optional[List[int]] = None
    dump_columns: bool = False
    seed: int = 0

    @field_validator("physics")
    @classmethod
    def _known_physics(cls, value: str) -> str:
        if value not in PHYSICS_TAGS:
            raise ValueError(f"unknown physics {value!r}; known: {', '.join(PHYSICS_TAGS)}")
        return value

    @model_validator(mode="after")
    def _phase_parameters(self):
        required = REQUIRED_PHASE_KEYS[self.physics]
        for number, phase in enumerate(self.phases):
            missing = [key for key in required if getattr(phase, key) is None]
            if missing:
                raise ValueError(f"phase {number + 1} is missing {', '.join(missing)}")
        if not self.phases:
            raise ValueError("at least one phase is required")
        single = isinstance(self.geometry, (UniformGeometry, CosineGeometry))
        if single and len(self.phases) != 1:
            raise ValueError(f"{self.geometry.kind} geometry takes exactly one phase")
        return self

    def solve_options(self, workers: Optional[int] = None) -> SolveOptions:
        s = self.solver
        return SolveOptions(
            tolerance=s.tolerance,
            max_iterations=s.max_iterations,
            method=s.method,
            precondition=s.precondition,
            restart=s.restart,
            reference_medium=None if s.reference_medium is None else np.array(s.reference_medium),
            workers=workers,
        )


def _format_location(loc) -> str:
    return ".".join(str(part) for part in loc) or "(root)"


def parse_config(text: str, origin: str = "<config>") -> RunConfig:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{origin}:{e.lineno}:{e.colno}: {e.msg}") from e
    try:
        return RunConfig.model_validate(obj)
    except ValidationError as e:
        problems = "; ".join(
            f"{_format_location(error['loc'])}: {error['msg']}" for error in e.errors()
        )
        raise ConfigError(f"{origin}: {problems}") from e


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="UTF-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    return parse_config(text, str(path))


def apply_overrides(
    cfg: RunConfig, tolerance: Optional[float] = None, resolution: Optional[int] = None
) -> RunConfig:
    if tolerance is not None:
        if not 0 < tolerance < 1:
            raise ConfigError(f"--tol must lie in (0, 1), got {tolerance}")
        solver = cfg.solver.model_copy(update={"tolerance": tolerance})
        cfg = cfg.model_copy(update={"solver": solver})
    if resolution is not None:
        grid = GridConfig(dim=cfg.grid.dim, resolution=resolution, lengths=cfg.grid.lengths)
        cfg = cfg.model_copy(update={"grid": grid})
    return cfg


# Building problems ###########################################################


def _labels(cfg: RunConfig, grid: Grid, base_dir: Path) -> np.ndarray:
    g = cfg.geometry
    if isinstance(g, (UniformGeometry, CosineGeometry)):
        return microstructure.uniform(grid)
    if isinstance(g, CheckerboardGeometry):
        return microstructure.checkerboard(grid, g.squares)
    if isinstance(g, LaminateGeometry):
        return microstructure.laminate(grid, g.axis, g.fractions)
    if isinstance(g, DiskGeometry):
        return microstructure.disk(grid, g.radius)
    assert isinstance(g, VoxelGeometry)
    return microstructure.load_voxels(base_dir / g.path, grid)


def _phase_value(raw, shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    array = np.asarray(0.0 if raw is None else raw, dtype=float)
    if shape is None:
        return array
    if array.ndim == 0 and len(shape) == 2 and shape[0] == shape[1]:
        return array * np.eye(shape[0])
    return np.broadcast_to(array, shape)


def _scaled(values: np.ndarray, profile: Optional[np.ndarray]) -> np.ndarray:
    if profile is None:
        return values
    return values * profile.reshape((-1,) + (1,) * (values.ndim - 1))


def _per_point(phases: PhaseMap, cfg: RunConfig, key: str, profile: Optional[np.ndarray]):
    """
    Per-point values of a phase parameter. Scalars and matrices may be
    mixed across phases; scalars then stand for multiples of I.
    """
    arrays = [_phase_value(getattr(phase, key)) for phase in cfg.phases]
    matrices = [a for a in arrays if a.ndim == 2]
    if matrices and any(a.ndim == 0 for a in arrays):
        arrays = [_phase_value(a, matrices[0].shape) for a in arrays]
    return _scaled(phases.per_point(arrays), profile)


def _optional_per_point(
    phases: PhaseMap, cfg: RunConfig, key: str, shape: Tuple[int, ...], profile
):
    "Like _per_point for parameters that default to zero."
    arrays = [_phase_value(getattr(phase, key), shape) for phase in cfg.phases]
    return _scaled(phases.per_point(arrays), profile)


def source_size(physics: str, dim: int) -> int:
    "Length of a constant source for the builder of a physics."
    n = sym_size(dim)
    sizes = {
        "thermoelectric": 2 * dim,
        "elasticity": n,
        "viscoelastic-cg": n,
        "thermoelasticity": n + 1,
        "coupled-eme": n + 2 * dim,
    }
    return sizes.get(physics, dim)


def _source(cfg: RunConfig, grid: Grid, phases: PhaseMap, base_dir: Path) -> Optional[np.ndarray]:
    size = source_size(cfg.physics, grid.dim)
    total = np.zeros((grid.size, size), dtype=np.complex128)
    present = False
    s = cfg.source
    if isinstance(s, ConstantSource):
        if len(s.value) != size:
            raise ConfigError(f"source.value needs {size} entries for {cfg.physics}")
        total = total + np.asarray(s.value)
        present = True
    elif isinstance(s, ModesSource):
        x = grid.points()
        for number, mode in enumerate(s.modes):
            if len(mode.index) != grid.dim or len(mode.amplitude) != size:
                raise ConfigError(
                    f"source.modes.{number}: index needs {grid.dim}, amplitude {size} entries"
                )
            k = 2 * np.pi * np.asarray(mode.index) / np.asarray(grid.lengths)
            total = total + np.cos(x @ k)[:, None] * np.asarray(mode.amplitude)
        present = True
    elif isinstance(s, GfldSource):
        field = read_field(base_dir / s.path)
        if field.grid != grid or field.layout.m != size:
            raise ConfigError(f"{s.path} does not match the grid or the source size {size}")
        total = total + field.to_real().values
        present = True
    if any(phase.source is not None for phase in cfg.phases):
        per_phase = [
            np.zeros(size) if phase.source is None else np.asarray(phase.source)
            for phase in cfg.phases
        ]
        if any(v.shape != (size,) for v in per_phase):
            raise ConfigError(f"phase sources need {size} entries for {cfg.physics}")
        total = total + phases.per_point(per_phase)
        present = True
    return total if present else None


def build_problem(cfg: RunConfig, base_dir: Union[str, Path] = ".") -> Problem:
    """
    Turn a validated configuration into a Problem. Errors from the builders
    surface as ConfigError.
    """
    base_dir = Path(base_dir)
    try:
        return _build(cfg, base_dir)
    except ConfigError:
        raise
    except (GammakitError, KeyError) as e:
        raise ConfigError(f"cannot build the {cfg.physics} problem: {e}") from e


def _build(cfg: RunConfig, base_dir: Path) -> Problem:
    grid = cfg.grid.build()
    d = grid.dim
    labels = _labels(cfg, grid, base_dir)
    phases = PhaseMap(grid, labels, tuple(np.zeros(1) for _ in cfg.phases))
    profile = None
    if isinstance(cfg.geometry, CosineGeometry):
        g = cfg.geometry
        profile = microstructure.cosine_profile(grid, g.axis, g.mean, g.amplitude)

    def value(key: str):
        return _per_point(phases, cfg, key, profile)

    source = _source(cfg, grid, phases, base_dir)
    physics = cfg.physics
    logger.debug("Building %s on %s with %d phases", physics, grid.samples, len(cfg.phases))

    if physics == "conductivity":
        return ph.build_conductivity(grid, value("sigma"), source)
    if physics in ("torsion", "antiplane"):
        tau = cfg.twist if physics == "torsion" else 0.0
        return ph.build_torsion(grid, value("c1313"), value("c1323"), value("c2323"), tau, source)
    if physics == "magnetostatics":
        magnetization = _optional_per_point(phases, cfg, "magnetization", (d,), None)
        return ph.build_magnetostatics(grid, value("mu"), magnetization, source)
    if physics == "thermoelectric":
        return ph.build_thermoelectric(
            grid, value("L11"), value("L12"), value("L21"), value("L22"), source
        )
    if physics == "dielectric-cg":
        return ph.build_dielectric_cg(grid, value("eps_real"), value("eps_imag"), source)
    if physics == "magnetotransport":
        sigma_a = _optional_per_point(phases, cfg, "sigma_a", (d, d), profile)
        return ph.build_magnetotransport(grid, value("sigma_s"), sigma_a=sigma_a, source=source)
    if physics == "elasticity":
        C = isotropic_stiffness(d, value("bulk"), value("shear"))
        polarization = None
        if cfg.temperature and any(p.thermal_expansion for p in cfg.phases):
            alpha = phases.per_point([p.thermal_expansion or 0.0 for p in cfg.phases])
            polarization = ph.thermal_stress_source(C, alpha, cfg.temperature)
        return ph.build_elasticity(grid, C, source, polarization)
    if physics == "thermoelasticity":
        S = isotropic_compliance(d, value("bulk"), value("shear"))
        return ph.build_thermoelasticity(
            grid, S, value("thermal_expansion"), value("heat_capacity"), source
        )
    if physics == "coupled-eme":
        n = sym_size(d)
        S = isotropic_compliance(d, value("bulk"), value("shear"))
        return ph.build_coupled_eme(
            grid,
            S,
            _optional_per_point(phases, cfg, "piezoelectric", (n, d), profile),
            _optional_per_point(phases, cfg, "piezomagnetic", (n, d), profile),
            value("permittivity"),
            _optional_per_point(phases, cfg, "magnetoelectric", (d, d), profile),
            value("permeability"),
            source,
        )
    if physics == "viscoelastic-cg":
        C_real = isotropic_stiffness(d, value("bulk"), value("shear"))
        C_imag = isotropic_stiffness(d, value("bulk_loss"), value("shear_loss"))
        return ph.build_viscoelastic_cg(grid, C_real, C_imag, source)
    if physics == "graphene":
        return ph.build_graphene(grid, value("sigma0"), value("diffusion"), cfg.penalty, source)
    if physics == "oseen":
        if cfg.velocity is None or len(cfg.velocity) != d:
            raise ConfigError(f"oseen needs a {d}-component velocity")
        return ph.build_oseen(
            grid,
            value("density"),
            np.asarray(cfg.velocity),
            value("viscosity"),
            cfg.penalty,
            source,
            cfg.convection_sign,
        )
    raise ConfigError(f"no builder for {physics!r}")


