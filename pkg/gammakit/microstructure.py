"""
Phase geometries on a grid, and piecewise-constant material data on them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, ShapeError
from .fields import Field, Grid, LocalOperator, SupertensorLayout

logger = logging.getLogger(__name__)


def _indices(grid: Grid) -> np.ndarray:
    "Integer multi-indices of the points, shape (N, d), axis 0 fastest."
    mesh = np.meshgrid(*(np.arange(n) for n in grid.samples), indexing="ij")
    return np.stack([m.reshape(-1, order="F") for m in mesh], axis=-1)


def uniform(grid: Grid) -> np.ndarray:
    return np.ones(grid.size, dtype=np.int64)


def checkerboard(grid: Grid, squares: int = 2) -> np.ndarray:
    """
    A checkerboard with `squares` squares along each axis of the cell.
    The square containing the origin is phase 1.
    """
    for n in grid.samples:
        if n % squares:
            raise ShapeError(f"{n} samples cannot be split into {squares} squares")
    t = _indices(grid)
    cells = t * squares // np.array(grid.samples)
    return np.where(np.sum(cells, axis=1) % 2 == 0, 1, 2)


def laminate(grid: Grid, axis: int = 0, fractions: Sequence[float] = (0.5, 0.5)) -> np.ndarray:
    """
    Layers normal to `axis`, phase q occupying fractions[q-1] of the cell.
    Fractions are rounded to whole sample planes.
    """
    fractions = np.asarray(fractions, dtype=float)
    if np.any(fractions <= 0) or not np.isclose(fractions.sum(), 1.0):
        raise ConfigError(f"laminate fractions must be positive and sum to 1: {fractions}")
    n = grid.samples[axis]
    edges = np.round(np.cumsum(fractions) * n).astype(int)
    t = _indices(grid)[:, axis]
    return 1 + np.searchsorted(edges, t, side="right")


def disk(grid: Grid, radius: float) -> np.ndarray:
    """
    A circular (2D) or spherical (3D) inclusion, phase 2, centred in the
    cell; phase 1 elsewhere. `radius` is in the same units as the lengths.
    """
    center = np.array(grid.lengths) / 2
    distance = np.linalg.norm(grid.points() - center, axis=1)
    return np.where(distance <= radius, 2, 1)


def cosine_profile(
    grid: Grid, axis: int = 0, mean: float = 2.0, amplitude: float = 1.0
) -> np.ndarray:
    "mean + amplitude·cos(2π x_axis / length_axis) at every point."
    x = grid.points()[:, axis]
    return mean + amplitude * np.cos(2 * np.pi * x / grid.lengths[axis])


def load_voxels(path: Union[str, Path], grid: Grid) -> np.ndarray:
    """
    Read raw unsigned 8-bit phase labels, axis 0 fastest, one per point.
    """
    data = np.fromfile(path, dtype=np.uint8)
    if data.size != grid.size:
        raise ConfigError(f"{path} holds {data.size} voxels, grid needs {grid.size}")
    if data.min() < 1:
        raise ConfigError(f"{path} contains label 0; labels start at 1")
    logger.debug("Loaded %d voxels with %d phases from %s", data.size, data.max(), path)
    return data.astype(np.int64)


def save_voxels(path: Union[str, Path], labels: np.ndarray) -> None:
    np.asarray(labels, dtype=np.uint8).tofile(path)


@dataclass(frozen=True, eq=False)
class PhaseMap:
    """
    An N-phase medium: integer labels 1..N at every point, with one tensor
    (and optionally one source) per phase.
    """

    grid: Grid
    labels: np.ndarray
    tensors: Tuple[np.ndarray, ...]
    sources: Tuple[np.ndarray, ...] = field(default=())

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.size != self.grid.size:
            raise ShapeError(f"{labels.size} labels for {self.grid.size} points")
        if labels.min() < 1 or labels.max() > len(self.tensors):
            raise ShapeError(
                f"labels must lie in 1..{len(self.tensors)}, "
                f"found {labels.min()}..{labels.max()}"
            )
        if self.sources and len(self.sources) != len(self.tensors):
            raise ShapeError("give one source per phase, or none")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "tensors", tuple(np.asarray(t) for t in self.tensors))
        object.__setattr__(self, "sources", tuple(np.asarray(s) for s in self.sources))

    @property
    def n_phases(self) -> int:
        return len(self.tensors)

    def volume_fractions(self) -> np.ndarray:
        counts = np.bincount(self.labels, minlength=self.n_phases + 1)[1:]
        return counts / self.grid.size

    def indicator(self, phase: int) -> np.ndarray:
        return (self.labels == phase).astype(float)

    def per_point(self, values: Sequence) -> np.ndarray:
        "Stack one value per phase and spread it over the points."
        return np.stack([np.asarray(v) for v in values])[self.labels - 1]

    def operator(self, layout: SupertensorLayout) -> LocalOperator:
        return LocalOperator(self.grid, layout, self.per_point(self.tensors))

    def source(self, layout: SupertensorLayout) -> Field:
        if not self.sources:
            return Field.zeros(self.grid, layout)
        return Field(self.grid, layout, "real", self.per_point(self.sources))

    def with_sources(self, sources: Sequence[np.ndarray]) -> PhaseMap:
        return PhaseMap(self.grid, self.labels, self.tensors, tuple(sources))
