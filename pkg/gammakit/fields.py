"""
Periodic grids, supertensor layouts and fields.

A field holds m complex components at every grid point (real space) or at
every discrete frequency (Fourier space). Points are numbered with axis 0
varying fastest; frequencies use the same numbering. The forward transform
divides by the number of points, so the k = 0 coefficient is the cell mean.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Iterable, Literal, Optional, Tuple, Union

import numpy as np
import scipy.fft

from .errors import (
    InversionError,
    PenaltyError,
    ShapeError,
    SpaceError,
    UnsupportedDimensionError,
)
from .tensors import sym_size

logger = logging.getLogger(__name__)

Space = Literal["real", "fourier"]
BlockKind = Literal["scalar", "vector", "sym-matrix", "full-matrix"]
BLOCK_KINDS: Tuple[str, ...] = ("scalar", "vector", "sym-matrix", "full-matrix")


@dataclass(frozen=True)
class Grid:
    """
    A periodic rectangular cell sampled uniformly.
    """

    # Per-axis sample counts; each at least 2 and even.
    samples: Tuple[int, ...]
    # Per-axis cell edge lengths (dimensionless).
    lengths: Tuple[float, ...] = ()

    def __post_init__(self):
        samples = tuple(int(n) for n in self.samples)
        if len(samples) not in (2, 3):
            raise UnsupportedDimensionError(
                f"grids must be 2D or 3D, got {len(samples)} axes"
            )
        for n in samples:
            if n < 2 or n % 2 != 0:
                raise ShapeError(f"sample counts must be even and ≥ 2, got {n}")
        lengths = tuple(float(x) for x in self.lengths) or (1.0,) * len(samples)
        if len(lengths) != len(samples):
            raise ShapeError("one length per axis is required")
        if any(x <= 0 for x in lengths):
            raise ShapeError(f"lengths must be positive, got {lengths}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def square(cls, n: int, dim: int = 2, length: float = 1.0) -> Grid:
        return cls((n,) * dim, (length,) * dim)

    @property
    def dim(self) -> int:
        return len(self.samples)

    @property
    def size(self) -> int:
        return int(np.prod(self.samples))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.samples))

    def points(self) -> np.ndarray:
        """
        Sample coordinates, shape (N, d), axis 0 fastest.
        """
        axes = [np.arange(n) * h for n, h in zip(self.samples, self.spacing)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1, order="F") for m in mesh], axis=-1)

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """
        Reciprocal lattice vectors k, shape (N, d), in the same order as the
        points. The Nyquist index n/2 maps to the positive frequency.
        """
        axes = []
        for n, length in zip(self.samples, self.lengths):
            t = np.arange(n)
            wrapped = np.where(t <= n // 2, t, t - n)
            axes.append(2 * np.pi * wrapped / length)
        mesh = np.meshgrid(*axes, indexing="ij")
        k = np.stack([m.reshape(-1, order="F") for m in mesh], axis=-1)
        k.flags.writeable = False
        return k

    def index_of(self, *indices: int) -> int:
        "Flat point (or frequency) number of a multi-index."
        flat = 0
        stride = 1
        for t, n in zip(indices, self.samples):
            flat += (t % n) * stride
            stride *= n
        return flat

    def to_json(self) -> dict:
        return {"dim": self.dim, "samples": list(self.samples), "lengths": list(self.lengths)}

    @classmethod
    def from_json(cls, obj: dict) -> Grid:
        grid = cls(tuple(obj["samples"]), tuple(obj.get("lengths", ())))
        if "dim" in obj and obj["dim"] != grid.dim:
            raise ShapeError(f"dim {obj['dim']} disagrees with {grid.samples}")
        return grid


@dataclass(frozen=True)
class Block:
    kind: BlockKind
    label: str = ""

    def __post_init__(self):
        if self.kind not in BLOCK_KINDS:
            raise ShapeError(f"unknown block kind {self.kind!r}")

    def size(self, dim: int) -> int:
        if self.kind == "scalar":
            return 1
        if self.kind == "vector":
            return dim
        if self.kind == "sym-matrix":
            return sym_size(dim)
        return dim * dim


@dataclass(frozen=True)
class SupertensorLayout:
    """
    The ordered blocks that make up one supertensor value.

    Symmetric-matrix blocks use the Mandel basis (see tensors.py), so every
    component weight of the inner product is 1.
    """

    dim: int
    blocks: Tuple[Block, ...]

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise UnsupportedDimensionError(f"layouts must be 2D or 3D, not {self.dim}")
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @classmethod
    def of(cls, dim: int, *specs: Union[str, Tuple[str, str]]) -> SupertensorLayout:
        """
        SupertensorLayout.of(2, "vector") or
        SupertensorLayout.of(2, ("sym-matrix", "stress"), ("scalar", "temperature")).
        """
        blocks = []
        for spec in specs:
            if isinstance(spec, str):
                blocks.append(Block(spec))  # type: ignore[arg-type]
            else:
                blocks.append(Block(spec[0], spec[1]))  # type: ignore[arg-type]
        return cls(dim, tuple(blocks))

    @property
    def sizes(self) -> Tuple[int, ...]:
        return tuple(b.size(self.dim) for b in self.blocks)

    @property
    def m(self) -> int:
        return sum(self.sizes)

    @property
    def weights(self) -> np.ndarray:
        return np.ones(self.m)

    @property
    def kinds(self) -> Tuple[str, ...]:
        return tuple(b.kind for b in self.blocks)

    def block_slice(self, index: int) -> slice:
        start = sum(self.sizes[:index])
        return slice(start, start + self.sizes[index])

    def component_labels(self) -> Tuple[str, ...]:
        labels = []
        for number, (block, size) in enumerate(zip(self.blocks, self.sizes)):
            name = block.label or f"{block.kind}{number}"
            labels.extend(name if size == 1 else f"{name}[{c}]" for c in range(size))
        return tuple(labels)

    def concat(self, *others: SupertensorLayout) -> SupertensorLayout:
        blocks = list(self.blocks)
        for other in others:
            if other.dim != self.dim:
                raise ShapeError("cannot concatenate layouts of different dimension")
            blocks.extend(other.blocks)
        return SupertensorLayout(self.dim, tuple(blocks))

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "blocks": [{"kind": b.kind, "label": b.label} for b in self.blocks],
        }

    @classmethod
    def from_json(cls, obj: dict, dim: Optional[int] = None) -> SupertensorLayout:
        dim = obj.get("dim", dim)
        if dim is None:
            raise ShapeError("layout needs a dimension")
        return cls(dim, tuple(Block(b["kind"], b.get("label", "")) for b in obj["blocks"]))


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.complex128, copy=True, order="C")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    layout: SupertensorLayout
    space: Space
    # Complex values of shape (points, m).
    values: np.ndarray

    def __post_init__(self):
        if self.space not in ("real", "fourier"):
            raise SpaceError(f"unknown space {self.space!r}")
        if self.layout.dim != self.grid.dim:
            raise ShapeError("layout and grid dimensions differ")
        values = np.asarray(self.values)
        if values.ndim == 1 and self.layout.m == 1:
            values = values[:, None]
        if values.shape != (self.grid.size, self.layout.m):
            raise ShapeError(
                f"field values must have shape {(self.grid.size, self.layout.m)}, "
                f"got {values.shape}"
            )
        object.__setattr__(self, "values", _readonly(values))

    @classmethod
    def zeros(cls, grid: Grid, layout: SupertensorLayout, space: Space = "real") -> Field:
        return cls(grid, layout, space, np.zeros((grid.size, layout.m)))

    @classmethod
    def constant(cls, grid: Grid, layout: SupertensorLayout, value) -> Field:
        value = np.broadcast_to(np.asarray(value, dtype=np.complex128), (layout.m,))
        return cls(grid, layout, "real", np.tile(value, (grid.size, 1)))

    @classmethod
    def from_function(
        cls,
        grid: Grid,
        layout: SupertensorLayout,
        function: Callable[[np.ndarray], np.ndarray],
    ) -> Field:
        """
        Sample function(points) → (N, m) values in real space.
        """
        return cls(grid, layout, "real", np.asarray(function(grid.points())))

    def with_values(self, values: np.ndarray, space: Optional[Space] = None) -> Field:
        return Field(self.grid, self.layout, space or self.space, values)

    def block(self, index: int) -> np.ndarray:
        return self.values[:, self.layout.block_slice(index)]

    def on_grid(self) -> np.ndarray:
        "Values reshaped to (*samples, m)."
        return self.values.reshape(self.grid.samples + (self.layout.m,), order="F")

    def to_fourier(self, workers: Optional[int] = None) -> Field:
        return self if self.space == "fourier" else fft_forward(self, workers)

    def to_real(self, workers: Optional[int] = None) -> Field:
        return self if self.space == "real" else fft_inverse(self, workers)

    def norm(self) -> float:
        return float(np.sqrt(max(inner_product(self, self).real, 0.0)))

    def _check_compatible(self, other: Field):
        if other.grid != self.grid or other.layout != self.layout:
            raise ShapeError("fields live on different grids or layouts")
        if other.space != self.space:
            raise SpaceError("fields live in different spaces")

    def __add__(self, other: Field) -> Field:
        self._check_compatible(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: Field) -> Field:
        self._check_compatible(other)
        return self.with_values(self.values - other.values)

    def __neg__(self) -> Field:
        return self.with_values(-self.values)

    def __mul__(self, scalar: complex) -> Field:
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__


def _pairwise_sum(values: np.ndarray) -> complex:
    # A contiguous 1-D reduction makes numpy use its pairwise summation tree.
    return complex(np.sum(np.ascontiguousarray(values).reshape(-1)))


def inner_product(a: Field, b: Field) -> complex:
    """
    Weighted 𝒯 inner product, conjugate-linear in `a`.

    In real space this is the cell average of the pointwise product; in
    Fourier space it is the plain sum over frequencies, which agrees with the
    real-space value by Parseval's identity.
    """
    if a.grid != b.grid or a.layout != b.layout:
        raise ShapeError("inner product of fields on different grids or layouts")
    if a.space != b.space:
        raise SpaceError("inner product of fields in different spaces")
    total = _pairwise_sum(np.conj(a.values) * b.values * a.layout.weights)
    if a.space == "real":
        return total / a.grid.size
    return total


def forward_values(grid: Grid, values: np.ndarray, workers: Optional[int] = None) -> np.ndarray:
    """
    Forward transform of raw (N, m) values, normalized by 1/N.
    """
    m = values.shape[-1]
    shaped = values.reshape(grid.samples + (m,), order="F")
    spectrum = scipy.fft.fftn(
        shaped, axes=tuple(range(grid.dim)), norm="forward", workers=workers
    )
    return spectrum.reshape((grid.size, m), order="F")


def inverse_values(grid: Grid, values: np.ndarray, workers: Optional[int] = None) -> np.ndarray:
    m = values.shape[-1]
    shaped = values.reshape(grid.samples + (m,), order="F")
    signal = scipy.fft.ifftn(
        shaped, axes=tuple(range(grid.dim)), norm="forward", workers=workers
    )
    return signal.reshape((grid.size, m), order="F")


def fft_forward(f: Field, workers: Optional[int] = None) -> Field:
    if f.space != "real":
        raise SpaceError("fft_forward needs a real-space field")
    return Field(f.grid, f.layout, "fourier", forward_values(f.grid, f.values, workers))


def fft_inverse(f: Field, workers: Optional[int] = None) -> Field:
    if f.space != "fourier":
        raise SpaceError("fft_inverse needs a Fourier-space field")
    return Field(f.grid, f.layout, "real", inverse_values(f.grid, f.values, workers))


def average(f: Field) -> np.ndarray:
    """
    Cell mean, which is also the k = 0 Fourier coefficient.
    """
    if f.space == "fourier":
        return np.array(f.values[0])
    columns = np.ascontiguousarray(f.values.T)
    return np.sum(columns, axis=1) / f.grid.size


def is_hermitian_spectrum(f: Field, tol: float = 1e-13) -> bool:
    """
    True if the Fourier coefficients satisfy c(−k) = conj(c(k)), as they do
    for any field sampled from real data.
    """
    spectrum = f.to_fourier().on_grid()
    mirrored = spectrum
    for axis in range(f.grid.dim):
        mirrored = np.roll(np.flip(mirrored, axis=axis), 1, axis=axis)
    scale = max(np.max(np.abs(spectrum)), 1.0)
    return bool(np.max(np.abs(mirrored - np.conj(spectrum))) <= tol * scale)


def broadcast_points(grid: Grid, value, shape: Tuple[int, ...]) -> np.ndarray:
    """
    Broadcast a constant of `shape` (or per-point data of (N, *shape), or a
    scalar) to a complex (N, *shape) array.
    """
    array = np.asarray(value, dtype=np.complex128)
    target = (grid.size,) + tuple(shape)
    if array.shape == target:
        return array
    if array.ndim == 1 and array.shape[0] == grid.size and len(shape) == 2 and shape[0] == shape[1]:
        # Per-point scalars standing for multiples of the identity.
        return array[:, None, None] * np.eye(shape[0])
    if array.ndim == 0 and len(shape) == 2 and shape[0] == shape[1]:
        return np.broadcast_to(array * np.eye(shape[0]), target).copy()
    try:
        return np.broadcast_to(array, target).copy()
    except ValueError:
        raise ShapeError(f"cannot broadcast {array.shape} to {target}") from None


# Local operators ############################################################


@dataclass(frozen=True, eq=False)
class PenaltySlot:
    """
    A symbolic infinite modulus, realized as weight × action on the
    (row_block, col_block) slot of the operator.
    """

    row_block: int
    col_block: int
    # Constant matrix acting on that slot.
    action: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """
    A per-point m × m matrix L(x), optionally carrying penalty slots.
    """

    grid: Grid
    layout: SupertensorLayout
    matrices: np.ndarray
    penalties: Tuple[PenaltySlot, ...] = field(default=())

    def __post_init__(self):
        m = self.layout.m
        matrices = np.asarray(self.matrices)
        if matrices.shape != (self.grid.size, m, m):
            raise ShapeError(
                f"operator matrices must have shape {(self.grid.size, m, m)}, "
                f"got {matrices.shape}"
            )
        object.__setattr__(self, "matrices", _readonly(matrices))
        sizes = self.layout.sizes
        for slot in self.penalties:
            expected = (sizes[slot.row_block], sizes[slot.col_block])
            if np.shape(slot.action) != expected:
                raise ShapeError(
                    f"penalty action must have shape {expected}, got {np.shape(slot.action)}"
                )
        object.__setattr__(self, "penalties", tuple(self.penalties))

    @classmethod
    def constant(
        cls,
        grid: Grid,
        layout: SupertensorLayout,
        matrix,
        penalties: Iterable[PenaltySlot] = (),
    ) -> LocalOperator:
        matrices = broadcast_points(grid, matrix, (layout.m, layout.m))
        return cls(grid, layout, matrices, tuple(penalties))

    @classmethod
    def identity(cls, grid: Grid, layout: SupertensorLayout) -> LocalOperator:
        return cls.constant(grid, layout, np.eye(layout.m))

    @property
    def penalty_active(self) -> bool:
        return bool(self.penalties)

    @cached_property
    def assembled(self) -> np.ndarray:
        """
        Per-point matrices with every penalty slot added in.
        """
        if not self.penalties:
            return self.matrices
        out = np.array(self.matrices)
        for slot in self.penalties:
            rows = self.layout.block_slice(slot.row_block)
            cols = self.layout.block_slice(slot.col_block)
            out[:, rows, cols] += slot.weight * np.asarray(slot.action)
        out.flags.writeable = False
        return out

    def with_penalty(self, weight: float) -> LocalOperator:
        slots = tuple(replace(slot, weight=float(weight)) for slot in self.penalties)
        return LocalOperator(self.grid, self.layout, self.matrices, slots)

    def finite_norm(self) -> float:
        "Largest pointwise 2-norm of the finite (non-penalty) part."
        if not np.any(self.matrices):
            return 0.0
        return float(np.max(np.linalg.norm(self.matrices, ord=2, axis=(1, 2))))

    def mean(self) -> np.ndarray:
        return np.mean(self.assembled, axis=0)

    def is_homogeneous(self, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.assembled - self.assembled[0])) <= tol)

    def adjoint(self) -> LocalOperator:
        slots = tuple(
            PenaltySlot(s.col_block, s.row_block, np.conj(np.asarray(s.action)).T, s.weight)
            for s in self.penalties
        )
        return LocalOperator(
            self.grid, self.layout, np.conj(np.swapaxes(self.matrices, 1, 2)), slots
        )

    def hermitian_defect(self) -> float:
        """
        max over points of ‖L − L†‖ / ‖L‖ (Frobenius), penalties included.
        """
        a = self.assembled
        scale = max(float(np.max(np.abs(a))), np.finfo(float).tiny)
        return float(np.max(np.abs(a - np.conj(np.swapaxes(a, 1, 2))))) / scale

    def is_hermitian(self, tol: float = 1e-13) -> bool:
        return self.hermitian_defect() <= tol

    def min_eigenvalue(self) -> Tuple[float, int]:
        """
        Smallest eigenvalue of the Hermitian part over all points, and where.
        """
        a = self.assembled
        hermitian = 0.5 * (a + np.conj(np.swapaxes(a, 1, 2)))
        eigenvalues = np.linalg.eigvalsh(hermitian)[:, 0]
        point = int(np.argmin(eigenvalues))
        return float(eigenvalues[point]), point

    def inverse(self) -> LocalOperator:
        """
        Pointwise inverse. An infinite modulus has no finite inverse that
        keeps its slot, so penalized operators raise PenaltyError.
        """
        if self.penalties:
            raise PenaltyError("cannot invert an operator with penalty slots")
        a = self.matrices
        condition = np.linalg.cond(a)
        bad = np.flatnonzero(~np.isfinite(condition) | (condition > 1e14))
        if bad.size:
            raise InversionError("local operator is singular", int(bad[0]))
        return LocalOperator(self.grid, self.layout, np.linalg.inv(a))

    def plus(self, matrix) -> LocalOperator:
        "L + M for a constant or per-point M; penalty slots are kept."
        extra = broadcast_points(self.grid, matrix, (self.layout.m, self.layout.m))
        return LocalOperator(self.grid, self.layout, self.matrices + extra, self.penalties)

    def scaled_by(self, profile: np.ndarray) -> LocalOperator:
        "Multiply the finite part by a per-point scalar profile."
        profile = np.asarray(profile).reshape(-1)
        return LocalOperator(
            self.grid, self.layout, self.matrices * profile[:, None, None], self.penalties
        )


def apply_local(L: LocalOperator, f: Field) -> Field:
    if f.space != "real":
        raise SpaceError("local operators act on real-space fields")
    if f.grid != L.grid or f.layout != L.layout:
        raise ShapeError("operator and field live on different grids or layouts")
    return f.with_values(np.matmul(L.assembled, f.values[:, :, None])[:, :, 0])


# Spectral derivatives ########################################################


def divergence(f: Field, block: int, workers: Optional[int] = None) -> np.ndarray:
    """
    Fourier coefficients of the divergence of a vector block (or the
    divergence over the first index of a full-matrix block). Returns
    shape (N,) for a vector block and (N, d) for a matrix block.
    """
    spectrum = f.to_fourier(workers).block(block)
    kind = f.layout.blocks[block].kind
    k = f.grid.wavevectors
    d = f.grid.dim
    if kind == "vector":
        return np.sum(1j * k * spectrum, axis=1)
    if kind == "full-matrix":
        matrices = spectrum.reshape(-1, d, d)
        return np.einsum("ni,nij->nj", 1j * k, matrices)
    raise ShapeError(f"divergence of a {kind} block is not defined here")


def gradient(grid: Grid, scalar_spectrum: np.ndarray) -> np.ndarray:
    "Fourier coefficients of ∇φ given those of φ, shape (N, d)."
    return 1j * grid.wavevectors * np.asarray(scalar_spectrum).reshape(-1, 1)


def spectral_norm(grid: Grid, spectrum: np.ndarray) -> float:
    "Root of the sum of squared moduli over frequencies (the L² cell norm)."
    return float(np.sqrt(np.sum(np.abs(np.asarray(spectrum)) ** 2)))
