"""
Fourier-space projections Γ₁(k).

Every evaluator accepts either a single wavevector of shape (d,) or a batch
of shape (N, d), and returns matrices of shape (m, m) or (N, m, m). The raw
catalog functions follow their closed forms. A ProjectionSpec evaluates to
zero at k = 0, where constant fields are applied means, except on vector
slots that carry a field value next to its gradient (Z, and from-D symbols
like gradient-with-value): there the mean is an unknown and Γ₁(0) keeps
the identity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Literal, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ShapeError, SingularSymbolError, UnsupportedDimensionError
from .fields import Block, Grid, SupertensorLayout
from .tensors import block_diagonal, cross_matrix, mandel_weights, sym_pairs, sym_size

logger = logging.getLogger(__name__)

# Below this |k|² a wavevector counts as the zero frequency.
ZERO_K = 1e-300
# Relative eigenvalue cutoff of the restricted inverse in gamma_from_D.
SYMBOL_CUTOFF = 1e-12


def _batch(k) -> Tuple[np.ndarray, bool]:
    k = np.asarray(k, dtype=float)
    if k.ndim == 1:
        return k[None, :], True
    if k.ndim != 2:
        raise ShapeError(f"wavevectors must have shape (d,) or (N, d), got {k.shape}")
    return k, False


def _unbatch(out: np.ndarray, single: bool) -> np.ndarray:
    return out[0] if single else out


def _squared_norm(k: np.ndarray) -> np.ndarray:
    return np.sum(k * k, axis=1)


def gamma_grad(k) -> np.ndarray:
    "k⊗k/k²; zero at k = 0."
    K, single = _batch(k)
    k2 = _squared_norm(K)
    safe = np.where(k2 > ZERO_K, k2, 1.0)
    out = K[:, :, None] * K[:, None, :] / safe[:, None, None]
    out[k2 <= ZERO_K] = 0.0
    return _unbatch(out.astype(np.complex128), single)


def gamma_divfree(k) -> np.ndarray:
    "I − k⊗k/k²; zero at k = 0."
    K, single = _batch(k)
    d = K.shape[1]
    out = np.eye(d) - gamma_grad(K)
    out[_squared_norm(K) <= ZERO_K] = 0.0
    return _unbatch(out, single)


def gamma_elastic(k) -> np.ndarray:
    """
    P(k) on the Mandel basis of symmetric matrices: the orthogonal
    projection onto the strains (a⊗k + k⊗a)/2.

    With n = k/|k|,
        P_ijlm = ½(n_i δ_jl n_m + n_i δ_jm n_l + n_j δ_il n_m + n_j δ_im n_l)
                 − n_i n_j n_l n_m
    """
    K, single = _batch(k)
    d = K.shape[1]
    k2 = _squared_norm(K)
    n = K / np.sqrt(np.where(k2 > ZERO_K, k2, 1.0))[:, None]
    pairs = sym_pairs(d)
    weights = mandel_weights(d)
    delta = np.eye(d)
    out = np.zeros((K.shape[0], len(pairs), len(pairs)), dtype=np.complex128)
    for a, (i, j) in enumerate(pairs):
        for b, (l, m) in enumerate(pairs):
            value = 0.5 * (
                n[:, i] * delta[j, l] * n[:, m]
                + n[:, i] * delta[j, m] * n[:, l]
                + n[:, j] * delta[i, l] * n[:, m]
                + n[:, j] * delta[i, m] * n[:, l]
            ) - n[:, i] * n[:, j] * n[:, l] * n[:, m]
            out[:, a, b] = weights[a] * weights[b] * value
    out[k2 <= ZERO_K] = 0.0
    return _unbatch(out, single)


def gamma_Z(k) -> np.ndarray:
    """
    Z(k) on a (full-matrix, vector) layout of size d² + d.

    For each column j, Z acts on the pair (M[:, j], w_j) as

        1/(1 + k²) [[k⊗k,  ik],
                    [−ikᵀ,  1 ]]

    which projects onto pairs of the form (ik ŵ_j, ŵ_j), i.e. onto (∇w, w).
    At k = 0 it is the identity on the vector block.
    """
    K, single = _batch(k)
    d = K.shape[1]
    k2 = _squared_norm(K)
    out = np.zeros((K.shape[0], d * d + d, d * d + d), dtype=np.complex128)
    # v = (ik, 1) for every column; Z = v v† / |v|².
    v = np.concatenate([1j * K, np.ones((K.shape[0], 1))], axis=1)
    block = v[:, :, None] * np.conj(v)[:, None, :] / (1.0 + k2)[:, None, None]
    for j in range(d):
        index = np.array([i * d + j for i in range(d)] + [d * d + j])
        out[:, index[:, None], index[None, :]] = block
    return _unbatch(out, single)


def eta_cross(k) -> np.ndarray:
    """
    η(k) with η(k)a = k × a. Only defined for d = 3.
    """
    K, single = _batch(k)
    if K.shape[1] != 3:
        raise UnsupportedDimensionError("η(k) is only defined in three dimensions")
    return _unbatch(cross_matrix(K), single)


# Factorization through a differential operator D(∇) #########################


@dataclass(frozen=True, eq=False)
class DSymbol:
    """
    A polynomial matrix symbol D(ik) = Σ_α C_α (ik)^α mapping p potential
    components to m field components.
    """

    dim: int
    field_size: int
    potential_size: int
    # (exponent multi-index, m × p coefficient matrix) pairs.
    terms: Tuple[Tuple[Tuple[int, ...], np.ndarray], ...]
    # Rank D(ik) must keep at every k ≠ 0, if known.
    structural_rank: Optional[int] = None
    name: str = "custom"

    def __post_init__(self):
        for exponent, coefficient in self.terms:
            if len(exponent) != self.dim:
                raise ShapeError(f"exponent {exponent} does not match dimension {self.dim}")
            if np.shape(coefficient) != (self.field_size, self.potential_size):
                raise ShapeError(
                    f"coefficients must be {self.field_size} × {self.potential_size}"
                )

    def evaluate(self, k) -> np.ndarray:
        "D(ik), shape (m, p) or (N, m, p)."
        K, single = _batch(k)
        ik = 1j * K
        out = np.zeros((K.shape[0], self.field_size, self.potential_size), dtype=np.complex128)
        for exponent, coefficient in self.terms:
            monomial = np.prod(ik ** np.asarray(exponent), axis=1)
            out += monomial[:, None, None] * np.asarray(coefficient)
        return _unbatch(out, single)

    def adjoint(self, k) -> np.ndarray:
        return np.conj(np.swapaxes(self.evaluate(k), -1, -2))

    @classmethod
    def gradient(cls, dim: int) -> DSymbol:
        "E = ∇ψ for a scalar potential ψ."
        terms = []
        for axis in range(dim):
            coefficient = np.zeros((dim, 1))
            coefficient[axis, 0] = 1.0
            terms.append((_unit_exponent(dim, axis), coefficient))
        return cls(dim, dim, 1, tuple(terms), structural_rank=1, name="gradient")

    @classmethod
    def symmetrized_gradient(cls, dim: int) -> DSymbol:
        "ε = (∇u + ∇uᵀ)/2 in the Mandel basis."
        pairs = sym_pairs(dim)
        weights = mandel_weights(dim)
        terms = []
        for axis in range(dim):
            coefficient = np.zeros((len(pairs), dim))
            for index, ((i, j), w) in enumerate(zip(pairs, weights)):
                for c in range(dim):
                    coefficient[index, c] = (
                        w * 0.5 * ((i == axis) * (j == c) + (j == axis) * (i == c))
                    )
            terms.append((_unit_exponent(dim, axis), coefficient))
        return cls(
            dim, sym_size(dim), dim, tuple(terms), structural_rank=dim, name="symmetrized-gradient"
        )

    @classmethod
    def curl(cls, dim: int = 3) -> DSymbol:
        "E = ∇ × u in three dimensions."
        if dim != 3:
            raise UnsupportedDimensionError("the vector curl is only defined in three dimensions")
        terms = []
        for axis in range(3):
            unit = np.zeros(3)
            unit[axis] = 1.0
            terms.append((_unit_exponent(3, axis), cross_matrix(unit)))
        return cls(3, 3, 3, tuple(terms), structural_rank=2, name="curl")

    @classmethod
    def stream_curl(cls) -> DSymbol:
        "E = (∂₂ψ, −∂₁ψ) for a scalar stream function in two dimensions."
        return cls(
            2,
            2,
            1,
            (
                ((0, 1), np.array([[1.0], [0.0]])),
                ((1, 0), np.array([[0.0], [-1.0]])),
            ),
            structural_rank=1,
            name="stream-curl",
        )

    @classmethod
    def gradient_with_value(cls, dim: int) -> DSymbol:
        "E = (∇w, w) for a vector potential w; reproduces Z(k)."
        m = dim * dim + dim
        terms = []
        value = np.zeros((m, dim))
        for j in range(dim):
            value[dim * dim + j, j] = 1.0
        terms.append(((0,) * dim, value))
        for axis in range(dim):
            coefficient = np.zeros((m, dim))
            for j in range(dim):
                coefficient[axis * dim + j, j] = 1.0
            terms.append((_unit_exponent(dim, axis), coefficient))
        return cls(dim, m, dim, tuple(terms), structural_rank=dim, name="gradient-with-value")

    @classmethod
    def block_diag(cls, *symbols: DSymbol) -> DSymbol:
        dim = symbols[0].dim
        if any(s.dim != dim for s in symbols):
            raise ShapeError("cannot stack symbols of different dimension")
        m = sum(s.field_size for s in symbols)
        p = sum(s.potential_size for s in symbols)
        terms = []
        row = col = 0
        for s in symbols:
            for exponent, coefficient in s.terms:
                padded = np.zeros((m, p), dtype=np.result_type(coefficient, float))
                padded[row : row + s.field_size, col : col + s.potential_size] = coefficient
                terms.append((exponent, padded))
            row += s.field_size
            col += s.potential_size
        ranks = [s.structural_rank for s in symbols]
        rank = None if any(r is None for r in ranks) else sum(ranks)  # type: ignore[arg-type]
        name = "+".join(s.name for s in symbols)
        return cls(dim, m, p, tuple(terms), structural_rank=rank, name=name)


def _unit_exponent(dim: int, axis: int) -> Tuple[int, ...]:
    return tuple(1 if a == axis else 0 for a in range(dim))


def _restricted_pseudo_inverse(D: DSymbol, K: np.ndarray):
    A = D.evaluate(K)
    F = np.conj(np.swapaxes(A, 1, 2)) @ A
    eigenvalues, vectors = np.linalg.eigh(F)
    scale = np.max(np.abs(eigenvalues), axis=1, keepdims=True)
    keep = (eigenvalues > SYMBOL_CUTOFF * scale) & (scale > 0)
    inverse_values = np.where(keep, 1.0 / np.where(keep, eigenvalues, 1.0), 0.0)
    F_plus = (vectors * inverse_values[:, None, :]) @ np.conj(np.swapaxes(vectors, 1, 2))
    return A, F_plus, keep.sum(axis=1)


def gamma_from_D(D: DSymbol, k) -> np.ndarray:
    """
    D(ik) F(k)⁺ D(ik)† with F = D†D, inverted on the range of D†.

    Raises SingularSymbolError if F loses rank below D.structural_rank at
    some k ≠ 0.
    """
    K, single = _batch(k)
    A, F_plus, ranks = _restricted_pseudo_inverse(D, K)
    if D.structural_rank is not None:
        nonzero = _squared_norm(K) > ZERO_K
        deficient = np.flatnonzero(nonzero & (ranks < D.structural_rank))
        if deficient.size:
            where = int(deficient[0])
            raise SingularSymbolError(
                f"symbol {D.name} has rank {int(ranks[where])} < {D.structural_rank}",
                K[where],
            )
    out = A @ F_plus @ np.conj(np.swapaxes(A, 1, 2))
    return _unbatch(out, single)


def potential_from_field(D: DSymbol, k, field_spectrum: np.ndarray) -> np.ndarray:
    """
    Potential coefficients Ψ̂ = F⁺ D(ik)† Ê, shape (N, p).
    """
    K, _ = _batch(k)
    A, F_plus, _ = _restricted_pseudo_inverse(D, K)
    adjoint = np.conj(np.swapaxes(A, 1, 2))
    return (F_plus @ adjoint @ np.asarray(field_spectrum)[:, :, None])[:, :, 0]


def field_from_potential(D: DSymbol, k, potential_spectrum: np.ndarray) -> np.ndarray:
    K, _ = _batch(k)
    return (D.evaluate(K) @ np.asarray(potential_spectrum)[:, :, None])[:, :, 0]


# Projection specs ###########################################################

Kind = Literal[
    "grad", "divfree", "elastic", "Z", "zero", "block", "from-D", "complement", "custom"
]
KINDS: Tuple[str, ...] = (
    "grad", "divfree", "elastic", "Z", "zero", "block", "from-D", "complement", "custom"
)

_NAMED_SYMBOLS: Dict[str, Callable[[int], DSymbol]] = {
    "gradient": DSymbol.gradient,
    "symmetrized-gradient": DSymbol.symmetrized_gradient,
    "curl": DSymbol.curl,
    "stream-curl": lambda dim: DSymbol.stream_curl(),
    "gradient-with-value": DSymbol.gradient_with_value,
}


@dataclass(frozen=True, eq=False)
class ProjectionSpec:
    """
    A description of Γ₁ on a layout, evaluated lazily at wavevectors.
    """

    kind: Kind
    layout: SupertensorLayout
    children: Tuple[ProjectionSpec, ...] = field(default=())
    symbol: Optional[DSymbol] = None
    # Only for kind == "custom": batch of k (N, d) → (N, m, m).
    function: Optional[Callable[[np.ndarray], np.ndarray]] = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown projection kind {self.kind!r}")
        object.__setattr__(self, "children", tuple(self.children))
        kinds = self.layout.kinds
        if self.kind in ("grad", "divfree") and kinds != ("vector",):
            raise ShapeError(f"{self.kind} acts on a single vector block, not {kinds}")
        if self.kind == "elastic" and kinds != ("sym-matrix",):
            raise ShapeError(f"elastic acts on a single sym-matrix block, not {kinds}")
        if self.kind == "Z" and kinds != ("full-matrix", "vector"):
            raise ShapeError(f"Z acts on (full-matrix, vector), not {kinds}")
        if self.kind == "block":
            if not self.children:
                raise ShapeError("a block projection needs children")
            merged = self.children[0].layout.concat(*(c.layout for c in self.children[1:]))
            if merged.kinds != kinds:
                raise ShapeError(f"children layouts {merged.kinds} do not match {kinds}")
        if self.kind == "complement":
            if len(self.children) != 1 or self.children[0].layout.kinds != kinds:
                raise ShapeError("a complement wraps exactly one spec on the same layout")
        if self.kind == "from-D":
            if self.symbol is None or self.symbol.field_size != self.layout.m:
                raise ShapeError("from-D needs a symbol whose field size matches the layout")
        if self.kind == "custom" and self.function is None:
            raise ShapeError("a custom projection needs a function")

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def m(self) -> int:
        return self.layout.m

    def _raw(self, K: np.ndarray) -> np.ndarray:
        if self.kind == "grad":
            return gamma_grad(K)
        if self.kind == "divfree":
            return gamma_divfree(K)
        if self.kind == "elastic":
            return gamma_elastic(K)
        if self.kind == "Z":
            return gamma_Z(K)
        if self.kind == "zero":
            return np.zeros((K.shape[0], self.m, self.m), dtype=np.complex128)
        if self.kind == "block":
            return block_diagonal(*(child._raw(K) for child in self.children))
        if self.kind == "complement":
            return np.eye(self.m) - self.children[0]._raw(K)
        if self.kind == "from-D":
            assert self.symbol is not None
            return gamma_from_D(self.symbol, K)
        assert self.function is not None
        return np.asarray(self.function(K), dtype=np.complex128)

    def evaluate(self, k) -> np.ndarray:
        K, single = _batch(k)
        if K.shape[1] != self.dim:
            raise ShapeError(f"wavevectors of dimension {K.shape[1]} for a {self.dim}D spec")
        out = np.array(self._raw(K), dtype=np.complex128)
        out[_squared_norm(K) <= ZERO_K] = self.at_zero()
        return _unbatch(out, single)

    def at_zero(self) -> np.ndarray:
        """
        Γ₁(0). A complement is zero there: every constant field of the
        complementary problem is an applied mean, and on the slots its child
        keeps at k = 0 that mean must be zero.
        """
        origin = np.zeros((1, self.dim))
        if self.kind == "Z":
            return gamma_Z(origin)[0]
        if self.kind == "from-D":
            assert self.symbol is not None
            return gamma_from_D(self.symbol, origin)[0]
        if self.kind == "block":
            return block_diagonal(*(child.at_zero() for child in self.children))
        return np.zeros((self.m, self.m), dtype=np.complex128)

    def mean_slots(self) -> Tuple[int, ...]:
        "Components whose cell mean is applied rather than solved for."
        diagonal = np.abs(np.diag(self.at_zero()))
        return tuple(int(c) for c in np.flatnonzero(diagonal < 0.5))

    def on_grid(self, grid: Grid) -> np.ndarray:
        if grid.dim != self.dim:
            raise ShapeError("grid and projection dimensions differ")
        return self.evaluate(grid.wavevectors)

    def describe(self) -> str:
        if self.kind == "block":
            return "block(" + ", ".join(c.describe() for c in self.children) + ")"
        if self.kind == "complement":
            return f"complement({self.children[0].describe()})"
        if self.kind == "from-D":
            assert self.symbol is not None
            return f"from-D({self.symbol.name})"
        name = self.kind
        return f"{name}[{self.label}]" if self.label else name

    def to_json(self) -> dict:
        obj: dict = {"kind": self.kind}
        if self.label:
            obj["label"] = self.label
        if self.kind in ("block", "complement"):
            obj["children"] = [c.to_json() for c in self.children]
        if self.kind == "zero":
            obj["layout"] = self.layout.to_json()["blocks"]
        if self.kind == "from-D":
            assert self.symbol is not None
            if self.symbol.name not in _NAMED_SYMBOLS:
                raise ConfigError(f"symbol {self.symbol.name!r} cannot be serialized")
            obj["symbol"] = self.symbol.name
        if self.kind == "custom":
            raise ConfigError("custom projections cannot be serialized")
        return obj

    @classmethod
    def from_json(cls, obj: dict, dim: int) -> ProjectionSpec:
        kind = obj.get("kind")
        label = obj.get("label", "")
        if kind == "grad":
            return grad(dim, label)
        if kind == "divfree":
            return divfree(dim, label)
        if kind == "elastic":
            return elastic(dim, label)
        if kind == "Z":
            return z_operator(dim, label)
        if kind == "zero":
            blocks = obj.get("layout", [{"kind": "scalar"}])
            layout = SupertensorLayout(
                dim, tuple(Block(b["kind"], b.get("label", "")) for b in blocks)
            )
            return zero(layout)
        if kind == "block":
            return block(*(cls.from_json(c, dim) for c in obj.get("children", [])))
        if kind == "complement":
            children = obj.get("children", [])
            if len(children) != 1:
                raise ConfigError("complement needs exactly one child")
            return complement(cls.from_json(children[0], dim))
        if kind == "from-D":
            name = obj.get("symbol")
            if name not in _NAMED_SYMBOLS:
                raise ConfigError(f"unknown symbol {name!r}")
            symbol = _NAMED_SYMBOLS[name](dim)
            return from_d(symbol, _layout_for_symbol(symbol), label)
        raise ConfigError(f"unknown projection kind {kind!r}")


def _layout_for_symbol(symbol: DSymbol) -> SupertensorLayout:
    d = symbol.dim
    if symbol.name in ("gradient", "curl", "stream-curl"):
        return SupertensorLayout.of(d, "vector")
    if symbol.name == "symmetrized-gradient":
        return SupertensorLayout.of(d, "sym-matrix")
    if symbol.name == "gradient-with-value":
        return SupertensorLayout.of(d, "full-matrix", "vector")
    raise ConfigError(f"no default layout for symbol {symbol.name!r}")


def grad(dim: int, label: str = "") -> ProjectionSpec:
    return ProjectionSpec("grad", SupertensorLayout.of(dim, ("vector", label)), label=label)


def divfree(dim: int, label: str = "") -> ProjectionSpec:
    return ProjectionSpec("divfree", SupertensorLayout.of(dim, ("vector", label)), label=label)


def elastic(dim: int, label: str = "") -> ProjectionSpec:
    return ProjectionSpec("elastic", SupertensorLayout.of(dim, ("sym-matrix", label)), label=label)


def z_operator(dim: int, label: str = "") -> ProjectionSpec:
    return ProjectionSpec("Z", SupertensorLayout.of(dim, "full-matrix", "vector"), label=label)


def zero(layout: SupertensorLayout) -> ProjectionSpec:
    return ProjectionSpec("zero", layout)


def block(*children: ProjectionSpec) -> ProjectionSpec:
    layout = children[0].layout.concat(*(c.layout for c in children[1:]))
    return ProjectionSpec("block", layout, children=tuple(children))


def complement(spec: ProjectionSpec) -> ProjectionSpec:
    "I − Γ₁; the complement of a complement is the original spec."
    if spec.kind == "complement":
        return spec.children[0]
    return ProjectionSpec("complement", spec.layout, children=(spec,))


def from_d(
    symbol: DSymbol, layout: Optional[SupertensorLayout] = None, label: str = ""
) -> ProjectionSpec:
    layout = layout or _layout_for_symbol(symbol)
    return ProjectionSpec("from-D", layout, symbol=symbol, label=label)


def custom(
    function: Callable[[np.ndarray], np.ndarray], layout: SupertensorLayout, label: str = "custom"
) -> ProjectionSpec:
    return ProjectionSpec("custom", layout, function=function, label=label)


def gamma_block(children: Sequence[ProjectionSpec], k) -> np.ndarray:
    "Block-diagonal assembly of the children evaluated at k."
    return block(*children).evaluate(k)


# Self-verification ##########################################################


@dataclass(frozen=True)
class ProjectionReport:
    label: str
    samples: int
    idempotence_defect: float
    hermitian_defect: float
    min_rank: int
    max_rank: int
    passed: bool
    # Wavevector with the largest violation.
    worst_k: Tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "samples": self.samples,
            "idempotence_defect": self.idempotence_defect,
            "hermitian_defect": self.hermitian_defect,
            "rank": [self.min_rank, self.max_rank],
            "passed": self.passed,
            "worst_k": list(self.worst_k),
        }


def random_wavevectors(rng: np.random.Generator, samples: int, dim: int) -> np.ndarray:
    """
    Random nonzero wavevectors spread over two decades of magnitude.
    """
    directions = rng.standard_normal((samples, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    magnitudes = 10.0 ** rng.uniform(-1.0, 1.0, size=(samples, 1))
    return directions * magnitudes


def verify_projection(
    spec: ProjectionSpec,
    samples: int = 1000,
    rng: Optional[np.random.Generator] = None,
    tolerance: float = 1e-10,
) -> ProjectionReport:
    """
    Check ‖Γ² − Γ‖ and ‖Γ − Γ†‖ at random k. Passes iff both are within
    tolerance everywhere.
    """
    assert samples >= 1
    rng = rng if rng is not None else np.random.default_rng(0)
    K = random_wavevectors(rng, samples, spec.dim)
    G = spec.evaluate(K)
    adjoint = np.conj(np.swapaxes(G, 1, 2))
    idempotence = np.linalg.norm(G @ G - G, axis=(1, 2))
    hermitian = np.linalg.norm(G - adjoint, axis=(1, 2))
    ranks = np.linalg.matrix_rank(G, tol=1e-8)
    worst = int(np.argmax(np.maximum(idempotence, hermitian)))
    passed = bool(idempotence.max() <= tolerance and hermitian.max() <= tolerance)
    if not passed:
        logger.warning(
            "Projection %s fails at k = %s (idempotence %.3g, hermitian %.3g)",
            spec.describe(), K[worst], idempotence[worst], hermitian[worst],
        )
    return ProjectionReport(
        label=spec.describe(),
        samples=samples,
        idempotence_defect=float(idempotence.max()),
        hermitian_defect=float(hermitian.max()),
        min_rank=int(ranks.min()),
        max_rank=int(ranks.max()),
        passed=passed,
        worst_k=tuple(float(x) for x in K[worst]),
    )


def homogeneity_defect(
    spec: ProjectionSpec, samples: int = 100, rng: Optional[np.random.Generator] = None
) -> float:
    "max ‖Γ(λk) − Γ(k)‖ over random k and λ > 0."
    rng = rng if rng is not None else np.random.default_rng(0)
    K = random_wavevectors(rng, samples, spec.dim)
    scale = 10.0 ** rng.uniform(-2.0, 2.0, size=(samples, 1))
    return float(np.max(np.abs(spec.evaluate(scale * K) - spec.evaluate(K))))
