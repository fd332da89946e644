"""
The algebra of exact relations.

A subspace 𝒦 of m × m matrices is closed when K₁Γ(k)K₂ ∈ 𝒦 for all K₁, K₂
in 𝒦 and all k ≠ 0, where Γ(k) = Γ₁(Γ₁L₀Γ₁)⁻¹Γ₁ is the reference operator.
Tensors L whose transform

    K = (L − L₀)[I + Γ(k₀)(L − L₀)]⁻¹

lies in a closed 𝒦 form a manifold that is stable under homogenization.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateInputError, ResolventError, ShapeError, SingularReferenceError
from .projections import ProjectionSpec, _batch, _unbatch, random_wavevectors

logger = logging.getLogger(__name__)

# Relative distance from 𝒦 that still counts as membership.
CLOSURE_TOLERANCE = 1e-10
# Conditioning beyond which a restricted or resolvent inverse counts as singular.
SINGULAR_CONDITION = 1e15
# Fresh wavevectors used to re-verify a passing closure check.
RECHECK_SAMPLES = 10


def restricted_reference(G: np.ndarray, L0: np.ndarray, K: np.ndarray) -> np.ndarray:
    """
    Γ₁[Γ₁L₀Γ₁]⁻¹Γ₁ for a batch of projections G (N, m, m), with the inverse
    taken on the range of each Γ₁. K are the matching wavevectors, used
    only to name the offending frequency.
    """
    L0 = np.asarray(L0, dtype=np.complex128)
    m = G.shape[-1]
    if L0.shape != (m, m):
        raise ShapeError(f"L0 must be {m} × {m}, got {L0.shape}")
    scale = float(np.linalg.norm(L0, 2)) or 1.0
    # Filling the complement with scale·I leaves the range block untouched.
    B = G @ L0 @ G + scale * (np.eye(m) - G)
    condition = np.linalg.cond(B)
    bad = np.flatnonzero(~np.isfinite(condition) | (condition > SINGULAR_CONDITION))
    if bad.size:
        raise SingularReferenceError(np.atleast_2d(K)[bad[0]])
    return G @ np.linalg.inv(B) @ G


def gamma_reference(gamma: ProjectionSpec, L0, k) -> np.ndarray:
    "Γ(k) for a single wavevector (d,) or a batch (N, d)."
    K, single = _batch(k)
    return _unbatch(restricted_reference(gamma.evaluate(K), L0, K), single)


def w_transform(L, L0, gamma_k0) -> np.ndarray:
    """
    K = (L − L₀)[I + Γ(k₀)(L − L₀)]⁻¹. Batches of L are accepted.
    """
    delta = np.asarray(L, dtype=np.complex128) - L0
    m = delta.shape[-1]
    resolvent = np.eye(m) + np.asarray(gamma_k0) @ delta
    _check_resolvent(resolvent)
    return delta @ np.linalg.inv(resolvent)


def inverse_w_transform(K, L0, gamma_k0) -> np.ndarray:
    """
    L = L₀ + (I − KΓ(k₀))⁻¹K, undoing w_transform.
    """
    K = np.asarray(K, dtype=np.complex128)
    m = K.shape[-1]
    resolvent = np.eye(m) - K @ np.asarray(gamma_k0)
    _check_resolvent(resolvent)
    return L0 + np.linalg.inv(resolvent) @ K


def _check_resolvent(resolvent: np.ndarray) -> None:
    condition = np.linalg.cond(resolvent)
    if np.any(~np.isfinite(condition) | (condition > SINGULAR_CONDITION)):
        raise ResolventError("the resolvent is singular; the transform is undefined here")


@dataclass(frozen=True, eq=False)
class Subspace:
    """
    A span of m × m complex matrices, kept as a Frobenius-orthonormal basis.
    """

    basis: Tuple[np.ndarray, ...]

    @classmethod
    def spanned_by(cls, matrices: Sequence) -> Subspace:
        arrays = [np.asarray(a, dtype=np.complex128) for a in matrices]
        if not arrays:
            raise DegenerateInputError("a subspace needs at least one matrix")
        shape = arrays[0].shape
        if len(shape) != 2 or shape[0] != shape[1] or any(a.shape != shape for a in arrays):
            raise ShapeError("subspace basis elements must be square matrices of one size")
        columns = np.stack([a.reshape(-1) for a in arrays], axis=1)
        q, r = np.linalg.qr(columns)
        diagonal = np.abs(np.diag(r))
        if np.any(diagonal <= 1e-12 * max(diagonal.max(), 1e-300)):
            raise DegenerateInputError("subspace basis is linearly dependent")
        return cls(tuple(q[:, i].reshape(shape) for i in range(q.shape[1])))

    @classmethod
    def full(cls, m: int) -> Subspace:
        return cls(tuple(np.eye(m * m, dtype=np.complex128)[i].reshape(m, m) for i in range(m * m)))

    @property
    def m(self) -> int:
        return self.basis[0].shape[0]

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def _matrix(self) -> np.ndarray:
        return np.stack([b.reshape(-1) for b in self.basis], axis=1)

    def project(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.complex128)
        Q = self._matrix()
        flat = X.reshape(X.shape[:-2] + (-1,))
        coefficients = flat @ np.conj(Q)
        return (coefficients @ Q.T).reshape(X.shape)

    def distance(self, X) -> np.ndarray:
        "Frobenius distance of X (or a batch of X) from the span."
        X = np.asarray(X, dtype=np.complex128)
        return np.linalg.norm(X - self.project(X), axis=(-2, -1))

    def to_json(self) -> list:
        return [[[[float(z.real), float(z.imag)] for z in row] for row in b] for b in self.basis]

    @classmethod
    def from_json(cls, obj: list) -> Subspace:
        """
        Matrices as nested row lists whose entries are numbers or
        [real, imag] pairs.
        """
        matrices = []
        for matrix in obj:
            rows = []
            for row in matrix:
                rows.append([complex(*z) if isinstance(z, list) else complex(z) for z in row])
            matrices.append(np.array(rows))
        return cls.spanned_by(matrices)


@dataclass(frozen=True)
class ClosureReport:
    passed: bool
    samples: int
    # Largest relative distance of K₁Γ(k)K₂ from the span.
    max_distance: float
    rechecked: bool
    # Worst case: wavevector and the pair of basis indices.
    witness_k: Tuple[float, ...]
    witness_pair: Tuple[int, int]

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "samples": self.samples,
            "max_distance": self.max_distance,
            "rechecked": self.rechecked,
            "witness": {"k": list(self.witness_k), "pair": list(self.witness_pair)},
        }


def _worst_product(
    subspace: Subspace, gamma: ProjectionSpec, L0, K: np.ndarray
) -> Tuple[float, int, Tuple[int, int]]:
    G = gamma_reference(gamma, L0, K)
    scale = np.maximum(np.linalg.norm(G, axis=(1, 2)), 1.0)
    worst = (0.0, 0, (0, 0))
    for a, left in enumerate(subspace.basis):
        for b, right in enumerate(subspace.basis):
            distance = subspace.distance(left @ G @ right) / scale
            where = int(np.argmax(distance))
            if distance[where] > worst[0]:
                worst = (float(distance[where]), where, (a, b))
    return worst


def check_closure(
    subspace: Subspace,
    gamma: ProjectionSpec,
    L0,
    samples: int = 100,
    rng: Optional[np.random.Generator] = None,
    tolerance: float = CLOSURE_TOLERANCE,
) -> ClosureReport:
    """
    Sample K₁Γ(k)K₂ over random k and all basis pairs. A pass is
    re-verified on a few fresh wavevectors before it is reported.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    if subspace.m != gamma.m:
        raise ShapeError(
            f"subspace of {subspace.m} × {subspace.m} matrices for an m = {gamma.m} problem"
        )
    rng = rng if rng is not None else np.random.default_rng(0)
    K = random_wavevectors(rng, samples, gamma.dim)
    distance, where, pair = _worst_product(subspace, gamma, L0, K)
    witness = K[where]
    rechecked = False
    if distance <= tolerance:
        fresh = random_wavevectors(rng, RECHECK_SAMPLES, gamma.dim)
        again, where_again, pair_again = _worst_product(subspace, gamma, L0, fresh)
        rechecked = True
        if again > distance:
            distance, witness, pair = again, fresh[where_again], pair_again
    passed = distance <= tolerance
    if not passed:
        logger.info(
            "Closure fails: basis pair %s at k = %s is %.3g away from the span",
            pair, witness, distance,
        )
    return ClosureReport(
        passed=passed,
        samples=samples,
        max_distance=distance,
        rechecked=rechecked,
        witness_k=tuple(float(x) for x in witness),
        witness_pair=pair,
    )


def membership_defect(L, subspace: Subspace, L0, gamma: ProjectionSpec, k0) -> float:
    "Distance of w_transform(L) from the span, using Γ(k₀)."
    K = w_transform(L, L0, gamma_reference(gamma, L0, k0))
    return float(subspace.distance(K))


def levin_alpha(
    kappa1: float, kappa2: float, alpha1: float, alpha2: float, kappa_star: float
) -> float:
    """
    Effective thermal expansion of a two-phase medium from its effective
    bulk modulus:

        α* = [α₁(1/κ* − 1/κ₂) − α₂(1/κ* − 1/κ₁)] / (1/κ₁ − 1/κ₂)
    """
    if min(kappa1, kappa2, kappa_star) <= 0:
        raise ValueError("bulk moduli must be positive")
    if np.isclose(kappa1, kappa2, rtol=1e-14, atol=0.0):
        raise DegenerateInputError("equal phase bulk moduli leave α* undetermined")
    numerator = alpha1 * (1 / kappa_star - 1 / kappa2) - alpha2 * (1 / kappa_star - 1 / kappa1)
    return numerator / (1 / kappa1 - 1 / kappa2)


def laminate_effective_tensor(
    tensors: Sequence,
    fractions: Sequence[float],
    gamma: ProjectionSpec,
    normal,
    L0=None,
) -> np.ndarray:
    """
    Effective tensor of a simple laminate with layer normal n, from the
    transformed tensors, which average exactly:

        K* = Σ fᵢ (Lᵢ − L₀)[I + Γ(n)(Lᵢ − L₀)]⁻¹,
        L* = L₀ + (I − K*Γ(n))⁻¹K*.
    """
    L = np.stack([np.asarray(t, dtype=np.complex128) for t in tensors])
    f = np.asarray(fractions, dtype=float)
    if f.shape != (L.shape[0],) or not np.isclose(f.sum(), 1.0):
        raise ValueError("need one positive fraction per phase, summing to 1")
    reference = np.tensordot(f, L, axes=1) if L0 is None else np.asarray(L0, dtype=np.complex128)
    n = np.asarray(normal, dtype=float)
    G = gamma_reference(gamma, reference, n / np.linalg.norm(n))
    K_star = np.tensordot(f, w_transform(L, reference, G), axes=1)
    return inverse_w_transform(K_star, reference, G)
