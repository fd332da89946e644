"""
Small-tensor algebra on the component bases used by supertensor layouts.

Symmetric matrices are stored in the Mandel basis: the diagonal entries
first, then each off-diagonal pair once, scaled by √2. With this scaling the
plain component dot product equals the Frobenius product of the matrices, so
every projection in the catalog is Hermitian in the ordinary sense.

Full (non-symmetric) matrices are stored row-major: component i*d + j holds
a_ij. For a gradient field the first index is the derivative index.
"""

from __future__ import annotations

from functools import lru_cache
from typing import List, Tuple

import numpy as np

from .errors import ShapeError, UnsupportedDimensionError

SQRT2 = np.sqrt(2.0)


@lru_cache(maxsize=None)
def sym_pairs(dim: int) -> Tuple[Tuple[int, int], ...]:
    """
    Index pairs (i, j) of the Mandel components, in storage order.

        d = 2: (0,0) (1,1) (0,1)
        d = 3: (0,0) (1,1) (2,2) (1,2) (0,2) (0,1)
    """
    if dim == 2:
        return ((0, 0), (1, 1), (0, 1))
    if dim == 3:
        return ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
    raise UnsupportedDimensionError(f"dimension must be 2 or 3, not {dim}")


def sym_size(dim: int) -> int:
    return dim * (dim + 1) // 2


def mandel_weights(dim: int) -> np.ndarray:
    return np.array([1.0 if i == j else SQRT2 for i, j in sym_pairs(dim)])


def to_mandel(matrices: np.ndarray) -> np.ndarray:
    """
    Convert (..., d, d) symmetric matrices to (..., d(d+1)/2) Mandel vectors.
    Only the upper triangle is read.
    """
    matrices = np.asarray(matrices)
    dim = matrices.shape[-1]
    if matrices.shape[-2] != dim:
        raise ShapeError(f"expected square matrices, got shape {matrices.shape}")
    pairs = sym_pairs(dim)
    weights = mandel_weights(dim)
    return np.stack(
        [w * matrices[..., i, j] for (i, j), w in zip(pairs, weights)], axis=-1
    )


def from_mandel(vectors: np.ndarray, dim: int) -> np.ndarray:
    vectors = np.asarray(vectors)
    if vectors.shape[-1] != sym_size(dim):
        raise ShapeError(
            f"expected {sym_size(dim)} Mandel components, got {vectors.shape[-1]}"
        )
    out = np.zeros(vectors.shape[:-1] + (dim, dim), dtype=vectors.dtype)
    for index, ((i, j), w) in enumerate(zip(sym_pairs(dim), mandel_weights(dim))):
        out[..., i, j] = vectors[..., index] / w
        out[..., j, i] = vectors[..., index] / w
    return out


def mandel_matrix(tensor: np.ndarray) -> np.ndarray:
    """
    Convert a fourth-order tensor C_ijlm with minor symmetries, shape
    (..., d, d, d, d), to its (..., n, n) Mandel matrix w_I w_J C_IJ.
    """
    tensor = np.asarray(tensor)
    dim = tensor.shape[-1]
    pairs = sym_pairs(dim)
    weights = mandel_weights(dim)
    n = len(pairs)
    out = np.zeros(tensor.shape[:-4] + (n, n), dtype=tensor.dtype)
    for a, (i, j) in enumerate(pairs):
        for b, (l, m) in enumerate(pairs):
            out[..., a, b] = weights[a] * weights[b] * tensor[..., i, j, l, m]
    return out


def identity_mandel(dim: int) -> np.ndarray:
    return np.array([1.0 if i == j else 0.0 for i, j in sym_pairs(dim)])


def hydrostatic(dim: int, value=1.0) -> np.ndarray:
    """
    Mandel vector(s) of value·I. `value` may be an array of per-point values.
    """
    return np.multiply.outer(np.asarray(value, dtype=float), identity_mandel(dim))


def hydrostatic_projector(dim: int) -> np.ndarray:
    "Λ_h on symmetric matrices: A ↦ (tr A / d) I."
    i = identity_mandel(dim)
    return np.outer(i, i) / dim


def deviatoric_projector(dim: int) -> np.ndarray:
    "Λ_s on symmetric matrices: A ↦ A − (tr A / d) I."
    return np.eye(sym_size(dim)) - hydrostatic_projector(dim)


def isotropic_stiffness(dim: int, kappa, mu) -> np.ndarray:
    """
    Mandel matrix of dκΛ_h + 2μΛ_s, so that C·I = dκ·I.

    kappa and mu may be per-point arrays; the result then has shape
    (..., n, n).
    """
    kappa = np.asarray(kappa)
    mu = np.asarray(mu)
    return (
        dim * kappa[..., None, None] * hydrostatic_projector(dim)
        + 2 * mu[..., None, None] * deviatoric_projector(dim)
    )


def isotropic_compliance(dim: int, kappa, mu) -> np.ndarray:
    kappa = np.asarray(kappa)
    mu = np.asarray(mu)
    return hydrostatic_projector(dim) / (dim * kappa[..., None, None]) + (
        deviatoric_projector(dim) / (2 * mu[..., None, None])
    )


def bulk_modulus_from_compliance(compliance: np.ndarray) -> float:
    """
    κ such that S·I = I / (dκ). Meaningful when S maps I to a multiple of I
    (e.g., square or cubic symmetry).
    """
    n = compliance.shape[-1]
    dim = {3: 2, 6: 3}[n]
    image = compliance @ identity_mandel(dim)
    return float(np.real(1.0 / (dim * image[0])))


# Full matrices ##############################################################


def full_index(i: int, j: int, dim: int) -> int:
    return i * dim + j


def trace_projector_full(dim: int) -> np.ndarray:
    "Λ_h on full matrices: A ↦ (tr A / d) I."
    i = np.eye(dim).reshape(-1)
    return np.outer(i, i) / dim


def tracefree_projector_full(dim: int) -> np.ndarray:
    "Λ_f on full matrices: A ↦ A − (tr A / d) I."
    return np.eye(dim * dim) - trace_projector_full(dim)


def symmetric_projector_full(dim: int) -> np.ndarray:
    out = np.zeros((dim * dim, dim * dim))
    for i in range(dim):
        for j in range(dim):
            out[full_index(i, j, dim), full_index(i, j, dim)] += 0.5
            out[full_index(i, j, dim), full_index(j, i, dim)] += 0.5
    return out


def shear_projector_full(dim: int) -> np.ndarray:
    "Λ_s on full matrices: symmetric trace-free part."
    return symmetric_projector_full(dim) - trace_projector_full(dim)


def rotation90() -> np.ndarray:
    "R⊥, the 90° rotation in the plane."
    return np.array([[0.0, -1.0], [1.0, 0.0]])


def cross_matrix(w: np.ndarray) -> np.ndarray:
    """
    Matrices η(w) with η(w)a = w × a, for w of shape (..., 3).
    """
    w = np.asarray(w)
    if w.shape[-1] != 3:
        raise UnsupportedDimensionError("cross products need 3-vectors")
    out = np.zeros(w.shape[:-1] + (3, 3), dtype=np.result_type(w, float))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def block_diagonal(*blocks: np.ndarray) -> np.ndarray:
    """
    Assemble (..., m_i, m_i) blocks into one (..., Σm_i, Σm_i) matrix.
    Leading dimensions are broadcast.
    """
    lead = np.broadcast_shapes(*(b.shape[:-2] for b in blocks))
    sizes: List[int] = [b.shape[-1] for b in blocks]
    total = sum(sizes)
    dtype = np.result_type(*blocks)
    out = np.zeros(lead + (total, total), dtype=dtype)
    start = 0
    for block, size in zip(blocks, sizes):
        out[..., start : start + size, start : start + size] = block
        start += size
    return out
