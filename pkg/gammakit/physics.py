"""
Problem builders for the linear theories that fit the form

    J(x) = L(x) E(x) − s(x),   Γ₁E = E,   Γ₁J = 0,

and the structural transformations between such problems (duality, the
Cherkaev–Gibiansky doubling, null-T shifts and linearization).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Callable, Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from . import projections as pr
from .errors import (
    ConstraintError,
    DefinitenessError,
    InvalidNullTError,
    ShapeError,
    SpaceError,
    UnsupportedDimensionError,
)
from .fields import (
    Block,
    Field,
    Grid,
    LocalOperator,
    PenaltySlot,
    SupertensorLayout,
    apply_local,
    broadcast_points,
    forward_values,
    inverse_values,
)
from .projections import ProjectionSpec
from .tensors import (
    cross_matrix,
    hydrostatic,
    rotation90,
    shear_projector_full,
    sym_size,
    trace_projector_full,
    tracefree_projector_full,
)

logger = logging.getLogger(__name__)

SourceLike = Union[None, Field, np.ndarray, Sequence[complex]]
CgConvention = Literal["dielectric", "real"]

# Default penalty: this many times the largest finite modulus.
PENALTY_FACTOR = 1e8


@dataclass(frozen=True, eq=False)
class Problem:
    grid: Grid
    layout: SupertensorLayout
    gamma: ProjectionSpec
    L: LocalOperator
    # The s of J = LE − s, in real space.
    source: Field
    # Physics tag, parameters and bookkeeping from transformations.
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.gamma.layout.kinds != self.layout.kinds or self.gamma.dim != self.grid.dim:
            raise ShapeError(
                f"projection acts on {self.gamma.layout.kinds}, layout is {self.layout.kinds}"
            )
        if self.L.layout != self.layout or self.L.grid != self.grid:
            raise ShapeError("operator layout or grid does not match the problem")
        if self.source.layout != self.layout or self.source.grid != self.grid:
            raise ShapeError("source layout or grid does not match the problem")
        if self.source.space != "real":
            object.__setattr__(self, "source", self.source.to_real())

    @property
    def physics(self) -> str:
        return str(self.meta.get("physics", "custom"))

    @property
    def m(self) -> int:
        return self.layout.m

    @cached_property
    def gamma_on_grid(self) -> np.ndarray:
        "Γ₁ evaluated at every grid frequency, shape (N, m, m)."
        return self.gamma.on_grid(self.grid)

    def with_source(self, source: SourceLike) -> Problem:
        return replace(self, source=as_source(self.grid, self.layout, source))

    def without_source(self) -> Problem:
        return replace(self, source=Field.zeros(self.grid, self.layout))

    def with_operator(self, L: LocalOperator) -> Problem:
        return replace(self, L=L)

    def adjoint(self) -> Problem:
        "The same problem with L replaced by L†."
        meta = dict(self.meta, adjoint=not self.meta.get("adjoint", False))
        return replace(self, L=self.L.adjoint(), meta=meta)

    def describe(self) -> dict:
        return {
            "physics": self.physics,
            "grid": self.grid.to_json(),
            "layout": self.layout.to_json(),
            "gamma": self.gamma.describe(),
            "penalty": [s.weight for s in self.L.penalties],
        }


def as_source(grid: Grid, layout: SupertensorLayout, value: SourceLike) -> Field:
    """
    A real-space source field from None (zero), a Field, a constant
    m-vector, or per-point (N, m) values.
    """
    if value is None:
        return Field.zeros(grid, layout)
    if isinstance(value, Field):
        if value.layout.kinds != layout.kinds or value.grid != grid:
            raise ShapeError("source field does not match the problem layout")
        return Field(grid, layout, "real", value.to_real().values)
    array = np.asarray(value, dtype=np.complex128)
    if array.shape == (layout.m,):
        return Field.constant(grid, layout, array)
    return Field(grid, layout, "real", array)


def _per_point_matrix(grid: Grid, value, size: int) -> np.ndarray:
    return broadcast_points(grid, value, (size, size))


def _per_point_scalar(grid: Grid, value) -> np.ndarray:
    array = np.asarray(value, dtype=np.complex128)
    if array.ndim == 0:
        return np.full(grid.size, array)
    return array.reshape(grid.size)


def _check_positive_definite(matrices: np.ndarray, what: str) -> None:
    hermitian = 0.5 * (matrices + np.conj(np.swapaxes(matrices, 1, 2)))
    eigenvalues = np.linalg.eigvalsh(hermitian)[:, 0]
    point = int(np.argmin(eigenvalues))
    if eigenvalues[point] <= 0:
        raise DefinitenessError(
            f"{what} is not positive definite", float(eigenvalues[point]), point
        )


# Conductivity family #########################################################


def build_conductivity(grid: Grid, sigma, source: SourceLike = None) -> Problem:
    """
    J = σE − s with E curl-free and J divergence-free. Also covers
    dielectrics, diffusion, porous media and antiplane elasticity.
    """
    d = grid.dim
    layout = SupertensorLayout.of(d, ("vector", "E"))
    L = LocalOperator(grid, layout, _per_point_matrix(grid, sigma, d))
    return Problem(
        grid, layout, pr.grad(d, "E"), L, as_source(grid, layout, source),
        {"physics": "conductivity"},
    )


def build_magnetostatics(
    grid: Grid, mu, magnetization: SourceLike = None, current_source: SourceLike = None
) -> Problem:
    """
    h = μ⁻¹b − m − s_j with b divergence-free; s_j is a field whose curl is
    the free current.
    """
    d = grid.dim
    layout = SupertensorLayout.of(d, ("vector", "b"))
    permeability = LocalOperator(grid, layout, _per_point_matrix(grid, mu, d))
    source = as_source(grid, layout, magnetization) + as_source(grid, layout, current_source)
    return Problem(
        grid, layout, pr.divfree(d, "b"), permeability.inverse(), source,
        {"physics": "magnetostatics"},
    )


def build_thermoelectric(grid: Grid, L11, L12, L21, L22, sources: SourceLike = None) -> Problem:
    """
    Coupled transport of electrons and energy: two curl-free driving fields,
    two divergence-free currents.
    """
    d = grid.dim
    blocks = [[_per_point_matrix(grid, b, d) for b in row] for row in ((L11, L12), (L21, L22))]
    matrices = np.concatenate([np.concatenate(row, axis=2) for row in blocks], axis=1)
    layout = SupertensorLayout.of(d, ("vector", "E1"), ("vector", "E2"))
    gamma = pr.block(pr.grad(d, "E1"), pr.grad(d, "E2"))
    return Problem(
        grid, layout, gamma, LocalOperator(grid, layout, matrices),
        as_source(grid, layout, sources), {"physics": "thermoelectric"},
    )


# Cherkaev–Gibiansky doubling ##################################################


def _complement_of(spec: ProjectionSpec) -> ProjectionSpec:
    if spec.kind == "grad":
        return pr.divfree(spec.dim, "curl")
    if spec.kind == "divfree":
        return pr.grad(spec.dim, spec.label)
    return pr.complement(spec)


def cg_transform(p: Problem, convention: CgConvention = "dielectric") -> Problem:
    """
    Rewrite J = LE − s as an equivalent doubled problem with a Hermitian
    operator.

    With the dielectric convention L = ε′ + iε″ (ε′, ε″ Hermitian) and ε″
    must be positive definite. The doubled fields are E_cg = (−iJ, E) and
    J_cg = (E, −iJ), with

        L_cg = [[ε″⁻¹,        iε″⁻¹ε′       ],
                [−iε′ε″⁻¹,    ε″ + ε′ε″⁻¹ε′ ]]
        s_cg = (iε″⁻¹s, (ε′ε″⁻¹ − i)s)

    The real convention applies the same rewrite to iL (so the Hermitian
    part of L must be positive definite) and gives the real fields
    E_cg = (J, E) when L, s and E are real.
    """
    if convention not in ("dielectric", "real"):
        raise ValueError(f"unknown convention {convention!r}")
    a = np.asarray(p.L.assembled)
    s = p.source.values
    if convention == "real":
        a = 1j * a
        s = 1j * s
    adjoint = np.conj(np.swapaxes(a, 1, 2))
    eps1 = 0.5 * (a + adjoint)
    eps2 = (a - adjoint) / 2j
    what = "imaginary part of L" if convention == "dielectric" else "Hermitian part of L"
    _check_positive_definite(eps2, what)

    inv2 = np.linalg.inv(eps2)
    upper = np.concatenate([inv2, 1j * inv2 @ eps1], axis=2)
    lower = np.concatenate([-1j * eps1 @ inv2, eps2 + eps1 @ inv2 @ eps1], axis=2)
    doubled = np.concatenate([upper, lower], axis=1)
    doubled = 0.5 * (doubled + np.conj(np.swapaxes(doubled, 1, 2)))

    s_col = s[:, :, None]
    source = np.concatenate(
        [(1j * inv2 @ s_col)[:, :, 0], (eps1 @ inv2 @ s_col)[:, :, 0] - 1j * s], axis=1
    )

    flux_blocks = tuple(Block(b.kind, f"{b.label or b.kind}:flux") for b in p.layout.blocks)
    layout = SupertensorLayout(p.grid.dim, flux_blocks + p.layout.blocks)
    gamma = pr.block(_complement_of(p.gamma), p.gamma)
    meta = {
        "physics": f"{p.physics}+cg",
        "cg_convention": convention,
        "cg_of": dict(p.meta),
    }
    return Problem(
        p.grid, layout, gamma, LocalOperator(p.grid, layout, doubled),
        Field(p.grid, layout, "real", source), meta,
    )


def recover_from_cg(p_cg: Problem, E_cg: Field) -> Tuple[Field, Field]:
    """
    The (E, J) of the original problem from the solution of its doubled
    form, in real space on the original layout.
    """
    convention = p_cg.meta.get("cg_convention")
    if convention is None:
        raise ValueError("problem was not produced by cg_transform")
    values = E_cg.to_real().values
    half = p_cg.m // 2
    layout = SupertensorLayout(p_cg.grid.dim, p_cg.layout.blocks[len(p_cg.layout.blocks) // 2 :])
    E = Field(p_cg.grid, layout, "real", values[:, half:])
    flux = values[:, :half]
    J = Field(p_cg.grid, layout, "real", flux if convention == "real" else 1j * flux)
    return E, J


def build_dielectric_cg(grid: Grid, eps_real, eps_imag, s: SourceLike = None) -> Problem:
    """
    Quasistatic lossy dielectric ε = ε′ + iε″ in doubled Hermitian form.
    """
    d = grid.dim
    eps = _per_point_matrix(grid, eps_real, d) + 1j * _per_point_matrix(grid, eps_imag, d)
    base = build_conductivity(grid, eps, s)
    p = cg_transform(replace(base, meta={"physics": "dielectric"}), "dielectric")
    return replace(p, meta=dict(p.meta, physics="dielectric-cg"))


def spectral_matrix_divergence(grid: Grid, matrices: np.ndarray) -> np.ndarray:
    "Fourier coefficients of ∂_i M_ij (divergence on the first index), (N, d)."
    d = grid.dim
    spectrum = forward_values(grid, matrices.reshape(grid.size, d * d)).reshape(-1, d, d)
    return np.einsum("ni,nij->nj", 1j * grid.wavevectors, spectrum)


def antisymmetric_from_velocity(grid: Grid, velocity, tolerance: float = 1e-10) -> np.ndarray:
    """
    An antisymmetric σₐ(x) with ∇·σₐ = v, for an incompressible,
    zero-mean velocity field v of shape (N, d).

    In 2D σₐ = ψR⊥ with ψ from a Poisson solve; in 3D σₐ = η(w) with
    ∇ × w = v and the gauge k·ŵ = 0.
    """
    d = grid.dim
    v = np.asarray(velocity)
    if v.shape != (grid.size, d):
        raise ShapeError(f"velocity must have shape {(grid.size, d)}")
    real_input = np.isrealobj(v)
    k = grid.wavevectors
    v_hat = forward_values(grid, v.astype(np.complex128))
    scale = np.sqrt(np.sum(np.abs(k[:, :, None] * v_hat[:, None, :]) ** 2))
    divergence = np.sum(1j * k * v_hat, axis=1)
    if np.sqrt(np.sum(np.abs(divergence) ** 2)) > tolerance * max(scale, 1e-300):
        raise ConstraintError("velocity field is not divergence-free")
    if np.linalg.norm(v_hat[0]) > tolerance * max(np.sqrt(np.sum(np.abs(v_hat) ** 2)), 1e-300):
        raise ConstraintError("velocity field must have zero mean")

    k2 = np.sum(k * k, axis=1)
    k2_safe = np.where(k2 > 0, k2, 1.0)
    if d == 2:
        psi_hat = (-1j * k[:, 1] * v_hat[:, 0] + 1j * k[:, 0] * v_hat[:, 1]) / k2_safe
        psi_hat[0] = 0.0
        psi = inverse_values(grid, psi_hat[:, None])[:, 0]
        if real_input:
            psi = psi.real
        return psi[:, None, None] * rotation90()
    w_hat = 1j * np.cross(k, v_hat) / k2_safe[:, None]
    w_hat[0] = 0.0
    w = inverse_values(grid, w_hat)
    if real_input:
        w = w.real
    return cross_matrix(w)


def convection_defect(grid: Grid, sigma_a: np.ndarray, velocity, temperature) -> float:
    """
    Relative mismatch between ∇·(σₐ∇T) and v·∇T, which agree whenever
    ∇·σₐ = v and σₐ is antisymmetric.
    """
    k = grid.wavevectors
    t_hat = forward_values(grid, np.asarray(temperature, dtype=np.complex128).reshape(-1, 1))
    grad_t = inverse_values(grid, 1j * k * t_hat)
    flux = np.einsum("nij,nj->ni", sigma_a, grad_t)
    lhs = np.sum(1j * k * forward_values(grid, flux), axis=1)
    rhs = forward_values(grid, np.sum(np.asarray(velocity) * grad_t, axis=1)[:, None])[:, 0]
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(rhs), 1e-300))


def build_magnetotransport(
    grid: Grid,
    sigma_s,
    sigma_a=None,
    velocity=None,
    source: SourceLike = None,
) -> Problem:
    """
    Conduction with an antisymmetric part σₐ (Hall effect, or convection by
    an incompressible flow v through ∇·σₐ = v), rewritten in real doubled
    form with operator

        [[σ_s⁻¹,      −σ_s⁻¹σₐ       ],
         [σₐσ_s⁻¹,    σ_s − σₐσ_s⁻¹σₐ]]
    """
    d = grid.dim
    if sigma_a is not None and velocity is not None:
        raise ValueError("give either sigma_a or velocity, not both")
    if velocity is not None:
        sigma_a = antisymmetric_from_velocity(grid, velocity)
    symmetric = _per_point_matrix(grid, sigma_s, d)
    antisymmetric = (
        np.zeros_like(symmetric) if sigma_a is None else _per_point_matrix(grid, sigma_a, d)
    )
    base = build_conductivity(grid, symmetric + antisymmetric, source)
    p = cg_transform(replace(base, meta={"physics": "conductivity"}), "real")
    return replace(p, meta=dict(p.meta, physics="magnetotransport"))


# Elasticity family ###########################################################


def build_elasticity(
    grid: Grid, C, body_source: SourceLike = None, polarization: SourceLike = None
) -> Problem:
    """
    σ = Cε − s on the Mandel basis, with ε a symmetrized gradient and σ
    divergence-free.
    """
    d = grid.dim
    n = sym_size(d)
    layout = SupertensorLayout.of(d, ("sym-matrix", "strain"))
    L = LocalOperator(grid, layout, _per_point_matrix(grid, C, n))
    source = as_source(grid, layout, polarization) + as_source(grid, layout, body_source)
    return Problem(grid, layout, pr.elastic(d, "strain"), L, source, {"physics": "elasticity"})


def thermal_stress_source(C, alpha, theta: float) -> np.ndarray:
    """
    Stiffness-form source θ·C·(αI) for isotropic thermal expansion α, so
    that σ = C(ε − αθI). C may be per point, (N, n, n).
    """
    C = np.asarray(C)
    n = C.shape[-1]
    dim = {3: 2, 6: 3}[n]
    strain = hydrostatic(dim, np.asarray(alpha, dtype=float))
    return theta * np.einsum("...ij,...j->...i", C, strain)


def thermal_strain_source(dim: int, alpha, theta: float) -> np.ndarray:
    "Compliance-form source −θαI, so that ε = Sσ + θαI."
    return -theta * hydrostatic(dim, np.asarray(alpha, dtype=float))


def build_torsion(
    grid: Grid, c1313, c1323, c2323, tau: float = 0.0, s_prime: SourceLike = None
) -> Problem:
    """
    Saint-Venant torsion of a cylinder with axis x₃ as a conductivity-form
    problem with source L·(τx₂, −τx₁) + s′, coordinates measured from the
    cell centre. τ = 0 is antiplane elasticity.
    """
    if grid.dim != 2:
        raise UnsupportedDimensionError("torsion is a two-dimensional problem")
    a = _per_point_scalar(grid, c1313)
    b = _per_point_scalar(grid, c1323)
    c = _per_point_scalar(grid, c2323)
    L = np.stack([np.stack([a, b], axis=1), np.stack([b, c], axis=1)], axis=1)

    p = build_conductivity(grid, L, s_prime)
    if tau != 0.0:
        x = grid.points() - np.array(grid.lengths) / 2
        twist = tau * np.stack([x[:, 1], -x[:, 0]], axis=1)
        source = p.source.values + np.einsum("nij,nj->ni", L, twist)
        p = replace(p, source=Field(grid, p.layout, "real", source))
        if _touches_boundary(grid, L):
            logger.warning(
                "Torsion moduli are nonzero on the cell boundary; the twist "
                "source is not periodic there"
            )
    tag = "torsion" if tau != 0.0 else "antiplane"
    return replace(p, meta={"physics": tag, "tau": tau})


def _touches_boundary(grid: Grid, L: np.ndarray) -> bool:
    nonzero = np.any(np.abs(L) > 0, axis=(1, 2)).reshape(grid.samples, order="F")
    return bool(nonzero[0, :].any() or nonzero[:, 0].any())


def build_thermoelasticity(
    grid: Grid, S, alpha, c_over_T0, sources: SourceLike = None
) -> Problem:
    """
    (ε, entropy) = [[S, α], [αᵀ, c/T₀]] (σ, θ) with σ divergence-free and the
    temperature increment θ constant over the cell.

    `alpha` is a Mandel vector (or per-point vectors), or a scalar /
    per-point scalar for isotropic expansion.
    """
    d = grid.dim
    n = sym_size(d)
    compliance = _per_point_matrix(grid, S, n)
    alpha = np.asarray(alpha)
    if alpha.ndim == 0 or alpha.shape == (grid.size,):
        alpha = hydrostatic(d, alpha.astype(float))
    alpha = np.broadcast_to(alpha, (grid.size, n)).astype(np.complex128)
    heat = _per_point_scalar(grid, c_over_T0)

    matrices = np.zeros((grid.size, n + 1, n + 1), dtype=np.complex128)
    matrices[:, :n, :n] = compliance
    matrices[:, :n, n] = alpha
    matrices[:, n, :n] = alpha
    matrices[:, n, n] = heat
    layout = SupertensorLayout.of(d, ("sym-matrix", "stress"), ("scalar", "temperature"))
    gamma = pr.block(
        pr.complement(pr.elastic(d, "stress")),
        pr.zero(SupertensorLayout.of(d, ("scalar", "temperature"))),
    )
    return Problem(
        grid, layout, gamma, LocalOperator(grid, layout, matrices),
        as_source(grid, layout, sources), {"physics": "thermoelasticity"},
    )


def build_coupled_eme(
    grid: Grid, S, Dc, Q, eps, beta, mu, sources: SourceLike = None
) -> Problem:
    """
    Static coupling of stress σ, electric field e and magnetic field h:

        (ε, d, b) = [[S,   Dc,  Q ],
                     [Dcᵀ, ε,   β ],
                     [Qᵀ,  βᵀ,  μ ]] (σ, e, h)

    σ is divergence-free, e and h are curl-free (no free currents).
    """
    d = grid.dim
    n = sym_size(d)
    compliance = _per_point_matrix(grid, S, n)
    piezoelectric = np.broadcast_to(np.asarray(Dc, dtype=np.complex128), (grid.size, n, d))
    piezomagnetic = np.broadcast_to(np.asarray(Q, dtype=np.complex128), (grid.size, n, d))
    dielectric = _per_point_matrix(grid, eps, d)
    magnetoelectric = _per_point_matrix(grid, beta, d)
    permeability = _per_point_matrix(grid, mu, d)

    def t(a):
        return np.swapaxes(a, 1, 2)

    matrices = np.concatenate(
        [
            np.concatenate([compliance, piezoelectric, piezomagnetic], axis=2),
            np.concatenate([t(piezoelectric), dielectric, magnetoelectric], axis=2),
            np.concatenate([t(piezomagnetic), t(magnetoelectric), permeability], axis=2),
        ],
        axis=1,
    )
    layout = SupertensorLayout.of(d, ("sym-matrix", "stress"), ("vector", "e"), ("vector", "h"))
    gamma = pr.block(pr.complement(pr.elastic(d, "stress")), pr.grad(d, "e"), pr.grad(d, "h"))
    return Problem(
        grid, layout, gamma, LocalOperator(grid, layout, matrices),
        as_source(grid, layout, sources), {"physics": "coupled-eme"},
    )


def build_viscoelastic_cg(grid: Grid, C_real, C_imag, s: SourceLike = None) -> Problem:
    """
    Time-harmonic viscoelasticity C = C′ + iC″ in doubled Hermitian form.
    A viscous fluid enters with zero real shear modulus.
    """
    n = sym_size(grid.dim)
    C = _per_point_matrix(grid, C_real, n) + 1j * _per_point_matrix(grid, C_imag, n)
    base = build_elasticity(grid, C, polarization=s)
    p = cg_transform(base, "dielectric")
    return replace(p, meta=dict(p.meta, physics="viscoelastic-cg"))


# Penalized problems on the Z projection ######################################


def default_penalty(L: LocalOperator) -> float:
    norm = L.finite_norm()
    return PENALTY_FACTOR * (norm if norm > 0 else 1.0)


def _z_layout(dim: int) -> SupertensorLayout:
    return SupertensorLayout.of(dim, ("full-matrix", "flux"), ("vector", "velocity"))


def _vector_source(grid: Grid, layout: SupertensorLayout, value: SourceLike) -> Field:
    d = grid.dim
    if value is None:
        return Field.zeros(grid, layout)
    if isinstance(value, Field):
        vector = value.to_real().values
    else:
        vector = np.broadcast_to(np.asarray(value, dtype=np.complex128), (grid.size, d))
    values = np.zeros((grid.size, layout.m), dtype=np.complex128)
    values[:, d * d :] = vector
    return Field(grid, layout, "real", values)


def build_graphene(
    grid: Grid, sigma0, D_ell, lambda_pen: Optional[float] = None, source: SourceLike = None
) -> Problem:
    """
    Viscous (hydrodynamic) electron flow with a matrix-valued flux:

        L = diag((D_ℓ/σ₀)Λ_f + λΛ_h, (1/σ₀)I)

    on a (full-matrix, vector) layout with the Z projection. The penalty λ
    stands in for the infinite trace modulus that forces ∇·j = 0. The
    source enters through the vector block.
    """
    if grid.dim != 2:
        raise UnsupportedDimensionError("the electron-flow model is two-dimensional")
    d = 2
    layout = _z_layout(d)
    sigma = _per_point_scalar(grid, sigma0)
    diffusion = _per_point_scalar(grid, D_ell)
    if np.any(sigma.real <= 0) or np.any(diffusion.real < 0):
        raise ValueError("need σ₀ > 0 and D_ℓ ≥ 0")
    matrices = np.zeros((grid.size, layout.m, layout.m), dtype=np.complex128)
    matrices[:, : d * d, : d * d] = (diffusion / sigma)[:, None, None] * tracefree_projector_full(d)
    matrices[:, d * d :, d * d :] = (1.0 / sigma)[:, None, None] * np.eye(d)
    finite = LocalOperator(grid, layout, matrices)
    weight = default_penalty(finite) if lambda_pen is None else float(lambda_pen)
    slot = PenaltySlot(0, 0, trace_projector_full(d), weight)
    L = LocalOperator(grid, layout, matrices, (slot,))
    return Problem(
        grid, layout, pr.z_operator(d), L, _vector_source(grid, layout, source),
        {"physics": "graphene", "penalty": weight},
    )


def build_oseen(
    grid: Grid,
    rho,
    V,
    eta_visc,
    lambda_pen: Optional[float] = None,
    force: SourceLike = None,
    convection_sign: int = 1,
) -> Problem:
    """
    Steady Oseen flow linearized about a velocity V:

        L = [[ηΛ_s + λΛ_h, 0],
             [±ρV·,        0]]

    acting on E = (∇w, w). The lower-left block maps ∇w to (V·∇)w. The
    penalty λ replaces the infinite bulk term, so −p = λ∇·w.
    """
    if convection_sign not in (1, -1):
        raise ValueError("convection_sign must be +1 or -1")
    d = grid.dim
    layout = _z_layout(d)
    viscosity = _per_point_scalar(grid, eta_visc)
    if np.any(viscosity.real <= 0):
        raise ValueError("viscosity must be positive")
    density = _per_point_scalar(grid, rho)
    velocity = np.broadcast_to(np.asarray(V, dtype=np.complex128), (grid.size, d))

    matrices = np.zeros((grid.size, layout.m, layout.m), dtype=np.complex128)
    matrices[:, : d * d, : d * d] = viscosity[:, None, None] * shear_projector_full(d)
    for j in range(d):
        for i in range(d):
            matrices[:, d * d + j, i * d + j] = convection_sign * density * velocity[:, i]
    finite = LocalOperator(grid, layout, matrices)
    weight = default_penalty(finite) if lambda_pen is None else float(lambda_pen)
    slot = PenaltySlot(0, 0, trace_projector_full(d), weight)
    L = LocalOperator(grid, layout, matrices, (slot,))
    return Problem(
        grid, layout, pr.z_operator(d), L, _vector_source(grid, layout, force),
        {"physics": "oseen", "penalty": weight, "convection_sign": convection_sign},
    )


# Transformations #############################################################


def dualize(p: Problem) -> Problem:
    """
    The dual form: L → L⁻¹, Γ₁ → I − Γ₁, s → −L⁻¹s. Roles of E and J swap.
    Penalized problems (graphene, Oseen) have no dual here and raise
    PenaltyError.
    """
    inverse = p.L.inverse()
    source = apply_local(inverse, p.source)
    meta = dict(p.meta, dual=not p.meta.get("dual", False))
    return Problem(p.grid, p.layout, _complement_of(p.gamma), inverse, -source, meta)


def null_t_defect(gamma: ProjectionSpec, T: np.ndarray, k: np.ndarray) -> np.ndarray:
    "‖Γ₁(k) T Γ₁(k)‖ at each wavevector."
    G = gamma.evaluate(k)
    return np.max(np.abs(G @ T @ G), axis=(1, 2))


def null_t_shift(
    p: Problem,
    T,
    c: float,
    samples: int = 200,
    rng: Optional[np.random.Generator] = None,
    tolerance: float = 1e-12,
) -> Problem:
    """
    L → L + cT for a constant null-T operator (Γ₁TΓ₁ = 0). The field E is
    unchanged; J is reinterpreted as J + cTE.
    """
    T = np.asarray(T, dtype=np.complex128)
    if T.shape != (p.m, p.m):
        raise ShapeError(f"T must be {p.m} × {p.m}")
    rng = rng if rng is not None else np.random.default_rng(0)
    # k = 0 matters where Γ₁(0) keeps value slots.
    k = np.vstack([np.zeros((1, p.grid.dim)), pr.random_wavevectors(rng, samples, p.grid.dim)])
    defect = null_t_defect(p.gamma, T, k)
    scale = max(1.0, float(np.max(np.abs(T))))
    worst = int(np.argmax(defect))
    if defect[worst] > tolerance * scale:
        raise InvalidNullTError(k[worst], float(defect[worst]))
    shifts = list(p.meta.get("flux_shift", ()))
    shifts.append({"c": c, "T": T})
    meta = dict(p.meta, flux_shift=tuple(shifts))
    return replace(p, L=p.L.plus(c * T), meta=meta)


def linearize(p: Problem, L_prime: LocalOperator, s_prime: SourceLike, E_base: Field) -> Problem:
    """
    The problem for a first-order change: same L and Γ₁, source
    s′ − L′E_base.
    """
    if E_base.space != "real":
        E_base = E_base.to_real()
    source = as_source(p.grid, p.layout, s_prime) - apply_local(L_prime, E_base)
    meta = dict(p.meta, linearized=True)
    return replace(p, source=source, meta=meta)


def tangent_operator(
    law: Callable[[np.ndarray], np.ndarray], E_base: Field, step: float = 1e-6
) -> LocalOperator:
    """
    ∂F/∂E at E_base by central differences of a pointwise law F, which
    maps (N, m) values to (N, m) values.
    """
    if E_base.space != "real":
        raise SpaceError("the base field must be in real space")
    values = np.asarray(E_base.values)
    m = E_base.layout.m
    matrices = np.zeros((E_base.grid.size, m, m), dtype=np.complex128)
    for c in range(m):
        offset = np.zeros_like(values)
        offset[:, c] = step
        matrices[:, :, c] = (law(values + offset) - law(values - offset)) / (2 * step)
    return LocalOperator(E_base.grid, E_base.layout, matrices)


def conductivity_from_permittivity(eps, omega: complex):
    "σ = −iωε."
    return -1j * omega * np.asarray(eps)


def permittivity_from_conductivity(sigma, omega: complex):
    return np.asarray(sigma) / (-1j * omega)


def check_reality_constraint(
    permittivity: Callable[[complex], np.ndarray], frequencies: Sequence[complex]
) -> float:
    """
    max |ε(ω) − conj(ε(−conj ω))| over the given frequencies. Zero for any
    permittivity coming from a real response function.
    """
    defect = 0.0
    for omega in frequencies:
        here = np.asarray(permittivity(omega))
        mirror = np.asarray(permittivity(-np.conj(omega)))
        defect = max(defect, float(np.max(np.abs(here - np.conj(mirror)))))
    return defect


# Catalog #####################################################################


@dataclass(frozen=True)
class CatalogEntry:
    tag: str
    theory: str
    # Builds Γ₁ for a given dimension.
    gamma_factory: Callable[[int], ProjectionSpec]
    dims: Tuple[int, ...] = (2, 3)

    def gamma(self, dim: int) -> ProjectionSpec:
        return self.gamma_factory(dim)

    def to_json(self, dim: int = 2) -> dict:
        spec = self.gamma(dim if dim in self.dims else self.dims[0])
        return {
            "tag": self.tag,
            "theory": self.theory,
            "layout": list(spec.layout.kinds),
            "gamma": spec.describe(),
            "dims": list(self.dims),
        }


def _scalar(dim: int) -> SupertensorLayout:
    return SupertensorLayout.of(dim, ("scalar", "temperature"))


CATALOG: Tuple[CatalogEntry, ...] = (
    CatalogEntry(
        "conductivity",
        "electrical/thermal conduction, dielectrics, diffusion, porous media",
        lambda d: pr.grad(d, "E"),
    ),
    CatalogEntry(
        "magnetostatics", "magnetostatics with magnetization and free currents",
        lambda d: pr.divfree(d, "b"),
    ),
    CatalogEntry(
        "thermoelectric", "coupled electron and energy transport (also magnetoelectric)",
        lambda d: pr.block(pr.grad(d, "E1"), pr.grad(d, "E2")),
    ),
    CatalogEntry(
        "dielectric-cg", "lossy quasistatic dielectric in doubled Hermitian form",
        lambda d: pr.block(pr.divfree(d, "curl"), pr.grad(d)),
    ),
    CatalogEntry(
        "magnetotransport", "Hall conduction / convection-diffusion in doubled real form",
        lambda d: pr.block(pr.divfree(d, "curl"), pr.grad(d)),
    ),
    CatalogEntry(
        "elasticity", "linear elasticity, stiffness form", lambda d: pr.elastic(d, "strain")
    ),
    CatalogEntry(
        "torsion", "Saint-Venant torsion of cylinders", lambda d: pr.grad(d, "E"), dims=(2,)
    ),
    CatalogEntry(
        "antiplane", "antiplane elasticity (torsion with zero twist)",
        lambda d: pr.grad(d, "E"), dims=(2,),
    ),
    CatalogEntry(
        "thermoelasticity", "thermoelasticity / poroelasticity, compliance form",
        lambda d: pr.block(pr.complement(pr.elastic(d, "stress")), pr.zero(_scalar(d))),
    ),
    CatalogEntry(
        "coupled-eme", "coupled static elastic, electric and magnetic fields",
        lambda d: pr.block(
            pr.complement(pr.elastic(d, "stress")), pr.grad(d, "e"), pr.grad(d, "h")
        ),
    ),
    CatalogEntry(
        "viscoelastic-cg", "time-harmonic viscoelasticity in doubled Hermitian form",
        lambda d: pr.block(pr.complement(pr.elastic(d, "strain")), pr.elastic(d, "strain")),
    ),
    CatalogEntry(
        "graphene", "viscous electron flow with matrix-valued flux", pr.z_operator, dims=(2,)
    ),
    CatalogEntry("oseen", "steady Oseen (linearized Navier–Stokes) flow", pr.z_operator),
)


def catalog_entry(tag: str) -> CatalogEntry:
    for entry in CATALOG:
        if entry.tag == tag:
            return entry
    raise KeyError(tag)
