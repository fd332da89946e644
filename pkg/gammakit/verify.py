"""
Named batteries of invariant checks, run by `gammakit verify SUITE`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np
from tqdm import tqdm

from . import microstructure
from . import projections as pr
from .exact_relations import Subspace, check_closure, levin_alpha
from .fields import Grid, LocalOperator, divergence, spectral_norm
from .homogenize import (
    check_adjoint,
    effective_source,
    effective_tensor,
    perturb_effective,
    perturbed_problem,
)
from .physics import (
    CATALOG,
    build_conductivity,
    build_elasticity,
    build_graphene,
    build_oseen,
    build_thermoelasticity,
    dualize,
    null_t_shift,
    thermal_stress_source,
)
from .solver import SolveOptions, solve_cell, solve_infinite
from .tensors import (
    bulk_modulus_from_compliance,
    identity_mandel,
    isotropic_compliance,
    isotropic_stiffness,
    rotation90,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "threshold": self.threshold,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    checks: Tuple[Check, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "checks": [c.to_json() for c in self.checks],
        }


def _at_most(name: str, value: float, threshold: float, detail: str = "") -> Check:
    return Check(name, bool(value <= threshold), float(value), threshold, detail)


@dataclass(frozen=True)
class VerifyContext:
    rng: np.random.Generator
    resolution: int
    workers: int | None
    progress: bool

    def options(self, tolerance: float = 1e-10) -> SolveOptions:
        return SolveOptions(tolerance=tolerance, workers=self.workers)


def _projections(ctx: VerifyContext) -> List[Check]:
    checks = []
    specs = [
        (entry.tag, dim, entry.gamma(dim)) for entry in CATALOG for dim in entry.dims
    ]
    for tag, dim, spec in tqdm(specs, desc="projections", disable=not ctx.progress):
        report = pr.verify_projection(spec, samples=1000, rng=ctx.rng)
        checks.append(
            _at_most(
                f"{tag} {dim}D idempotent and Hermitian",
                max(report.idempotence_defect, report.hermitian_defect),
                1e-10,
                spec.describe(),
            )
        )

    factorizations = [
        ("gradient 2D", pr.DSymbol.gradient(2), pr.gamma_grad, 2),
        ("gradient 3D", pr.DSymbol.gradient(3), pr.gamma_grad, 3),
        ("symmetrized gradient 2D", pr.DSymbol.symmetrized_gradient(2), pr.gamma_elastic, 2),
        ("symmetrized gradient 3D", pr.DSymbol.symmetrized_gradient(3), pr.gamma_elastic, 3),
        ("gradient with value 2D", pr.DSymbol.gradient_with_value(2), pr.gamma_Z, 2),
        ("stream curl", pr.DSymbol.stream_curl(), pr.gamma_divfree, 2),
        ("curl", pr.DSymbol.curl(3), pr.gamma_divfree, 3),
    ]
    for name, symbol, closed_form, dim in factorizations:
        k = pr.random_wavevectors(ctx.rng, 200, dim)
        defect = np.max(np.abs(pr.gamma_from_D(symbol, k) - closed_form(k)))
        checks.append(_at_most(f"D-factorization matches closed form: {name}", defect, 1e-12))
    return checks


def _random_conductivity(ctx: VerifyContext, symmetric: bool) -> np.ndarray:
    grid = Grid.square(ctx.resolution)
    noise = ctx.rng.uniform(-0.5, 0.5, size=(grid.size, 2, 2))
    if symmetric:
        noise = 0.5 * (noise + np.swapaxes(noise, 1, 2))
    return 3.0 * np.eye(2) + noise


def _adjoint(ctx: VerifyContext) -> List[Check]:
    grid = Grid.square(ctx.resolution)
    p = build_conductivity(grid, _random_conductivity(ctx, symmetric=False))
    defect = check_adjoint(p, ctx.options(1e-12))
    checks = [_at_most("(L†)* = (L*)† for non-symmetric σ(x)", defect, 1e-8)]

    q = build_conductivity(grid, _random_conductivity(ctx, symmetric=True))
    L_star = effective_tensor(q, ctx.options(1e-12)).L_star
    asymmetry = np.max(np.abs(L_star - L_star.conj().T))
    checks.append(_at_most("Hermitian L gives Hermitian L*", asymmetry, 1e-8))
    return checks


def _cosine_conductivity(ctx: VerifyContext):
    grid = Grid.square(ctx.resolution)
    profile = microstructure.cosine_profile(grid, axis=0, mean=2.0, amplitude=1.0)
    return build_conductivity(grid, profile)


def _dual(ctx: VerifyContext) -> List[Check]:
    p = _cosine_conductivity(ctx)
    opts = ctx.options(1e-12)
    product = effective_tensor(dualize(p), opts).L_star @ effective_tensor(p, opts).L_star
    checks = [_at_most("L*(dual) · L* = I", np.max(np.abs(product - np.eye(2))), 1e-6)]
    expected = np.diag([np.sqrt(3.0), 2.0])
    L_star = effective_tensor(p, opts).L_star
    error = np.max(np.abs(L_star - expected))
    checks.append(_at_most("cosine profile gives diag(√3, 2)", error, 1e-6))
    return checks


def _nullt(ctx: VerifyContext) -> List[Check]:
    grid = Grid.square(ctx.resolution)
    p = build_conductivity(grid, _random_conductivity(ctx, symmetric=True))
    c = 0.3
    shifted = null_t_shift(p, rotation90(), c, rng=ctx.rng)
    opts = ctx.options(1e-12)
    change = effective_tensor(shifted, opts).L_star - effective_tensor(p, opts).L_star
    checks = [_at_most("L* shifts by c·R⊥", np.max(np.abs(change - c * rotation90())), 1e-8)]

    E, _, _ = solve_cell(p, [1.0, 0.0], opts)
    E_shifted, _, _ = solve_cell(shifted, [1.0, 0.0], opts)
    checks.append(_at_most("E is unchanged by the shift", (E - E_shifted).norm() / E.norm(), 1e-10))
    return checks


LEVIN_PHASES = ((1.0, 0.6, 1e-2), (3.0, 1.5, 2e-3))


def _levin_moduli(grid: Grid, radius: float):
    "Per-point κ, μ and α of a disk of phase 2 in phase 1."
    labels = microstructure.disk(grid, radius)
    phases = microstructure.PhaseMap(grid, labels, tuple(np.zeros(1) for _ in LEVIN_PHASES))
    return tuple(phases.per_point([row[i] for row in LEVIN_PHASES]) for i in range(3))


def levin_problem(grid: Grid, radius: float = 0.3):
    """
    A square-symmetric two-phase thermoelastic cell: a disk of phase 2 in
    phase 1. Returns the problem and the phase data (κ, μ, α) per phase.
    """
    kappa, mu, alpha = _levin_moduli(grid, radius)
    S = isotropic_compliance(grid.dim, kappa, mu)
    return build_thermoelasticity(grid, S, alpha, 1.0), LEVIN_PHASES


def levin_elastic_problem(grid: Grid, radius: float = 0.3):
    """
    The cell of levin_problem in stiffness form at θ = 1: plain elasticity
    with the thermal stress C·αI as its source.
    """
    kappa, mu, alpha = _levin_moduli(grid, radius)
    C = isotropic_stiffness(grid.dim, kappa, mu)
    return build_elasticity(grid, C, polarization=thermal_stress_source(C, alpha, 1.0))


def expansion_from_thermal_stress(p, opts: SolveOptions) -> Tuple[float, float]:
    """
    κ* and α* of a stiffness-form thermoelastic problem at θ = 1. At zero
    mean strain ⟨σ⟩ = s* = −C*·α*I.
    """
    d = p.grid.dim
    C_star = effective_tensor(p, opts).L_star
    expansion = -np.linalg.solve(C_star, effective_source(p, opts))
    kappa_star = float(np.real((C_star @ identity_mandel(d))[0])) / d
    return kappa_star, float(np.real(np.mean(expansion[:d])))


def levin_defect(p, phase_data, opts: SolveOptions) -> Tuple[float, float, float]:
    """
    Relative mismatch between α* from the cell solves and α* from the
    effective bulk modulus. α* is read off the coupling column of the
    thermoelastic L*, and again from the effective source of the same cell
    in stiffness form, each against the κ* of its own form. Returns the
    larger mismatch with the first α* and its prediction.
    """
    (k1, _, a1), (k2, _, a2) = phase_data
    response = effective_tensor(p, opts)
    n = p.m - 1
    kappa_star = bulk_modulus_from_compliance(response.L_star[:n, :n])
    coupled = float(np.real(response.L_star[0, n]))
    predicted = levin_alpha(k1, k2, a1, a2, kappa_star)

    elastic = levin_elastic_problem(p.grid)
    kappa_elastic, alpha_elastic = expansion_from_thermal_stress(elastic, opts)
    predicted_elastic = levin_alpha(k1, k2, a1, a2, kappa_elastic)
    defect = max(
        abs(coupled - predicted) / abs(predicted),
        abs(alpha_elastic - predicted_elastic) / abs(predicted_elastic),
    )
    return defect, coupled, predicted


def _levin(ctx: VerifyContext) -> List[Check]:
    p, phase_data = levin_problem(Grid.square(max(ctx.resolution, 64)))
    defect, computed, predicted = levin_defect(p, phase_data, ctx.options(1e-11))
    return [
        _at_most(
            "thermal expansion agrees with the bulk-modulus formula",
            defect,
            1e-3,
            f"α* = {computed:.8g}, formula {predicted:.8g}",
        )
    ]


def _closure(ctx: VerifyContext) -> List[Check]:
    gamma = pr.grad(2)
    L0 = np.eye(2)
    e11 = np.array([[1.0, 0.0], [0.0, 0.0]])
    cases = [
        ("span{e₁⊗e₁} is closed", Subspace.spanned_by([e11]), True),
        ("full matrix space is closed", Subspace.full(2), True),
        ("span{I} is not closed", Subspace.spanned_by([np.eye(2)]), False),
        ("span{R⊥} is not closed", Subspace.spanned_by([rotation90()]), False),
    ]
    checks = []
    for name, subspace, expected in cases:
        report = check_closure(subspace, gamma, L0, samples=200, rng=ctx.rng)
        detail = "" if report.passed else f"witness k = {report.witness_k}"
        checks.append(
            Check(name, report.passed == expected, report.max_distance, 1e-10, detail)
        )

    grid = Grid.square(ctx.resolution)
    x = grid.points()
    beta = 1.0 + 0.5 * np.cos(2 * np.pi * x[:, 0]) * np.cos(2 * np.pi * x[:, 1])
    sigma = np.eye(2) + beta[:, None, None] * e11
    L_star = effective_tensor(build_conductivity(grid, sigma), ctx.options(1e-12)).L_star
    off_pattern = max(abs(L_star[0, 1]), abs(L_star[1, 0]), abs(L_star[1, 1] - 1.0))
    checks.append(
        _at_most("I + β(x)e₁⊗e₁ homogenizes to I + β*e₁⊗e₁", off_pattern, 1e-8)
    )
    return checks


def _perturb(ctx: VerifyContext) -> List[Check]:
    p = _cosine_conductivity(ctx)
    grid = p.grid
    opts = ctx.options(1e-12)
    h = 1.0 + 0.5 * np.cos(2 * np.pi * grid.points()[:, 0])
    perturbations = {
        "Hall": h[:, None, None] * rotation90(),
        "isotropic": h[:, None, None] * np.eye(2),
    }
    base = effective_tensor(p, opts).L_star
    checks = []
    for name, matrices in perturbations.items():
        L_prime = LocalOperator(grid, p.layout, matrices)
        derivative = perturb_effective(p, L_prime, opts)
        for epsilon in (1e-3, 1e-4):
            shifted = effective_tensor(perturbed_problem(p, L_prime, epsilon), opts).L_star
            error = np.linalg.norm((shifted - base) / epsilon - derivative)
            checks.append(
                _at_most(
                    f"{name} perturbation, ε = {epsilon:g}",
                    error,
                    10 * epsilon * np.linalg.norm(derivative),
                )
            )
        if name == "Hall":
            checks.append(
                _at_most(
                    "Hall perturbation of L* is antisymmetric",
                    np.max(np.abs(derivative + derivative.T)),
                    1e-8,
                )
            )
    return checks


def gradient_source(grid: Grid) -> np.ndarray:
    "A compressive forcing (sin 2πx₁, 0): a pure gradient."
    x = grid.points()
    values = np.zeros((grid.size, grid.dim))
    values[:, 0] = np.sin(2 * np.pi * x[:, 0] / grid.lengths[0])
    return values


def penalty_divergence(p, opts: SolveOptions) -> float:
    E, _, _ = solve_infinite(p, opts)
    return spectral_norm(p.grid, divergence(E, 1))


def _penalty(ctx: VerifyContext) -> List[Check]:
    grid = Grid.square(min(ctx.resolution, 32))
    opts = ctx.options(1e-12)
    source = gradient_source(grid)
    builders: Dict[str, Callable[[float], object]] = {
        "graphene": lambda lam: build_graphene(grid, 1.0, 0.1, lam, source),
        "oseen": lambda lam: build_oseen(grid, 1.0, [0.5, 0.25], 1.0, lam, source),
    }
    checks = []
    for name, build in builders.items():
        scaled = []
        for lam in (1e4, 1e6, 1e8):
            scaled.append(lam * penalty_divergence(build(lam), opts))
        spread = max(scaled) / max(min(scaled), 1e-300)
        checks.append(
            _at_most(f"{name}: ‖∇·w‖ scales as 1/λ", spread, 3.0, f"λ‖∇·w‖ = {scaled}")
        )
    return checks


SUITES: Dict[str, Callable[[VerifyContext], List[Check]]] = {
    "projections": _projections,
    "adjoint": _adjoint,
    "dual": _dual,
    "nullt": _nullt,
    "levin": _levin,
    "closure": _closure,
    "perturb": _perturb,
    "penalty": _penalty,
}


def run_suite(
    name: str,
    seed: int = 0,
    resolution: int = 32,
    workers: int | None = None,
    progress: bool = False,
) -> SuiteReport:
    if name not in SUITES:
        raise KeyError(name)
    ctx = VerifyContext(np.random.default_rng(seed), resolution, workers, progress)
    logger.info("Running suite %s (seed %d, resolution %d)", name, seed, resolution)
    checks = tuple(SUITES[name](ctx))
    for check in checks:
        if not check.passed:
            logger.warning(
                "Check failed: %s (%.3g > %.3g)", check.name, check.value, check.threshold
            )
    return SuiteReport(name, checks)
