"""
Matrix-free Krylov solution of the projected equations.

Unknowns live in Fourier space on the range of Γ₁. For the periodic cell
problem with applied mean E₀,

    Γ₁ L Γ₁ Ẽ = Γ₁ (s − L E₀),    E = E₀ + Ẽ,    J = L E − s,

and the infinite-body form is the same system with E₀ = 0. Hermitian
positive L uses preconditioned conjugate gradients; everything else goes
through scipy's restarted GMRES. Both are preconditioned by the
constant-reference operator Γ(k) = Γ₁(Γ₁L₀Γ₁)⁻¹Γ₁.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Literal, Optional, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import ConfigError, PenaltyError, ShapeError, SingularReferenceError
from .exact_relations import restricted_reference
from .fields import Field, average, forward_values, inverse_values
from .physics import Problem

logger = logging.getLogger(__name__)

Method = Literal["auto", "hermitian-cg", "general-krylov"]

# Tolerance on ‖L − L†‖ for choosing conjugate gradients.
HERMITIAN_TOLERANCE = 1e-13
# Restarts of the general path when the true residual misses the target.
MAX_OUTER_RESTARTS = 3


@dataclass(frozen=True)
class SolveOptions:
    tolerance: float = 1e-10
    # None means 10·m·(largest axis sample count).
    max_iterations: Optional[int] = None
    method: Method = "auto"
    # Constant L₀ for the preconditioner; None means the mean of L.
    reference_medium: Optional[np.ndarray] = None
    precondition: bool = True
    # GMRES restart length.
    restart: int = 50
    # Recompute the CG residual from scratch this often.
    residual_refresh: int = 50
    workers: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.tolerance < 1.0:
            raise ConfigError(f"tolerance must lie in (0, 1), got {self.tolerance}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")
        if self.method not in ("auto", "hermitian-cg", "general-krylov"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.restart < 1:
            raise ConfigError("restart must be at least 1")

    def iteration_limit(self, p: Problem) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return 10 * p.m * max(p.grid.samples)


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    # Method actually used to finish the solve.
    method: str = ""
    # ‖b − A x‖ / ‖b‖, recomputed after the iteration stopped.
    relative_residual: float = 0.0
    # ‖J − (LE − s)‖, ‖Γ̄₂E‖, ‖Γ̄₁J‖ from residual().
    constitutive_residual: float = 0.0
    compatibility_residual: float = 0.0
    equilibrium_residual: float = 0.0
    # Norm the residuals are measured against.
    scale: float = 0.0
    wall_time: float = 0.0
    preconditioned: bool = False
    non_hermitian: bool = False
    penalty_active: bool = False
    fallback: bool = False
    # average(J) of a cell solve.
    mean_flux: Optional[np.ndarray] = None
    history: List[float] = field(default_factory=list)
    # Quadratic energy per CG iteration.
    energy: List[float] = field(default_factory=list)
    messages: List[str] = field(default_factory=list)

    def to_json(self, deterministic: bool = False) -> dict:
        obj = {
            "converged": self.converged,
            "iterations": self.iterations,
            "method": self.method,
            "relative_residual": self.relative_residual,
            "residuals": {
                "constitutive": self.constitutive_residual,
                "compatibility": self.compatibility_residual,
                "equilibrium": self.equilibrium_residual,
                "scale": self.scale,
            },
            "flags": {
                "preconditioned": self.preconditioned,
                "non_hermitian": self.non_hermitian,
                "penalty_active": self.penalty_active,
                "fallback": self.fallback,
            },
            "history": list(self.history),
            "messages": list(self.messages),
        }
        if self.mean_flux is not None:
            obj["mean_flux"] = [[float(z.real), float(z.imag)] for z in self.mean_flux]
        if not deterministic:
            obj["wall_time"] = self.wall_time
        return obj


def _dot(a: np.ndarray, b: np.ndarray) -> complex:
    # Pairwise summation over a contiguous buffer; independent of thread count.
    return complex(np.sum(np.ascontiguousarray(np.conj(a) * b).reshape(-1)))


def _norm(a: np.ndarray) -> float:
    return math.sqrt(max(_dot(a, a).real, 0.0))


class ProjectedSystem:
    """
    The operator x ↦ Γ₁ F L F⁻¹ Γ₁ x on Fourier coefficients of shape (N, m).
    """

    def __init__(self, p: Problem, workers: Optional[int] = None):
        self.problem = p
        self.grid = p.grid
        self.gamma = p.gamma_on_grid
        self.L = p.L.assembled
        self.workers = workers
        self.shape = (p.grid.size, p.m)

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.matmul(self.gamma, x[:, :, None])[:, :, 0]

    def complement(self, x: np.ndarray) -> np.ndarray:
        "(I − Γ₁)x at k ≠ 0; the constant mode is left out."
        out = x - self.project(x)
        out[0] = 0.0
        return out

    def local(self, x: np.ndarray) -> np.ndarray:
        real = inverse_values(self.grid, x, self.workers)
        return forward_values(self.grid, np.matmul(self.L, real[:, :, None])[:, :, 0], self.workers)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.project(self.local(self.project(x)))

    def rhs(self, real_values: np.ndarray) -> np.ndarray:
        "Γ₁ F of a real-space right-hand side."
        return self.project(forward_values(self.grid, real_values, self.workers))


class Preconditioner:
    def __init__(self, system: ProjectedSystem, L0: np.ndarray):
        G = system.gamma
        self.matrices = np.zeros_like(G)
        # Index 0 is k = 0.
        if G.shape[0] > 1:
            self.matrices[1:] = restricted_reference(G[1:], L0, system.grid.wavevectors[1:])
        self.matrices[0] = _zero_mode_inverse(G[0], L0)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.matmul(self.matrices, x[:, :, None])[:, :, 0]


def _zero_mode_inverse(G0: np.ndarray, L0: np.ndarray) -> np.ndarray:
    """
    Pseudo-inverse of Γ₁(0)L₀Γ₁(0) on the range of Γ₁(0). Means that L₀
    does not fix (a uniform Oseen velocity) are left out.
    """
    if not np.any(G0):
        return np.zeros_like(G0)
    return G0 @ np.linalg.pinv(G0 @ L0 @ G0) @ G0


def _reference_medium(p: Problem, opts: SolveOptions) -> np.ndarray:
    if opts.reference_medium is not None:
        L0 = np.asarray(opts.reference_medium, dtype=np.complex128)
        if L0.shape != (p.m, p.m):
            raise ShapeError(f"reference medium must be {p.m} × {p.m}")
        return L0
    return p.L.mean()


def _choose_method(p: Problem, opts: SolveOptions, report: SolveReport) -> str:
    hermitian = p.L.is_hermitian(HERMITIAN_TOLERANCE)
    report.non_hermitian = not hermitian
    if opts.method == "general-krylov":
        return "general-krylov"
    if opts.method == "hermitian-cg":
        if not hermitian:
            logger.warning("L is not Hermitian; using the general Krylov path instead of CG")
            report.messages.append("hermitian-cg requested for a non-Hermitian operator")
            report.fallback = True
            return "general-krylov"
        return "hermitian-cg"
    if not hermitian:
        return "general-krylov"
    smallest, _ = p.L.min_eigenvalue()
    scale = max(p.L.finite_norm(), 1e-300)
    return "hermitian-cg" if smallest >= -HERMITIAN_TOLERANCE * scale else "general-krylov"


class IndefiniteOperator(Exception):
    "Raised inside CG when a search direction has non-positive curvature."


def _conjugate_gradient(
    system: ProjectedSystem,
    b: np.ndarray,
    precondition,
    tolerance: float,
    max_iterations: int,
    refresh: int,
    report: SolveReport,
) -> np.ndarray:
    x = np.zeros_like(b)
    b_norm = _norm(b)
    residual = b.copy()
    direction = precondition(residual)
    delta = _dot(residual, direction).real

    for iteration in range(1, max_iterations + 1):
        forward = system.apply(direction)
        curvature = _dot(direction, forward).real
        if curvature <= 0.0:
            raise IndefiniteOperator(iteration)
        alpha = delta / curvature
        x = x + alpha * direction
        if iteration % refresh == 0:
            residual = b - system.apply(x)
        else:
            residual = residual - alpha * forward

        relative = _norm(residual) / b_norm
        report.history.append(relative)
        report.energy.append(-0.5 * (_dot(x, b).real + _dot(x, residual).real))
        report.iterations = iteration
        if relative <= tolerance:
            break

        preconditioned = precondition(residual)
        new_delta = _dot(residual, preconditioned).real
        direction = preconditioned + (new_delta / delta) * direction
        delta = new_delta
    return x


def _general_krylov(
    system: ProjectedSystem,
    b: np.ndarray,
    precondition,
    tolerance: float,
    max_iterations: int,
    restart: int,
    report: SolveReport,
) -> np.ndarray:
    n = b.size
    shape = system.shape

    def matvec(v):
        return system.apply(np.asarray(v).reshape(shape)).reshape(-1)

    A = LinearOperator((n, n), matvec=matvec, dtype=np.complex128)
    M = None
    if precondition is not None:
        M = LinearOperator(
            (n, n),
            matvec=lambda v: precondition(np.asarray(v).reshape(shape)).reshape(-1),
            dtype=np.complex128,
        )

    b_flat = b.reshape(-1)
    b_norm = _norm(b_flat)
    x = np.zeros_like(b_flat)
    for _ in range(MAX_OUTER_RESTARTS + 1):
        remaining = max_iterations - report.iterations
        if remaining <= 0:
            break

        def count(_):
            report.iterations += 1

        inner_restart = min(restart, remaining)
        x, info = gmres(
            A,
            b_flat,
            x0=x,
            rtol=tolerance,
            atol=0.0,
            restart=inner_restart,
            maxiter=max(1, math.ceil(remaining / inner_restart)),
            M=M,
            callback=count,
            callback_type="pr_norm",
        )
        relative = _norm(b_flat - A.matvec(x)) / b_norm
        report.history.append(relative)
        if relative <= tolerance:
            break
        logger.debug("GMRES stopped (info %d) at true residual %.3g; restarting", info, relative)
    return system.project(x.reshape(shape))


def _krylov(p: Problem, b: np.ndarray, opts: SolveOptions, report: SolveReport) -> np.ndarray:
    """
    Solve Γ₁LΓ₁x = b on the range of Γ₁, filling in the report.
    """
    system = ProjectedSystem(p, opts.workers)
    report.penalty_active = p.L.penalty_active
    method = _choose_method(p, opts, report)
    limit = opts.iteration_limit(p)

    b_norm = _norm(b)
    if b_norm == 0.0:
        report.method = method
        report.converged = True
        return np.zeros_like(b)

    precondition = None
    if opts.precondition:
        try:
            precondition = Preconditioner(system, _reference_medium(p, opts)).apply
            report.preconditioned = True
        except SingularReferenceError as e:
            logger.warning("Running unpreconditioned: %s", e)
            report.messages.append(str(e))

    x: Optional[np.ndarray] = None
    if method == "hermitian-cg":
        try:
            x = _conjugate_gradient(
                system,
                b,
                precondition if precondition is not None else (lambda r: r),
                opts.tolerance,
                limit,
                opts.residual_refresh,
                report,
            )
        except IndefiniteOperator as e:
            logger.warning(
                "Non-positive curvature at CG iteration %s; falling back to the general "
                "Krylov path. An indefinite L can often be made coercive with null_t_shift.",
                e.args[0],
            )
            report.messages.append("indefinite operator detected on the CG path")
            report.fallback = True
            report.history.clear()
            report.energy.clear()
            method = "general-krylov"
    if x is None:
        x = _general_krylov(
            system, b, precondition, opts.tolerance, limit, opts.restart, report
        )

    report.method = method
    report.relative_residual = _norm(b - system.apply(x)) / b_norm
    report.converged = report.relative_residual <= opts.tolerance
    if not report.converged:
        logger.warning(
            "%s did not converge: relative residual %.3g after %d iterations",
            method, report.relative_residual, report.iterations,
        )
    return x


def apply_projected(p: Problem, e: Field, workers: Optional[int] = None) -> Field:
    """
    One application of Γ₁LΓ₁ to e. Returns a Fourier-space field.
    """
    if e.layout.kinds != p.layout.kinds or e.grid != p.grid:
        raise ShapeError("field does not match the problem")
    system = ProjectedSystem(p, workers)
    values = e.to_fourier(workers).values
    return Field(p.grid, p.layout, "fourier", system.apply(np.array(values)))


def residual(
    p: Problem, E: Field, J: Field, workers: Optional[int] = None
) -> Tuple[float, float, float]:
    """
    ‖J − (LE − s)‖, ‖Γ̄₂E‖ and ‖Γ̄₁J‖ as cell L² norms. Compatibility is
    measured at k ≠ 0 only, since applied means are unconstrained.
    """
    system = ProjectedSystem(p, workers)
    E_real = E.to_real(workers).values
    J_real = J.to_real(workers).values
    constitutive = J_real - (
        np.matmul(system.L, E_real[:, :, None])[:, :, 0] - p.source.values
    )
    E_hat = forward_values(p.grid, E_real, workers)
    J_hat = forward_values(p.grid, J_real, workers)
    return (
        _norm(constitutive) / math.sqrt(p.grid.size),
        _norm(system.complement(E_hat)),
        _norm(system.project(J_hat)),
    )


def _finish(
    p: Problem, E_values: np.ndarray, report: SolveReport, opts: SolveOptions, started: float
) -> Tuple[Field, Field, SolveReport]:
    E = Field(p.grid, p.layout, "real", E_values)
    J_values = np.matmul(p.L.assembled, E.values[:, :, None])[:, :, 0] - p.source.values
    J = Field(p.grid, p.layout, "real", J_values)
    (
        report.constitutive_residual,
        report.compatibility_residual,
        report.equilibrium_residual,
    ) = residual(p, E, J, opts.workers)
    report.scale = max(E.norm(), J.norm(), p.source.norm())
    report.wall_time = time.perf_counter() - started
    return E, J, report


def solve_infinite(
    p: Problem, opts: Optional[SolveOptions] = None
) -> Tuple[Field, Field, SolveReport]:
    """
    E = (Γ₁LΓ₁)⁻¹Γ₁s with the inverse taken on the range of Γ₁, and
    J = LE − s. The cell approximates the infinite body, so the constant
    mode of E is zero except on slots Γ₁(0) keeps, such as the value slot
    of Z, where it is solved for.
    """
    opts = opts or SolveOptions()
    started = time.perf_counter()
    report = SolveReport()
    system = ProjectedSystem(p, opts.workers)
    b = system.rhs(p.source.values)
    x = _krylov(p, b, opts, report)
    E_values = inverse_values(p.grid, x, opts.workers)
    logger.debug("Infinite-body solve: %d iterations", report.iterations)
    return _finish(p, E_values, report, opts, started)


def solve_cell(
    p: Problem, E0, opts: Optional[SolveOptions] = None
) -> Tuple[Field, Field, SolveReport]:
    """
    The periodic cell problem with applied mean field E0. The report's
    mean_flux is J₀ = average(J).
    """
    opts = opts or SolveOptions()
    E0 = np.asarray(E0, dtype=np.complex128).reshape(-1)
    if E0.shape != (p.m,):
        raise ShapeError(f"E0 must have {p.m} components, got {E0.shape[0]}")
    started = time.perf_counter()
    report = SolveReport()
    system = ProjectedSystem(p, opts.workers)
    applied = np.matmul(system.L, E0)
    b = system.rhs(p.source.values - applied)
    x = _krylov(p, b, opts, report)
    E_values = E0 + inverse_values(p.grid, x, opts.workers)
    E, J, report = _finish(p, E_values, report, opts, started)
    report.mean_flux = average(J)
    return E, J, report


def solve_penalty_extrapolated(
    p: Problem, E0=None, opts: Optional[SolveOptions] = None, ratio: float = 4.0
) -> Tuple[Field, Field, Tuple[SolveReport, SolveReport]]:
    """
    Two solves at penalties λ and ratio·λ, combined as
    (λ₂X₂ − λ₁X₁)/(λ₂ − λ₁) to cancel the leading O(1/λ) error.
    With E0 = None the infinite-body form is solved.
    """
    if not p.L.penalty_active:
        raise PenaltyError("the problem carries no penalty slot")
    assert ratio > 1.0
    weight = p.L.penalties[0].weight
    weights = (weight, ratio * weight)
    results = []
    for w in weights:
        q = replace(p, L=p.L.with_penalty(w))
        results.append(solve_infinite(q, opts) if E0 is None else solve_cell(q, E0, opts))
    (E1, J1, r1), (E2, J2, r2) = results
    l1, l2 = weights
    E = (l2 * E2 - l1 * E1) * (1.0 / (l2 - l1))
    J = (l2 * J2 - l1 * J1) * (1.0 / (l2 - l1))
    return E, J, (r1, r2)
