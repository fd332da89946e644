"""
Effective tensors and effective sources of periodic media.

The macroscopic law is J₀ = L*E₀ + s*, where J₀ = ⟨J⟩ for the cell solution
with applied mean field E₀. Columns of L* come from source-free solves with
unit E₀; s* comes from one solve with E₀ = 0.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from .fields import Field, LocalOperator, apply_local, inner_product
from .microstructure import PhaseMap
from .physics import Problem
from .solver import SolveOptions, SolveReport, solve_cell

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class EffectiveResponse:
    L_star: np.ndarray
    s_star: np.ndarray
    # Layout components spanning the mean subspace, in column order.
    basis: Tuple[str, ...]
    reports: List[Optional[SolveReport]] = field(default_factory=list)
    # True where a column solve failed or did not converge.
    failed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    # Cell fields (E, J) per column, kept only on request.
    fields: List[Optional[Tuple[Field, Field]]] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return not bool(np.any(self.failed))

    def to_json(self, deterministic: bool = False) -> dict:
        return {
            "L_star": [[_pair(z) for z in row] for row in self.L_star],
            "s_star": [_pair(z) for z in self.s_star],
            "basis": list(self.basis),
            "failed": [bool(x) for x in self.failed],
            "reports": [
                None if r is None else r.to_json(deterministic) for r in self.reports
            ],
        }


def _pair(z: complex) -> Optional[list]:
    if not np.isfinite(z):
        return None
    return [float(np.real(z)), float(np.imag(z))]


def _map(function: Callable[[T], R], items: Iterable[T], max_workers: Optional[int]) -> List[R]:
    # Results come back in submission order, so assembly is deterministic.
    if max_workers is not None and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            return list(executor.map(function, items))
    return [function(item) for item in items]


def _components(p: Problem, components: Optional[Sequence[int]]) -> Tuple[int, ...]:
    # By default, every slot whose mean is applied rather than solved for.
    chosen = p.gamma.mean_slots() if components is None else tuple(components)
    assert all(0 <= c < p.m for c in chosen)
    return chosen


def _unit(m: int, c: int) -> np.ndarray:
    e = np.zeros(m, dtype=np.complex128)
    e[c] = 1.0
    return e


def _cell_columns(
    p: Problem,
    means: Sequence[np.ndarray],
    opts: SolveOptions,
    max_workers: Optional[int],
) -> List[Optional[Tuple[Field, Field, SolveReport]]]:
    # Evaluate Γ₁ once before the workers share the problem.
    p.gamma_on_grid

    def solve(E0: np.ndarray):
        try:
            return solve_cell(p, E0, opts)
        except Exception:
            logger.exception("Cell solve with E0 = %s failed", E0)
            return None

    return _map(solve, means, max_workers)


def effective_tensor(
    p: Problem,
    opts: Optional[SolveOptions] = None,
    components: Optional[Sequence[int]] = None,
    max_workers: Optional[int] = None,
    keep_fields: bool = False,
) -> EffectiveResponse:
    """
    L* column by column from source-free cell solves with unit applied
    fields. Failed columns are NaN and flagged in the failure mask. With
    keep_fields the cell fields of every column are returned as well.
    """
    opts = opts or SolveOptions()
    chosen = _components(p, components)
    source_free = p.without_source()
    results = _cell_columns(source_free, [_unit(p.m, c) for c in chosen], opts, max_workers)

    size = len(chosen)
    L_star = np.full((size, size), np.nan, dtype=np.complex128)
    failed = np.zeros(size, dtype=bool)
    reports: List[Optional[SolveReport]] = []
    fields: List[Optional[Tuple[Field, Field]]] = []
    for column, result in enumerate(results):
        if result is None:
            failed[column] = True
            reports.append(None)
            fields.append(None)
            continue
        E, J, report = result
        fields.append((E, J) if keep_fields else None)
        assert report.mean_flux is not None
        L_star[:, column] = report.mean_flux[list(chosen)]
        failed[column] = not report.converged
        reports.append(report)
    if failed.any():
        logger.warning("%d of %d columns failed", int(failed.sum()), size)

    labels = p.layout.component_labels()
    return EffectiveResponse(
        L_star=L_star,
        s_star=np.zeros(size, dtype=np.complex128),
        basis=tuple(labels[c] for c in chosen),
        reports=reports,
        failed=failed,
        fields=fields if keep_fields else [],
    )


def effective_source(
    p: Problem, opts: Optional[SolveOptions] = None, components: Optional[Sequence[int]] = None
) -> np.ndarray:
    """
    s* = ⟨J⟩ of the cell solution with E₀ = 0 (which does not make E zero).
    """
    opts = opts or SolveOptions()
    chosen = _components(p, components)
    _, _, report = solve_cell(p, np.zeros(p.m), opts)
    if not report.converged:
        logger.warning("Effective-source solve did not converge")
    assert report.mean_flux is not None
    return np.array(report.mean_flux[list(chosen)])


def homogenize(
    p: Problem,
    opts: Optional[SolveOptions] = None,
    components: Optional[Sequence[int]] = None,
    max_workers: Optional[int] = None,
    keep_fields: bool = False,
) -> EffectiveResponse:
    "L* and, when the problem has a source, s*."
    opts = opts or SolveOptions()
    response = effective_tensor(p, opts, components, max_workers, keep_fields)
    if np.any(p.source.values):
        response.s_star = effective_source(p, opts, components)
    return response


def response_tensor(
    p: Problem,
    phases: PhaseMap,
    opts: Optional[SolveOptions] = None,
    components: Optional[Sequence[int]] = None,
    max_workers: Optional[int] = None,
) -> np.ndarray:
    """
    The linear map from piecewise-constant phase sources (s₁, …, s_N),
    stacked into one vector of length N·m, to s*.
    """
    opts = opts or SolveOptions()
    chosen = _components(p, components)
    if phases.grid != p.grid:
        raise ValueError("phase map and problem live on different grids")

    columns = []
    for phase in range(1, phases.n_phases + 1):
        indicator = phases.indicator(phase)
        for c in range(p.m):
            values = np.zeros((p.grid.size, p.m), dtype=np.complex128)
            values[:, c] = indicator
            columns.append(values)

    def column(values: np.ndarray) -> np.ndarray:
        return effective_source(p.with_source(values), opts, chosen)

    return np.stack(_map(column, columns, max_workers), axis=1)


def check_adjoint(
    p: Problem,
    opts: Optional[SolveOptions] = None,
    components: Optional[Sequence[int]] = None,
    max_workers: Optional[int] = None,
) -> float:
    "‖(L†)* − (L*)†‖ (Frobenius)."
    direct = effective_tensor(p, opts, components, max_workers).L_star
    adjoint = effective_tensor(p.adjoint(), opts, components, max_workers).L_star
    return float(np.linalg.norm(adjoint - np.conj(direct.T)))


def perturb_effective(
    p: Problem,
    L_prime: LocalOperator,
    opts: Optional[SolveOptions] = None,
    components: Optional[Sequence[int]] = None,
    max_workers: Optional[int] = None,
) -> np.ndarray:
    """
    First-order change of L* under L → L + εL′:

        (L*′)ᵢⱼ = ⟨F⁽ⁱ⁾, L′E⁽ʲ⁾⟩

    with E⁽ʲ⁾ the cell fields of L for mean eⱼ and F⁽ⁱ⁾ those of L† for
    mean eᵢ. F = E when L is Hermitian.
    """
    opts = opts or SolveOptions()
    chosen = _components(p, components)
    means = [_unit(p.m, c) for c in chosen]
    source_free = p.without_source()

    direct = _cell_columns(source_free, means, opts, max_workers)
    if p.L.hermitian_defect() <= 1e-13:
        adjoint = direct
    else:
        adjoint = _cell_columns(source_free.adjoint(), means, opts, max_workers)
    if any(r is None for r in direct) or any(r is None for r in adjoint):
        raise RuntimeError("a cell solve failed; the perturbation is unavailable")

    size = len(chosen)
    out = np.zeros((size, size), dtype=np.complex128)
    for j, result_j in enumerate(direct):
        assert result_j is not None
        perturbed = apply_local(L_prime, result_j[0])
        for i, result_i in enumerate(adjoint):
            assert result_i is not None
            out[i, j] = inner_product(result_i[0], perturbed)
    return out


def perturbed_problem(p: Problem, L_prime: LocalOperator, epsilon: float) -> Problem:
    "The problem with L + εL′, for finite-difference checks."
    return replace(p, L=p.L.plus(epsilon * np.asarray(L_prime.matrices)))
