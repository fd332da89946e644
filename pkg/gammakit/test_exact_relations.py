import numpy as np
import pytest  # type: ignore

from . import projections as pr
from .errors import DegenerateInputError, ResolventError, ShapeError, SingularReferenceError
from .exact_relations import (
    Subspace,
    check_closure,
    gamma_reference,
    inverse_w_transform,
    laminate_effective_tensor,
    levin_alpha,
    membership_defect,
    w_transform,
)
from .fields import Grid
from .solver import SolveOptions
from .tensors import rotation90
from .verify import (
    expansion_from_thermal_stress,
    levin_defect,
    levin_elastic_problem,
    levin_problem,
)

E11 = np.array([[1.0, 0.0], [0.0, 0.0]])


@pytest.mark.parametrize(
    "subspace, closed",
    [
        (Subspace.spanned_by([E11]), True),
        (Subspace.full(2), True),
        (Subspace.spanned_by([np.eye(2)]), False),
        (Subspace.spanned_by([rotation90()]), False),
    ],
)
def test_closure_under_the_gradient_projection(subspace, closed):
    report = check_closure(subspace, pr.grad(2), np.eye(2), samples=200)
    assert report.passed == closed
    assert report.rechecked == closed
    if not closed:
        assert report.max_distance > 1e-3
        assert np.linalg.norm(report.witness_k) > 0


def test_closure_rejects_bad_arguments():
    with pytest.raises(ValueError):
        check_closure(Subspace.full(2), pr.grad(2), np.eye(2), samples=0)
    with pytest.raises(ShapeError):
        check_closure(Subspace.full(3), pr.grad(2), np.eye(2))


def test_reference_operator_of_an_isotropic_medium():
    k = np.array([3.0, 4.0])
    np.testing.assert_allclose(gamma_reference(pr.grad(2), 2 * np.eye(2), k), np.outer(k, k) / 50.0)


def test_singular_reference_medium_names_the_wavevector():
    with pytest.raises(SingularReferenceError) as info:
        gamma_reference(pr.grad(2), np.diag([1.0, -1.0]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(info.value.k, (1.0, 1.0))


def test_w_transform_round_trip():
    rng = np.random.default_rng(0)
    L = 2 * np.eye(2) + 0.3 * rng.normal(size=(2, 2))
    L0 = np.eye(2)
    G = gamma_reference(pr.grad(2), L0, np.array([1.0, 2.0]))
    np.testing.assert_allclose(inverse_w_transform(w_transform(L, L0, G), L0, G), L, atol=1e-12)


def test_singular_resolvent():
    G = gamma_reference(pr.grad(2), np.eye(2), np.array([1.0, 0.0]))
    with pytest.raises(ResolventError):
        w_transform(np.zeros((2, 2)), np.eye(2), G)


def test_membership_does_not_depend_on_the_reference_wavevector():
    subspace = Subspace.spanned_by([E11])
    L = np.eye(2) + 2.5 * E11
    for k0 in ([1.0, 0.0], [0.0, 1.0], [0.6, 0.8]):
        assert membership_defect(L, subspace, np.eye(2), pr.grad(2), np.array(k0)) <= 1e-12
    k0 = np.array([0.6, 0.8])
    outside = membership_defect(2 * np.eye(2), subspace, np.eye(2), pr.grad(2), k0)
    assert outside > 0.1


def test_laminate_formula():
    phases = [np.eye(2), 4 * np.eye(2)]
    L_star = laminate_effective_tensor(phases, [0.5, 0.5], pr.grad(2), (1.0, 0.0))
    np.testing.assert_allclose(L_star, np.diag([1.6, 2.5]), atol=1e-12)
    # The reference medium drops out.
    again = laminate_effective_tensor(
        phases, [0.5, 0.5], pr.grad(2), (2.0, 0.0), L0=3 * np.eye(2)
    )
    np.testing.assert_allclose(again, L_star, atol=1e-12)
    with pytest.raises(ValueError):
        laminate_effective_tensor(phases, [0.5, 0.4], pr.grad(2), (1.0, 0.0))


def test_levin_formula_endpoints_and_errors():
    assert levin_alpha(1.0, 3.0, 1e-2, 2e-3, 1.0) == pytest.approx(1e-2)
    assert levin_alpha(1.0, 3.0, 1e-2, 2e-3, 3.0) == pytest.approx(2e-3)
    with pytest.raises(DegenerateInputError):
        levin_alpha(2.0, 2.0, 1e-2, 2e-3, 2.0)
    with pytest.raises(ValueError):
        levin_alpha(-1.0, 2.0, 1e-2, 2e-3, 1.5)


def test_levin_formula_worked_example():
    assert levin_alpha(1.0, 2.0, 1.0, 0.0, 1.5) == pytest.approx(1 / 3)


@pytest.mark.parametrize("kappa_star", [1.0, 1.2, 2.5, 3.0])
def test_equal_expansions_give_that_expansion(kappa_star):
    assert levin_alpha(1.0, 3.0, 4e-3, 4e-3, kappa_star) == pytest.approx(4e-3, rel=1e-12)


@pytest.mark.parametrize("n", [64, pytest.param(256, marks=pytest.mark.slow)])
def test_effective_thermal_expansion_follows_the_bulk_modulus(n):
    p, phase_data = levin_problem(Grid.square(n))
    defect, computed, predicted = levin_defect(p, phase_data, SolveOptions(tolerance=1e-11))
    assert defect <= 1e-3
    assert min(a for _, _, a in phase_data) < computed < max(a for _, _, a in phase_data)


def test_subspace_construction():
    assert Subspace.spanned_by([E11, np.eye(2)]).dimension == 2
    with pytest.raises(DegenerateInputError):
        Subspace.spanned_by([E11, 2 * E11])
    with pytest.raises(DegenerateInputError):
        Subspace.spanned_by([])
    with pytest.raises(ShapeError):
        Subspace.spanned_by([np.ones((2, 3))])


def test_subspace_json_round_trip():
    subspace = Subspace.spanned_by([E11, rotation90()])
    again = Subspace.from_json(subspace.to_json())
    assert again.dimension == 2
    for b in subspace.basis:
        assert again.distance(b) <= 1e-12
    # Plain numbers are accepted as real entries.
    assert Subspace.from_json([[[1, 0], [0, 0]]]).distance(E11) <= 1e-12


def test_effective_source_gives_the_effective_thermal_expansion():
    grid = Grid.square(64)
    opts = SolveOptions(tolerance=1e-11)
    p, phase_data = levin_problem(grid)
    (k1, _, a1), (k2, _, a2) = phase_data
    kappa_star, alpha_star = expansion_from_thermal_stress(levin_elastic_problem(grid), opts)
    assert k1 < kappa_star < k2
    assert alpha_star == pytest.approx(levin_alpha(k1, k2, a1, a2, kappa_star), rel=1e-6)

    _, coupled, predicted = levin_defect(p, phase_data, opts)
    # Stiffness and compliance forms discretize the cell differently.
    assert alpha_star == pytest.approx(coupled, rel=1e-2)
    assert alpha_star == pytest.approx(predicted, rel=1e-2)
