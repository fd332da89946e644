import numpy as np
import pytest  # type: ignore

from . import microstructure
from . import projections as pr
from .exact_relations import laminate_effective_tensor
from .fields import Grid, LocalOperator
from .homogenize import (
    EffectiveResponse,
    check_adjoint,
    effective_source,
    effective_tensor,
    homogenize,
    perturb_effective,
    perturbed_problem,
    response_tensor,
)
from .physics import (
    build_conductivity,
    build_dielectric_cg,
    build_elasticity,
    cg_transform,
    dualize,
    null_t_shift,
)
from .solver import SolveOptions, solve_cell
from .tensors import isotropic_stiffness, rotation90

TIGHT = SolveOptions(tolerance=1e-12)


def random_conductivity(grid, symmetric, seed=0):
    noise = np.random.default_rng(seed).uniform(-0.5, 0.5, size=(grid.size, 2, 2))
    if symmetric:
        noise = 0.5 * (noise + np.swapaxes(noise, 1, 2))
    return 3.0 * np.eye(2) + noise


def checkerboard_error(n):
    grid = Grid.square(n)
    sigma = np.where(microstructure.checkerboard(grid) == 1, 4.0, 1.0)
    L_star = effective_tensor(build_conductivity(grid, sigma)).L_star
    return np.max(np.abs(np.diag(L_star) - 2.0)) / 2.0


def test_homogeneous_elasticity_returns_the_stiffness():
    C = isotropic_stiffness(2, 2.5, 0.7)
    response = effective_tensor(build_elasticity(Grid.square(8), C))
    assert response.converged
    np.testing.assert_allclose(response.L_star, C, atol=1e-12)
    assert response.basis == ("strain[0]", "strain[1]", "strain[2]")


def test_laminate_matches_the_harmonic_and_arithmetic_means():
    grid = Grid.square(32)
    labels = microstructure.laminate(grid, axis=0, fractions=(0.5, 0.5))
    sigma = np.where(labels == 1, 1.0, 4.0)
    L_star = effective_tensor(build_conductivity(grid, sigma), TIGHT).L_star
    np.testing.assert_allclose(L_star, np.diag([1.6, 2.5]), atol=1e-8)
    formula = laminate_effective_tensor(
        [np.eye(2), 4 * np.eye(2)], [0.5, 0.5], pr.grad(2), (1.0, 0.0)
    )
    np.testing.assert_allclose(L_star, formula, atol=1e-8)


def test_cosine_profile():
    grid = Grid.square(64)
    profile = microstructure.cosine_profile(grid, axis=0, mean=2.0, amplitude=1.0)
    L_star = effective_tensor(build_conductivity(grid, profile), TIGHT).L_star
    np.testing.assert_allclose(L_star, np.diag([np.sqrt(3.0), 2.0]), atol=1e-6)


@pytest.mark.parametrize("n", [128, 256, pytest.param(512, marks=pytest.mark.slow)])
def test_checkerboard_approaches_the_geometric_mean(n):
    assert checkerboard_error(n) <= 0.03


def test_checkerboard_error_does_not_grow_with_resolution():
    assert checkerboard_error(128) <= checkerboard_error(64) + 1e-8


@pytest.mark.slow
def test_checkerboard_error_decreases_on_fine_grids():
    errors = [checkerboard_error(n) for n in (128, 256, 512)]
    assert errors[0] > errors[1] > errors[2]


def test_doubled_dielectric_effective_tensor_is_the_doubling_of_the_effective_tensor():
    grid = Grid.square(32)
    x = grid.points()
    eps_real = (1.0 + 0.5 * np.cos(2 * np.pi * x[:, 0]))[:, None, None] * np.eye(2)
    eps_imag = (0.5 + 0.25 * np.sin(2 * np.pi * x[:, 1]))[:, None, None] * np.eye(2)

    L_star = effective_tensor(build_conductivity(grid, eps_real + 1j * eps_imag), TIGHT).L_star
    doubled = effective_tensor(build_dielectric_cg(grid, eps_real, eps_imag), TIGHT)
    assert doubled.converged
    expected = cg_transform(build_conductivity(Grid.square(2), L_star)).L.matrices[0]
    np.testing.assert_allclose(doubled.L_star, expected, atol=1e-8)


def test_adjoint_of_a_non_symmetric_medium():
    grid = Grid.square(16)
    p = build_conductivity(grid, random_conductivity(grid, symmetric=False))
    assert check_adjoint(p, TIGHT) <= 1e-8


def test_symmetric_medium_gives_symmetric_effective_tensor():
    grid = Grid.square(16)
    p = build_conductivity(grid, random_conductivity(grid, symmetric=True))
    L_star = effective_tensor(p, TIGHT).L_star
    np.testing.assert_allclose(L_star, L_star.T, atol=1e-8)


def test_dual_problem_inverts_the_effective_tensor():
    grid = Grid.square(32)
    profile = microstructure.cosine_profile(grid, axis=0, mean=2.0, amplitude=1.0)
    p = build_conductivity(grid, profile)
    product = effective_tensor(dualize(p), TIGHT).L_star @ effective_tensor(p, TIGHT).L_star
    np.testing.assert_allclose(product, np.eye(2), atol=1e-6)


def test_null_t_shift_moves_the_effective_tensor_only():
    grid = Grid.square(16)
    p = build_conductivity(grid, random_conductivity(grid, symmetric=True, seed=1))
    shifted = null_t_shift(p, rotation90(), 0.3)
    change = effective_tensor(shifted, TIGHT).L_star - effective_tensor(p, TIGHT).L_star
    np.testing.assert_allclose(change, 0.3 * rotation90(), atol=1e-8)

    E, _, _ = solve_cell(p, [1.0, 0.0], TIGHT)
    E_shifted, _, _ = solve_cell(shifted, [1.0, 0.0], TIGHT)
    assert (E - E_shifted).norm() <= 1e-10 * E.norm()


@pytest.mark.parametrize("name", ["Hall", "isotropic"])
def test_first_order_perturbation_matches_finite_differences(name):
    grid = Grid.square(32)
    profile = microstructure.cosine_profile(grid, axis=0, mean=2.0, amplitude=1.0)
    p = build_conductivity(grid, profile)
    h = 1.0 + 0.5 * np.cos(2 * np.pi * grid.points()[:, 0])
    shape = rotation90() if name == "Hall" else np.eye(2)
    L_prime = LocalOperator(grid, p.layout, h[:, None, None] * shape)

    derivative = perturb_effective(p, L_prime, TIGHT)
    base = effective_tensor(p, TIGHT).L_star
    epsilon = 1e-4
    shifted = effective_tensor(perturbed_problem(p, L_prime, epsilon), TIGHT).L_star
    error = np.linalg.norm((shifted - base) / epsilon - derivative)
    assert error <= 10 * epsilon * np.linalg.norm(derivative)
    if name == "Hall":
        np.testing.assert_allclose(derivative, -derivative.T, atol=1e-8)


def test_effective_source_of_a_constant_source():
    grid = Grid.square(8)
    p = build_conductivity(grid, 2.0, source=[0.5, -1.0])
    np.testing.assert_allclose(effective_source(p), [-0.5, 1.0], atol=1e-14)


def test_macroscopic_law_with_a_source():
    grid = Grid.square(32)
    labels = microstructure.disk(grid, 0.3)
    sigma = np.where(labels == 2, 3.0, 1.0)
    source = np.stack([(labels == 2).astype(float), np.zeros(grid.size)], axis=1)
    p = build_conductivity(grid, sigma, source)
    response = homogenize(p, TIGHT)
    assert np.any(response.s_star != 0)
    E0 = np.array([0.7, -0.2])
    _, _, report = solve_cell(p, E0, TIGHT)
    np.testing.assert_allclose(report.mean_flux, response.L_star @ E0 + response.s_star, atol=1e-8)


def test_response_tensor_of_a_homogeneous_medium():
    grid = Grid.square(8)
    labels = microstructure.checkerboard(grid)
    phases = microstructure.PhaseMap(grid, labels, (2 * np.eye(2), 2 * np.eye(2)))
    p = build_conductivity(grid, 2.0)
    R = response_tensor(p, phases)
    assert R.shape == (2, 4)
    np.testing.assert_allclose(R, -0.5 * np.hstack([np.eye(2), np.eye(2)]), atol=1e-12)


def test_fields_are_kept_on_request():
    grid = Grid.square(16)
    p = build_conductivity(grid, random_conductivity(grid, symmetric=True))
    assert effective_tensor(p).fields == []
    response = effective_tensor(p, keep_fields=True, max_workers=2)
    assert len(response.fields) == 2
    E, J = response.fields[1]
    np.testing.assert_allclose(E.values.mean(axis=0), [0.0, 1.0], atol=1e-12)
    np.testing.assert_allclose(J.values.mean(axis=0), response.L_star[:, 1], atol=1e-12)


def test_threaded_columns_match_serial_columns():
    grid = Grid.square(16)
    p = build_conductivity(grid, random_conductivity(grid, symmetric=False, seed=2))
    serial = effective_tensor(p).L_star
    threaded = effective_tensor(p, max_workers=2).L_star
    assert serial.tobytes() == threaded.tobytes()


def test_unconverged_columns_are_flagged():
    grid = Grid.square(32)
    sigma = np.where(microstructure.checkerboard(grid) == 1, 4.0, 1.0)
    response = effective_tensor(build_conductivity(grid, sigma), SolveOptions(max_iterations=1))
    assert not response.converged
    assert response.to_json()["failed"] == [True, True]


def test_missing_entries_serialize_as_null():
    response = EffectiveResponse(
        L_star=np.array([[1.0, np.nan], [0.0, 2.0]], dtype=complex),
        s_star=np.zeros(2, dtype=complex),
        basis=("E[0]", "E[1]"),
        failed=np.array([False, True]),
    )
    obj = response.to_json()
    assert obj["L_star"][0] == [[1.0, 0.0], None]
    assert obj["failed"] == [False, True]


def test_components_select_a_sub_block():
    C = isotropic_stiffness(2, 2.5, 0.7)
    response = effective_tensor(build_elasticity(Grid.square(8), C), components=[0, 1])
    np.testing.assert_allclose(response.L_star, C[:2, :2], atol=1e-12)
    assert response.basis == ("strain[0]", "strain[1]")


def test_response_tensor_maps_phase_sources_to_the_effective_source():
    grid = Grid.square(32)
    labels = microstructure.disk(grid, 0.3)
    phases = microstructure.PhaseMap(grid, labels, (np.eye(2), 3 * np.eye(2)))
    sigma = np.where(labels == 2, 3.0, 1.0)
    R = response_tensor(build_conductivity(grid, sigma), phases, TIGHT)
    uniform = -np.hstack([f * np.eye(2) for f in phases.volume_fractions()])
    assert np.max(np.abs(R - uniform)) > 1e-6

    sources = (np.array([0.5, -1.0]), np.array([2.0, 0.3]))
    with_sources = build_conductivity(grid, sigma, phases.per_point(sources))
    np.testing.assert_allclose(
        R @ np.concatenate(sources), effective_source(with_sources, TIGHT), atol=1e-9
    )


@pytest.mark.parametrize(
    "labels_for",
    [
        microstructure.checkerboard,
        lambda grid: microstructure.laminate(grid, axis=0, fractions=(0.5, 0.5)),
        lambda grid: microstructure.laminate(grid, axis=1, fractions=(0.5, 0.5)),
    ],
    ids=["checkerboard", "layers-across", "layers-along"],
)
def test_homogeneous_response_depends_on_volume_fractions_only(labels_for):
    grid = Grid.square(16)
    L = np.array([[2.0, 0.5], [-0.5, 1.0]])
    phases = microstructure.PhaseMap(grid, labels_for(grid), (L, L))
    np.testing.assert_allclose(phases.volume_fractions(), [0.5, 0.5])
    R = response_tensor(build_conductivity(grid, L), phases, TIGHT)
    np.testing.assert_allclose(R, -0.5 * np.hstack([np.eye(2), np.eye(2)]), atol=1e-12)
