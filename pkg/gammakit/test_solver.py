import logging

import numpy as np
import pytest  # type: ignore

from . import microstructure
from .errors import ConfigError, PenaltyError, ShapeError
from .fields import Field, Grid, SupertensorLayout, average, divergence, spectral_norm
from .physics import (
    build_conductivity,
    build_dielectric_cg,
    build_graphene,
    build_magnetotransport,
    build_oseen,
    build_torsion,
    recover_from_cg,
)
from .solver import (
    SolveOptions,
    apply_projected,
    residual,
    solve_cell,
    solve_infinite,
    solve_penalty_extrapolated,
)
from .tensors import rotation90


def checkerboard_problem(n, sigma1=4.0, sigma2=1.0):
    grid = Grid.square(n)
    labels = microstructure.checkerboard(grid)
    return build_conductivity(grid, np.where(labels == 1, sigma1, sigma2))


def mode(grid, axis, component, m=2):
    "A gradient field along one axis: sin(2πx) in one component."
    values = np.zeros((grid.size, m))
    values[:, component] = np.sin(2 * np.pi * grid.points()[:, axis])
    return values


def test_homogeneous_cell_problem_is_solved_immediately():
    p = build_conductivity(Grid.square(16), 2.0)
    E, J, report = solve_cell(p, [1.0, 0.5])
    assert report.converged
    assert report.iterations <= 2
    np.testing.assert_allclose(E.values, np.tile([1.0, 0.5], (p.grid.size, 1)), atol=1e-14)
    np.testing.assert_allclose(report.mean_flux, [2.0, 1.0], atol=1e-14)


def test_checkerboard_residuals():
    p = checkerboard_problem(32)
    E, J, report = solve_cell(p, [1.0, 0.0], SolveOptions(tolerance=1e-10))
    assert report.converged
    assert report.method == "hermitian-cg"
    assert report.preconditioned
    constitutive, compatibility, equilibrium = residual(p, E, J)
    assert constitutive <= 1e-12
    assert compatibility <= 1e-12
    assert equilibrium <= 1e-8 * report.scale
    assert report.history[-1] <= 1e-10
    # CG decreases the quadratic energy monotonically.
    assert all(b <= a + 1e-10 * abs(a) for a, b in zip(report.energy, report.energy[1:]))


def test_cell_solution_is_linear_in_the_applied_field():
    p = checkerboard_problem(16)
    opts = SolveOptions(tolerance=1e-12)
    Ea, _, _ = solve_cell(p, [1.0, 0.0], opts)
    Eb, _, _ = solve_cell(p, [0.0, 1.0], opts)
    Ec, _, _ = solve_cell(p, [2.0, -3.0], opts)
    assert (Ec - (Ea * 2.0 + Eb * -3.0)).norm() <= 1e-9 * Ec.norm()


def test_infinite_body_with_a_gradient_source():
    grid = Grid.square(16)
    p = build_conductivity(grid, 1.0, source=mode(grid, 0, 0))
    E, J, report = solve_infinite(p)
    assert report.converged
    np.testing.assert_allclose(E.values, p.source.values, atol=1e-12)
    assert J.norm() <= 1e-12


def test_zero_right_hand_side_is_a_fast_path():
    p = build_conductivity(Grid.square(8), 1.0)
    E, _, report = solve_infinite(p)
    assert report.converged
    assert report.iterations == 0
    assert E.norm() == 0.0


def test_non_hermitian_operator_uses_general_krylov():
    grid = Grid.square(16)
    h = 0.5 + 0.25 * np.cos(2 * np.pi * grid.points()[:, 0])
    sigma = 2.0 * np.eye(2) + h[:, None, None] * rotation90()
    p = build_conductivity(grid, sigma)
    _, _, report = solve_cell(p, [1.0, 0.0], SolveOptions(tolerance=1e-10))
    assert report.non_hermitian
    assert report.method == "general-krylov"
    assert report.converged


def test_requesting_cg_for_a_non_hermitian_operator_falls_back(caplog):
    grid = Grid.square(8)
    p = build_conductivity(grid, 2.0 * np.eye(2) + 0.5 * rotation90())
    with caplog.at_level(logging.WARNING):
        _, _, report = solve_cell(p, [1.0, 0.0], SolveOptions(method="hermitian-cg"))
    assert report.fallback
    assert report.method == "general-krylov"
    assert "not Hermitian" in caplog.text


def test_indefinite_operator_falls_back_from_cg(caplog):
    grid = Grid.square(8)
    p = build_conductivity(grid, np.diag([1.0, -0.5]), source=mode(grid, 1, 1))
    with caplog.at_level(logging.WARNING):
        E, _, report = solve_infinite(p, SolveOptions(method="hermitian-cg"))
    assert report.fallback
    assert report.converged
    assert report.method == "general-krylov"
    assert "null_t_shift" in caplog.text
    np.testing.assert_allclose(E.values, -2 * p.source.values, atol=1e-10)


def test_singular_reference_medium_runs_unpreconditioned(caplog):
    grid = Grid.square(8)
    # kᵀL₀k vanishes on the diagonal wavevectors.
    p = build_conductivity(grid, np.diag([1.0, -1.0]), source=mode(grid, 0, 0))
    with caplog.at_level(logging.WARNING):
        E, _, report = solve_infinite(p)
    assert not report.preconditioned
    assert report.converged
    assert "unpreconditioned" in caplog.text
    np.testing.assert_allclose(E.values, p.source.values, atol=1e-10)


def test_iteration_cap_reports_non_convergence():
    p = checkerboard_problem(32)
    _, _, report = solve_cell(p, [1.0, 0.0], SolveOptions(max_iterations=1, tolerance=1e-12))
    assert not report.converged
    assert report.iterations == 1


@pytest.mark.parametrize(
    "kwargs",
    [
        {"tolerance": 0.0},
        {"tolerance": 1.0},
        {"max_iterations": 0},
        {"method": "jacobi"},
        {"restart": 0},
    ],
)
def test_bad_options(kwargs):
    with pytest.raises(ConfigError):
        SolveOptions(**kwargs)


def test_default_iteration_limit():
    p = checkerboard_problem(16)
    assert SolveOptions().iteration_limit(p) == 10 * 2 * 16
    assert SolveOptions(max_iterations=7).iteration_limit(p) == 7


def test_applied_field_must_match_the_layout():
    with pytest.raises(ShapeError):
        solve_cell(checkerboard_problem(8), [1.0, 0.0, 0.0])


def test_apply_projected_on_a_homogeneous_medium():
    grid = Grid.square(8)
    p = build_conductivity(grid, 3.0)
    e = Field(grid, p.layout, "real", mode(grid, 0, 0))
    out = apply_projected(p, e)
    assert out.space == "fourier"
    np.testing.assert_allclose(out.values, 3 * e.to_fourier().values, atol=1e-14)
    with pytest.raises(ShapeError):
        apply_projected(p, Field.zeros(grid, SupertensorLayout.of(2, "scalar")))


def test_solves_are_repeatable_and_independent_of_threads():
    p = checkerboard_problem(32)
    E1, _, r1 = solve_cell(p, [1.0, 0.0])
    E2, _, r2 = solve_cell(p, [1.0, 0.0])
    E3, _, r3 = solve_cell(p, [1.0, 0.0], SolveOptions(workers=2))
    assert E1.values.tobytes() == E2.values.tobytes()
    assert r1.history == r2.history
    assert r3.iterations == r1.iterations
    np.testing.assert_allclose(E3.values, E1.values, atol=1e-13)
    assert "wall_time" not in r1.to_json(deterministic=True)
    assert r1.to_json(deterministic=True) == r2.to_json(deterministic=True)


def test_torsion_without_twist_matches_conductivity_fields():
    grid = Grid.square(32)
    a = np.where(microstructure.disk(grid, 0.3) == 2, 3.0, 1.0)
    c = 1.0 + 0.5 * np.cos(2 * np.pi * grid.points()[:, 1])
    p = build_torsion(grid, a, 0.1, c)
    b = np.full_like(a, 0.1)
    sigma = np.stack([np.stack([a, b], 1), np.stack([b, c], 1)], 1)
    q = build_conductivity(grid, sigma)
    E_p, J_p, _ = solve_cell(p, [1.0, 0.0])
    E_q, J_q, _ = solve_cell(q, [1.0, 0.0])
    assert np.max(np.abs(E_p.values - E_q.values)) <= 1e-10
    assert np.max(np.abs(J_p.values - J_q.values)) <= 1e-10


def lossy_dielectric(grid):
    x = grid.points()
    eps_real = (1.0 + 0.5 * np.cos(2 * np.pi * x[:, 0]))[:, None, None] * np.eye(2) + np.array(
        [[0.0, 0.2], [0.2, 0.0]]
    )
    eps_imag = (0.5 + 0.25 * np.sin(2 * np.pi * x[:, 1]))[:, None, None] * np.eye(2)
    return eps_real, eps_imag


def test_doubled_dielectric_reproduces_the_direct_solve():
    grid = Grid.square(32)
    eps_real, eps_imag = lossy_dielectric(grid)
    opts = SolveOptions(tolerance=1e-12)

    direct = build_conductivity(grid, eps_real + 1j * eps_imag)
    E, J, report = solve_cell(direct, [1.0, 0.0], opts)
    assert report.method == "general-krylov"

    doubled = build_dielectric_cg(grid, eps_real, eps_imag)
    assert doubled.L.hermitian_defect() <= 1e-14
    E0 = np.concatenate([-1j * average(J), [1.0, 0.0]])
    E_cg, _, report_cg = solve_cell(doubled, E0, opts)
    assert report_cg.method == "hermitian-cg"
    assert report_cg.converged

    E_back, J_back = recover_from_cg(doubled, E_cg)
    assert (E_back - E).norm() <= 1e-8 * E.norm()
    assert (J_back - J).norm() <= 1e-8 * J.norm()


def test_doubled_hall_problem_has_real_fields():
    grid = Grid.square(32)
    h = 0.5 + 0.25 * np.cos(2 * np.pi * grid.points()[:, 0])
    sigma_a = h[:, None, None] * rotation90()
    opts = SolveOptions(tolerance=1e-12)

    direct = build_conductivity(grid, 2.0 * np.eye(2) + sigma_a)
    E, J, _ = solve_cell(direct, [1.0, 0.0], opts)

    doubled = build_magnetotransport(grid, 2.0, sigma_a=sigma_a)
    E0 = np.concatenate([average(J), [1.0, 0.0]])
    E_cg, _, report = solve_cell(doubled, E0, opts)
    assert report.method == "hermitian-cg"
    assert np.max(np.abs(E_cg.values.imag)) <= 1e-10
    E_back, J_back = recover_from_cg(doubled, E_cg)
    assert (E_back - E).norm() <= 1e-8 * E.norm()
    assert (J_back - J).norm() <= 1e-8 * J.norm()


def test_penalty_extrapolation_cancels_the_leading_error():
    grid = Grid.square(16)
    force = np.stack([np.sin(2 * np.pi * grid.points()[:, 0]), np.zeros(grid.size)], axis=1)
    p = build_graphene(grid, 1.0, 0.1, lambda_pen=1e3, source=force)
    opts = SolveOptions(tolerance=1e-12)
    E_single, _, _ = solve_infinite(p, opts)
    E, _, (first, second) = solve_penalty_extrapolated(p, opts=opts)
    assert first.converged and second.converged
    single = spectral_norm(grid, divergence(E_single, 1))
    extrapolated = spectral_norm(grid, divergence(E, 1))
    assert extrapolated <= 0.1 * single


def test_penalty_extrapolation_needs_a_penalty():
    with pytest.raises(PenaltyError):
        solve_penalty_extrapolated(build_conductivity(Grid.square(8), 1.0))


def solenoidal_force(grid):
    "(sin 2πx₂, 0): divergence-free with zero mean."
    values = np.zeros((grid.size, 2))
    values[:, 0] = np.sin(2 * np.pi * grid.points()[:, 1])
    return values


@pytest.mark.parametrize("sigma0", [1.0, 2.0])
def test_uniform_forcing_gives_the_ohmic_flow(sigma0):
    grid = Grid.square(8)
    p = build_graphene(grid, sigma0, 0.0, lambda_pen=1e6, source=[1.0, 0.0])
    E, J, report = solve_infinite(p, SolveOptions(tolerance=1e-12))
    assert report.converged
    np.testing.assert_allclose(E.values[:, 4:], np.tile([sigma0, 0.0], (grid.size, 1)), atol=1e-10)
    np.testing.assert_allclose(E.values[:, :4], 0, atol=1e-10)
    np.testing.assert_allclose(average(J)[4:], 0, atol=1e-10)


def test_graphene_without_viscosity_approaches_plain_conduction():
    grid = Grid.square(16)
    x = grid.points()
    sigma = 1.0 + 0.5 * np.cos(2 * np.pi * x[:, 0])
    force = np.stack([np.sin(2 * np.pi * x[:, 1]), np.cos(2 * np.pi * x[:, 0])], axis=1)
    opts = SolveOptions(tolerance=1e-12)

    conduction = build_conductivity(grid, sigma, source=-sigma[:, None] * force)
    _, current, report = solve_infinite(conduction, opts)
    assert report.converged

    def mismatch(lam):
        p = build_graphene(grid, sigma, 0.0, lambda_pen=lam, source=force)
        E, _, report = solve_infinite(p, opts)
        assert report.converged
        flow = E.values[:, 4:]
        return np.linalg.norm(flow - current.values) / np.linalg.norm(current.values)

    coarse, fine = mismatch(1e4), mismatch(1e6)
    assert fine <= 1e-4
    assert fine <= 0.05 * coarse


@pytest.mark.parametrize(
    "build",
    [
        lambda grid, lam, f: build_graphene(grid, 1.0, 0.1, lam, f),
        lambda grid, lam, f: build_oseen(grid, 1.0, [0.0, 0.0], 1.0, lam, f),
        lambda grid, lam, f: build_oseen(grid, 1.0, [0.5, 0.25], 1.0, lam, f),
    ],
    ids=["graphene", "stokes", "oseen"],
)
def test_divergence_falls_as_the_inverse_penalty(build):
    grid = Grid.square(16)
    force = mode(grid, 0, 0)
    opts = SolveOptions(tolerance=1e-10)
    scaled = []
    for lam in (1e4, 1e6, 1e8):
        E, _, report = solve_infinite(build(grid, lam, force), opts)
        assert report.converged
        scaled.append(lam * spectral_norm(grid, divergence(E, 1)))
    assert min(scaled) > 0
    assert max(scaled) <= 1.01 * min(scaled)


def test_oseen_without_forcing_stays_at_rest():
    grid = Grid.square(8)
    p = build_oseen(grid, 1.0, [0.5, 0.25], 1.0, lambda_pen=1e4)
    E, J, report = solve_infinite(p)
    assert report.converged
    assert E.norm() == 0.0
    E, _, report = solve_cell(p, np.zeros(p.m))
    assert report.converged
    assert E.norm() == 0.0


def test_stokes_flow_under_a_solenoidal_force():
    grid = Grid.square(16)
    force = solenoidal_force(grid)
    eta = 2.0
    p = build_oseen(grid, 1.0, [0.0, 0.0], eta, lambda_pen=1e6, force=force)
    E, _, report = solve_infinite(p, SolveOptions(tolerance=1e-12))
    assert report.converged
    assert report.method == "hermitian-cg"
    # −(η/2)Δw = f for a divergence-free w.
    expected = 2.0 * force / (eta * (2 * np.pi) ** 2)
    np.testing.assert_allclose(E.values[:, 4:], expected, atol=1e-10)
    assert spectral_norm(grid, divergence(E, 1)) <= 1e-10


def test_convection_takes_the_non_hermitian_path():
    grid = Grid.square(16)
    p = build_oseen(grid, 1.0, [0.5, 0.25], 1.0, lambda_pen=1e4, force=solenoidal_force(grid))
    opts = SolveOptions(tolerance=1e-10)
    for _, _, report in (solve_infinite(p, opts), solve_cell(p, np.zeros(p.m), opts)):
        assert report.non_hermitian
        assert report.method == "general-krylov"
        assert report.converged
