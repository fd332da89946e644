import numpy as np
import pytest  # type: ignore

from .errors import (
    GfldFormatError,
    InversionError,
    PenaltyError,
    ShapeError,
    SpaceError,
    UnsupportedDimensionError,
)
from .fields import (
    Field,
    Grid,
    LocalOperator,
    PenaltySlot,
    SupertensorLayout,
    apply_local,
    average,
    divergence,
    gradient,
    inner_product,
    is_hermitian_spectrum,
    spectral_norm,
)
from .gfld import decode, encode, read_field, write_field

VECTOR_2D = SupertensorLayout.of(2, "vector")


def random_field(grid, layout, seed=0, complex_values=True):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(grid.size, layout.m))
    if complex_values:
        values = values + 1j * rng.normal(size=(grid.size, layout.m))
    return Field(grid, layout, "real", values)


@pytest.mark.parametrize("samples", [(3, 4), (4,), (2, 2, 2, 2), (0, 4)])
def test_bad_grids_are_rejected(samples):
    with pytest.raises((ShapeError, UnsupportedDimensionError)):
        Grid(samples)


def test_grid_geometry():
    grid = Grid((4, 8), (2.0, 1.0))
    assert grid.size == 32
    assert grid.volume == 2.0
    assert grid.spacing == (0.5, 0.125)
    # Axis 0 varies fastest.
    np.testing.assert_allclose(grid.points()[1], [0.5, 0.0])
    np.testing.assert_allclose(grid.points()[4], [0.0, 0.125])
    assert grid.index_of(1, 1) == 5
    # The Nyquist index maps to the positive frequency.
    np.testing.assert_allclose(grid.wavevectors[2], [2 * np.pi * 2 / 2.0, 0.0])
    np.testing.assert_allclose(grid.wavevectors[3], [-2 * np.pi / 2.0, 0.0])
    assert Grid.from_json(grid.to_json()) == grid


def test_layout_sizes_and_labels():
    layout = SupertensorLayout.of(3, ("sym-matrix", "stress"), ("scalar", "temperature"), "vector")
    assert layout.sizes == (6, 1, 3)
    assert layout.m == 10
    assert layout.block_slice(2) == slice(7, 10)
    labels = layout.component_labels()
    assert labels[0] == "stress[0]"
    assert labels[6] == "temperature"
    assert labels[7] == "vector2[0]"
    assert SupertensorLayout.from_json(layout.to_json()) == layout


def test_fft_round_trip_and_mean():
    grid = Grid((8, 6))
    f = random_field(grid, VECTOR_2D)
    spectrum = f.to_fourier()
    np.testing.assert_allclose(spectrum.to_real().values, f.values, atol=1e-14)
    np.testing.assert_allclose(average(spectrum), average(f), atol=1e-15)
    np.testing.assert_allclose(average(f), f.values.mean(axis=0), atol=1e-15)


def test_parseval():
    grid = Grid((8, 8))
    a = random_field(grid, VECTOR_2D, seed=1)
    b = random_field(grid, VECTOR_2D, seed=2)
    expected = inner_product(a, b)
    assert inner_product(a.to_fourier(), b.to_fourier()) == pytest.approx(expected, abs=1e-13)


def test_inner_product_is_conjugate_linear_in_first_argument():
    grid = Grid((4, 4))
    a = random_field(grid, VECTOR_2D, seed=3)
    b = random_field(grid, VECTOR_2D, seed=4)
    assert inner_product(a * 1j, b) == pytest.approx(-1j * inner_product(a, b))


def test_mixing_spaces_is_an_error():
    grid = Grid((4, 4))
    a = random_field(grid, VECTOR_2D)
    with pytest.raises(SpaceError):
        a + a.to_fourier()
    with pytest.raises(SpaceError):
        inner_product(a, a.to_fourier())


def test_real_data_has_hermitian_spectrum():
    grid = Grid((6, 4))
    assert is_hermitian_spectrum(random_field(grid, VECTOR_2D, complex_values=False))
    assert not is_hermitian_spectrum(random_field(grid, VECTOR_2D))


def test_local_operator_penalty_slots_are_added_when_assembled():
    grid = Grid((2, 2))
    layout = SupertensorLayout.of(2, "vector", "scalar")
    slot = PenaltySlot(1, 1, np.eye(1), 1e6)
    L = LocalOperator.constant(grid, layout, np.eye(3), [slot])
    assert L.penalty_active
    assert L.assembled[0, 2, 2] == 1e6 + 1
    assert L.finite_norm() == pytest.approx(1.0)
    assert L.with_penalty(10.0).assembled[0, 2, 2] == 11.0


def test_local_operator_adjoint_and_hermitian_defect():
    grid = Grid((2, 2))
    matrix = np.array([[2.0, 1j], [0.0, 1.0]])
    L = LocalOperator.constant(grid, VECTOR_2D, matrix)
    assert not L.is_hermitian()
    np.testing.assert_allclose(L.adjoint().matrices[0], matrix.conj().T)
    assert L.plus(L.adjoint().matrices).is_hermitian()


def test_min_eigenvalue_reports_the_point():
    grid = Grid((2, 2))
    matrices = np.tile(np.eye(2), (4, 1, 1))
    matrices[3] = np.diag([1.0, -0.5])
    value, point = LocalOperator(grid, VECTOR_2D, matrices).min_eigenvalue()
    assert value == pytest.approx(-0.5)
    assert point == 3


def test_singular_inverse_names_the_point():
    grid = Grid((2, 2))
    matrices = np.tile(np.eye(2), (4, 1, 1))
    matrices[2] = 0.0
    with pytest.raises(InversionError) as info:
        LocalOperator(grid, VECTOR_2D, matrices).inverse()
    assert info.value.point == 2


def test_penalized_operators_are_not_inverted():
    grid = Grid((2, 2))
    slot = PenaltySlot(0, 0, np.eye(2), 1e6)
    L = LocalOperator(grid, VECTOR_2D, np.tile(np.eye(2), (4, 1, 1)), (slot,))
    with pytest.raises(PenaltyError):
        L.inverse()


def test_apply_local():
    grid = Grid((2, 2))
    L = LocalOperator.constant(grid, VECTOR_2D, np.array([[2.0, 0.0], [0.0, 3.0]]))
    f = Field.constant(grid, VECTOR_2D, [1.0, 1.0])
    np.testing.assert_allclose(apply_local(L, f).values, np.tile([2.0, 3.0], (4, 1)))
    with pytest.raises(SpaceError):
        apply_local(L, f.to_fourier())


def test_spectral_derivatives_of_a_single_mode():
    grid = Grid((16, 16))
    x = grid.points()
    phi = np.sin(2 * np.pi * x[:, 0])
    spectrum = Field(grid, SupertensorLayout.of(2, "scalar"), "real", phi).to_fourier().values[:, 0]
    grad = Field(grid, VECTOR_2D, "fourier", gradient(grid, spectrum)).to_real()
    expected = 2 * np.pi * np.cos(2 * np.pi * x[:, 0])
    np.testing.assert_allclose(grad.values[:, 0], expected, atol=1e-12)
    np.testing.assert_allclose(grad.values[:, 1], 0, atol=1e-12)
    assert spectral_norm(grid, divergence(grad, 0)) == pytest.approx(
        (2 * np.pi) ** 2 / np.sqrt(2), rel=1e-12
    )


def test_gfld_round_trip_is_bitwise(tmp_path):
    grid = Grid((4, 6), (1.0, 1.5))
    layout = SupertensorLayout.of(2, ("sym-matrix", "stress"), ("scalar", "temperature"))
    f = random_field(grid, layout, seed=7)
    path = tmp_path / "f.gfld"
    write_field(path, f)
    g = read_field(path)
    assert g.grid == grid
    assert g.layout == layout
    assert g.space == "real"
    assert g.values.tobytes() == f.values.tobytes()
    assert encode(g) == path.read_bytes()


@pytest.mark.parametrize(
    "mangle",
    [
        lambda data: b"XFLD" + data[4:],
        lambda data: data[:10],
        lambda data: data[:-16],
    ],
)
def test_gfld_rejects_damaged_files(mangle):
    f = random_field(Grid((2, 2)), VECTOR_2D)
    with pytest.raises(GfldFormatError):
        decode(mangle(encode(f)))
