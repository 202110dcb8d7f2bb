'''tests for grids and matrix polynomial families'''

import json

import numpy as np
import numpy.testing as npt
import pytest

from fibermourre.tasks import domain
from fibermourre.tasks.errors import FiberMourreError


@pytest.fixture
def box():
    return domain.DomainSpec("box", ((-1.0, 1.0), (-1.0, 1.0)))


def test_example2_evaluates_closed_form():

    fam = domain.builtin_family("example2")
    k = np.array([[0.5, 1.0], [-0.25, 0.3]])

    values = fam.evaluate(k)

    for (k1, k2), H in zip(k, values):
        expected = np.array([[k2 + k1, k1 * k2], [k1 * k2, k2 - k1]])
        npt.assert_allclose(H, expected, atol=1e-14)


def test_example1_adds_paraboloid():

    one = domain.builtin_family("example1")
    two = domain.builtin_family("example2")
    k = np.array([[0.3, -0.7]])

    diff = one.evaluate(k) - two.evaluate(k)

    npt.assert_allclose(diff[0], (0.3 ** 2 + 0.7 ** 2) * np.eye(2),
                        atol=1e-14)


def test_unknown_builtin_is_rejected():

    with pytest.raises(ValueError):
        domain.builtin_family("example3")


def test_non_hermitian_family_is_rejected():

    upper = np.array([[0, 1], [0, 0]])
    with pytest.raises(FiberMourreError):
        domain.MatrixPolynomialFamily.from_terms(2, 1, [((1,), upper)])


def test_from_dict_matches_builtin():

    tree = {"fiber_dim": 2, "dimension": 2,
            "entries": [[[[[0, 1], 1.0], [[1, 0], 1.0]], [[[1, 1], 1.0]]],
                        [[[[1, 1], 1.0]], [[[0, 1], 1.0], [[1, 0], -1.0]]]]}

    fam = domain.MatrixPolynomialFamily.from_dict(tree)
    ref = domain.builtin_family("example2")
    k = np.random.default_rng(1).uniform(-1, 1, size=(7, 2))

    npt.assert_allclose(fam.evaluate(k), ref.evaluate(k), atol=1e-14)


def test_from_file_reads_json(tmp_path):

    tree = {"fiber_dim": 1, "dimension": 1,
            "entries": [[[[[2], 1.0]]]]}
    path = tmp_path / "model.json"
    path.write_text(json.dumps(tree))

    fam = domain.MatrixPolynomialFamily.from_file(str(path))

    npt.assert_allclose(fam.evaluate([[3.0]])[0, 0, 0], 9.0)


def test_complex_coefficients_need_mirrored_partner():

    tree = {"fiber_dim": 2, "dimension": 1,
            "entries": [[[], [[[1], [0.0, 1.0]]]],
                        [[[[1], [0.0, -1.0]]], []]]}

    fam = domain.MatrixPolynomialFamily.from_dict(tree)

    assert fam.is_hermitian()
    npt.assert_allclose(fam.evaluate([[2.0]])[0],
                        [[0, 2j], [-2j, 0]], atol=1e-14)


def test_derivative_is_exact():

    fam = domain.builtin_family("example1")
    k = np.array([[0.4, -0.2]])

    d1 = fam.derivative(0).evaluate(k)[0]
    d2 = fam.derivative(1).evaluate(k)[0]

    k1, k2 = k[0]
    npt.assert_allclose(d1, 2 * k1 * np.eye(2) +
                        np.array([[1, k2], [k2, -1]]), atol=1e-14)
    npt.assert_allclose(d2, (2 * k2 + 1) * np.eye(2) +
                        np.array([[0, k1], [k1, 0]]), atol=1e-14)


def test_derivative_of_constant_is_zero():

    fam = domain.MatrixPolynomialFamily.from_terms(
        2, 1, [((0,), np.eye(2))])

    zero = fam.derivative(0)

    assert zero.coefficients.shape == (0, 2, 2)
    npt.assert_allclose(zero.evaluate([[1.5]]), np.zeros((1, 2, 2)))


def test_fourier_family_on_torus():

    fam = domain.MatrixPolynomialFamily.from_terms(
        1, 1, [((1,), [[0.5]]), ((-1,), [[0.5]])],
        basis="fourier", periods=(2 * np.pi,))

    x = np.array([[0.3]])

    npt.assert_allclose(fam.evaluate(x)[0, 0, 0].real, np.cos(0.3))
    npt.assert_allclose(fam.derivative(0).evaluate(x)[0, 0, 0].real,
                        -np.sin(0.3), atol=1e-14)


def test_box_grid_includes_end_points(box):

    grid = domain.build_grid(box, 5)

    assert grid.shape == (5, 5)
    assert grid.size == 25
    npt.assert_allclose(grid.h, (0.5, 0.5))
    npt.assert_allclose(grid.points[0], [-1, -1])
    npt.assert_allclose(grid.points[-1], [1, 1])


def test_torus_grid_identifies_end_points():

    spec = domain.DomainSpec.from_dict({"kind": "torus",
                                        "periods": [2 * np.pi]})
    grid = domain.build_grid(spec, 8)

    assert grid.periodic
    npt.assert_allclose(grid.h[0], np.pi / 4)
    assert grid.neighbor(7, 0, 1) == 0
    assert grid.shifted_indices(0, -1)[0] == 7


def test_box_neighbor_falls_off_edge(box):

    grid = domain.build_grid(box, 5)

    assert grid.neighbor(0, 0, -1) == -1
    assert grid.shifted_indices(1, 1)[4] == -1
    assert grid.edge_distance()[12] == 2


def test_nearest_node(box):

    grid = domain.build_grid(box, 5)

    index = grid.nearest_node((0.1, -0.4))

    npt.assert_allclose(grid.points[index], [0.0, -0.5])


def test_coarse_grid_is_rejected(box):

    with pytest.raises(ValueError):
        domain.build_grid(box, 3)


def test_degenerate_domain_is_rejected():

    with pytest.raises(ValueError):
        domain.DomainSpec("box", ((1.0, 1.0),))


@pytest.mark.parametrize("scheme,order", [("central2", 2), ("central4", 4)])
def test_periodic_derivative_converges(scheme, order):

    spec = domain.DomainSpec("torus", ((0.0, 2 * np.pi),))
    errors = []
    for n in (16, 32):
        grid = domain.build_grid(spec, n)
        x = grid.points[:, 0]
        approx = grid.derivative(np.sin(x), 0, scheme)
        errors.append(np.max(np.abs(approx - np.cos(x))))

    assert errors[0] / errors[1] > 2 ** order * 0.8


def test_box_derivative_is_exact_on_quadratics(box):

    grid = domain.build_grid(box, 9)
    x, y = grid.points.T

    grad = grid.gradient(x ** 2 + 3 * y)

    npt.assert_allclose(grad[0], 2 * x, atol=1e-12)
    npt.assert_allclose(grad[1], 3.0, atol=1e-12)


def test_sampled_model_carries_exact_derivatives(box):

    grid = domain.build_grid(box, 5)
    model = domain.SampledModel(domain.builtin_family("example2"), grid)

    assert model.H.shape == (25, 2, 2)
    assert model.dH.shape == (2, 25, 2, 2)
    assert model.d2H.shape == (2, 2, 25, 2, 2)
    # d^2 H / dk1 dk2 is the constant sigma_x
    npt.assert_allclose(model.d2H[0, 1], np.broadcast_to(
        [[0, 1], [1, 0]], (25, 2, 2)), atol=1e-14)
    npt.assert_allclose(model.dV, 0.0)


def test_density_gradient():

    spec = domain.DomainSpec.from_dict({
        "kind": "box", "bounds": [[-1, 1]],
        "density": [[[2], 0.5]]})
    grid = domain.build_grid(spec, 5)
    fam = domain.MatrixPolynomialFamily.from_terms(1, 1, [((1,), [[1.0]])])

    model = domain.SampledModel(fam, grid)

    npt.assert_allclose(model.dV[0], grid.points[:, 0])


def test_matrix_field_rejects_nan(box):

    grid = domain.build_grid(box, 4)
    values = np.zeros((grid.size, 1, 1))
    values[3] = np.nan

    with pytest.raises(ValueError):
        domain.MatrixField(grid, values)


def test_sample_family_evaluates_every_node(box):

    grid = domain.build_grid(box, 9)
    fam = domain.builtin_family("example2")

    field = domain.sample_family(fam, grid)
    slope = domain.sample_family(domain.derivative_family(fam, 0), grid)

    assert field.values.shape == (81, 2, 2)
    assert field.hermitian_defect() < 1e-15
    npt.assert_allclose(field.values, fam.evaluate(grid.points))
    npt.assert_allclose(slope.values,
                        fam.derivative(0).evaluate(grid.points))


def test_sample_family_checks_the_dimension():

    spec = domain.DomainSpec("box", ((-1.0, 1.0),))

    with pytest.raises(ValueError):
        domain.sample_family(domain.builtin_family("example2"),
                             domain.build_grid(spec, 9))
