'''tests for sparse discretization, the Mourre certificate and refinement'''

import numpy as np
import numpy.testing as npt
import pandas as pd
import pytest
from scipy import sparse

from fibermourre.tasks import conjugate, domain, mourre
from fibermourre.tasks.conjugate import FirstOrderOperator
from fibermourre.tasks.errors import SupportTouchesBoundary


def circle(n):

    spec = domain.DomainSpec("torus", ((0.0, 2 * np.pi),))
    return domain.build_grid(spec, n)


@pytest.fixture(scope="module")
def plane():

    spec = domain.DomainSpec("box", ((-1.0, 1.0), (-1.0, 1.0)))
    return domain.build_grid(spec, 9)


@pytest.fixture(scope="module")
def split_sheets(plane):
    '''H0 = diag(k1, k1 + 5) as a multiplication operator.'''

    k1 = plane.points[:, 0]
    values = np.zeros((plane.size, 2, 2))
    values[:, 0, 0] = k1
    values[:, 1, 1] = k1 + 5.0

    return mourre.discretize_multiplication(plane, values)


def identity(grid, mu):
    return np.broadcast_to(np.eye(mu), (grid.size, mu, mu))


def test_multiplication_is_hermitian(plane):

    rng = np.random.default_rng(5)
    M = rng.normal(size=(plane.size, 2, 2)) + \
        1j * rng.normal(size=(plane.size, 2, 2))

    op = mourre.discretize_multiplication(plane, M + np.conj(
        np.swapaxes(M, -1, -2)))

    assert op.hermitian_defect == 0.0
    assert op.shape == (2 * plane.size, 2 * plane.size)
    assert op.boundary == "dirichlet"
    npt.assert_allclose(op.scale(2.0).blocks, 2.0 * op.blocks)


def test_flat_difference_is_skew_and_consistent():

    grid = circle(32)
    x = grid.points[:, 0]

    D = mourre.covariant_difference(grid, 0)

    assert abs(D + D.conj().T).max() == 0.0
    npt.assert_allclose(D @ np.sin(x), np.cos(x), atol=1e-3)


def test_covariant_difference_with_constant_connection():

    grid = circle(32)
    x = grid.points[:, 0]
    L = np.full((grid.size, 1, 1), 0.5j)

    D = mourre.covariant_difference(grid, 0, L=L,
                                    defined=np.ones(grid.size, dtype=bool))

    assert abs(D + D.conj().T).max() < 1e-14
    npt.assert_allclose(D @ np.sin(x), np.cos(x) + 0.5j * np.sin(x),
                        atol=1e-3)


def test_symmetric_first_order_operator_is_hermitian():

    grid = circle(48)
    x = grid.points[:, 0]
    a = 2.0 + np.cos(x)

    # i (a d + a' / 2)
    op = FirstOrderOperator.zeros(grid, 1)
    op.principal[0, :, 0, 0] = 1j * a
    op.zeroth[:, 0, 0] = -0.5j * np.sin(x)

    disc = mourre.discretize(op)

    assert disc.boundary == "periodic"
    assert disc.blocks is None
    assert disc.hermitian_defect < 1e-3

    op.principal[0, :, 0, 0] = 1j
    op.zeroth[:, 0, 0] = 0.0
    assert mourre.discretize(op).hermitian_defect < 1e-14


def test_symmetric_realization_drops_the_skew_zeroth_part():

    grid = circle(48)
    x = grid.points[:, 0]

    op = FirstOrderOperator.zeros(grid, 1)
    op.principal[0, :, 0, 0] = 1j * (2.0 + np.cos(x))
    op.zeroth[:, 0, 0] = -0.5j * np.sin(x)

    plain = mourre.discretize(op)
    sym = mourre.discretize(op, symmetric=True)

    assert plain.skew_residual == 0.0
    assert plain.hermitian_defect > 1e-12
    assert sym.hermitian_defect < 1e-12
    npt.assert_allclose(sym.skew_residual, plain.hermitian_defect, rtol=1e-6)
    assert sym.scale(2.0).skew_residual == 2.0 * sym.skew_residual


def test_support_touching_the_box_edge():

    spec = domain.DomainSpec("box", ((-1.0, 1.0),))
    grid = domain.build_grid(spec, 9)
    op = FirstOrderOperator.zeros(grid, 1)
    op.principal[0, :, 0, 0] = 1.0

    with pytest.raises(SupportTouchesBoundary) as err:
        mourre.discretize(op)

    assert err.value.node == 0


def test_spectral_window_is_a_projector(split_sheets):

    P = mourre.spectral_window(split_sheets, (-0.3, 0.3)).toarray()

    npt.assert_allclose(P @ P, P, atol=1e-14)
    npt.assert_allclose(np.trace(P).real, 27.0)


def test_spectral_window_needs_a_multiplication():

    grid = circle(16)
    op = FirstOrderOperator.zeros(grid, 1)
    op.principal[0] = 1j

    with pytest.raises(ValueError):
        mourre.spectral_window(mourre.discretize(op), (-1.0, 1.0))


def test_positive_commutator_passes(plane, split_sheets):

    commutator = mourre.discretize_multiplication(plane, identity(plane, 2))

    report = mourre.mourre_check(split_sheets, commutator, (-0.3, 0.3))

    assert report.passed
    assert report.rank == 27
    assert report.method == "dense"
    npt.assert_allclose(report.c, 1.0)
    assert report.to_dict()["resolution"] == [9, 9]


def test_certificate_switches_to_arpack_on_fine_grids():

    spec = domain.DomainSpec("box", ((-1.0, 1.0), (-1.0, 1.0)))
    grid = domain.build_grid(spec, 97)
    k1 = grid.points[:, 0]
    H0 = mourre.discretize_multiplication(grid, k1[:, None, None])
    commutator = mourre.discretize_multiplication(
        grid, (1.0 + k1 ** 2)[:, None, None])

    fine = mourre.mourre_check(H0, commutator, (-0.3, 0.3))
    dense = mourre.mourre_check(H0, commutator, (-0.3, 0.3),
                                arpack_resolution=200)

    assert fine.method == "arpack"
    assert dense.method == "dense"
    npt.assert_allclose(fine.c, dense.c, atol=1e-6)
    npt.assert_allclose(dense.c, 1.0, atol=1e-12)


def test_vanishing_commutator_fails(plane, split_sheets):

    commutator = mourre.discretize_multiplication(
        plane, np.zeros((plane.size, 2, 2)))

    report = mourre.mourre_check(split_sheets, commutator, (-0.3, 0.3),
                                 slack=0.0)

    assert not report.passed
    npt.assert_allclose(report.min_eigenvalue, 0.0, atol=1e-14)
    assert report.to_dict()["passed"] is False


def test_certificate_on_part_of_the_grid(plane, split_sheets):

    commutator = mourre.discretize_multiplication(plane, identity(plane, 2))
    nodes = np.flatnonzero(plane.points[:, 1] < 0)

    report = mourre.mourre_check(split_sheets, commutator, (-0.3, 0.3),
                                 nodes=nodes)

    assert report.rank == 12
    assert report.uncertified == 15


def test_empty_window(plane, split_sheets):

    commutator = mourre.discretize_multiplication(plane, identity(plane, 2))

    report = mourre.mourre_check(split_sheets, commutator, (10.0, 11.0))

    assert report.rank == 0
    assert report.passed
    assert report.method == "empty"
    assert report.c is None


def test_matrix_ad_matches_dense_commutators():

    rng = np.random.default_rng(8)
    H = rng.normal(size=(6, 6))
    H = H + H.T
    D = rng.normal(size=(6, 6))
    D = D - D.T
    Hdisc = mourre.DiscretizedOperator(None, sparse.csr_matrix(H), 1,
                                       "central4", "periodic", 0.0)
    Ddisc = mourre.DiscretizedOperator(None, sparse.csr_matrix(D), 1,
                                       "central4", "periodic", 0.0)
    ad1 = H @ D - D @ H
    ad2 = ad1 @ D - D @ ad1
    v = rng.normal(size=6)

    npt.assert_allclose(mourre.matrix_ad(Hdisc, Ddisc, 2).matvec(v), ad2 @ v,
                        atol=1e-12)
    npt.assert_allclose(mourre.matrix_ad_norm(Hdisc, Ddisc, 2),
                        np.linalg.norm(ad2, 2), rtol=1e-5)


def test_smooth_vectors_vanish_on_the_box_edge(plane):

    vectors = mourre.smooth_vectors(plane, 2, count=3)

    assert len(vectors) == 3
    for v in vectors:
        npt.assert_allclose(np.linalg.norm(v), 1.0)
        blocks = v.reshape(plane.size, 2)
        npt.assert_allclose(blocks[plane.edge_distance() == 0], 0.0,
                            atol=1e-12)


def test_flag_growth():

    table = pd.DataFrame({
        "mode": ["naive"] * 3 + ["modified"] * 3 + ["naive"] + ["flat"] * 3,
        "order": [2, 2, 2, 2, 2, 2, 1, 2, 2, 2],
        "resolution": [65, 33, 129, 33, 65, 129, 33, 33, 65, 129],
        "matrix_norm": [2.0, 1.0, 4.0, 1.0, 1.05, 1.08, 5.0, 1.0, 1.1, 1.3]})

    flagged = mourre.flag_growth(table, ratio=1.7)
    flags = flagged.groupby(["mode", "order"])["flag"].first()

    assert flags[("naive", 2)] == mourre.UNBOUNDED
    assert flags[("modified", 2)] == mourre.BOUNDED
    assert flags[("naive", 1)] == mourre.UNRESOLVED
    # 30% growth: neither within 10% nor divergent
    assert flags[("flat", 2)] == mourre.UNRESOLVED
    naive = flagged[(flagged["mode"] == "naive") & (flagged["order"] == 2)]
    assert list(naive["resolution"]) == [33, 65, 129]


def test_principal_norm_witnesses_growth():

    table = pd.DataFrame({
        "mode": ["naive"] * 3, "order": [2] * 3,
        "resolution": [33, 65, 129],
        "matrix_norm": [10.4, 12.0, 14.0],
        "matrix_principal_norm": [1.2, 2.4, 4.7]})

    flagged = mourre.flag_growth(table)

    assert set(flagged["flag"]) == {mourre.UNBOUNDED}


@pytest.mark.parametrize("grid", [
    circle(16),
    domain.build_grid(domain.DomainSpec("box", ((-1.0, 1.0), (-1.0, 1.0))),
                      9)])
def test_band_projector_is_an_orthogonal_projector(grid):

    rng = np.random.default_rng(2)
    P = mourre.band_projector(grid, 2, band=0.5)
    v = rng.normal(size=2 * grid.size) + 1j * rng.normal(size=2 * grid.size)
    w = rng.normal(size=2 * grid.size) + 1j * rng.normal(size=2 * grid.size)

    Pv = P.matvec(v)
    npt.assert_allclose(P.matvec(Pv), Pv, atol=1e-12)
    npt.assert_allclose(np.vdot(w, Pv), np.vdot(P.matvec(w), v), atol=1e-12)
    assert np.linalg.norm(Pv) < np.linalg.norm(v)


def test_band_mask_counts():

    box = domain.build_grid(domain.DomainSpec("box", ((-1.0, 1.0),)), 15)

    # |m| <= 4 on the circle, the lowest 8 sine modes on the box
    assert mourre.band_mask(circle(32), band=0.25).sum() == 9
    assert mourre.band_mask(box, band=0.5).sum() == 8
    for band in (0.0, 1.5):
        with pytest.raises(ValueError):
            mourre.band_mask(box, band=band)


@pytest.mark.parametrize("resolutions", [[33], [33, 65], [65, 33, 129],
                                         [33, 33, 65]])
def test_refinement_needs_ascending_resolutions(resolutions):

    with pytest.raises(ValueError):
        mourre.refinement_study(lambda n: [], resolutions)


def test_refinement_of_a_bounded_commutator():
    '''H0 = cos(k), A = -i d/dk on the circle: every ad^j stays bounded.'''

    def build(n):

        grid = circle(n)
        x = grid.points[:, 0]
        H = np.cos(x)[:, None, None]
        A = FirstOrderOperator.zeros(grid, 1)
        A.principal[0] = -1j
        reports = conjugate.iterated_ad(A.scale(1j), H, j_max=2)
        return [mourre.Measurement("flat", n,
                                   mourre.discretize_multiplication(grid, H),
                                   mourre.discretize(A), reports)]

    table = mourre.refinement_study(build, [64, 128, 256])

    assert list(table.columns) == mourre.REFINEMENT_COLUMNS + ["flag"]
    assert len(table) == 6
    assert set(table["flag"]) == {mourre.BOUNDED}
    assert table["hermitian_defect"].max() < 1e-14
    assert table["matrix_principal_norm"].max() < 0.2
    npt.assert_allclose(table[table["order"] == 1]["coef_zeroth_norm"], 1.0,
                        atol=1e-2)


def test_refinement_of_an_unbounded_commutator():
    '''H0 = sigma_z, A = -i sigma_x d/dk: ad^1 = 2i sigma_y d/dk.'''

    sigma_x = np.array([[0.0, 1.0], [1.0, 0.0]])
    sigma_z = np.diag([1.0, -1.0])

    def build(n):

        grid = circle(n)
        H = np.broadcast_to(sigma_z, (n, 2, 2)).copy()
        A = FirstOrderOperator.zeros(grid, 2)
        A.principal[0] = -1j * sigma_x
        reports = conjugate.iterated_ad(A.scale(1j), H,
                                        np.zeros((1, n, 2, 2)), j_max=1)
        return [mourre.Measurement("flat", n,
                                   mourre.discretize_multiplication(grid, H),
                                   mourre.discretize(A), reports)]

    table = mourre.refinement_study(build, [32, 64, 128])

    assert set(table["flag"]) == {mourre.UNBOUNDED}
    npt.assert_allclose(table["matrix_norm"].to_numpy()[1:] /
                        table["matrix_norm"].to_numpy()[:-1], 2.0, rtol=1e-3)


def test_cross_validation_converges():
    '''[cos, d/dk] = sin at the coefficient level and at matrix level.'''

    errors = []
    for n in (16, 64):
        grid = circle(n)
        x = grid.points[:, 0]
        H = np.cos(x)[:, None, None]
        dH = -np.sin(x)[None, :, None, None]
        D = FirstOrderOperator.zeros(grid, 1)
        D.principal[0] = 1.0

        report = conjugate.iterated_ad(D, H, dH, j_max=1)[0]
        npt.assert_allclose(report.operator.zeroth[:, 0, 0], np.sin(x),
                            atol=1e-14)
        errors.append(mourre.cross_validate(
            report, mourre.discretize_multiplication(grid, H),
            mourre.discretize(D)))

    assert errors[1] < 1e-3
    assert errors[1] < errors[0] / 10.0
