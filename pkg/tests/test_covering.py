'''tests for coverings, bumps, incidence and the Theta partition'''

import numpy as np
import numpy.testing as npt
import pytest

from fibermourre.tasks import covering, domain, spectral, stratify
from fibermourre.tasks.errors import ThresholdInInterval, UnsupportedModel


@pytest.fixture(scope="module")
def scalar_field():
    '''H(k) = k1 + k2^2 / 4, a single sheet without thresholds.'''

    fam = domain.MatrixPolynomialFamily.from_terms(
        1, 2, [((1, 0), [[1.0]]), ((0, 2), [[0.25]])])
    spec = domain.DomainSpec("box", ((-1.0, 1.0), (-1.0, 1.0)))
    grid = domain.build_grid(spec, 33)

    return spectral.SpectralField(domain.SampledModel(fam, grid))


@pytest.fixture(scope="module")
def scalar_covering(scalar_field):

    cover = covering.build_covering(scalar_field, (-0.1, 0.1), (-0.5, 0.5),
                                    region=[(-0.6, 0.6), (-0.6, 0.6)])

    return cover, covering.build_bumps(cover)


def test_window_membership_and_cutoff():

    window = covering.Window(1, (0.0, 1.0), (0.25, 0.75))

    mask = window.membership(np.array([[-0.5, 0.5], [0.9, 2.0]]))

    npt.assert_array_equal(mask, [[False, True], [True, False]])
    npt.assert_allclose(window.chi(np.array([0.3, 0.5, 0.0, 1.2])),
                        [1.0, 1.0, 0.0, 0.0])
    assert window.to_dict()["inner"] == [0.25, 0.75]


def test_indexed_window_has_no_cutoff():

    window = covering.Window(1, indices=(1,))

    npt.assert_array_equal(window.membership(np.array([[0.0, 1.0]])),
                           [[False, True]])
    assert window.chi(0.5) is None


def test_kernel_nodes_respect_region(scalar_field):

    kernel = covering.kernel_nodes(scalar_field, (-0.1, 0.1),
                                   region=[(-0.6, 0.6), (-0.6, 0.6)])
    points = scalar_field.grid.points[kernel]
    values = points[:, 0] + points[:, 1] ** 2 / 4

    assert len(kernel) > 0
    assert np.all(np.abs(points) <= 0.6)
    assert np.all(np.abs(values) <= 0.1 + 1e-8)


def test_greedy_covering_covers_the_kernel(scalar_covering):

    cover, _ = scalar_covering

    assert cover.kind == "greedy"
    assert len(cover) > 1
    inside = np.zeros(cover.grid.size, dtype=bool)
    for patch in cover.patches:
        inside[patch.nodes] = True
        assert all(w.rank == 1 for w in patch.windows)
    assert np.all(inside[cover.kernel])


def test_greedy_balls_keep_off_the_edge(scalar_covering):

    cover, _ = scalar_covering
    grid = cover.grid

    for patch in cover.patches:
        room = min(min(x - lo, hi - x) for x, (lo, hi)
                   in zip(patch.point, grid.spec.bounds))
        assert cover.kappa * patch.radius <= room - 3 * grid.hmax + 1e-12


def test_greedy_bumps_are_a_partition(scalar_covering, scalar_field):

    _, bumps = scalar_covering

    assert bumps.partition_defect() < 1e-12
    assert bumps.window_partition_defect(scalar_field) < 1e-12
    assert np.all(bumps.certified[bumps.covering.kernel])


def test_greedy_windows_are_all_the_same(scalar_covering, scalar_field):

    cover, _ = scalar_covering

    data = covering.classify_incidence(cover, scalar_field)

    assert len(data.pairs) > 0
    assert {p.relation for p in data.pairs} == {"same"}


def test_threshold_in_outer_interval_aborts(scalar_field):

    thresholds = stratify.ThresholdSet(np.array([0.3]), ((0,),), ((5,),),
                                       0.1)

    with pytest.raises(ThresholdInInterval) as err:
        covering.build_covering(scalar_field, (-0.1, 0.1), (-0.5, 0.5),
                                thresholds=thresholds)

    assert err.value.values == [0.3]


def test_interval_must_sit_inside_outer(scalar_field):

    with pytest.raises(ValueError):
        covering.build_covering(scalar_field, (-0.1, 0.1), (-0.1, 0.5))


def test_prescribed_layout(example2_covering):

    cover, _ = example2_covering

    assert cover.kind == "prescribed"
    assert [len(p.windows) for p in cover.patches] == [1, 2, 2]
    assert [w.rank for _, _, w in cover.windows()] == [2, 1, 1, 1, 1]
    assert cover.overlaps(0) == [1, 2]
    assert cover.overlaps(1) == [0]
    assert cover.span() is None


def test_prescribed_covering_needs_example2(example2_field):

    with pytest.raises(UnsupportedModel):
        covering.build_prescribed_covering("example1", example2_field,
                                           (-0.1, 0.1))


def test_prescribed_bumps_on_the_plateau(example2_covering):

    cover, bumps = example2_covering

    assert bumps.partition_defect() < 1e-12
    assert np.all(bumps.certified[cover.kernel])
    assert bumps.window_partition_defect(None) is None


def test_strip_window_contains_half_plane_windows(example2_covering,
                                                  example2_field):

    cover, _ = example2_covering

    data = covering.classify_incidence(cover, example2_field)

    assert len(data.pairs) == 4
    assert {p.relation for p in data.pairs} == {"<"}
    assert data.relation((1, 0), (0, 0)) == ">"
    assert data.relation((1, 0), (2, 0)) is None
    assert ((0, 0), (1, 0)) in data.orderings
    assert len(data.to_rows()) == 4


def test_theta_partition_sums_to_one(example2_covering):

    cover, bumps = example2_covering

    parts = covering.theta_partition(cover, bumps, 0)

    total = np.sum(list(parts.values()), axis=0)
    npt.assert_allclose(total, 1.0, atol=1e-14)
    assert frozenset({0}) in parts
    assert all(0 in alpha for alpha in parts)


def test_covering_dict(example2_covering):

    cover, _ = example2_covering

    tree = cover.to_dict()

    assert tree["kind"] == "prescribed"
    assert len(tree["patches"]) == 3
    assert tree["patches"][0]["windows"][0]["indices"] == [0, 1]


def test_window_sides_reach_independently():

    evals0 = np.array([0.4, 1.4])
    labels = np.array([0, 1])

    windows = covering._propose_windows(evals0, labels, [0, 1], [[0], [1]],
                                        (0.3, 0.5), (0.0, 0.6), 1e-9)

    assert len(windows) == 1
    npt.assert_allclose(windows[0].interval, (0.0, 0.6), atol=1e-8)
    npt.assert_allclose(windows[0].inner, (0.2, 0.5), atol=1e-8)

    # no room below the eigenvalue
    assert covering._propose_windows(evals0, labels, [0, 1], [[0], [1]],
                                     (0.3, 0.5), (0.4, 0.6), 1e-9) is None
