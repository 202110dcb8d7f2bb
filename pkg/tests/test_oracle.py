'''tests for the closed forms of the worked examples'''

import numpy as np
import numpy.testing as npt
import pytest

from fibermourre.tasks import domain, oracle, spectral
from fibermourre.tasks.errors import UnknownQuantity, UnsupportedModel


RNG = np.random.default_rng(11)
POINTS = RNG.uniform(-0.9, 0.9, size=(20, 2))


def test_lambda_plus_at_a_point():

    value = oracle.oracle_eval("example2", "lambda_plus", (0.5, 1.0))

    npt.assert_allclose(value, 1.0 + 0.5 * np.sqrt(2.0))


def test_pi_plus_on_the_axis():

    P = oracle.oracle_eval("example2", "pi_plus", (0.7, 0.0))

    npt.assert_allclose(P, np.diag([1.0, 0.0]), atol=1e-15)


@pytest.mark.parametrize("model", oracle.MODELS)
def test_eigenpairs_match_the_family(model):

    fam = domain.builtin_family(model)
    H = fam.evaluate(POINTS)

    for sign, name in ((1, "plus"), (-1, "minus")):
        lam = oracle.oracle_eval(model, "lambda_" + name, POINTS)
        P = oracle.oracle_eval(model, "pi_" + name, POINTS)
        npt.assert_allclose(H @ P, lam[:, None, None] * P, atol=1e-12)
        npt.assert_allclose(P @ P, P, atol=1e-12)


@pytest.mark.parametrize("model", oracle.MODELS)
def test_gradients_match_finite_differences(model):

    eps = 1e-6
    grad = oracle.oracle_eval(model, "grad_lambda_minus", POINTS)

    for axis in range(2):
        step = np.zeros(2)
        step[axis] = eps
        fd = (oracle.oracle_eval(model, "lambda_minus", POINTS + step) -
              oracle.oracle_eval(model, "lambda_minus", POINTS - step)) \
            / (2 * eps)
        npt.assert_allclose(grad[:, axis], fd, atol=1e-7)


def test_dH_matches_family_derivative():

    fam = domain.builtin_family("example1")

    dH = oracle.oracle_eval("example1", "dH", POINTS)

    for axis in range(2):
        npt.assert_allclose(dH[:, axis], fam.derivative(axis).evaluate(POINTS),
                            atol=1e-12)


def test_projector_derivative_matches_finite_difference():

    eps = 1e-6
    dP = oracle.projector_derivative(POINTS, 1)
    step = np.array([0.0, eps])

    fd = (oracle.projector(POINTS + step, 1) -
          oracle.projector(POINTS - step, 1)) / (2 * eps)

    npt.assert_allclose(dP[1], fd, atol=1e-8)
    npt.assert_allclose(dP[0], 0.0)


def test_partitions_of_unity():

    k1 = np.linspace(-0.8, 0.8, 161)
    points = np.stack([k1, np.zeros_like(k1)], axis=1)

    g = [oracle.oracle_eval("example2", q, points)
         for q in ("g0", "g_plus", "g_minus")]
    t = [oracle.oracle_eval("example2", q, points)
         for q in ("theta0", "theta1")]

    npt.assert_allclose(g[0] ** 2 + g[1] ** 2 + g[2] ** 2, 1.0, atol=1e-14)
    npt.assert_allclose(t[0] ** 2 + t[1] ** 2, 1.0, atol=1e-14)


def test_bump_supports():

    k1 = np.linspace(-0.8, 0.8, 161)
    points = np.stack([k1, np.zeros_like(k1)], axis=1)

    g0 = oracle.oracle_eval("example2", "g0", points)
    gp = oracle.oracle_eval("example2", "g_plus", points)
    t1 = oracle.oracle_eval("example2", "theta1", points)

    assert np.all(g0[np.abs(k1) >= 0.45] == 0.0)
    assert np.all(gp[k1 <= 0.3] == 0.0)
    assert np.all(t1[np.abs(k1) <= 0.13] == 0.0)


def test_envelope_plateau_and_support():

    rho = oracle.oracle_eval("example2", "envelope",
                             [[0.0, 0.0], [0.6, -0.6], [0.9, 0.0]])

    npt.assert_allclose(rho, [1.0, 1.0, 0.0])


def test_bump_gradients_match_finite_differences():

    eps = 1e-6
    points = np.array([[0.35, 0.2], [-0.4, 0.7], [0.1, -0.75]])

    _, grads = oracle.PROFILES.bumps(points)

    for axis in range(2):
        step = np.zeros(2)
        step[axis] = eps
        fd = (oracle.PROFILES.bumps(points + step)[0] -
              oracle.PROFILES.bumps(points - step)[0]) / (2 * eps)
        npt.assert_allclose(grads[:, axis], fd, atol=1e-6)


def test_naive_commutator_is_positive_on_the_plateau():

    points = RNG.uniform(-0.6, 0.6, size=(50, 2))

    for quantity in ("commutator_naive", "commutator_modified"):
        C = oracle.oracle_eval("example2", quantity, points)
        npt.assert_allclose(C, spectral.dagger(C), atol=1e-14)
        assert np.min(np.linalg.eigvalsh(C)) >= 0.5


def test_conjugate_is_skew():

    T1 = oracle.oracle_eval("example2", "naive_principal", POINTS)
    T0 = oracle.oracle_eval("example2", "modified_zeroth", POINTS)

    # i times a hermitian principal part
    npt.assert_allclose(T1, -spectral.dagger(T1), atol=1e-13)
    assert T0.shape == (len(POINTS), 2, 2)


def test_naive_ad2_floor():

    bounds = oracle.oracle_commutator_bounds("example2", samples=20001)

    assert bounds["mourre_floor"] == 0.5
    assert 0.05 < bounds["naive_ad2_floor"] < 0.2
    assert 0.3 < abs(bounds["naive_ad2_argmax"]) < 0.45


def test_thresholds_and_critical_points():

    assert oracle.oracle_eval("example2", "thresholds", None) == []

    values = oracle.oracle_eval("example1", "thresholds", None)
    npt.assert_allclose(values, [-0.25, -7.0 / 12.0])

    points = np.array(oracle.oracle_eval("example1", "critical_points", None))
    lam = oracle.oracle_eval("example1", "lambda_minus", points[1:])
    npt.assert_allclose(np.sort(lam)[:1], -7.0 / 12.0, atol=1e-14)
    grads = [oracle.eigen_gradient("example1", points[1:2], s)
             for s in (1, -1)]
    assert min(np.linalg.norm(g) for g in grads) < 1e-12


def test_unknown_quantity():

    with pytest.raises(UnknownQuantity):
        oracle.oracle_eval("example2", "lambda_zero", (0.0, 0.0))


def test_example2_only_quantities():

    with pytest.raises(UnsupportedModel):
        oracle.oracle_eval("example1", "g0", (0.0, 0.0))

    with pytest.raises(UnsupportedModel):
        oracle.oracle_commutator_bounds("example1")
