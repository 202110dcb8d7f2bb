'''
oracle.py
=========

Overview
--------

Closed forms of the two worked examples, used as independent references
for every stage of the construction.

example1
    H(k) = (k1^2 + k2^2 + k2) Id + k1 M(k2),  M(k2) = (1 k2; k2 -1)

example2
    H(k) = k2 Id + k1 M(k2)

M(k2) has eigenvalues +-r, r = sqrt(1 + k2^2), with projectors
pi_+- = (Id +- M / r) / 2, so that lambda_+- = s(k) +- k1 r carries
pi_+- for either sign of k1.

Profiles of example 2
---------------------

The worked example fixes supports only; the profiles used here are
(s the smooth step of :mod:`fibermourre.tasks.profiles`):

* u(k1) = s((|k1| - 0.3) / 0.15),
* g0 = rho sqrt(1 - u), g+- = rho sqrt(u) 1{+-k1 > 0},
* theta1^2 = s((|k1| - 0.13) / 0.11), theta0^2 = 1 - theta1^2,
* rho(k) = r(k1) r(k2), r(x) = s((0.85 - |x|) / 0.25),

so that g0 lives in |k1| < 0.45, g+- in |k1| > 0.3, theta0 in
|k1| < 0.24 and theta1 vanishes on |k1| <= 0.13. The envelope rho equals 1
on |k|_inf <= 0.6 and vanishes from 0.85 on; it keeps every coefficient
away from the box boundary. With rho = 1 the identities
g0^2 + g+^2 + g-^2 = 1 and theta0^2 + theta1^2 = 1 hold exactly.

Conventions: T = -i A_I is stored as principal part T_i and zeroth part
T_0, T = sum_i T_i d_i + T_0.

Class and method documentation
------------------------------

'''

import numpy as np

from fibermourre.tasks import profiles
from fibermourre.tasks.errors import UnknownQuantity, UnsupportedModel


SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
ID2 = np.eye(2)

MODELS = ("example1", "example2")


class Example2Profiles:
    '''The bump, cutoff and envelope profiles of example 2.'''

    u_start = 0.3
    u_width = 0.15
    theta_start = 0.13
    theta_width = 0.11
    halo_start = 0.46
    halo_width = 0.03
    envelope_plateau = 0.6
    envelope_zero = 0.85

    def _abs_step(self, x, start, width):
        '''s((|x| - start)/width) and its x-derivative.'''

        arg = (np.abs(x) - start) / width
        return profiles.step(arg), \
            profiles.step_derivative(arg) * np.sign(x) / width

    def u(self, k1):
        return self._abs_step(k1, self.u_start, self.u_width)

    def theta1_sq(self, k1):
        return self._abs_step(k1, self.theta_start, self.theta_width)

    def theta0_sq(self, k1):
        value, slope = self.theta1_sq(k1)
        return 1.0 - value, -slope

    def envelope_factor(self, x):
        width = self.envelope_zero - self.envelope_plateau
        arg = (self.envelope_zero - np.abs(x)) / width
        return profiles.step(arg), \
            -profiles.step_derivative(arg) * np.sign(x) / width

    def envelope(self, points):
        '''rho(k) and its (2, N) gradient.'''

        points = np.atleast_2d(points)
        r1, d1 = self.envelope_factor(points[:, 0])
        r2, d2 = self.envelope_factor(points[:, 1])

        return r1 * r2, np.stack([d1 * r2, r1 * d2])

    def _one_d(self, k1):
        '''sqrt(1 - u), sqrt(u) and their k1-derivatives.'''

        arg = (np.abs(k1) - self.u_start) / self.u_width
        c, dc = profiles.sqrt_co_step(arg)
        s, ds = profiles.sqrt_step(arg)
        scale = np.sign(k1) / self.u_width

        return c, dc * scale, s, ds * scale

    def bumps(self, points, envelope=True):
        '''
        Values (3, N) and gradients (3, 2, N) of g0, g+, g-.
        '''

        points = np.atleast_2d(points)
        k1 = points[:, 0]
        c, dc, s, ds = self._one_d(k1)
        plus = (k1 > 0).astype(float)
        minus = (k1 < 0).astype(float)

        base = np.stack([c, s * plus, s * minus])
        dbase = np.stack([dc, ds * plus, ds * minus])
        zeros = np.zeros_like(dbase)
        grad = np.stack([dbase, zeros], axis=1)

        if not envelope:
            return base, grad

        rho, drho = self.envelope(points)
        values = base * rho[None]
        grads = grad * rho[None, None] + base[:, None] * drho[None]

        return values, grads

    def halos(self, points):
        '''
        Halo profiles (3, N) with gradients (3, 2, N): equal to 1 on the
        support of the matching bump and supported in its patch.
        '''

        points = np.atleast_2d(points)
        k1 = points[:, 0]
        t1, dt1 = self.theta1_sq(k1)
        arg = (np.abs(k1) - self.halo_start) / self.halo_width
        z0 = 1.0 - profiles.step(arg)
        dz0 = -profiles.step_derivative(arg) * np.sign(k1) / self.halo_width
        plus = (k1 > 0).astype(float)
        minus = (k1 < 0).astype(float)

        values = np.stack([z0, t1 * plus, t1 * minus])
        d1 = np.stack([dz0, dt1 * plus, dt1 * minus])
        grads = np.stack([d1, np.zeros_like(d1)], axis=1)

        return values, grads


PROFILES = Example2Profiles()


# ------------------------------ closed forms -------------------------------- #

def _points(k):

    k = np.asarray(k, dtype=float)
    single = k.ndim == 1

    return np.atleast_2d(k), single


def _radius(k2):
    return np.sqrt(1.0 + k2 ** 2)


def _m_matrix(k2):
    return SIGMA_Z[None] + k2[:, None, None] * SIGMA_X[None]


def _scalar_part(model, points):
    '''s(k), grad s, Hessian diagonal/off-diagonal of the scalar part.'''

    k1, k2 = points[:, 0], points[:, 1]
    zero = np.zeros_like(k1)

    if model == "example2":
        return k2, np.stack([zero, zero + 1.0]), \
            np.array([[zero, zero], [zero, zero]])

    two = zero + 2.0

    return k1 ** 2 + k2 ** 2 + k2, np.stack([2 * k1, 2 * k2 + 1]), \
        np.array([[two, zero], [zero, two]])


def eigenvalues(model, points, sign):

    s, _, _ = _scalar_part(model, points)

    return s + sign * points[:, 0] * _radius(points[:, 1])


def eigen_gradient(model, points, sign):

    k1, k2 = points[:, 0], points[:, 1]
    r = _radius(k2)
    _, ds, _ = _scalar_part(model, points)

    return ds + sign * np.stack([r, k1 * k2 / r])


def eigen_hessian(model, points, sign):

    k1, k2 = points[:, 0], points[:, 1]
    r = _radius(k2)
    _, _, hs = _scalar_part(model, points)
    zero = np.zeros_like(k1)
    branch = np.array([[zero, k2 / r], [k2 / r, k1 / r ** 3]])

    return hs + sign * branch


def projector(points, sign):

    k2 = points[:, 1]
    r = _radius(k2)

    return 0.5 * (ID2[None] + sign * _m_matrix(k2) / r[:, None, None])


def projector_derivative(points, sign):
    '''(2, N, 2, 2): d1 pi = 0, d2 pi = +-(sigma_x / r - M k2 / r^3) / 2.'''

    k2 = points[:, 1]
    r = _radius(k2)
    d2 = 0.5 * sign * (SIGMA_X[None] / r[:, None, None] -
                       _m_matrix(k2) * (k2 / r ** 3)[:, None, None])

    return np.stack([np.zeros_like(d2), d2])


def hamiltonian_derivative(model, points):

    k1, k2 = points[:, 0], points[:, 1]
    _, ds, _ = _scalar_part(model, points)
    d1 = ds[0][:, None, None] * ID2 + _m_matrix(k2)
    d2 = ds[1][:, None, None] * ID2 + k1[:, None, None] * SIGMA_X

    return np.stack([d1, d2])


def escape_field(model, points, sign):
    '''X = grad lambda / |grad lambda|^2 and its divergence.'''

    grad = eigen_gradient(model, points, sign)
    hess = eigen_hessian(model, points, sign)
    q = np.sum(grad ** 2, axis=0)
    X = grad / q[None]
    lap = hess[0, 0] + hess[1, 1]
    quad = np.einsum("in,ijn,jn->n", grad, hess, grad)

    return X, lap / q - 2.0 * quad / q ** 2


def conjugate_parts(points, modified=False):
    '''
    Principal (2, N, 2, 2) and zeroth (N, 2, 2) parts of T = -i A_I for
    example 2, naive or modified.
    '''

    g, dg = PROFILES.bumps(points)
    side = g[1] ** 2 + g[2] ** 2
    side_grad = g[1][None] * dg[1] + g[2][None] * dg[2]

    n = len(points)
    principal = np.zeros((2, n, 2, 2))
    zeroth = np.zeros((n, 2, 2))

    principal[1] += g[0][:, None, None] ** 2 * ID2
    zeroth += (g[0] * dg[0][1])[:, None, None] * ID2

    for sign in (1, -1):
        P = projector(points, sign)
        dP = projector_derivative(points, sign)
        X, div = escape_field("example2", points, sign)
        for i in range(2):
            principal[i] += (side * X[i])[:, None, None] * P
        transport = np.einsum("in,nab,inbc->nac", X, P, dP)
        zeroth += np.einsum("in,in->n", side_grad, X)[:, None, None] * P
        zeroth += side[:, None, None] * (transport +
                                         0.5 * div[:, None, None] * P)

    if modified:
        t1, _ = PROFILES.theta1_sq(points[:, 0])
        adiabatic = sum(np.einsum("nab,nbc->nac", projector(points, s),
                                  projector_derivative(points, s)[1])
                        for s in (1, -1))
        zeroth += (g[0] ** 2 * t1)[:, None, None] * adiabatic

    return principal, zeroth


def first_commutator(points, modified=False):
    '''[H0, i A_I] as a multiplication operator.'''

    g, _ = PROFILES.bumps(points)
    k1, k2 = points[:, 0], points[:, 1]
    rho, _ = PROFILES.envelope(points)
    out = (rho ** 2)[:, None, None] * ID2[None] + 0.0j

    if not modified:
        return out + (g[0] ** 2 * k1)[:, None, None] * SIGMA_X

    t0, _ = PROFILES.theta0_sq(k1)
    t1, _ = PROFILES.theta1_sq(k1)
    r = _radius(k2)
    split = projector(points, 1) - projector(points, -1)

    return out + (g[0] ** 2 * t0 * k1)[:, None, None] * SIGMA_X + \
        (g[0] ** 2 * t1 * k2 * k1 / r)[:, None, None] * split


def naive_second_principal(points, envelope=True):
    '''
    Principal part of [[H0, i A_I], i A_I] for example 2:
    -g0^2 k1 (g+^2 + g-^2) (X+_i - X-_i) [sigma_x, pi_+].
    '''

    g, _ = PROFILES.bumps(points, envelope=envelope)
    k1 = points[:, 0]
    Xp, _ = escape_field("example2", points, 1)
    Xm, _ = escape_field("example2", points, -1)
    P = projector(points, 1)
    comm = np.einsum("ab,nbc->nac", SIGMA_X, P) - \
        np.einsum("nab,bc->nac", P, SIGMA_X)
    weight = -g[0] ** 2 * k1 * (g[1] ** 2 + g[2] ** 2)

    return np.stack([(weight * (Xp[i] - Xm[i]))[:, None, None] * comm
                     for i in range(2)])


# -------------------------------- interface --------------------------------- #

QUANTITIES = {
    "lambda_plus", "lambda_minus", "grad_lambda_plus", "grad_lambda_minus",
    "pi_plus", "pi_minus", "dH", "g0", "g_plus", "g_minus", "theta0",
    "theta1", "envelope", "naive_principal", "naive_zeroth",
    "modified_principal", "modified_zeroth", "commutator_naive",
    "commutator_modified", "naive_ad2_principal", "thresholds",
    "critical_points"}

EXAMPLE2_ONLY = {
    "g0", "g_plus", "g_minus", "theta0", "theta1", "envelope",
    "naive_principal", "naive_zeroth", "modified_principal",
    "modified_zeroth", "commutator_naive", "commutator_modified",
    "naive_ad2_principal"}


def oracle_eval(model, quantity, k):
    '''
    Evaluate a closed-form quantity at one point ``(2,)`` or at many
    ``(N, 2)``.

    Raises:
        UnknownQuantity: ``quantity`` is not one of :data:`QUANTITIES`.
        UnsupportedModel: the model has no such closed form.
    '''

    if quantity not in QUANTITIES:
        raise UnknownQuantity("unknown oracle quantity: " + str(quantity),
                              quantity=quantity)

    if model not in MODELS or (quantity in EXAMPLE2_ONLY and
                               model != "example2"):
        raise UnsupportedModel("no closed form of '" + str(quantity) +
                               "' for model " + str(model), model=model)

    if quantity == "thresholds":
        return [-0.25, -7.0 / 12.0] if model == "example1" else []

    if quantity == "critical_points":
        if model == "example2":
            return []
        k1 = np.sqrt(13.0) / 6.0
        return [(0.0, -0.5), (k1, -2.0 / 3.0), (-k1, -2.0 / 3.0)]

    points, single = _points(k)

    table = {
        "lambda_plus": lambda: eigenvalues(model, points, 1),
        "lambda_minus": lambda: eigenvalues(model, points, -1),
        "grad_lambda_plus": lambda: eigen_gradient(model, points, 1).T,
        "grad_lambda_minus": lambda: eigen_gradient(model, points, -1).T,
        "pi_plus": lambda: projector(points, 1),
        "pi_minus": lambda: projector(points, -1),
        "dH": lambda: np.swapaxes(hamiltonian_derivative(model, points),
                                  0, 1),
        "g0": lambda: PROFILES.bumps(points, envelope=False)[0][0],
        "g_plus": lambda: PROFILES.bumps(points, envelope=False)[0][1],
        "g_minus": lambda: PROFILES.bumps(points, envelope=False)[0][2],
        "theta0": lambda: np.sqrt(PROFILES.theta0_sq(points[:, 0])[0]),
        "theta1": lambda: np.sqrt(PROFILES.theta1_sq(points[:, 0])[0]),
        "envelope": lambda: PROFILES.envelope(points)[0],
        "naive_principal": lambda: np.swapaxes(
            1j * conjugate_parts(points)[0], 0, 1),
        "naive_zeroth": lambda: 1j * conjugate_parts(points)[1],
        "modified_principal": lambda: np.swapaxes(
            1j * conjugate_parts(points, True)[0], 0, 1),
        "modified_zeroth": lambda: 1j * conjugate_parts(points, True)[1],
        "commutator_naive": lambda: first_commutator(points),
        "commutator_modified": lambda: first_commutator(points, True),
        "naive_ad2_principal": lambda: np.swapaxes(
            naive_second_principal(points), 0, 1),
    }

    value = table[quantity]()

    return value[0] if single else value


def oracle_commutator_bounds(model, samples=100001, span=1.0):
    '''
    Analytic Mourre floor and the principal-part floor of the naive double
    commutator, the latter from a scan of k1 in [-span, span] at k2 = 0
    with the envelope switched off.

    Raises:
        UnsupportedModel: for anything but example2.
    '''

    if model != "example2":
        raise UnsupportedModel("commutator bounds are only known for "
                               "example2", model=model)

    k1 = np.linspace(-span, span, samples)
    points = np.stack([k1, np.zeros_like(k1)], axis=1)
    principal = naive_second_principal(points, envelope=False)
    norms = np.max(np.linalg.norm(principal, ord=2, axis=(-2, -1)), axis=0)
    peak = int(np.argmax(norms))

    return {"mourre_floor": 0.5,
            "naive_ad2_floor": float(norms[peak]),
            "naive_ad2_argmax": float(k1[peak])}
