'''
conjugate.py
============

Overview
--------

Escape vector fields, the assembled conjugate operators and their
commutators, all at the level of coefficient fields.

A first order operator is stored as

    D = sum_i A_i(k) d_i + B(k)

with ``principal`` (d, N, mu, mu) and ``zeroth`` (N, mu, mu) over the whole
grid. The conjugate operator is

    A_I = i T,   T = sum_{m,n} g_m (pi nabla_X pi + div X pi / 2) g_m,

nabla = d + L being the naive ball connection (A_I) or the modified one
(A~_I). Each term is kept as a :class:`Block` so that the discretization
can realize it with the connection it was built from.

Commutator conventions:

* ``bracket_with_multiplication(D, H)`` is [H, D], with principal part
  [H, A_i] and zeroth part -sum_i A_i d_i H + [H, B]; for D = i A_I this is
  the first commutator [H0, i A_I],
* ``bracket(D1, D2)`` is [D1, D2]. When the principal parts do not commute
  the commutator has a second order part, whose size is reported (or
  raised in strict mode) and which is otherwise dropped,
* ``iterated_ad`` builds ad^1 = [H, D] and ad^{j+1} = [ad^j, D].

Derivatives of coefficient fields are discrete (``Grid.derivative``);
derivatives of H come from the exact derivative families.

Class and method documentation
------------------------------

'''

from dataclasses import dataclass, replace

import numpy as np

from fibermourre.tasks import profiles
from fibermourre.tasks.errors import FlatDirection, NonCommutingPrincipal
from fibermourre.tasks.spectral import ReducedHamiltonian, dagger, \
    hermitian_part, matrix_function_derivative, operator_norm


MAX_ORDER = 6


def _commutator(a, b):
    return a @ b - b @ a


def _contract(a, b):
    '''sum_i a_i b_i for (d, N, mu, mu) stacks.'''

    return np.einsum("inab,inbc->nac", a, b)


# ------------------------------ escape fields ------------------------------- #

@dataclass(frozen=True)
class VectorField:
    '''
    Escape field over a set of nodes.

    Attributes:
        nodes: Flat node indices.
        X: (d, n) components.
        divergence: (n,) div X (None if it could not be formed).
        positivity: (n,) smallest eigenvalue of X . dH~.
    '''

    nodes: np.ndarray
    X: np.ndarray
    divergence: np.ndarray
    positivity: np.ndarray

    def escapes(self, floor=0.5 - 1e-8):
        return bool(np.all(self.positivity >= floor))


def reduced_block(field, mask, nodes):
    '''
    The block of H selected by a constant-rank mask, in the eigenvector
    frame: values W* H W and derivatives W* dH W (the derivative along the
    adiabatic connection of the block).
    '''

    mask = np.asarray(mask, dtype=bool)
    ranks = mask.sum(axis=1)
    if len(ranks) and np.any(ranks != ranks[0]):
        raise ValueError("the window rank is not constant over the nodes")
    rank = int(ranks[0]) if len(ranks) else 0

    order = np.argsort(~mask, axis=1, kind="stable")[:, :rank]
    W = np.take_along_axis(field.vecs[nodes], order[:, None, :], axis=2)
    Wd = dagger(W)

    values = Wd @ field.model.H[nodes] @ W
    derivatives = Wd[None] @ field.model.dH[:, nodes] @ W[None]

    return ReducedHamiltonian(np.asarray(nodes), hermitian_part(values),
                              hermitian_part(derivatives))


def escape_field(reduced, grid=None, grad_floor=0.1, hessian=None):
    '''
    X = grad m / |grad m|^2 for the mean eigenvalue m = Tr H~ / mu.

    The divergence is exact when the Hessian of m is given (as returned by
    :meth:`SpectralField.mean_hessian`),

        div X = tr Hess / |G|^2 - 2 G.Hess.G / |G|^4,

    and otherwise a discrete divergence over ``grid`` (valid away from the
    edges of the node set).

    Raises:
        FlatDirection: |grad m| < ``grad_floor`` at some node.
    '''

    rank = reduced.values.shape[-1]
    G = np.trace(reduced.derivatives, axis1=-2, axis2=-1).real / rank
    norm = np.linalg.norm(G, axis=0)

    if len(norm) and np.min(norm) < grad_floor:
        where = int(np.argmin(norm))
        node = int(reduced.nodes[where])
        raise FlatDirection("mean eigenvalue gradient " +
                            str(float(norm[where])) + " below " +
                            str(grad_floor) + " at node " + str(node),
                            node=node, norm=float(norm[where]))

    Q = norm ** 2
    X = G / Q[None]

    if hessian is not None:
        lap = np.einsum("iin->n", hessian)
        quad = np.einsum("in,ijn,jn->n", G, hessian, G)
        divergence = lap / Q - 2.0 * quad / Q ** 2
    elif grid is not None:
        full = np.zeros((grid.dimension, grid.size))
        full[:, reduced.nodes] = X
        divergence = sum(grid.derivative(full[i], i)
                         for i in range(grid.dimension))[reduced.nodes]
    else:
        divergence = None

    directional = np.einsum("in,inab->nab", X, reduced.derivatives)
    positivity = np.linalg.eigvalsh(directional)[:, 0] if rank else \
        np.zeros(len(norm))

    return VectorField(reduced.nodes, X, divergence, positivity)


# -------------------------------- operators --------------------------------- #

@dataclass(frozen=True)
class Block:
    '''
    One term g (pi nabla_X pi + div X pi / 2) g over the nodes of a ball.

    Attributes:
        key: (m, n).
        nodes: Flat node indices.
        g, dg: Bump values (n,) and gradients (d, n).
        P, dP: Window projector (n, mu, mu) and derivatives (d, n, mu, mu).
        X, div: Escape field (d, n) and its divergence (n,).
        connection: (d, n, mu, mu) coefficients L of nabla = d + L.
    '''

    key: tuple
    nodes: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    P: np.ndarray
    dP: np.ndarray
    X: np.ndarray
    div: np.ndarray
    connection: np.ndarray

    def principal(self):
        '''g^2 X_i pi.'''

        weight = self.g ** 2 * self.X
        return weight[:, :, None, None] * self.P[None]

    def zeroth(self):
        '''g^2 X_i (pi d_i pi + pi L_i pi) + g X.grad g pi + g^2 div X pi / 2.'''

        g2 = self.g ** 2
        transport = self.P[None] @ (self.dP + self.connection @ self.P[None])
        out = np.einsum("in,inab->nab", g2 * self.X, transport)
        scalar = self.g * np.einsum("in,in->n", self.X, self.dg) + \
            0.5 * g2 * self.div

        return out + scalar[:, None, None] * self.P


@dataclass(frozen=True)
class FirstOrderOperator:
    '''
    sum_i A_i d_i + B on a grid.

    Attributes:
        principal: (d, N, mu, mu) coefficients A_i.
        zeroth: (N, mu, mu) coefficient B.
        blocks: Terms the operator was assembled from, if any; the
            operator equals ``block_factor`` times their sum.
        second_order: Size of a dropped second order part (brackets of
            operators with non-commuting principal parts).
    '''

    grid: object
    principal: np.ndarray
    zeroth: np.ndarray
    blocks: tuple = ()
    block_factor: complex = 1.0
    second_order: float = 0.0

    @classmethod
    def zeros(cls, grid, fiber_dim):

        return cls(grid,
                   np.zeros((grid.dimension, grid.size, fiber_dim, fiber_dim),
                            dtype=complex),
                   np.zeros((grid.size, fiber_dim, fiber_dim), dtype=complex))

    @classmethod
    def multiplication(cls, grid, values):

        values = np.asarray(values, dtype=complex)
        mu = values.shape[-1]

        return cls(grid, np.zeros((grid.dimension, grid.size, mu, mu),
                                  dtype=complex), values)

    @property
    def fiber_dim(self):
        return self.zeroth.shape[-1]

    def scale(self, factor):

        return replace(self, principal=factor * self.principal,
                       zeroth=factor * self.zeroth,
                       block_factor=factor * self.block_factor)

    def principal_norms(self):
        '''(N,) max_i |A_i(k)|.'''

        return np.max(operator_norm(self.principal), axis=0)

    def principal_residual(self):
        return float(np.max(self.principal_norms(), initial=0.0))

    def zeroth_norm(self):
        return float(np.max(operator_norm(self.zeroth), initial=0.0))

    def support(self):
        '''(N,) nodes with a nonzero coefficient.'''

        return np.any(self.principal != 0, axis=(0, 2, 3)) | \
            np.any(self.zeroth != 0, axis=(1, 2))

    def is_multiplication(self, tol=0.0):
        return self.principal_residual() <= tol


@dataclass(frozen=True)
class CommutatorReport:
    '''Norms of one iterated commutator.'''

    order: int
    operator: FirstOrderOperator
    principal_residual: float
    zeroth_norm: float
    second_order: float

    def to_dict(self):

        return {"order": int(self.order),
                "principal_residual": self.principal_residual,
                "zeroth_norm": self.zeroth_norm,
                "second_order_residual": self.second_order,
                "support_nodes": int(np.sum(self.operator.support()))}


def build_blocks(covering, bumps, field, connections, grad_floor=0.1):
    '''
    The terms of T for every window of a covering.

    Args:
        connections: Mapping (m, n) -> :class:`Connection` over the nodes
            of patch m.
    '''

    grid = covering.grid
    blocks = []

    for patch in covering.patches:
        nodes = patch.nodes
        for n, mask in enumerate(patch.masks):
            dP = field.derivative(mask, nodes)
            vf = escape_field(reduced_block(field, mask, nodes), grid,
                              grad_floor, field.mean_hessian(mask, nodes, dP))
            blocks.append(Block(
                (patch.index, n), nodes,
                bumps.values[patch.index, nodes],
                bumps.gradients[patch.index][:, nodes],
                field.projector(mask, nodes), dP, vf.X, vf.divergence,
                connections[(patch.index, n)].values))

    return blocks


def assemble_conjugate(blocks, grid, fiber_dim):
    '''A_I = i sum of the blocks, as a first order operator.'''

    op = FirstOrderOperator.zeros(grid, fiber_dim)

    for block in blocks:
        op.principal[:, block.nodes] += 1j * block.principal()
        op.zeroth[block.nodes] += 1j * block.zeroth()

    return replace(op, blocks=tuple(blocks), block_factor=1j)


# ------------------------------- commutators -------------------------------- #

def bracket_with_multiplication(D, H, dH=None, scheme="central4"):
    '''
    [H, D] for a multiplication operator H.

    Args:
        D: :class:`FirstOrderOperator`.
        H: (N, mu, mu) values (or a MatrixField).
        dH: (d, N, mu, mu) exact derivatives; discrete when omitted.
    '''

    H = getattr(H, "values", H)
    if dH is None:
        dH = D.grid.gradient(H, scheme)

    principal = _commutator(H[None], D.principal)
    zeroth = -_contract(D.principal, dH) + _commutator(H, D.zeroth)

    return FirstOrderOperator(D.grid, principal, zeroth)


def _gradient(grid, values, scheme):
    '''d_j of a (d, N, mu, mu) principal part: result [k, j] = d_j a_k.'''

    return np.stack([grid.gradient(v, scheme) for v in values])


def bracket(D1, D2, scheme="central4", strict=False, comm_tol=1e-10):
    '''
    [D1, D2] for first order operators D1 = a.d + b, D2 = c.d + e:

        first order  sum_i (a_i d_i c_k - c_i d_i a_k) + [a_k, e] + [b, c_k]
        zeroth order sum_i (a_i d_i e - c_i d_i b) + [b, e]

    The second order part (1/2)([a_i, c_k] + [a_k, c_i]) is dropped and
    its size stored in ``second_order``.

    Raises:
        NonCommutingPrincipal: in strict mode, when the second order part
            exceeds ``comm_tol``.
    '''

    grid = D1.grid
    a, b = D1.principal, D1.zeroth
    c, e = D2.principal, D2.zeroth
    d = grid.dimension

    second = np.zeros(grid.size)
    for i in range(d):
        for k in range(i, d):
            S = 0.5 * (_commutator(a[i], c[k]) + _commutator(a[k], c[i]))
            second = np.maximum(second, operator_norm(S))
    worst = float(np.max(second, initial=0.0))

    if strict and worst > comm_tol:
        node = int(np.argmax(second))
        raise NonCommutingPrincipal(
            "principal parts do not commute at node " + str(node) +
            " (|S| = " + str(worst) + ")", node=node, norm=worst)

    first = np.zeros_like(a)
    zeroth = _commutator(b, e)

    if np.any(a):
        dc = _gradient(grid, c, scheme)
        de = grid.gradient(e, scheme)
        for k in range(d):
            first[k] += _contract(a, dc[k])
        zeroth = zeroth + _contract(a, de)

    if np.any(c):
        da = _gradient(grid, a, scheme) if np.any(a) else None
        db = grid.gradient(b, scheme)
        for k in range(d):
            if da is not None:
                first[k] -= _contract(c, da[k])
        zeroth = zeroth - _contract(c, db)

    for k in range(d):
        first[k] += _commutator(a[k], e) + _commutator(b, c[k])

    return FirstOrderOperator(grid, first, zeroth, second_order=worst)


def iterated_ad(D, H, dH=None, j_max=4, scheme="central4", strict=False,
                comm_tol=1e-10):
    '''
    ad^1 = [H, D], ad^{j+1} = [ad^j, D] for j < ``j_max``.

    Returns:
        list of :class:`CommutatorReport`, one per order.
    '''

    if j_max < 1 or j_max > MAX_ORDER:
        raise ValueError("j_max must be between 1 and " + str(MAX_ORDER))

    current = bracket_with_multiplication(D, H, dH, scheme)
    reports = [CommutatorReport(1, current, current.principal_residual(),
                                current.zeroth_norm(), 0.0)]

    for order in range(2, j_max + 1):
        current = bracket(current, D, scheme, strict, comm_tol)
        reports.append(CommutatorReport(order, current,
                                        current.principal_residual(),
                                        current.zeroth_norm(),
                                        current.second_order))

    return reports


def formal_adjoint(D, dV=None, scheme="central4"):
    '''
    Formal adjoint in L^2(exp(2V) dk):

        D* = -sum_i A_i* d_i + B* - sum_i d_i A_i* - 2 sum_i (d_i V) A_i*
    '''

    Ad = dagger(D.principal)
    zeroth = dagger(D.zeroth) - sum(D.grid.derivative(Ad[i], i, scheme)
                                    for i in range(D.grid.dimension))
    if dV is not None:
        zeroth = zeroth - 2.0 * np.einsum("in,inab->nab", dV, Ad)

    return FirstOrderOperator(D.grid, -Ad, zeroth)


def symmetry_defect(D, dV=None, scheme="central4"):
    '''Largest coefficient of D - D* (D symmetric: 0).'''

    adj = formal_adjoint(D, dV, scheme)

    return max(float(np.max(np.abs(D.principal - adj.principal),
                            initial=0.0)),
               float(np.max(np.abs(D.zeroth - adj.zeroth), initial=0.0)))


# ---------------------------- spectral identity ----------------------------- #

def _selected_span(D, covering, field):
    '''
    Range of the eigenvalues that indexed windows select at the nodes
    where D has nonzero coefficients, and the distance from that range to
    the nearest unselected eigenvalue outside it at those nodes.
    '''

    support = D.support()
    selected = np.zeros(field.evals.shape, dtype=bool)
    for patch in covering.patches:
        for mask in patch.masks:
            selected[patch.nodes] |= mask & support[patch.nodes, None]

    if not selected.any():
        return None

    values = field.evals[selected]
    lo, hi = float(values.min()), float(values.max())
    others = field.evals[support[:, None] & ~selected]
    others = others[(others < lo) | (others > hi)]
    gap = float(np.min(np.maximum(lo - others, others - hi))) \
        if len(others) else np.inf

    return lo, hi, gap


def spectral_identity_defect(D, covering, field, ramp=1.0):
    '''
    chi(H0) D = D = D chi(H0) at the coefficient level, for the plateau
    cutoff chi equal to 1 on the span of the windows and supported in I~.
    Indexed windows have no span: chi then equals 1 on the eigenvalues
    they select where D lives and falls to 0 over at most ``ramp`` on
    either side, short of every unselected eigenvalue there.

    The right composition D chi(H0) has principal A_i chi and zeroth part
    sum_i A_i d_i chi(H0) + B chi, the derivative of chi(H0) being the
    Daleckii-Krein one.

    Returns:
        (left, right) largest coefficient defects, or None when D vanishes.
    '''

    span = covering.span()
    if span is None:
        selected = _selected_span(D, covering, field)
        if selected is None:
            return None
        span, gap = selected[:2], selected[2]
        ramp = min(ramp, 0.5 * gap)
        lo, hi = span[0] - ramp, span[1] + ramp
    else:
        lo, hi = covering.outer
    inner_lo, inner_hi = span

    def chi(x):
        return profiles.plateau(x, lo, inner_lo, inner_hi, hi)

    def chi_prime(x):
        return profiles.plateau_derivative(x, lo, inner_lo, inner_hi, hi)

    evals, vecs = field.evals, field.vecs
    C = np.einsum("nia,na,nja->nij", vecs, chi(evals), np.conj(vecs))
    dC = np.stack([matrix_function_derivative(field.model.H, E, chi,
                                              chi_prime)
                   for E in field.model.dH])

    left = max(float(np.max(np.abs(C[None] @ D.principal - D.principal))),
               float(np.max(np.abs(C @ D.zeroth - D.zeroth))))
    right_zeroth = _contract(D.principal, dC) + D.zeroth @ C
    right = max(float(np.max(np.abs(D.principal @ C[None] - D.principal))),
                float(np.max(np.abs(right_zeroth - D.zeroth))))

    return left, right
