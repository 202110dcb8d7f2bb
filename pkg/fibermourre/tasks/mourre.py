'''
mourre.py
=========

Overview
--------

Sparse discretization of first order operators over grid x fiber, the
spectral windows of H0, the Mourre certificate and the refinement study
of iterated commutators.

Discretization
    Unknowns are ordered node-major: index = node * mu + a. A first order
    operator sum_i A_i d_i + B is realized as

        1/2 (A_i D_i + D_i A_i) + Z,   Z = B - A_i L_i - 1/2 (d_i A_i + [L_i, A_i])

    where D_i is the covariant difference of the connection L the
    operator was assembled with (flat, L = 0, for anything else):

        D_i u(k) = sum_j c_j [U(k <- k + j h) u(k + j h)
                              - U(k <- k - j h) u(k - j h)] / h

    with link unitaries U(k <- k + h) = exp(h (L(k) + L(k + h)) / 2) and
    products of them for longer steps, so D_i is exactly anti-hermitian.
    A density exp(2V) is gauged away first (B -> B - A_i d_i V,
    L -> L - d_i V). Box grids use Dirichlet truncation: coefficients must
    vanish within the stencil width of the edge.

    For an anti-hermitian principal part the first term is hermitian and
    Z - Z* is the difference between the exact and the discrete d_i A_i.
    ``symmetric`` realizations keep (Z + Z*) / 2 and record the dropped
    part as ``skew_residual``.

Certificate
    H0 is block diagonal, so 1_Delta(H0) is assembled node by node and the
    compressed commutator P [H0, iA] P is reduced to the range of P; its
    smallest eigenvalue is the certified constant (dense below
    ``arpack_resolution`` points per axis, ARPACK from there on).

Refinement
    Matrix norms of ad^j are largest singular values of the recursive
    action ad^j v = ad^{j-1} D v - D ad^{j-1} v (ARPACK svds on a
    LinearOperator), taken on grid functions in the resolved band: sine
    modes on a box, Fourier modes on a torus, up to ``band`` times the
    Nyquist frequency. The principal norm is the same for ad^j minus the
    multiplication by its coefficient-level zeroth order part; it grows
    like 1/h exactly when the coefficient principal part does not vanish.

    A (mode, order) group is BOUNDED when its matrix norms stay within
    ``spread`` of each other, UNBOUNDED when the matrix or the principal
    norm grows by at least ``ratio`` between every pair of successive
    resolutions, and UNRESOLVED otherwise.

Class and method documentation
------------------------------

'''

import sys
import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy import fft, sparse
from scipy.sparse.linalg import LinearOperator, aslinearoperator, eigsh, \
    svds

from fibermourre.tasks.domain import stencil
from fibermourre.tasks.errors import SupportTouchesBoundary
from fibermourre.tasks.spectral import batch_eigh, interval_membership, \
    selection_projector

# ------------------------------ Set up logging ------------------------------ #

L = logging.getLogger(__name__)
log_handler = logging.StreamHandler(sys.stdout)
log_handler.setFormatter(
    logging.Formatter('%(asctime)s @tasks.mourre: %(message)s'))
log_handler.setLevel(logging.INFO)
L.addHandler(log_handler)
L.setLevel(logging.INFO)


UNBOUNDED = "UNBOUNDED"
BOUNDED = "BOUNDED"
UNRESOLVED = "UNRESOLVED"


# ------------------------------ discretization ------------------------------ #

@dataclass(frozen=True)
class DiscretizedOperator:
    '''
    A sparse operator on grid x fiber.

    Attributes:
        matrix: (N mu, N mu) csr matrix.
        boundary: "periodic" (torus) or "dirichlet" (box).
        hermitian_defect: max |M - M*| of the matrix.
        blocks: (N, mu, mu) values for multiplication operators, else None.
        skew_residual: max |Z - Z*| of the zeroth order part dropped by a
            symmetric realization (0 otherwise).
    '''

    grid: object
    matrix: sparse.csr_matrix
    fiber_dim: int
    scheme: str
    boundary: str
    hermitian_defect: float
    blocks: np.ndarray = None
    skew_residual: float = 0.0

    @property
    def shape(self):
        return self.matrix.shape

    def scale(self, factor):

        matrix = (factor * self.matrix).tocsr()
        blocks = None if self.blocks is None else factor * self.blocks

        return replace(self, matrix=matrix, blocks=blocks,
                       hermitian_defect=_hermitian_defect(matrix),
                       skew_residual=abs(factor) * self.skew_residual)


def _block_matrix(rows, cols, blocks, size, mu):
    '''Sparse matrix from (n, mu, mu) blocks at node pairs (rows, cols).'''

    rows = np.asarray(rows)
    cols = np.asarray(cols)
    a = np.arange(mu)
    r = np.broadcast_to(rows[:, None, None] * mu + a[None, :, None],
                        blocks.shape)
    c = np.broadcast_to(cols[:, None, None] * mu + a[None, None, :],
                        blocks.shape)

    return sparse.coo_matrix((blocks.ravel(), (r.ravel(), c.ravel())),
                             shape=(size * mu, size * mu)).tocsr()


def _hermitian_defect(matrix):

    diff = (matrix - matrix.conj().T).tocoo()

    return float(np.max(np.abs(diff.data), initial=0.0))


def multiplication_matrix(grid, values):
    '''Block diagonal matrix of a (N, mu, mu) field.'''

    values = np.asarray(values, dtype=complex)
    nodes = np.arange(grid.size)

    return _block_matrix(nodes, nodes, values, grid.size, values.shape[-1])


def discretize_multiplication(grid, values, scheme="central4"):

    values = np.asarray(values, dtype=complex)
    matrix = multiplication_matrix(grid, values)

    return DiscretizedOperator(grid, matrix, values.shape[-1], scheme,
                               "periodic" if grid.periodic else "dirichlet",
                               _hermitian_defect(matrix), values)


def _exp_skew(X):
    '''exp(X) for anti-hermitian X, through eigh of i X.'''

    evals, vecs = batch_eigh(1j * X)

    return np.einsum("nia,na,nja->nij", vecs, np.exp(-1j * evals),
                     np.conj(vecs))


def _links(grid, L, defined, axis):
    '''
    U(k <- k + h) along ``axis`` for every node (identity where the step
    leaves the box or no connection is known at either end).
    '''

    mu = L.shape[-1]
    fwd = grid.shifted_indices(axis, 1)
    links = np.broadcast_to(np.eye(mu, dtype=complex),
                            (grid.size, mu, mu)).copy()

    ok = fwd >= 0
    k = np.flatnonzero(ok & (defined | defined[np.maximum(fwd, 0)]))
    if len(k) == 0:
        return links, fwd

    here, there = L[k], L[fwd[k]]
    dk, dt = defined[k], defined[fwd[k]]
    avg = np.where((dk & dt)[:, None, None], 0.5 * (here + there),
                   np.where(dk[:, None, None], here, there))
    links[k] = _exp_skew(grid.h[axis] * avg)

    return links, fwd


def covariant_difference(grid, axis, scheme="central4", L=None, defined=None,
                         rows=None):
    '''
    Sparse covariant difference along ``axis`` (flat when ``L`` is None),
    restricted to the node ``rows`` (default all).
    '''

    mu = 1 if L is None else L.shape[-1]
    rows = np.arange(grid.size) if rows is None else np.asarray(rows)
    h = grid.h[axis]

    if L is None:
        links = None
        fwd = grid.shifted_indices(axis, 1)
    else:
        links, fwd = _links(grid, L, defined, axis)

    def link(k, j):
        '''U(k <- k + j h) for j >= 1 (nodes k valid for the full step).'''

        out = links[k]
        cur = fwd[k]
        for _ in range(j - 1):
            out = out @ links[cur]
            cur = fwd[cur]
        return out

    row_list, col_list, blocks = [], [], []
    eye = np.eye(mu, dtype=complex)

    for j, w in stencil(scheme).items():
        ahead = grid.shifted_indices(axis, j)
        behind = grid.shifted_indices(axis, -j)

        k = rows[ahead[rows] >= 0]
        U = link(k, j) if links is not None else \
            np.broadcast_to(eye, (len(k), mu, mu))
        row_list.append(k)
        col_list.append(ahead[k])
        blocks.append(w * U / h)

        k = rows[behind[rows] >= 0]
        back = behind[k]
        U = link(back, j) if links is not None else \
            np.broadcast_to(eye, (len(k), mu, mu))
        row_list.append(k)
        col_list.append(back)
        blocks.append(-w * np.conj(np.swapaxes(U, -1, -2)) / h)

    return _block_matrix(np.concatenate(row_list), np.concatenate(col_list),
                         np.concatenate(blocks), grid.size, mu)


def _stencil_width(scheme):
    return max(stencil(scheme))


def _dilate(grid, support, width):
    '''Nodes within ``width`` steps (along one axis) of the support.'''

    out = support.copy()
    for axis in range(grid.dimension):
        for step in range(1, width + 1):
            for s in (step, -step):
                target = grid.shifted_indices(axis, s)
                ok = target >= 0
                out[ok] |= support[target[ok]]

    return out


def _realize(grid, A, B, L, defined, dV, scheme, symmetric=False):
    '''
    1/2 (A D + D A) + Z for one term with principal A, zeroth B, and the
    largest entry of Z - Z* (dropped when ``symmetric``).
    '''

    d = grid.dimension
    mu = B.shape[-1]
    support = np.any(A != 0, axis=(0, 2, 3))

    B = B - np.einsum("in,inab->nab", dV, A)
    Z = B - 0.5 * sum(grid.derivative(A[i], i, scheme) for i in range(d))

    if L is not None:
        L = L - dV[:, :, None, None] * np.eye(mu)
        for i in range(d):
            Z = Z - 0.5 * (A[i] @ L[i] + L[i] @ A[i])

    skew = Z - np.conj(np.swapaxes(Z, -1, -2))
    residual = float(np.max(np.abs(skew), initial=0.0))
    if symmetric:
        Z = Z - 0.5 * skew

    zeroth = np.flatnonzero(np.any(Z != 0, axis=(1, 2)))
    matrix = _block_matrix(zeroth, zeroth, Z[zeroth], grid.size, mu)

    if not np.any(support):
        return matrix, residual

    rows = np.flatnonzero(_dilate(grid, support, _stencil_width(scheme)))
    where = np.flatnonzero(support)

    for i in range(d):
        Amat = _block_matrix(where, where, A[i][where], grid.size, mu)
        Dmat = covariant_difference(
            grid, i, scheme, None if L is None else L[i], defined, rows)
        if L is None and mu > 1:
            Dmat = sparse.kron(Dmat, sparse.identity(mu), format="csr")
        matrix = matrix + 0.5 * (Amat @ Dmat + Dmat @ Amat)

    return matrix.tocsr(), residual


def discretize(op, scheme="central4", dV=None, covariant=True,
               symmetric=False):
    '''
    Sparse realization of a :class:`FirstOrderOperator`.

    Operators assembled from blocks are realized block by block with the
    covariant difference of each block's connection (``covariant``), any
    other operator with the flat difference. ``symmetric`` keeps the
    hermitian part of the zeroth order correction, for operators whose
    principal part is anti-hermitian.

    Raises:
        SupportTouchesBoundary: on a box, a coefficient is nonzero within
            the stencil width of the edge.
    '''

    grid = op.grid
    d = grid.dimension
    mu = op.fiber_dim
    dV = np.zeros((d, grid.size)) if dV is None else np.asarray(dV)

    if not grid.periodic:
        width = _stencil_width(scheme)
        close = op.support() & (grid.edge_distance() < width)
        if np.any(close):
            node = int(np.flatnonzero(close)[0])
            raise SupportTouchesBoundary(
                "coefficients reach the box edge at node " + str(node),
                node=node)

    residual = 0.0
    if covariant and op.blocks:
        matrix = sparse.csr_matrix((grid.size * mu, grid.size * mu),
                                   dtype=complex)
        for block in op.blocks:
            A = np.zeros((d, grid.size, mu, mu), dtype=complex)
            B = np.zeros((grid.size, mu, mu), dtype=complex)
            Lf = np.zeros((d, grid.size, mu, mu), dtype=complex)
            defined = np.zeros(grid.size, dtype=bool)
            A[:, block.nodes] = op.block_factor * block.principal()
            B[block.nodes] = op.block_factor * block.zeroth()
            Lf[:, block.nodes] = block.connection
            defined[block.nodes] = True
            term, skew = _realize(grid, A, B, Lf, defined, dV, scheme,
                                  symmetric)
            matrix = matrix + term
            residual = max(residual, skew)
    else:
        matrix, residual = _realize(grid, op.principal, op.zeroth, None,
                                    None, dV, scheme, symmetric)

    matrix = matrix.tocsr()

    return DiscretizedOperator(grid, matrix, mu, scheme,
                               "periodic" if grid.periodic else "dirichlet",
                               _hermitian_defect(matrix),
                               skew_residual=residual if symmetric else 0.0)


# ----------------------------- spectral windows ----------------------------- #

def _window_selection(H0disc, interval, cluster_tol, nodes):

    grid = H0disc.grid
    nodes = np.arange(grid.size) if nodes is None else np.asarray(nodes)
    evals, vecs = batch_eigh(H0disc.blocks[nodes])
    mask = interval_membership(evals, interval, cluster_tol, nodes)

    return nodes, evals, vecs, mask


def spectral_window(H0disc, interval, cluster_tol=1e-8, nodes=None):
    '''
    1_Delta(H0) assembled node by node (rows and columns of the other
    nodes are zero when ``nodes`` is given).
    '''

    if H0disc.blocks is None:
        raise ValueError("spectral windows need a multiplication operator")

    nodes, _, vecs, mask = _window_selection(H0disc, interval, cluster_tol,
                                             nodes)

    return _block_matrix(nodes, nodes, selection_projector(vecs, mask),
                         H0disc.grid.size, H0disc.fiber_dim)


def _window_isometry(H0disc, interval, cluster_tol, nodes):
    '''(N mu, rank) isometry onto the range of the window.'''

    nodes, _, vecs, mask = _window_selection(H0disc, interval, cluster_tol,
                                             nodes)
    mu = H0disc.fiber_dim

    which, column = np.nonzero(mask)
    rank = len(which)
    rows = (nodes[which][:, None] * mu + np.arange(mu)[None, :]).ravel()
    cols = np.repeat(np.arange(rank), mu)
    data = vecs[which, :, column].ravel()

    return sparse.csr_matrix((data, (rows, cols)),
                             shape=(H0disc.grid.size * mu, rank))


@dataclass(frozen=True)
class MourreReport:
    '''
    Outcome of one Mourre certificate.

    Attributes:
        interval: Delta.
        rank: Rank of 1_Delta(H0) on the certified nodes.
        min_eigenvalue: Smallest eigenvalue of the compressed commutator.
        c: The certified constant (= min_eigenvalue).
        slack: Discretization slack granted against ``c_target``.
        uncertified: Eigenpairs in Delta at nodes outside the certificate.
    '''

    interval: tuple
    rank: int
    min_eigenvalue: float
    c: float
    c_target: float
    slack: float
    passed: bool
    resolution: tuple
    uncertified: int = 0
    method: str = "dense"

    def to_dict(self):

        return {"interval": [float(v) for v in self.interval],
                "rank": int(self.rank),
                "min_eigenvalue": self.min_eigenvalue,
                "c": self.c,
                "c_target": float(self.c_target),
                "slack": float(self.slack),
                "passed": bool(self.passed),
                "resolution": [int(n) for n in self.resolution],
                "uncertified": int(self.uncertified),
                "method": self.method}


def mourre_check(H0disc, commutator, interval, c_target=0.5, nodes=None,
                 slack=None, cluster_tol=1e-8, arpack_resolution=96,
                 tol=1e-8):
    '''
    Certify 1_Delta [H0, iA] 1_Delta >= c 1_Delta.

    Args:
        H0disc: Block diagonal :class:`DiscretizedOperator` of H0.
        commutator: :class:`DiscretizedOperator` of [H0, iA].
        interval: Delta.
        nodes: Nodes the certificate is restricted to (default all).
        slack: Granted slack, default 20 h^2.
        arpack_resolution: Points per axis from which the smallest
            eigenvalue is found by ARPACK instead of a dense solve.
    '''

    grid = H0disc.grid
    slack = 20.0 * grid.hmax ** 2 if slack is None else slack

    V = _window_isometry(H0disc, interval, cluster_tol, nodes)
    rank = V.shape[1]

    uncertified = 0
    if nodes is not None:
        everywhere = _window_isometry(H0disc, interval, cluster_tol, None)
        uncertified = everywhere.shape[1] - rank

    if rank == 0:
        return MourreReport(tuple(interval), 0, None, None, c_target, slack,
                            True, grid.shape, uncertified, "empty")

    C = (V.conj().T @ commutator.matrix @ V)
    C = 0.5 * (C + C.conj().T)

    if max(grid.shape) < arpack_resolution or rank < 3:
        smallest = float(np.linalg.eigvalsh(C.toarray())[0])
        method = "dense"
    else:
        smallest = float(eigsh(C, k=1, which="SA", tol=tol,
                               return_eigenvectors=False)[0])
        method = "arpack"

    passed = smallest >= c_target - slack

    L.info("Mourre %s on %s: rank %i, c = %.6f (%s)" %
           ("pass" if passed else "FAIL", str(tuple(interval)), rank,
            smallest, method))

    return MourreReport(tuple(interval), rank, smallest, smallest, c_target,
                        slack, passed, grid.shape, uncertified, method)


# ------------------------------ matrix commutators -------------------------- #

def _ad_apply(H, D, order, v):

    if order == 0:
        return H @ v

    return _ad_apply(H, D, order - 1, D @ v) - D @ _ad_apply(H, D, order - 1, v)


def _ad_apply_adjoint(H, D, order, v):

    if order == 0:
        return H.conj().T @ v

    Dh = D.conj().T
    return Dh @ _ad_apply_adjoint(H, D, order - 1, v) - \
        _ad_apply_adjoint(H, D, order - 1, Dh @ v)


def matrix_ad(H0disc, Ddisc, order):
    '''LinearOperator of ad^order = [..[H0, D], D]..] at matrix level.'''

    H, D = H0disc.matrix, Ddisc.matrix
    n = H.shape[0]

    return LinearOperator((n, n), dtype=complex,
                          matvec=lambda v: _ad_apply(H, D, order, v),
                          rmatvec=lambda v: _ad_apply_adjoint(H, D, order, v))


def band_mask(grid, band=0.25):
    '''
    Boolean (shape) mask of the modes kept by :func:`band_projector`:
    Fourier modes |xi h| <= band pi on a torus, the lowest band (n + 1)
    sine modes per axis on a box.
    '''

    if not 0.0 < band <= 1.0:
        raise ValueError("band must lie in (0, 1], got " + str(band))

    mask = np.ones(grid.shape, dtype=bool)
    for axis, n in enumerate(grid.shape):
        if grid.periodic:
            keep = np.abs(fft.fftfreq(n)) <= 0.5 * band
        else:
            keep = np.arange(1, n + 1) <= band * (n + 1)
        view = [1] * grid.dimension
        view[axis] = n
        mask &= keep.reshape(view)

    return mask


def band_projector(grid, fiber_dim, band=0.25):
    '''Orthogonal projector onto the band limited grid functions.'''

    mask = band_mask(grid, band)[..., None]
    axes = tuple(range(grid.dimension))
    shape = grid.shape + (fiber_dim,)
    n = grid.size * fiber_dim

    def sine(values):
        coef = fft.dstn(values, type=1, axes=axes, norm="ortho")
        return fft.idstn(coef * mask, type=1, axes=axes, norm="ortho")

    def apply(v):
        field = np.asarray(v, dtype=complex).reshape(shape)
        if grid.periodic:
            out = fft.ifftn(fft.fftn(field, axes=axes) * mask, axes=axes)
        else:
            out = sine(field.real) + 1j * sine(field.imag)
        return out.reshape(np.shape(v))

    return LinearOperator((n, n), dtype=complex, matvec=apply,
                          rmatvec=apply)


def _largest_singular_value(op, tol):

    return float(svds(op, k=1, tol=tol, return_singular_vectors=False,
                      solver="arpack")[0])


def matrix_ad_norm(H0disc, Ddisc, order, tol=1e-6, band=None):
    '''
    Largest singular value of the matrix-level ad^order, on the band
    limited grid functions when ``band`` is given.
    '''

    op = matrix_ad(H0disc, Ddisc, order)
    if band is not None:
        op = op @ band_projector(H0disc.grid, H0disc.fiber_dim, band)

    return _largest_singular_value(op, tol)


def matrix_principal_norm(H0disc, Ddisc, report, tol=1e-6, band=0.25):
    '''
    Band limited norm of ad^j minus the multiplication by the zeroth order
    part of the coefficient-level ad^j of ``report``.
    '''

    zeroth = multiplication_matrix(H0disc.grid, report.operator.zeroth)
    op = (matrix_ad(H0disc, Ddisc, report.order) -
          aslinearoperator(zeroth)) @ \
        band_projector(H0disc.grid, H0disc.fiber_dim, band)

    return _largest_singular_value(op, tol)


def smooth_vectors(grid, fiber_dim, count=4, seed=0):
    '''
    Unit test vectors: products of low sine modes (vanishing on box edges,
    periodic on a torus) times random fiber vectors.
    '''

    rng = np.random.default_rng(seed)
    vectors = []

    for _ in range(count):
        profile = np.ones(grid.size)
        for axis, (lo, hi) in enumerate(grid.spec.bounds):
            mode = rng.integers(1, 3)
            x = (grid.points[:, axis] - lo) / (hi - lo)
            scale = 2.0 if grid.periodic else 1.0
            profile *= np.sin(scale * np.pi * mode * x)
        c = rng.normal(size=fiber_dim) + 1j * rng.normal(size=fiber_dim)
        v = (profile[:, None] * c[None, :]).ravel()
        vectors.append(v / np.linalg.norm(v))

    return vectors


def cross_validate(report, H0disc, Ddisc, scheme="central4", dV=None,
                   vectors=None):
    '''
    max over smooth unit vectors of |discretize(coefficient ad^j) v - ad^j v|
    for the order of ``report``.
    '''

    grid = H0disc.grid
    vectors = smooth_vectors(grid, H0disc.fiber_dim) if vectors is None \
        else vectors
    coefficient = discretize(report.operator, scheme, dV, covariant=False)
    op = matrix_ad(H0disc, Ddisc, report.order)

    return float(max(np.linalg.norm(coefficient.matrix @ v - op.matvec(v))
                     for v in vectors))


# --------------------------------- refinement ------------------------------- #

@dataclass(frozen=True)
class Measurement:
    '''
    What one resolution contributes to a refinement study, per mode: H0,
    the conjugate operator A and its coefficient-level commutators.
    '''

    mode: str
    resolution: int
    H0: DiscretizedOperator
    A: DiscretizedOperator
    reports: list
    mourre: MourreReport = None


REFINEMENT_COLUMNS = [
    "resolution", "mode", "order", "coef_principal_residual",
    "coef_zeroth_norm", "matrix_norm", "matrix_principal_norm",
    "hermitian_defect", "skew_residual", "mourre_c"]


def measurement_rows(measurements, orders=None, band=0.25):
    '''
    Unflagged refinement rows of the measurements of one resolution.
    Matrix norms are taken on the ``band`` limited grid functions.
    '''

    rows = []
    for item in measurements:
        D = item.A.scale(1j)
        for report in item.reports:
            if orders is not None and report.order not in orders:
                continue
            rows.append({
                "resolution": int(item.resolution),
                "mode": item.mode,
                "order": int(report.order),
                "coef_principal_residual": report.principal_residual,
                "coef_zeroth_norm": report.zeroth_norm,
                "matrix_norm": matrix_ad_norm(item.H0, D, report.order,
                                              band=band),
                "matrix_principal_norm": matrix_principal_norm(
                    item.H0, D, report, band=band),
                "hermitian_defect": item.A.hermitian_defect,
                "skew_residual": item.A.skew_residual,
                "mourre_c": None if item.mourre is None else item.mourre.c})
        L.info("resolution %i, %s: done" % (item.resolution, item.mode))

    return pd.DataFrame(rows, columns=REFINEMENT_COLUMNS)


def _grows(norms, ratio):

    with np.errstate(divide="ignore", invalid="ignore"):
        growth = norms[1:] / norms[:-1]

    return bool(np.all(growth >= ratio))


def flag_growth(table, ratio=1.7, spread=0.1):
    '''
    Flag each (mode, order) group over its resolutions: BOUNDED when the
    largest matrix norm is within ``spread`` of the smallest, UNBOUNDED
    when the matrix norm or the principal norm grows by at least ``ratio``
    between every pair of successive resolutions, UNRESOLVED otherwise
    (and for a single resolution).
    '''

    table = table.sort_values(["mode", "order", "resolution"]) \
        .reset_index(drop=True)
    table["flag"] = UNRESOLVED

    for _, group in table.groupby(["mode", "order"]):
        norms = group["matrix_norm"].to_numpy(dtype=float)
        if len(norms) < 2:
            continue
        witnesses = [norms]
        if "matrix_principal_norm" in group:
            principal = group["matrix_principal_norm"].to_numpy(dtype=float)
            if np.all(np.isfinite(principal)):
                witnesses.append(principal)
        if any(_grows(w, ratio) for w in witnesses):
            table.loc[group.index, "flag"] = UNBOUNDED
        elif norms.max() <= (1.0 + spread) * norms.min():
            table.loc[group.index, "flag"] = BOUNDED

    return table


def refinement_study(build, resolutions, orders=None, ratio=1.7, spread=0.1,
                     band=0.25):
    '''
    Rebuild the operators at each resolution and tabulate coefficient and
    matrix level norms of the iterated commutators.

    Args:
        build: Callable n -> list of :class:`Measurement`.
        resolutions: Points per axis, at least three, ascending.
        orders: Orders whose matrix norms are computed (default all
            reported orders).

    Returns:
        pandas.DataFrame with the :data:`REFINEMENT_COLUMNS` and ``flag``.

    Raises:
        ValueError: fewer than three or unsorted resolutions.
    '''

    resolutions = list(resolutions)
    if len(resolutions) < 3 or resolutions != sorted(set(resolutions)):
        raise ValueError("a refinement study needs at least three ascending "
                         "resolutions, got " + str(resolutions))

    table = pd.concat([measurement_rows(build(n), orders, band)
                       for n in resolutions], ignore_index=True)

    return flag_growth(table, ratio, spread)
