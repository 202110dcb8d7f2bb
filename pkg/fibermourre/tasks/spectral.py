'''
spectral.py
===========

Overview
--------

Pointwise spectral analysis of the fibers H(k):

* eigenvalue clustering (gaps below ``cluster_tol`` merge),
* interval projectors 1_J(H(k)) and their exact k-derivatives,
* Nagy's intertwining unitary and the frames built from it,
* reduced hamiltonians W(k)* H(k) W(k),
* matrix functions f(H) with their Daleckii-Krein derivatives.

Everything is batched over leading node axes: a stack ``(N, mu, mu)`` is
decomposed with one call to ``numpy.linalg.eigh``.

Class and method documentation
------------------------------

'''

from dataclasses import dataclass

import numpy as np

from fibermourre.tasks.errors import BoundaryCollision, NagyGap


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hermitian_part(a):
    return 0.5 * (a + dagger(a))


def skew_part(a):
    return 0.5 * (a - dagger(a))


def operator_norm(a):
    '''Spectral norm over the trailing two axes.'''

    a = np.asarray(a)
    if a.shape[-1] == 0:
        return np.zeros(a.shape[:-2])

    return np.linalg.norm(a, ord=2, axis=(-2, -1))


# ---------------------------- decompositions ------------------------------- #

@dataclass(frozen=True)
class SpectralDecomposition:
    '''
    Clustered eigen-decomposition of one hermitian matrix.

    Attributes:
        eigenvalues: Ascending eigenvalues.
        vectors: Columns are the orthonormal eigenvectors.
        clusters: One index array per cluster.
        means: Cluster means.
        multiplicities: Cluster sizes.
        projectors: (n_clusters, mu, mu) orthogonal projectors.
        cluster_tol: The gap below which eigenvalues were merged.
    '''

    eigenvalues: np.ndarray
    vectors: np.ndarray
    clusters: tuple
    means: np.ndarray
    multiplicities: np.ndarray
    projectors: np.ndarray
    cluster_tol: float


def cluster_labels(eigenvalues, cluster_tol):
    '''
    Cluster index of every eigenvalue of an ascending ``(..., mu)`` array:
    consecutive eigenvalues closer than ``cluster_tol`` share a label.
    '''

    eigenvalues = np.asarray(eigenvalues)
    gaps = np.diff(eigenvalues, axis=-1) >= cluster_tol
    starts = np.concatenate(
        [np.ones(eigenvalues.shape[:-1] + (1,), dtype=bool), gaps], axis=-1)

    return np.cumsum(starts, axis=-1) - 1


def eigen_decompose(H, cluster_tol=1e-8):
    '''Eigen-decompose a hermitian matrix and merge near-degenerate levels.'''

    H = np.asarray(H, dtype=complex)

    if cluster_tol <= 0:
        raise ValueError("cluster_tol must be positive")

    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-10:
        raise ValueError("eigen_decompose needs a hermitian matrix")

    evals, vecs = np.linalg.eigh(hermitian_part(H))
    labels = cluster_labels(evals, cluster_tol)

    clusters, means, mults, projs = [], [], [], []
    for label in range(labels[-1] + 1 if len(labels) else 0):
        idx = np.flatnonzero(labels == label)
        v = vecs[:, idx]
        clusters.append(idx)
        means.append(float(np.mean(evals[idx])))
        mults.append(len(idx))
        projs.append(v @ v.conj().T)

    return SpectralDecomposition(evals, vecs, tuple(clusters),
                                 np.array(means), np.array(mults, dtype=int),
                                 np.array(projs), cluster_tol)


def interval_projector(decomp, J):
    '''
    Sum of the cluster projectors with mean in the open interval J.

    Raises BoundaryCollision when a cluster mean is within cluster_tol of
    an end of J.
    '''

    lo, hi = J
    mu = decomp.vectors.shape[0]
    out = np.zeros((mu, mu), dtype=complex)

    for mean, proj in zip(decomp.means, decomp.projectors):
        if min(abs(mean - lo), abs(mean - hi)) < decomp.cluster_tol:
            raise BoundaryCollision(
                "eigenvalue " + str(mean) + " touches the interval " +
                str(tuple(J)), value=mean, interval=tuple(J))
        if lo < mean < hi:
            out = out + proj

    return out


def batch_eigh(H):
    '''Eigenvalues and eigenvectors of a ``(..., mu, mu)`` hermitian stack.'''

    return np.linalg.eigh(hermitian_part(np.asarray(H, dtype=complex)))


def interval_membership(evals, J, cluster_tol=1e-8, nodes=None):
    '''
    Boolean ``(N, mu)`` membership of the eigenvalues in J.

    Cluster means are tested, so a degenerate level is in or out as a whole.
    Raises BoundaryCollision naming the first offending node.
    '''

    evals = np.asarray(evals)
    labels = cluster_labels(evals, cluster_tol)

    # cluster means, broadcast back onto the eigenvalue slots
    n, mu = evals.shape
    offsets = labels + (np.arange(n) * mu)[:, None]
    sums = np.bincount(offsets.ravel(), weights=evals.ravel(),
                       minlength=n * mu)
    counts = np.bincount(offsets.ravel(), minlength=n * mu)
    means = (sums / np.maximum(counts, 1))[offsets]

    lo, hi = J
    touching = (np.abs(means - lo) < cluster_tol) | \
               (np.abs(means - hi) < cluster_tol)
    if np.any(touching):
        row = int(np.argwhere(touching)[0][0])
        node = row if nodes is None else int(nodes[row])
        raise BoundaryCollision(
            "eigenvalue touches the interval " + str(tuple(J)) +
            " at node " + str(node), node=node, interval=tuple(J))

    return (means > lo) & (means < hi)


def selection_projector(vecs, mask):
    '''Sum of v v* over the selected eigenvector columns, per node.'''

    weighted = vecs * mask[..., None, :]

    return np.einsum("...ia,...ja->...ij", weighted, np.conj(vecs))


def interval_projector_field(evals, vecs, J, cluster_tol=1e-8, nodes=None):
    '''1_J(H(k)) for every node of a decomposed stack.'''

    mask = interval_membership(evals, J, cluster_tol, nodes)

    return selection_projector(vecs, mask)


def projector_derivative(evals, vecs, mask, dH, gap_tol=1e-10):
    '''
    Exact derivative of the spectral projector selected by ``mask``.

    With M = V* dH V the derivative is V C V* where
    C_ab = (s_a - s_b) M_ab / (lambda_a - lambda_b) for s_a != s_b, else 0.

    Args:
        evals: (N, mu) eigenvalues.
        vecs: (N, mu, mu) eigenvectors.
        mask: (N, mu) selection (a spectral subset at every node).
        dH: (d, N, mu, mu) derivatives of H.

    Returns:
        (d, N, mu, mu) derivatives.
    '''

    s = mask.astype(float)
    ds = s[:, :, None] - s[:, None, :]
    dl = evals[:, :, None] - evals[:, None, :]

    crossing = (ds != 0) & (np.abs(dl) < gap_tol)
    if np.any(crossing):
        node = int(np.argwhere(crossing)[0][0])
        raise BoundaryCollision(
            "selected and unselected eigenvalues coincide at node " +
            str(node), node=node)

    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(ds != 0, ds / np.where(ds != 0, dl, 1.0), 0.0)

    M = np.einsum("nai,dnij,njb->dnab", np.conj(np.swapaxes(vecs, 1, 2)),
                  dH, vecs)

    return np.einsum("nia,dnab,njb->dnij", vecs, weight[None] * M,
                     np.conj(vecs))


def contour_projector(H, J, nodes=64):
    '''
    Riesz projector (1/2 pi i) of the resolvent integrated on a circle
    centred at mid J with radius 0.75 |J| (trapezoid rule).
    '''

    H = np.asarray(H, dtype=complex)
    lo, hi = J
    centre = 0.5 * (lo + hi)
    radius = 0.75 * (hi - lo)
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    z = centre + radius * np.exp(1j * theta)
    dz = 1j * radius * np.exp(1j * theta) * (2.0 * np.pi / nodes)

    eye = np.eye(H.shape[0])
    acc = np.zeros_like(H)
    for zk, dzk in zip(z, dz):
        acc = acc + np.linalg.inv(zk * eye - H) * dzk

    return acc / (2j * np.pi)


# ---------------------------- matrix functions ----------------------------- #

def matrix_function(H, f):
    '''f(H) for a hermitian stack, through its eigen-decomposition.'''

    evals, vecs = batch_eigh(H)

    return np.einsum("...ia,...a,...ja->...ij", vecs, f(evals), np.conj(vecs))


def divided_differences(evals, f, fprime, tol=1e-12):
    '''First divided differences f[l_a, l_b], with f' on the diagonal.'''

    la = evals[..., :, None]
    lb = evals[..., None, :]
    diff = la - lb
    close = np.abs(diff) < tol

    with np.errstate(divide="ignore", invalid="ignore"):
        quotient = (f(la) - f(lb)) / np.where(close, 1.0, diff)

    return np.where(close, 0.5 * (fprime(la) + fprime(lb)), quotient)


def matrix_function_derivative(H, E, f, fprime):
    '''Daleckii-Krein derivative of f at H in the direction E.'''

    evals, vecs = batch_eigh(H)
    vd = np.conj(np.swapaxes(vecs, -1, -2))
    inner = vd @ E @ vecs

    return vecs @ (divided_differences(evals, f, fprime) * inner) @ vd


# --------------------------------- Nagy ------------------------------------ #

def _inverse_sqrt(R):

    evals, vecs = batch_eigh(R)

    return np.einsum("...ia,...a,...ja->...ij", vecs, evals ** -0.5,
                     np.conj(vecs))


def nagy_unitary(P1, P2, gap=1e-8):
    '''
    W = (1 - (P2 - P1)^2)^(-1/2) [P2 P1 + (1 - P2)(1 - P1)], the unitary
    with W P1 W* = P2. Accepts stacks of projector pairs.
    '''

    P1 = np.asarray(P1, dtype=complex)
    P2 = np.asarray(P2, dtype=complex)
    eye = np.eye(P1.shape[-1])
    D = P2 - P1

    norms = np.atleast_1d(operator_norm(D))
    if np.any(norms >= 1.0 - gap):
        where = int(np.argmax(norms))
        raise NagyGap("projectors too far apart: |P2 - P1| = " +
                      str(float(norms[where])), node=where,
                      norm=float(norms[where]))

    R = eye - D @ D
    T = P2 @ P1 + (eye - P2) @ (eye - P1)

    return _inverse_sqrt(R) @ T


def range_basis(P, tol=0.5):
    '''Orthonormal basis (columns) of the range of an orthogonal projector.'''

    evals, vecs = np.linalg.eigh(hermitian_part(np.asarray(P, dtype=complex)))

    return vecs[:, evals > tol]


@dataclass(frozen=True)
class FrameField:
    '''
    Isometries W(k): C^mu -> C^mu_F spanning 1_J(H(k)) over a ball.

    Attributes:
        nodes: Flat node indices of the ball.
        base: Flat index of the anchor k0.
        W: (n_nodes, mu_F, mu) isometries.
        dW: Optional (d, n_nodes, mu_F, mu) exact derivatives.
    '''

    nodes: np.ndarray
    base: int
    W: np.ndarray
    dW: np.ndarray = None

    @property
    def rank(self):
        return self.W.shape[-1]

    def isometry_defect(self):
        eye = np.eye(self.rank)
        return float(np.max(np.abs(dagger(self.W) @ self.W - eye),
                            initial=0.0))


def local_frame(projectors, nodes, base, dprojectors=None):
    '''
    Frame anchored at ``base``: W(k) = nagy(pi(k0), pi(k)) B0, with B0 an
    orthonormal basis of the range of pi(k0).

    Args:
        projectors: (n_nodes, mu_F, mu_F) projector field over the ball.
        nodes: Flat node indices matching ``projectors``.
        base: Flat node index of the anchor (must be in ``nodes``).
        dprojectors: Optional (d, n_nodes, mu_F, mu_F) exact derivatives;
            when given, the frame derivative is computed as well.
    '''

    nodes = np.asarray(nodes)
    position = np.flatnonzero(nodes == base)
    if len(position) == 0:
        raise ValueError("frame anchor is not among the ball nodes")

    P0 = projectors[position[0]]
    B0 = range_basis(P0)

    try:
        U = nagy_unitary(np.broadcast_to(P0, projectors.shape), projectors)
    except NagyGap as err:
        raise NagyGap(str(err) + " (ball node " + str(int(nodes[err.node])) +
                      ")", node=int(nodes[err.node]), norm=err.norm)

    W = U @ B0

    dW = None
    if dprojectors is not None:
        eye = np.eye(P0.shape[-1])
        D = projectors - P0
        R = eye - D @ D
        T = projectors @ P0 + (eye - projectors) @ (eye - P0)
        Rm = _inverse_sqrt(R)
        grads = []
        for dP in dprojectors:
            dR = -(dP @ D + D @ dP)
            dRm = matrix_function_derivative(
                R, dR, lambda x: x ** -0.5, lambda x: -0.5 * x ** -1.5)
            dT = dP @ (2.0 * P0 - eye)
            grads.append((dRm @ T + Rm @ dT) @ B0)
        dW = np.stack(grads)

    return FrameField(nodes, int(base), W, dW)


@dataclass(frozen=True)
class ReducedHamiltonian:
    '''H~(k) = W(k)* H(k) W(k) over the frame nodes, with derivatives.'''

    nodes: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray = None


def reduce_hamiltonian(H, frame, dH=None):
    '''
    Reduce a sampled hamiltonian onto a frame.

    Args:
        H: (N, mu_F, mu_F) values over the whole grid.
        frame: A :class:`FrameField`.
        dH: Optional (d, N, mu_F, mu_F) exact derivatives; combined with the
            frame derivative to give the exact derivative of H~.
    '''

    Hb = H[frame.nodes]
    Wd = dagger(frame.W)
    values = hermitian_part(Wd @ Hb @ frame.W)

    derivatives = None
    if dH is not None and frame.dW is not None:
        out = []
        for dHa, dWa in zip(dH[:, frame.nodes], frame.dW):
            out.append(dagger(dWa) @ Hb @ frame.W + Wd @ dHa @ frame.W +
                       Wd @ Hb @ dWa)
        derivatives = hermitian_part(np.stack(out))

    return ReducedHamiltonian(frame.nodes, values, derivatives)


# ----------------------------- sampled spectra ------------------------------ #

class SpectralField:
    '''
    The eigen-decomposition of a sampled model at every grid node.

    Spectral projectors are handled through boolean masks over the
    eigenvector columns: a mask ``(n_nodes, mu)`` selects, node by node, the
    eigenvalues in a window. Products and complements of spectral projectors
    are again masks, and their derivatives are exact.

    Args:
        model: A :class:`fibermourre.tasks.domain.SampledModel`.
        cluster_tol: Gap below which eigenvalues count as one cluster.
    '''

    def __init__(self, model, cluster_tol=1e-8):

        self.model = model
        self.grid = model.grid
        self.cluster_tol = cluster_tol
        self.evals, self.vecs = batch_eigh(model.H)

    @property
    def fiber_dim(self):
        return self.evals.shape[1]

    def membership(self, window, nodes):
        '''Mask of the eigenvalues selected by ``window`` at ``nodes``.'''

        return window.membership(self.evals[nodes], self.cluster_tol, nodes)

    def projector(self, mask, nodes):
        return selection_projector(self.vecs[nodes], mask)

    def derivative(self, mask, nodes):
        '''(d, n, mu, mu) exact derivative of the masked projector.'''

        return projector_derivative(self.evals[nodes], self.vecs[nodes],
                                    mask, self.model.dH[:, nodes])

    def mask_of(self, P, nodes, tol=1e-8):
        '''
        Recover the mask of a projector field that is spectral at every
        node, or None when it is not.
        '''

        vecs = self.vecs[nodes]
        weights = np.einsum("nia,nij,nja->na", np.conj(vecs), P, vecs).real
        mask = weights > 0.5

        if np.max(np.abs(selection_projector(vecs, mask) - P),
                  initial=0.0) > tol:
            return None

        return mask

    def mean_gradient(self, mask, nodes):
        '''(d, n) gradient of Tr(pi H) / rank.'''

        vecs = self.vecs[nodes]
        hf = np.einsum("nia,dnij,nja->dna", np.conj(vecs),
                       self.model.dH[:, nodes], vecs).real
        rank = np.maximum(mask.sum(axis=1), 1)

        return np.sum(hf * mask[None], axis=2) / rank[None]

    def mean_hessian(self, mask, nodes, dP=None):
        '''
        (d, d, n) Hessian of Tr(pi H) / rank:
        [Tr(d_j pi d_i H) + Tr(pi d_i d_j H)] / rank.
        '''

        if dP is None:
            dP = self.derivative(mask, nodes)

        P = self.projector(mask, nodes)
        dH = self.model.dH[:, nodes]
        d2H = self.model.d2H[:, :, nodes]
        rank = np.maximum(mask.sum(axis=1), 1)

        first = np.einsum("jnab,inba->ijn", dP, dH).real
        second = np.einsum("nab,ijnba->ijn", P, d2H).real

        return (first + second) / rank[None, None]
