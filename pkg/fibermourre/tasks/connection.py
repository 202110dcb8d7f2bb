'''
connection.py
=============

Overview
--------

Unitary connections on the trivial bundle, stored as their difference L
from the flat derivative: nabla_i = d_i + L_i.

* :func:`trivial_connection` is the flat unitary connection of the density
  exp(2V) dk, L_i = d_i V Id (zero when the density is flat).
* :func:`adiabatic_connection` compresses a connection to a complete family
  of orthogonal projectors, L' = sum_g pi_g d pi_g + pi_g L pi_g, after
  which every pi_g is covariantly constant.
* :func:`projector_basis` splits a commuting family of projectors inside a
  unit into its minimal nonzero products; :func:`alpha_connection` is the
  adiabatic connection of that basis.
* :func:`glue_modified_connection` glues the connections of all overlap
  patterns alpha of a ball with the partition Theta_alpha^2 of
  :func:`fibermourre.tasks.covering.theta_partition`:

      L~ = sum_alpha Theta_alpha^2 L^alpha

  (the derivative of Theta drops out since sum Theta^2 = 1).

Projector derivatives are exact whenever the projectors are spectral
(their masks are recovered from the sampled spectrum), and discrete
otherwise.

Class and method documentation
------------------------------

'''

import itertools
from dataclasses import dataclass

import numpy as np

from fibermourre.tasks.covering import theta_partition
from fibermourre.tasks.domain import MatrixField
from fibermourre.tasks.errors import IncompleteFamily, NonCommuting
from fibermourre.tasks.spectral import hermitian_part, operator_norm, \
    skew_part


@dataclass(frozen=True)
class Connection:
    '''
    Connection coefficients over a set of nodes.

    Attributes:
        grid: The grid.
        nodes: Sorted flat node indices.
        values: (d, n, mu, mu) coefficients L_i.
        dV: (d, n) density gradient; L - dV Id is anti-hermitian.
        skew_defect: Largest hermitian part removed when the coefficients
            were skew-symmetrized.
    '''

    grid: object
    nodes: np.ndarray
    values: np.ndarray
    dV: np.ndarray
    skew_defect: float = 0.0

    @property
    def fiber_dim(self):
        return self.values.shape[-1]

    def _scalar(self):
        return self.dV[:, :, None, None] * np.eye(self.fiber_dim)

    def full(self):
        '''(d, N, mu, mu) coefficients, zero off the nodes.'''

        out = np.zeros((self.grid.dimension, self.grid.size) +
                       self.values.shape[2:], dtype=complex)
        out[:, self.nodes] = self.values

        return out

    def restrict(self, nodes):

        where = np.searchsorted(self.nodes, nodes)
        if np.any(where >= len(self.nodes)) or \
           np.any(self.nodes[np.minimum(where, len(self.nodes) - 1)] != nodes):
            raise ValueError("restriction to nodes outside the connection")

        return Connection(self.grid, np.asarray(nodes),
                          self.values[:, where], self.dV[:, where],
                          self.skew_defect)

    def unitarity_defect(self):
        '''Largest hermitian part of L - dV Id.'''

        return float(np.max(np.abs(hermitian_part(self.values -
                                                  self._scalar())),
                            initial=0.0))

    def covariant(self, E, dE=None, scheme="central4"):
        '''
        (d, n, mu, mu) covariant derivative d_i E + [L_i, E] of an
        endomorphism field E over the nodes (dE exact if given).
        '''

        if dE is None:
            dE = nodal_derivative(self.grid, self.nodes, E, scheme)

        return dE + self.values @ E[None] - E[None] @ self.values

    def annihilation_defect(self, P, dP=None, scheme="central4"):
        '''(n,) max_i |nabla_i P|.'''

        return np.max(operator_norm(self.covariant(P, dP, scheme)), axis=0)


def nodal_derivative(grid, nodes, values, scheme="central4"):
    '''
    Discrete gradient of a field given on a node subset (zero elsewhere),
    returned on the same nodes.
    '''

    full = np.zeros((grid.size,) + values.shape[1:], dtype=values.dtype)
    full[nodes] = values

    return grid.gradient(full, scheme)[:, nodes]


def trivial_connection(grid, fiber_dim, nodes=None, dV=None):
    '''The flat unitary connection, L_i = d_i V Id.'''

    nodes = np.arange(grid.size) if nodes is None else np.asarray(nodes)
    dV = np.zeros((grid.dimension, len(nodes))) if dV is None else \
        np.asarray(dV, dtype=float)

    values = dV[:, :, None, None] * np.eye(fiber_dim)

    return Connection(grid, nodes, values.astype(complex), dV)


def adiabatic_connection(base, projectors, dprojectors=None,
                         scheme="central4", tol=1e-10):
    '''
    Compress ``base`` to the family ``projectors`` (mutually orthogonal,
    summing to Id): L' = sum_g pi_g d pi_g + pi_g L pi_g.

    Args:
        base: :class:`Connection`.
        projectors: list of (n, mu, mu) fields over ``base.nodes``.
        dprojectors: Optional list of exact (d, n, mu, mu) derivatives.

    Raises:
        IncompleteFamily: the family does not sum to Id or is not
            orthogonal.
    '''

    eye = np.eye(base.fiber_dim)
    total = np.sum(projectors, axis=0)
    gap = np.max(np.abs(total - eye), axis=(1, 2))
    if len(gap) and np.max(gap) > tol:
        node = int(base.nodes[np.argmax(gap)])
        raise IncompleteFamily("projectors do not sum to Id at node " +
                               str(node), node=node, gap=float(np.max(gap)))

    for a, b in itertools.combinations(range(len(projectors)), 2):
        overlap = np.max(np.abs(projectors[a] @ projectors[b]), axis=(1, 2))
        if len(overlap) and np.max(overlap) > tol:
            node = int(base.nodes[np.argmax(overlap)])
            raise IncompleteFamily("projectors " + str((a, b)) +
                                   " are not orthogonal at node " +
                                   str(node), node=node, pair=(a, b))

    if dprojectors is None:
        dprojectors = [nodal_derivative(base.grid, base.nodes, P, scheme)
                       for P in projectors]

    values = np.zeros_like(base.values)
    for P, dP in zip(projectors, dprojectors):
        values += P[None] @ dP + P[None] @ base.values @ P[None]

    scalar = base._scalar()
    skew = skew_part(values - scalar)
    defect = float(np.max(np.abs(values - scalar - skew), initial=0.0))

    return Connection(base.grid, base.nodes, skew + scalar, base.dV,
                      max(defect, base.skew_defect))


# ------------------------------ projector basis ----------------------------- #

@dataclass(frozen=True)
class ProjectorBasis:
    '''
    Minimal nonzero products of a commuting family inside a unit.

    Attributes:
        projectors: list of (n, mu, mu) basis members.
        labels: Per member, one flag per generator (member <= generator).
        coefficients: (G, Gamma) 0/1 decomposition of the generators.
        unit: (n, mu, mu) unit projector.
    '''

    projectors: list
    labels: tuple
    coefficients: np.ndarray
    unit: np.ndarray

    def __len__(self):
        return len(self.projectors)

    def reconstruct(self, g):
        '''sum_gamma c_{g, gamma} pi_gamma.'''

        out = np.zeros_like(self.unit)
        for c, P in zip(self.coefficients[g], self.projectors):
            if c:
                out = out + P

        return out


def projector_basis(generators, unit, tol=1e-10, nodes=None):
    '''
    Split ``unit`` by each generator in turn, P -> (P G, P (1 - G)),
    keeping the nonzero pieces. The pieces are the minimal nonzero
    products of the generators and their complements in the unit.

    Raises:
        NonCommuting: two generators fail to commute, with the pair and
            node.
    '''

    unit = np.asarray(unit, dtype=complex)
    unit = unit if unit.ndim == 3 else unit[None]
    generators = [np.asarray(G, dtype=complex).reshape(unit.shape)
                  for G in generators]
    where = np.arange(len(unit)) if nodes is None else np.asarray(nodes)

    for a, b in itertools.combinations(range(len(generators)), 2):
        Ga, Gb = generators[a], generators[b]
        norms = np.max(np.abs(Ga @ Gb - Gb @ Ga), axis=(1, 2))
        if np.max(norms) > tol:
            node = int(where[np.argmax(norms)])
            raise NonCommuting("generators " + str((a, b)) +
                               " do not commute at node " + str(node),
                               pair=(a, b), node=node,
                               norm=float(np.max(norms)))

    for g, G in enumerate(generators):
        excess = np.max(np.abs(unit @ G - G), axis=(1, 2))
        if np.max(excess) > tol:
            raise ValueError("generator " + str(g) + " is not below the unit")

    eye = np.eye(unit.shape[-1])
    atoms = [(unit, ())]
    for G in generators:
        refined = []
        for A, label in atoms:
            for take, F in ((True, G), (False, eye - G)):
                B = hermitian_part(A @ F)
                if np.max(np.abs(B)) > tol:
                    refined.append((B, label + (take,)))
        atoms = refined

    coefficients = np.array([[int(label[g]) for _, label in atoms]
                             for g in range(len(generators))], dtype=int)
    coefficients = coefficients.reshape(len(generators), len(atoms))

    return ProjectorBasis([A for A, _ in atoms],
                          tuple(label for _, label in atoms),
                          coefficients, unit)


def _family_derivatives(field, nodes, family):
    '''Exact derivatives when every member is spectral, else None.'''

    if field is None:
        return None

    out = []
    for P in family:
        mask = field.mask_of(P, nodes)
        if mask is None:
            return None
        out.append(field.derivative(mask, nodes))

    return out


def alpha_connection(base, basis, field=None, scheme="central4"):
    '''
    Adiabatic connection of a projector basis, completed by the complement
    of its unit.
    '''

    eye = np.eye(base.fiber_dim)
    family = list(basis.projectors)
    rest = eye - basis.unit
    if np.max(np.abs(rest)) > 1e-10:
        family.append(rest)

    derivatives = _family_derivatives(field, base.nodes, family)

    return adiabatic_connection(base, family, derivatives, scheme)


# -------------------------------- ball level -------------------------------- #

def naive_connection(field, patch):
    '''
    The ball connection: trivial connection compressed to the window
    projectors of the patch and their complement.
    '''

    nodes = patch.nodes
    base = trivial_connection(field.grid, field.fiber_dim, nodes,
                              field.model.dV[:, nodes])

    masks = list(patch.masks)
    rest = ~np.any(np.stack(masks), axis=0)
    if np.any(rest):
        masks.append(rest)

    projectors = [field.projector(m, nodes) for m in masks]
    derivatives = [field.derivative(m, nodes) for m in masks]

    return adiabatic_connection(base, projectors, derivatives)


def glue_modified_connection(m, n, covering, bumps, field, naive, tol=1e-8):
    '''
    The modified connection of window (m, n):

        L~ = sum_alpha Theta_alpha^2 L^alpha

    where L^alpha is the adiabatic connection (from the ball connection
    ``naive`` of patch m) of the basis generated, inside pi_{m,n}, by the
    products pi_{m,n} pi_{m',n'} of the windows of the balls m' in alpha.

    Raises:
        PartitionGap: from the Theta partition.
    '''

    patch = covering.patches[m]
    parts = theta_partition(covering, bumps, m, tol)
    values = np.zeros_like(naive.values)
    defect = naive.skew_defect

    for alpha, weights in sorted(parts.items(), key=lambda x: sorted(x[0])):
        sel = np.flatnonzero(weights > 0)
        if len(sel) == 0:
            continue

        nodes = patch.nodes[sel]
        unit = patch.masks[n][sel]
        generators = []
        for mp in sorted(alpha - {m}):
            other = covering.patches[mp]
            pos = other.positions(nodes)
            for mask in other.masks:
                product = unit & mask[pos]
                if np.any(product):
                    generators.append(field.projector(product, nodes))

        basis = projector_basis(generators, field.projector(unit, nodes),
                                nodes=nodes)
        conn = alpha_connection(naive.restrict(nodes), basis, field)
        values[:, sel] += weights[sel][None, :, None, None] * conn.values
        defect = max(defect, conn.skew_defect)

    return Connection(naive.grid, naive.nodes, values, naive.dV, defect)


def ball_connections(covering, bumps, field, mode="naive"):
    '''
    Connection coefficients per window, (m, n) -> (d, n_nodes, mu, mu),
    naive or modified.
    '''

    naive = {p.index: naive_connection(field, p) for p in covering.patches}
    table = {}

    for m, n, _ in covering.windows():
        if mode == "naive":
            table[(m, n)] = naive[m]
        else:
            table[(m, n)] = glue_modified_connection(m, n, covering, bumps,
                                                     field, naive[m])

    return table


def curvature(conn, i, j, scheme="central4"):
    '''R_ij = d_i L_j - d_j L_i + [L_i, L_j] over the grid (zero off the nodes).'''

    if i == j:
        raise ValueError("curvature needs two distinct axes")

    if conn.grid.dimension < 2:
        raise ValueError("curvature needs a base of dimension >= 2")

    full = conn.full()
    grid = conn.grid
    R = grid.derivative(full[j], i, scheme) - \
        grid.derivative(full[i], j, scheme) + \
        full[i] @ full[j] - full[j] @ full[i]

    out = np.zeros_like(R)
    out[conn.nodes] = R[conn.nodes]

    return MatrixField(grid, out)
