'''
stratify.py
===========

Overview
--------

Sampling of the characteristic variety

    Sigma = {(k, lambda) : lambda eigenvalue of H(k)}

over a grid, its partition into strata of constant multiplicity and the
detection of thresholds (critical values of the energy along a stratum).

* :func:`sample_sigma` lists every eigenvalue cluster (node, mean,
  multiplicity) with mean in an open interval.
* :func:`extract_strata` joins triples at neighbouring nodes into connected
  components. Two triples are joined when their multiplicities agree and
  they are each other's best match: the mismatch is measured against the
  trapezoid prediction lambda_u ~ lambda_t + (grad_t + grad_u) . dk / 2 so
  that sheets are followed through avoided crossings.
* :func:`detect_thresholds` flags members where the (tangential) energy
  gradient is below ``grad_tol`` and every one of its components changes
  sign among the members within 1.5h, and reports one critical value per
  flagged patch.
* :func:`stratify` samples over the interval widened by 4 h Lip, so that
  thin spectral bands are resolved as sheets, and restricts the result to
  the interval afterwards.

Simple strata are open pieces of the graph of an eigenvalue and have the
full dimension. For strata of higher multiplicity the dimension is a local
principal-component estimate at scale 3h (spreads below 0.1h are ignored).
A higher-multiplicity component met at a single node has no resolved
dimension: it is reported as unresolved, not as critical.

Class and method documentation
------------------------------

'''

import sys
import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from fibermourre.tasks.domain import SampledModel
from fibermourre.tasks.spectral import batch_eigh, cluster_labels, \
    operator_norm


# ------------------------------ Set up logging ------------------------------ #

L = logging.getLogger(__name__)
log_handler = logging.StreamHandler(sys.stdout)
log_handler.setFormatter(
    logging.Formatter('%(asctime)s @tasks.stratify: %(message)s'))
log_handler.setLevel(logging.INFO)
L.addHandler(log_handler)
L.setLevel(logging.INFO)


RANK_ZERO_CRITERION = ("tangential gradient of the mean eigenvalue < "
                       "grad_tol, each component changing sign within 1.5h")


# sampling pad around the requested interval, in units of h Lip
PAD_FACTOR = 4.0


# ---------------------------------- types ----------------------------------- #

@dataclass(frozen=True)
class SigmaSample:
    '''
    Eigenvalue clusters with mean in an interval, sorted by node.

    Attributes:
        grid: The sampling grid.
        interval: The open interval the means lie in.
        nodes: (T,) flat node index per triple.
        values: (T,) cluster means.
        multiplicities: (T,) cluster sizes.
        gradients: (d, T) gradients of the cluster means.
        lip: Weyl bound sup_k |grad H(k)| over the grid.
        cluster_tol: The clustering gap.
    '''

    grid: object
    interval: tuple
    nodes: np.ndarray
    values: np.ndarray
    multiplicities: np.ndarray
    gradients: np.ndarray
    lip: float
    cluster_tol: float

    def __len__(self):
        return len(self.nodes)

    @property
    def points(self):
        return self.grid.points[self.nodes]

    def eigenvalue_count(self):
        '''Eigenvalues (with multiplicity) in the interval, per node.'''

        return np.bincount(self.nodes, weights=self.multiplicities,
                           minlength=self.grid.size).astype(int)

    def restrict(self, interval):
        '''The sub-sample inside ``interval`` and the kept triple mask.'''

        lo, hi = interval
        keep = (self.values > lo) & (self.values < hi)

        return replace(self, interval=tuple(interval),
                       nodes=self.nodes[keep], values=self.values[keep],
                       multiplicities=self.multiplicities[keep],
                       gradients=self.gradients[:, keep]), keep


@dataclass
class Stratum:
    '''
    A connected component of constant multiplicity.

    Attributes:
        grid: The sampling grid.
        id: Index in the stratum list.
        members: Triple indices into the sample.
        nodes: Flat node indices of the members.
        values: Cluster means of the members.
        multiplicity: The common multiplicity.
        dimension: Manifold dimension (estimated unless simple).
        tangents: (n_members, d, d) orthonormal tangent frames, tangent
            directions first (``dimension`` of them).
        rank_zero: Whether the energy is critical somewhere on the stratum.
    '''

    grid: object
    id: int
    members: np.ndarray
    nodes: np.ndarray
    values: np.ndarray
    gradients: np.ndarray
    multiplicity: int
    dimension: int
    tangents: np.ndarray
    rank_zero: bool = False

    def __len__(self):
        return len(self.members)

    @property
    def resolved(self):
        return self.multiplicity == 1 or self.dimension > 0


@dataclass(frozen=True)
class ThresholdSet:
    '''
    Critical values with the strata (and nodes) they were found on.

    ``unresolved`` holds the values of higher-multiplicity components met
    at a single node, whose dimension the grid cannot tell.
    '''

    values: np.ndarray
    origins: tuple
    nodes: tuple
    tolerance: float
    unresolved: tuple = ()

    def __len__(self):
        return len(self.values)

    def within(self, interval):
        lo, hi = interval
        return [float(v) for v in self.values if lo < v < hi]

    def restrict(self, interval, renumber):
        '''Values inside ``interval``, strata renumbered by ``renumber``.'''

        lo, hi = interval
        keep = [i for i, v in enumerate(self.values) if lo < v < hi]

        return ThresholdSet(
            np.array([self.values[i] for i in keep]),
            tuple(tuple(renumber[s] for s in self.origins[i]
                        if s in renumber) for i in keep),
            tuple(self.nodes[i] for i in keep),
            self.tolerance,
            tuple(v for v in self.unresolved if lo < v < hi))

    def to_dict(self):
        return {"thresholds": [float(v) for v in self.values],
                "strata": [list(map(int, o)) for o in self.origins],
                "nodes": [list(map(int, n)) for n in self.nodes],
                "tolerance": float(self.tolerance),
                "unresolved": [float(v) for v in self.unresolved],
                "rank_zero_criterion": RANK_ZERO_CRITERION}


# -------------------------------- sampling ---------------------------------- #

def weyl_bound(dH):
    '''Per node sqrt(sum_i |d_i H|^2), bounding the eigenvalue gradients.'''

    return np.sqrt(np.sum(operator_norm(dH) ** 2, axis=0))


def sample_sigma(fam, grid, interval, cluster_tol=1e-8, model=None):
    '''
    All eigenvalue clusters of H(k), k on the grid, with mean in
    ``interval``.

    The gradient of a cluster mean is the Hellmann-Feynman average
    (1/mu) sum_a <v_a, dH v_a> over the cluster.
    '''

    if model is None:
        model = SampledModel(fam, grid)

    if fam.dimension != grid.dimension:
        raise ValueError("family and grid dimensions differ")

    evals, vecs = batch_eigh(model.H)
    n, mu = evals.shape
    labels = cluster_labels(evals, cluster_tol)
    slots = (labels + (np.arange(n) * mu)[:, None]).ravel()

    counts = np.bincount(slots, minlength=n * mu)
    sums = np.bincount(slots, weights=evals.ravel(), minlength=n * mu)
    hf = np.einsum("nia,dnij,nja->dna", np.conj(vecs), model.dH, vecs).real
    gsums = np.stack([np.bincount(slots, weights=hf[a].ravel(),
                                  minlength=n * mu)
                      for a in range(grid.dimension)])

    ids = np.flatnonzero(counts)
    means = sums[ids] / counts[ids]
    lo, hi = interval
    ids = ids[(means > lo) & (means < hi)]

    sample = SigmaSample(grid=grid, interval=tuple(interval),
                         nodes=ids // mu,
                         values=sums[ids] / counts[ids],
                         multiplicities=counts[ids].astype(int),
                         gradients=gsums[:, ids] / counts[ids][None, :],
                         lip=float(np.max(weyl_bound(model.dH))),
                         cluster_tol=cluster_tol)

    L.info("sampled %i Sigma triples in %s" % (len(sample), str(interval)))

    return sample


# --------------------------------- strata ----------------------------------- #

def _slot_table(sample):
    '''(N, mu_max) table of triple indices per node, -1 padded.'''

    grid = sample.grid
    starts = np.searchsorted(sample.nodes, np.arange(grid.size))
    stops = np.searchsorted(sample.nodes, np.arange(grid.size), side="right")
    width = int(np.max(stops - starts, initial=0))

    table = np.full((grid.size, max(width, 1)), -1, dtype=int)
    for j in range(width):
        has = stops - starts > j
        table[has, j] = starts[has] + j

    return table


def _match_edges(sample, axis, cap):
    '''Mutually best matched triple pairs between nodes and their +1 neighbours.'''

    grid = sample.grid
    table = _slot_table(sample)
    shifted = grid.shifted_indices(axis, 1)
    valid_nodes = np.flatnonzero(shifted >= 0)

    left = table[valid_nodes]
    right = table[shifted[valid_nodes]]
    ok = (left[:, :, None] >= 0) & (right[:, None, :] >= 0)

    li = np.where(left >= 0, left, 0)
    ri = np.where(right >= 0, right, 0)

    step = grid.h[axis]
    predicted = sample.values[li][:, :, None] + 0.5 * step * (
        sample.gradients[axis][li][:, :, None] +
        sample.gradients[axis][ri][:, None, :])
    mismatch = np.abs(sample.values[ri][:, None, :] - predicted)

    same_mult = sample.multiplicities[li][:, :, None] == \
        sample.multiplicities[ri][:, None, :]
    mismatch = np.where(ok & same_mult, mismatch, np.inf)

    best_right = np.argmin(mismatch, axis=2)
    best_left = np.argmin(mismatch, axis=1)

    rows, cols = [], []
    width = left.shape[1]
    for j in range(width):
        k = best_right[:, j]
        e = mismatch[np.arange(len(valid_nodes)), j, k]
        mutual = best_left[np.arange(len(valid_nodes)), k] == j
        keep = mutual & (e < cap)
        rows.append(li[keep, j])
        cols.append(ri[np.flatnonzero(keep), k[keep]])

    return np.concatenate(rows), np.concatenate(cols)


def _periodic_offsets(grid, diff):

    if not grid.periodic:
        return diff

    periods = np.array([hi - lo for lo, hi in grid.spec.bounds])

    return diff - periods * np.rint(diff / periods)


def _member_tree(grid, points):
    '''KD-tree over ``points`` (wrapped on the torus) and the wrap map.'''

    if not grid.periodic:
        return cKDTree(points), lambda x: x

    lows = np.array([lo for lo, _ in grid.spec.bounds])
    periods = np.array([hi - lo for lo, hi in grid.spec.bounds])

    def wrap(x):
        return np.mod(x - lows, periods)

    return cKDTree(wrap(points), boxsize=periods), wrap


def _local_frames(grid, points, radius, floor):
    '''
    Local principal-component frames at every point.

    Returns:
        dims: (n,) local dimensions.
        frames: (n, d, d) principal directions, largest first.
    '''

    d = grid.dimension
    tree, wrap = _member_tree(grid, points)

    dims = np.zeros(len(points), dtype=int)
    frames = np.tile(np.eye(d), (len(points), 1, 1))

    for i, neighbours in enumerate(tree.query_ball_point(wrap(points),
                                                         radius)):
        if len(neighbours) < 2:
            continue
        diff = _periodic_offsets(grid, points[neighbours] - points[i])
        diff = diff - diff.mean(axis=0)
        _, spread, axes = np.linalg.svd(diff / np.sqrt(len(neighbours)),
                                        full_matrices=True)
        dims[i] = int(np.sum(spread > floor))
        frames[i] = axes

    return dims, frames


def extract_strata(sample, lip=None, radius_factor=3.0, floor_factor=0.1):
    '''
    Connected components of constant multiplicity.

    Args:
        sample: A :class:`SigmaSample`.
        lip: Merge cap per unit step (default: the sample's Weyl bound).
        radius_factor: PCA neighbourhood radius in units of h.
        floor_factor: Principal spreads below floor_factor * h are ignored.
    '''

    if len(sample) == 0:
        return []

    grid = sample.grid
    h = grid.hmax
    cap = (sample.lip if lip is None else lip) * h

    rows, cols = [], []
    for axis in range(grid.dimension):
        r, c = _match_edges(sample, axis, cap)
        rows.append(r)
        cols.append(c)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)

    graph = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)),
                              shape=(len(sample), len(sample)))
    count, labels = connected_components(graph, directed=False)

    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(count + 1))

    strata = []
    for label in range(count):
        members = np.sort(order[bounds[label]:bounds[label + 1]])
        nodes = sample.nodes[members]
        mult = int(sample.multiplicities[members[0]])

        if mult == 1:
            dimension = grid.dimension
            frames = np.tile(np.eye(grid.dimension), (len(members), 1, 1))
        else:
            dims, frames = _local_frames(grid, grid.points[nodes],
                                         radius_factor * h,
                                         floor_factor * h)
            dimension = int(np.max(dims, initial=0))

        strata.append(Stratum(grid=grid, id=len(strata), members=members,
                              nodes=nodes,
                              values=sample.values[members],
                              gradients=sample.gradients[:, members],
                              multiplicity=mult, dimension=dimension,
                              tangents=frames))

    L.info("extracted %i strata from %i triples" % (len(strata), len(sample)))

    return strata


def restrict_strata(strata, keep):
    '''
    The strata cut down to the kept triples of their sample.

    Args:
        strata: Output of :func:`extract_strata`.
        keep: Boolean mask over the sample triples.

    Returns:
        The non-empty restricted strata, renumbered, and the map from old
        to new stratum ids.
    '''

    position = np.cumsum(keep) - 1
    kept, renumber = [], {}

    for stratum in strata:
        inside = keep[stratum.members]
        if not inside.any():
            continue
        renumber[stratum.id] = len(kept)
        kept.append(replace(stratum, id=len(kept),
                            members=position[stratum.members[inside]],
                            nodes=stratum.nodes[inside],
                            values=stratum.values[inside],
                            gradients=stratum.gradients[:, inside],
                            tangents=stratum.tangents[inside],
                            rank_zero=False))

    return kept, renumber


# ------------------------------- thresholds --------------------------------- #

def _tangential_components(stratum, frames, which):
    '''Gradients at ``which`` in the tangent frames ``frames``.'''

    tangent = frames[:, :stratum.dimension, :]

    return np.einsum("ntd,dn->nt", tangent, stratum.gradients[:, which])


def _critical_members(stratum, tol, radius):
    '''
    Members where the energy is critical along the stratum: the tangential
    gradient is below ``tol`` and each of its components takes both signs
    on the members within ``radius``, read in the candidate's frame.

    Returns:
        (indices, norms, lips): the critical members, the tangential
        gradient norms of all members and, per critical member, the
        largest gradient norm within ``radius``.
    '''

    everyone = np.arange(len(stratum))
    norms = np.linalg.norm(
        _tangential_components(stratum, stratum.tangents, everyone), axis=1)
    candidates = np.flatnonzero(norms < tol)
    if len(candidates) == 0:
        return candidates, norms, np.zeros(0)

    points = stratum.grid.points[stratum.nodes]
    tree, wrap = _member_tree(stratum.grid, points)

    critical, lips = [], []
    for i in candidates:
        around = np.array(tree.query_ball_point(wrap(points[i]), radius))
        frame = np.repeat(stratum.tangents[i][None], len(around), axis=0)
        comps = _tangential_components(stratum, frame, around)
        if np.all(comps.min(axis=0) <= 0.0) and \
                np.all(comps.max(axis=0) >= 0.0):
            critical.append(i)
            lips.append(float(np.max(np.linalg.norm(
                stratum.gradients[:, around], axis=0))))

    return np.array(critical, dtype=int), norms, np.array(lips)


def _flagged_patches(grid, nodes):
    '''Grid-connected groups among ``nodes`` (index lists into ``nodes``).'''

    position = np.full(grid.size, -1, dtype=int)
    position[nodes] = np.arange(len(nodes))

    rows, cols = [], []
    for axis in range(grid.dimension):
        nbr = grid.shifted_indices(axis, 1)[nodes]
        ok = nbr >= 0
        other = np.where(ok, position[np.where(ok, nbr, 0)], -1)
        keep = other >= 0
        rows.append(np.flatnonzero(keep))
        cols.append(other[keep])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)),
                              shape=(len(nodes), len(nodes)))
    count, labels = connected_components(graph, directed=False)

    return [np.flatnonzero(labels == c) for c in range(count)]


def detect_thresholds(fam, strata, grad_tol=None):
    '''
    Critical values of the energy along the strata.

    Simple strata use the full gradient of the eigenvalue, higher
    multiplicity strata the tangential gradient of the mean eigenvalue. A
    member is critical when that gradient is below ``grad_tol`` and each of
    its components changes sign among the stratum members within 1.5h.
    Each grid-connected patch of critical members contributes the value at
    its smallest gradient. Values closer than 2 h Lip are merged, Lip being
    the local Lipschitz constant of the energy at the contributing nodes:
    the largest sampled gradient within 1.5h, capped by the Weyl bound of
    grad H there.

    Higher-multiplicity components met at a single node are collected as
    unresolved instead.

    Args:
        fam: The matrix family (its derivatives give the merge scale).
        strata: Output of :func:`extract_strata`.
        grad_tol: Gradient threshold, default 10 h.
    '''

    if not strata:
        return ThresholdSet(np.zeros(0), (), (), 0.0)

    found = []
    flagged_strata = set()

    grid = strata[0].grid
    tol = 10.0 * grid.hmax if grad_tol is None else grad_tol

    unresolved = [float(s.values[0]) for s in strata if not s.resolved]
    if unresolved:
        L.warning("%i unresolved crossings at %s: the grid meets them at "
                  "single nodes" % (len(unresolved),
                                    str([round(v, 6) for v in unresolved])))

    for stratum in strata:
        if not stratum.resolved:
            continue
        flagged, norms, lips = _critical_members(stratum, tol,
                                                 1.5 * grid.hmax)
        if len(flagged) == 0:
            continue

        flagged_strata.add(stratum.id)
        for patch in _flagged_patches(grid, stratum.nodes[flagged]):
            pick = patch[np.argmin(norms[flagged][patch])]
            best = flagged[pick]
            found.append((float(stratum.values[best]), stratum.id,
                          int(stratum.nodes[best]), lips[pick]))

    if not found:
        return ThresholdSet(np.zeros(0), (), (), 0.0, tuple(unresolved))

    points = grid.points[np.array([f[2] for f in found])]
    dH = np.stack([fam.derivative(a).evaluate(points)
                   for a in range(fam.dimension)])
    weyl = weyl_bound(dH)
    scales = [2.0 * grid.hmax * min(f[3], w) for f, w in zip(found, weyl)]

    found = sorted(zip(found, scales))
    values, origins, where, reach = [], [], [], []
    for (value, sid, node, _), scale in found:
        if values and value - values[-1] <= max(reach[-1], scale):
            origins[-1].add(sid)
            where[-1].add(node)
            reach[-1] = max(reach[-1], scale)
            continue
        values.append(value)
        origins.append({sid})
        where.append({node})
        reach.append(scale)
    merge = max(reach)

    result = ThresholdSet(np.array(values),
                          tuple(tuple(sorted(o)) for o in origins),
                          tuple(tuple(sorted(w)) for w in where),
                          merge, tuple(unresolved))

    for stratum in strata:
        stratum.rank_zero = stratum.id in flagged_strata

    L.info("thresholds: %s" % str([round(v, 6) for v in values]))

    return result


def stratify(fam, grid, interval, cluster_tol=1e-8, grad_tol=None,
             model=None, pad=None):
    '''
    Sample, extract and detect in one call.

    The variety is sampled over ``interval`` widened by ``pad`` (default
    4 h Lip) so that strata crossing a thin band are seen as whole
    sheets; sample, strata and thresholds are then cut back to
    ``interval``.
    '''

    if model is None:
        model = SampledModel(fam, grid)

    if pad is None:
        pad = PAD_FACTOR * grid.hmax * float(np.max(weyl_bound(model.dH)))

    lo, hi = interval
    wide = sample_sigma(fam, grid, (lo - pad, hi + pad), cluster_tol,
                        model=model)
    strata = extract_strata(wide)
    thresholds = detect_thresholds(fam, strata, grad_tol)

    sample, keep = wide.restrict(interval)
    strata, renumber = restrict_strata(strata, keep)
    thresholds = thresholds.restrict(interval, renumber)

    critical = {s for o in thresholds.origins for s in o}
    for stratum in strata:
        stratum.rank_zero = stratum.id in critical

    return sample, strata, thresholds
