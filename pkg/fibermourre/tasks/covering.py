'''
covering.py
===========

Overview
--------

The finite covering of the energy shell over I by cylinders
omega_m x J_{m,n}, its partitions of unity and the incidence combinatorics
of overlapping spectral windows.

Greedy coverings (any model)
    K_I is the set of nodes with an eigenvalue in the closed interval I.
    The first uncovered node k0 receives a ball whose radius is halved
    from the initial value until the ball passes every check:

    * each window J keeps the same number of eigenvalues at every ball
      node, all of them inside the inner window J' (constant rank),
    * every eigenvalue in I at a ball node lies in some window, and the
      strata it meets have multiplicity at most the window rank,
    * the escape field of every window is defined (no flat direction) and
      X . dH~ >= 1/2 on the block,
    * windows of overlapping balls are nested wherever their product does
      not vanish.

    Windows are built from the eigenvalue clusters of H(k0) in I; when no
    radius works with the finest grouping, the closest neighbouring
    clusters are merged and the radius search starts over. A node counts
    as covered once it lies within half the bump support of a ball.

Prescribed coverings
    The strip / half-plane covering of example 2 with the profiles of
    :mod:`fibermourre.tasks.oracle`.

Class and method documentation
------------------------------

'''

import sys
import logging
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from fibermourre.tasks import profiles
from fibermourre.tasks import oracle
from fibermourre.tasks.conjugate import escape_field, reduced_block
from fibermourre.tasks.errors import AbsorptionViolation, BoundaryCollision, \
    CoverageGap, FiberMourreError, NoConvergence, PartitionGap, \
    ThresholdInInterval, UnsupportedModel
from fibermourre.tasks.spectral import cluster_labels, interval_membership

# ------------------------------ Set up logging ------------------------------ #

L = logging.getLogger(__name__)
log_handler = logging.StreamHandler(sys.stdout)
log_handler.setFormatter(
    logging.Formatter('%(asctime)s @tasks.covering: %(message)s'))
log_handler.setLevel(logging.INFO)
L.addHandler(log_handler)
L.setLevel(logging.INFO)


KAPPA = 0.75
POSITIVITY_FLOOR = 0.5 - 1e-8


# ---------------------------------- types ----------------------------------- #

@dataclass(frozen=True)
class Window:
    '''
    A spectral window of a ball: either an interval J with its inner
    interval J' or, for prescribed coverings, a fixed set of eigenvalue
    indices (in ascending order).
    '''

    rank: int
    interval: tuple = None
    inner: tuple = None
    indices: tuple = None
    strata: tuple = ()

    def membership(self, evals, cluster_tol=1e-8, nodes=None):
        '''Boolean (n, mu) selection of the eigenvalues in the window.'''

        evals = np.atleast_2d(evals)

        if self.indices is not None:
            mask = np.zeros(evals.shape, dtype=bool)
            mask[:, list(self.indices)] = True
            return mask

        return interval_membership(evals, self.interval, cluster_tol, nodes)

    def chi(self, lam):
        '''Cutoff equal to 1 on J' and supported in J (None if indexed).'''

        if self.interval is None:
            return None

        lo, hi = self.interval
        inner_lo, inner_hi = self.inner

        return profiles.plateau(lam, lo, inner_lo, inner_hi, hi)

    def to_dict(self):

        out = {"rank": int(self.rank),
               "strata": [int(s) for s in self.strata]}
        if self.interval is not None:
            out["interval"] = [float(v) for v in self.interval]
            out["inner"] = [float(v) for v in self.inner]
        else:
            out["indices"] = [int(i) for i in self.indices]

        return out


@dataclass
class Patch:
    '''
    One ball omega_m: its (sorted) grid nodes, windows and the window
    masks at those nodes.
    '''

    index: int
    nodes: np.ndarray
    windows: list
    masks: list
    center: int = None
    point: tuple = None
    radius: float = None

    def positions(self, nodes):
        '''Positions of ``nodes`` (all members of the patch) in the patch.'''

        return np.searchsorted(self.nodes, nodes)

    def to_dict(self):

        return {"index": int(self.index),
                "center": None if self.point is None else
                [float(x) for x in self.point],
                "radius": None if self.radius is None else float(self.radius),
                "nodes": int(len(self.nodes)),
                "windows": [w.to_dict() for w in self.windows]}


@dataclass
class Covering:
    '''
    Balls and windows covering the energy shell over ``interval``.

    Attributes:
        grid: The grid.
        interval: I.
        outer: The threshold-free interval I~ containing I.
        patches: The balls, in placement order.
        kernel: Flat indices of the nodes of K_I.
        kind: "greedy" or "prescribed".
        kappa: Bump support as a fraction of the radius.
    '''

    grid: object
    interval: tuple
    outer: tuple
    patches: list
    kernel: np.ndarray
    kind: str = "greedy"
    kappa: float = KAPPA

    def __len__(self):
        return len(self.patches)

    def windows(self):
        '''All (m, n, window) triples.'''

        return [(p.index, n, w) for p in self.patches
                for n, w in enumerate(p.windows)]

    def shared(self, m, mp):
        '''Common nodes of two patches and their positions in each.'''

        return np.intersect1d(self.patches[m].nodes, self.patches[mp].nodes,
                              assume_unique=True, return_indices=True)

    def overlaps(self, m):
        '''Indices of the other patches sharing nodes with patch m.'''

        return [p.index for p in self.patches if p.index != m and
                len(self.shared(m, p.index)[0]) > 0]

    def span(self):
        '''Smallest and largest window bound (None if any is indexed).'''

        bounds = [w.interval for _, _, w in self.windows()]
        if not bounds or any(b is None for b in bounds):
            return None

        return min(b[0] for b in bounds), max(b[1] for b in bounds)

    def to_dict(self):

        return {"kind": self.kind,
                "interval": [float(v) for v in self.interval],
                "outer": [float(v) for v in self.outer],
                "kappa": float(self.kappa),
                "kernel_nodes": int(len(self.kernel)),
                "patches": [p.to_dict() for p in self.patches]}


class _Rejected(Exception):
    pass


# ------------------------------- geometry ----------------------------------- #

def displacement(grid, point):
    '''(N, d) displacement of every node from ``point`` (wrapped on a torus).'''

    diff = grid.points - np.asarray(point, dtype=float)[None, :]

    if grid.periodic:
        periods = np.array([hi - lo for lo, hi in grid.spec.bounds])
        diff = diff - periods * np.rint(diff / periods)

    return diff


class _BallIndex:
    '''Grid nodes strictly inside a ball (periodic on a torus).'''

    def __init__(self, grid):

        self.grid = grid
        self.lows = np.array([lo for lo, _ in grid.spec.bounds])
        if grid.periodic:
            self.periods = np.array([hi - lo for lo, hi in grid.spec.bounds])
            self.tree = cKDTree((grid.points - self.lows) % self.periods,
                                boxsize=self.periods)
        else:
            self.periods = None
            self.tree = cKDTree(grid.points - self.lows)

    def query(self, point, radius, diff):

        local = np.asarray(point) - self.lows
        if self.periods is not None:
            local = local % self.periods

        nodes = np.array(sorted(self.tree.query_ball_point(local, radius)),
                         dtype=int)
        dist = np.linalg.norm(diff[nodes], axis=1) if len(nodes) else \
            np.zeros(0)

        return nodes[dist < radius]


def kernel_nodes(field, interval, region=None):
    '''
    Nodes with an eigenvalue in the closed interval, optionally restricted
    to a box ``region`` (one ``(lo, hi)`` per axis).
    '''

    lo, hi = interval
    tol = field.cluster_tol
    inside = np.any((field.evals >= lo - tol) & (field.evals <= hi + tol),
                    axis=1)

    if region is not None:
        points = field.grid.points
        for axis, (a, b) in enumerate(region):
            inside &= (points[:, axis] >= a) & (points[:, axis] <= b)

    return np.flatnonzero(inside)


# ---------------------------- greedy placement ------------------------------ #

def _groupings(count, means):
    '''
    Contiguous groupings of ``count`` sorted clusters, finest first, each
    next one merging the closest adjacent pair.
    '''

    groups = [[i] for i in range(count)]
    out = [[tuple(g) for g in groups]]

    while len(groups) > 1:
        gaps = [means[b[0]] - means[a[-1]]
                for a, b in zip(groups[:-1], groups[1:])]
        j = int(np.argmin(gaps))
        groups = groups[:j] + [groups[j] + groups[j + 1]] + groups[j + 2:]
        out.append([tuple(g) for g in groups])

    return out


def _propose_windows(evals0, labels, clusters, grouping, interval, outer,
                     tol):
    '''
    Windows around the groups of clusters that meet the closed interval,
    or None when one of them cannot fit inside ``outer``. Each side of a
    window reaches halfway to the next eigenvalue or up to ``outer``,
    whichever is closer; the inner window reaches half as far.
    '''

    lo, hi = interval
    windows = []

    for group in grouping:
        ids = [clusters[i] for i in group]
        slots = np.isin(labels, ids)
        values = evals0[slots]
        if not np.any((values >= lo - tol) & (values <= hi + tol)):
            continue

        bottom, top = float(values.min()), float(values.max())
        rest = evals0[~slots]
        below = rest[rest < bottom]
        above = rest[rest > top]

        reach_lo = (bottom - outer[0]) - tol
        reach_hi = (outer[1] - top) - tol
        if len(below):
            reach_lo = min(reach_lo, 0.5 * (bottom - below.max()))
        if len(above):
            reach_hi = min(reach_hi, 0.5 * (above.min() - top))
        if reach_lo <= 0 or reach_hi <= 0:
            return None

        windows.append(Window(int(slots.sum()),
                              (bottom - reach_lo, top + reach_hi),
                              (bottom - 0.5 * reach_lo, top + 0.5 * reach_hi)))

    return windows


class _StrataIndex:
    '''Flat view of the strata triples for ball checks.'''

    def __init__(self, strata):

        if not strata:
            self.nodes = np.zeros(0, dtype=int)
            self.values = np.zeros(0)
            self.ids = np.zeros(0, dtype=int)
            self.multiplicities = np.zeros(0, dtype=int)
            return

        self.nodes = np.concatenate([s.nodes for s in strata])
        self.values = np.concatenate([s.values for s in strata])
        self.ids = np.concatenate([np.full(len(s), s.id) for s in strata])
        self.multiplicities = np.concatenate(
            [np.full(len(s), s.multiplicity) for s in strata])

    def meeting(self, nodes, J):

        lo, hi = J
        sel = np.isin(self.nodes, nodes) & (self.values > lo) & \
            (self.values < hi)

        return np.unique(self.ids[sel]), \
            int(np.max(self.multiplicities[sel], initial=0))


def _nested(a, b):
    '''Per node: a within b, b within a (boolean masks of equal shape).'''

    return np.all(~a | b, axis=1), np.all(~b | a, axis=1)


def _check_ball(field, nodes, windows, interval, strata, grad_floor):
    '''Checks (a)-(c) of a candidate ball; returns masks and windows.'''

    evals = field.evals[nodes]
    tol = field.cluster_tol
    masks, accepted = [], []

    for window in windows:
        try:
            mask = window.membership(evals, tol, nodes)
            inner = interval_membership(evals, window.inner, tol, nodes)
        except BoundaryCollision:
            raise _Rejected("window edge collision")

        if not np.array_equal(mask, inner):
            raise _Rejected("eigenvalue between J' and J")
        if np.any(mask.sum(axis=1) != window.rank):
            raise _Rejected("rank changes over the ball")

        ids, multiplicity = strata.meeting(nodes, window.interval)
        if multiplicity > window.rank:
            raise _Rejected("stratum multiplicity above window rank")

        try:
            vf = escape_field(reduced_block(field, mask, nodes),
                              grad_floor=grad_floor,
                              hessian=field.mean_hessian(mask, nodes))
        except FiberMourreError as err:
            raise _Rejected(str(err))

        if np.min(vf.positivity) < POSITIVITY_FLOOR:
            raise _Rejected("escape positivity below 1/2")

        masks.append(mask)
        accepted.append(Window(window.rank, window.interval, window.inner,
                               strata=tuple(int(i) for i in ids)))

    lo, hi = interval
    in_interval = (evals >= lo - tol) & (evals <= hi + tol)
    union = np.any(np.stack(masks), axis=0) if masks else \
        np.zeros_like(in_interval)
    if np.any(in_interval & ~union):
        raise _Rejected("eigenvalue in I outside every window")

    return masks, accepted


def _check_neighbours(patches, diff, radius, nodes, masks):
    '''Check (d): windows of overlapping balls nest wherever they meet.'''

    for patch in patches:
        gap = np.linalg.norm(diff[patch.center])
        if gap >= radius + patch.radius:
            continue

        common, i, j = np.intersect1d(nodes, patch.nodes, assume_unique=True,
                                      return_indices=True)
        if len(common) == 0:
            continue

        for mask in masks:
            for other in patch.masks:
                a, b = mask[i], other[j]
                meet = np.any(a & b, axis=1)
                if not np.any(meet):
                    continue
                inside, outside = _nested(a[meet], b[meet])
                if not np.all(inside | outside):
                    raise _Rejected("windows cross on an overlap")
                if np.any(inside & ~outside) and np.any(outside & ~inside):
                    raise _Rejected("window nesting flips on an overlap")


def build_covering(field, interval, outer, thresholds=None, strata=None,
                   initial_radius=None, min_radius=None, max_halvings=20,
                   kappa=KAPPA, region=None, grad_floor=0.1):
    '''
    Greedy covering of the energy shell over ``interval``.

    Args:
        field: :class:`fibermourre.tasks.spectral.SpectralField`.
        interval: I.
        outer: I~, threshold free, containing the closure of I.
        thresholds: Optional :class:`ThresholdSet`; any value in I~ aborts.
        strata: Optional strata (sampled over I~) for the multiplicity check.
        initial_radius: First ball radius, default a quarter of the
            shortest box side.
        min_radius: Smallest admissible radius, default the grid spacing.
        max_halvings: Number of radius halvings before giving up.
        kappa: Bump support radius as a fraction of the ball radius.
        region: Optional box restricting K_I.
        grad_floor: Smallest admissible mean-eigenvalue gradient.

    Raises:
        ThresholdInInterval: a threshold lies in I~.
        NoConvergence: no admissible ball at some node of K_I.
    '''

    lo, hi = interval
    if not (outer[0] < lo and hi < outer[1]):
        raise ValueError("the closure of I must lie inside I~")

    if thresholds is not None:
        inside = thresholds.within(outer)
        if inside:
            raise ThresholdInInterval(
                "thresholds " + str(inside) + " lie in " + str(tuple(outer)),
                values=inside)

    grid = field.grid
    extent = min(b - a for a, b in grid.spec.bounds)
    radius0 = 0.25 * extent if initial_radius is None else initial_radius
    floor = grid.hmax if min_radius is None else min_radius

    kernel = kernel_nodes(field, interval, region)
    index = _StrataIndex(strata)
    balls = _BallIndex(grid)
    tol = field.cluster_tol

    covered = np.zeros(grid.size, dtype=bool)
    patches = []

    for k0 in kernel:
        if covered[k0]:
            continue

        point = grid.points[k0]
        evals0 = field.evals[k0]
        labels = cluster_labels(evals0[None], tol)[0]
        count = labels.max() + 1
        means = np.array([evals0[labels == c].mean() for c in range(count)])
        clusters = [c for c in range(count)
                    if outer[0] < means[c] < outer[1]]
        groupings = _groupings(len(clusters), means[clusters])
        diff = displacement(grid, point)

        placed = None
        radius = radius0
        if not grid.periodic:
            # bump supports stay clear of the box edge by the stencil width
            room = min(min(x - a, b - x)
                       for x, (a, b) in zip(point, grid.spec.bounds))
            radius = min(radius, (room - 3.0 * grid.hmax) / kappa)
        for level in range(max_halvings + 1):
            if radius < floor:
                break

            nodes = balls.query(point, radius, diff)

            for grouping in groupings:
                windows = _propose_windows(evals0, labels, clusters,
                                           grouping, interval, outer, tol)
                if windows is None:
                    continue
                try:
                    masks, windows = _check_ball(field, nodes, windows,
                                                 interval, index, grad_floor)
                    _check_neighbours(patches, diff, radius, nodes, masks)
                except _Rejected as reason:
                    L.debug("node %i radius %g: %s" % (k0, radius, reason))
                    continue
                placed = Patch(len(patches), nodes, windows, masks,
                               int(k0), tuple(float(x) for x in point),
                               float(radius))
                break

            if placed is not None:
                break
            radius *= 0.5

        if placed is None:
            raise NoConvergence(
                "no admissible ball at node " + str(int(k0)) + " " +
                str(tuple(float(x) for x in point)),
                node=int(k0), point=tuple(float(x) for x in point))

        patches.append(placed)
        covered |= np.linalg.norm(diff, axis=1) <= 0.5 * kappa * placed.radius

    L.info("covering of %s: %i balls over %i nodes of K_I" %
           (str(tuple(interval)), len(patches), len(kernel)))

    return Covering(grid, tuple(interval), tuple(outer), patches, kernel,
                    "greedy", kappa)


def build_prescribed_covering(name, field, interval, outer=None):
    '''
    The closed-form covering of a worked example: for example 2 a strip
    |k1| < 1/2 carrying the rank 2 window of both eigenvalues and the two
    half planes k1 > 0, k1 < 0 carrying one window per eigenvalue.

    K_I is restricted to the plateau of the envelope, where the bumps form
    an exact partition of unity.
    '''

    if name != "example2":
        raise UnsupportedModel("no prescribed covering for " + str(name),
                               model=name)

    grid = field.grid
    k1 = grid.points[:, 0]
    plateau = oracle.PROFILES.envelope_plateau
    region = [(-plateau, plateau)] * grid.dimension
    outer = (-np.inf, np.inf) if outer is None else tuple(outer)

    layout = [(np.flatnonzero(np.abs(k1) < 0.5), [(0, 1)]),
              (np.flatnonzero(k1 > 0), [(1,), (0,)]),
              (np.flatnonzero(k1 < 0), [(1,), (0,)])]

    patches = []
    for m, (nodes, indices) in enumerate(layout):
        windows = [Window(len(ix), indices=ix) for ix in indices]
        masks = [field.membership(w, nodes) for w in windows]
        patches.append(Patch(m, nodes, windows, masks))

    return Covering(grid, tuple(interval), outer, patches,
                    kernel_nodes(field, interval, region), "prescribed",
                    KAPPA)


# ---------------------------------- bumps ----------------------------------- #

@dataclass(frozen=True)
class BumpSystem:
    '''
    Partition of unity g_m and halo profiles zeta_m (equal to 1 on supp g_m,
    supported in omega_m) over the whole grid.

    Attributes:
        values: (M, N) bumps g_m.
        gradients: (M, d, N) their exact gradients.
        halos: (M, N) halo profiles.
        halo_gradients: (M, d, N).
        certified: (N,) nodes where sum g^2 = 1 holds by construction.
        profile: Description of the profiles used.
    '''

    covering: Covering
    values: np.ndarray
    gradients: np.ndarray
    halos: np.ndarray
    halo_gradients: np.ndarray
    certified: np.ndarray
    profile: str

    def partition_defect(self):
        '''max |sum_m g_m^2 - 1| over K_I.'''

        kernel = self.covering.kernel
        if len(kernel) == 0:
            return 0.0

        total = np.sum(self.values[:, kernel] ** 2, axis=0)

        return float(np.max(np.abs(total - 1.0)))

    def chi(self, m, n, lam):
        return self.covering.patches[m].windows[n].chi(lam)

    def window_partition_defect(self, field):
        '''
        max |sum_{m,n} g_m^2 chi_{m,n}(lambda)^2 - 1| over the eigenvalues
        in the closed interval at nodes of K_I, or None for indexed windows.
        '''

        covering = self.covering
        if covering.span() is None:
            return None

        kernel = covering.kernel
        if len(kernel) == 0:
            return 0.0

        evals = field.evals[kernel]
        total = np.zeros_like(evals)
        for m, n, window in covering.windows():
            total += (self.values[m, kernel] ** 2)[:, None] * \
                window.chi(evals) ** 2

        lo, hi = covering.interval
        tol = field.cluster_tol
        inside = (evals >= lo - tol) & (evals <= hi + tol)

        return float(np.max(np.abs(total[inside] - 1.0), initial=0.0))


def build_bumps(covering, eta=1e-2, gap_floor=1e-8):
    '''
    Bumps of a covering.

    Greedy coverings use the mollifier phi_m of radius kappa eps_m and
    g_m = phi_m / sqrt(Phi + 1 - s(Phi / eta)), Phi = sum phi^2, which is
    phi_m / sqrt(Phi) wherever Phi >= eta. Halos are radial steps from
    0.8 eps_m to 0.95 eps_m.

    Raises:
        CoverageGap: Phi < ``gap_floor`` at a node of K_I.
    '''

    grid = covering.grid

    if covering.kind == "prescribed":
        values, gradients = oracle.PROFILES.bumps(grid.points)
        halos, halo_gradients = oracle.PROFILES.halos(grid.points)
        rho, _ = oracle.PROFILES.envelope(grid.points)
        return BumpSystem(covering, values, gradients, halos, halo_gradients,
                          rho >= 1.0 - 1e-15,
                          "example2 closed-form profiles")

    d = grid.dimension
    M = len(covering)
    phi = np.zeros((M, grid.size))
    dphi = np.zeros((M, d, grid.size))
    halos = np.zeros((M, grid.size))
    dhalos = np.zeros((M, d, grid.size))
    origin = np.zeros(d)

    for patch in covering.patches:
        diff = displacement(grid, patch.point)
        phi[patch.index], dphi[patch.index] = profiles.mollifier(
            diff, origin, covering.kappa * patch.radius)
        halos[patch.index], dhalos[patch.index] = profiles.radial_step(
            diff, origin, 0.8 * patch.radius, 0.95 * patch.radius)

    total = np.sum(phi ** 2, axis=0)
    kernel = covering.kernel
    if len(kernel) and np.min(total[kernel]) < gap_floor:
        node = int(kernel[np.argmin(total[kernel])])
        raise CoverageGap("bumps vanish at node " + str(node) +
                          " of K_I", node=node)

    dtotal = 2.0 * np.sum(phi[:, None] * dphi, axis=0)
    q = total + 1.0 - profiles.step(total / eta)
    dq = dtotal * (1.0 - profiles.step_derivative(total / eta) / eta)[None]

    values = phi / np.sqrt(q)[None]
    gradients = dphi / np.sqrt(q)[None, None] - \
        0.5 * (phi * q[None] ** -1.5)[:, None] * dq[None]

    return BumpSystem(covering, values, gradients, halos, dhalos,
                      total >= eta,
                      "mollifier exp(-1/(1-t^2)), t = |k - k_m| / (%g eps_m), "
                      "eta = %g" % (covering.kappa, eta))


# -------------------------------- incidence --------------------------------- #

@dataclass(frozen=True)
class Incidence:
    '''
    One intersecting pair of windows. ``relation`` is "same", "<" when
    the first window is the larger projector (it sits on the lower
    dimensional stratum) and ">" for the converse.
    '''

    first: tuple
    second: tuple
    relation: str
    nodes: int


@dataclass(frozen=True)
class IncidenceData:
    '''Pairwise classification and per-node orderings of window families.'''

    pairs: tuple
    orderings: tuple

    def relation(self, a, b):
        '''"<", ">", "same" or None for windows a = (m, n), b = (m', n').'''

        flip = {"<": ">", ">": "<", "same": "same"}
        for item in self.pairs:
            if item.first == a and item.second == b:
                return item.relation
            if item.first == b and item.second == a:
                return flip[item.relation]

        return None

    def to_rows(self):

        return [{"m": p.first[0], "n": p.first[1], "m_prime": p.second[0],
                 "n_prime": p.second[1], "relation": p.relation,
                 "nodes": p.nodes} for p in self.pairs]


def classify_incidence(covering, field, tol=1e-10):
    '''
    Classify every intersecting pair of windows and order the window
    families met at each node.

    On the nodes where the product of two window projectors does not
    vanish one mask must contain the other, the same way round at every
    node; the absorption identity P_big P_small = P_small is then checked
    on the projectors.

    Raises:
        AbsorptionViolation: crossing windows, naming the node and pair.
    '''

    pairs = []
    patches = covering.patches

    for m, mp in itertools.combinations(range(len(patches)), 2):
        common, i, j = covering.shared(m, mp)
        if len(common) == 0:
            continue

        for n, a_full in enumerate(patches[m].masks):
            for n_p, b_full in enumerate(patches[mp].masks):
                a, b = a_full[i], b_full[j]
                meet = np.any(a & b, axis=1)
                if not np.any(meet):
                    continue

                pair = ((m, n), (mp, n_p))
                inside, outside = _nested(a[meet], b[meet])
                crossing = ~(inside | outside)
                flips = np.any(inside & ~outside) and \
                    np.any(outside & ~inside)
                if np.any(crossing) or flips:
                    where = np.flatnonzero(crossing)
                    node = int(common[meet][where[0] if len(where) else 0])
                    raise AbsorptionViolation(
                        "windows " + str(pair) + " cross at node " +
                        str(node), node=node, pair=pair)

                shared = common[meet]
                Pa = field.projector(a[meet], shared)
                Pb = field.projector(b[meet], shared)
                if np.all(outside):
                    big, small, relation = Pa, Pb, "<"
                else:
                    big, small, relation = Pb, Pa, ">"
                if np.all(inside & outside):
                    relation = "same"

                defect = np.max(np.abs(big @ small - small), axis=(1, 2))
                if np.max(defect) > tol:
                    node = int(shared[np.argmax(defect)])
                    raise AbsorptionViolation(
                        "absorption fails for " + str(pair) + " at node " +
                        str(node), node=node, pair=pair)

                pairs.append(Incidence(pair[0], pair[1], relation,
                                       int(np.sum(meet))))

    return IncidenceData(tuple(pairs), _orderings(covering))


def _orderings(covering):
    '''
    At every node met by two or more windows: for each eigenvalue index,
    the windows containing it, by decreasing rank. Each family must be a
    chain under inclusion.
    '''

    members = {}
    for patch in covering.patches:
        for n, (window, mask) in enumerate(zip(patch.windows, patch.masks)):
            for row, node in enumerate(patch.nodes):
                members.setdefault(int(node), []).append(
                    (patch.index, n, window.rank, mask[row]))

    families = set()
    for node, entries in members.items():
        if len(entries) < 2:
            continue

        mu = len(entries[0][3])
        for a in range(mu):
            chain = sorted([e for e in entries if e[3][a]],
                           key=lambda e: (-e[2], e[0], e[1]))
            if len(chain) < 2:
                continue
            for big, small in zip(chain[:-1], chain[1:]):
                if np.any(small[3] & ~big[3]):
                    raise AbsorptionViolation(
                        "windows at node " + str(node) +
                        " are not ordered by inclusion", node=node,
                        pair=((big[0], big[1]), (small[0], small[1])))
            families.add(tuple((e[0], e[1]) for e in chain))

    return tuple(sorted(families))


# ------------------------------ theta partition ----------------------------- #

def theta_partition(covering, bumps, m, tol=1e-8):
    '''
    The partition Theta_alpha^2 over the nodes of patch m, alpha running
    over the sets of overlapping patches containing m:

        Theta_alpha^2 = prod_{m' in alpha - m} zeta_m'
                        prod_{m' not in alpha} (1 - zeta_m')

    Only the alpha that occur at some node are returned.

    Returns:
        dict frozenset -> (n_nodes,) values.

    Raises:
        PartitionGap: sum Theta^2 deviates from 1 by more than ``tol``.
    '''

    patch = covering.patches[m]
    others = covering.overlaps(m)
    zeta = bumps.halos[others][:, patch.nodes]
    n = len(patch.nodes)

    parts = {}
    for j in range(n):
        z = zeta[:, j]
        full = [others[i] for i in np.flatnonzero(z >= 1.0)]
        partial = np.flatnonzero((z > 0.0) & (z < 1.0))
        for chosen in itertools.product((True, False), repeat=len(partial)):
            weight = 1.0
            alpha = set(full)
            alpha.add(m)
            for i, take in zip(partial, chosen):
                if take:
                    weight *= z[i]
                    alpha.add(others[i])
                else:
                    weight *= 1.0 - z[i]
            key = frozenset(alpha)
            if key not in parts:
                parts[key] = np.zeros(n)
            parts[key][j] = weight

    total = np.sum(list(parts.values()), axis=0) if parts else np.zeros(n)
    gap = np.abs(total - 1.0)
    if n and np.max(gap) > tol:
        node = int(patch.nodes[np.argmax(gap)])
        raise PartitionGap("Theta partition of patch " + str(m) +
                           " misses 1 at node " + str(node), node=node,
                           patch=m, gap=float(np.max(gap)))

    return parts
