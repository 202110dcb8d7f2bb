'''
domain.py
=========

Overview
--------

The base manifold, the grids laid over it and the matrix families sampled on
those grids.

* :class:`DomainSpec` describes an axis-aligned box or a flat torus (d <= 3)
  together with the optional density weight V (dv = exp(2V) dk).
* :class:`Grid` holds the node coordinates, the spacings and the discrete
  derivative stencils ("central2", "central4").
* :class:`MatrixPolynomialFamily` is an exact hermitian matrix of polynomials
  in k. On a torus the entries may instead be trigonometric polynomials
  (``basis: fourier``), monomials being exp(i e k 2 pi / period).

Fields are stored flat: one row per node in C order of the grid axes,
followed by the fiber indices, e.g. ``(N, mu, mu)``.

Model files
-----------

A model is a key-value tree (JSON or YAML): ::

    fiber_dim: 2
    dimension: 2
    basis: monomial
    entries:
      - [ [[[0, 1], 1.0], [[1, 0], 1.0]], [[[1, 1], 1.0]] ]
      - [ [[[1, 1], 1.0]], [[[0, 1], 1.0], [[1, 0], -1.0]] ]

Each entry is a list of ``[exponents, coefficient]`` pairs; complex
coefficients are written ``[re, im]``. The builtin identifiers "example1"
and "example2" are the two worked examples.

Class and method documentation
------------------------------

'''

import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from fibermourre.tasks.errors import FiberMourreError


SCHEMES = {"central2": {1: 1.0 / 2.0},
           "central4": {1: 2.0 / 3.0, 2: -1.0 / 12.0}}


def stencil(scheme):
    '''Return the antisymmetric stencil {offset: weight} for j > 0.'''

    if scheme not in SCHEMES:
        raise ValueError("unknown difference scheme: " + str(scheme))

    return SCHEMES[scheme]


# ------------------------------ polynomials -------------------------------- #

def _coefficient(value):

    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])

    return complex(value)


@dataclass(frozen=True)
class MatrixPolynomialFamily:
    '''
    A hermitian matrix of (trigonometric) polynomials k -> H(k).

    Args:
        fiber_dim: The matrix size mu_F.
        dimension: The number of variables d.
        exponents: (M, d) integer array of monomial exponents.
        coefficients: (M, mu_F, mu_F) complex array, one matrix per monomial.
        basis: "monomial" or "fourier".
        periods: Per-axis periods, required by the fourier basis.
    '''

    fiber_dim: int
    dimension: int
    exponents: np.ndarray
    coefficients: np.ndarray
    basis: str = "monomial"
    periods: tuple = None

    def __post_init__(self):

        if self.fiber_dim < 1:
            raise ValueError("fiber_dim must be at least 1")

        if self.dimension < 1 or self.dimension > 3:
            raise ValueError("dimension must be 1, 2 or 3")

        if self.basis not in ("monomial", "fourier"):
            raise ValueError("basis must be 'monomial' or 'fourier'")

        if self.basis == "fourier" and self.periods is None:
            raise ValueError("the fourier basis needs per-axis periods")

        if not self.is_hermitian():
            raise FiberMourreError("matrix family is not hermitian")

    @classmethod
    def from_terms(cls, fiber_dim, dimension, terms,
                   basis="monomial", periods=None):
        '''
        Build a family from ``{exponent tuple: mu x mu matrix}``; repeated
        exponents are summed and vanishing terms dropped.
        '''

        collected = {}
        for exponent, matrix in terms:
            exponent = tuple(int(e) for e in exponent)
            if len(exponent) != dimension:
                raise ValueError("exponent " + str(exponent) +
                                 " does not match dimension " + str(dimension))
            matrix = np.asarray(matrix, dtype=complex).reshape(
                fiber_dim, fiber_dim)
            collected[exponent] = collected.get(exponent, 0) + matrix

        collected = {e: c for e, c in collected.items()
                     if np.any(np.abs(c) > 0)}
        keys = sorted(collected)

        exponents = np.array(keys, dtype=int).reshape(len(keys), dimension)
        coefficients = np.array([collected[k] for k in keys],
                                dtype=complex).reshape(
                                    len(keys), fiber_dim, fiber_dim)

        return cls(fiber_dim, dimension, exponents, coefficients,
                   basis=basis, periods=periods)

    @classmethod
    def from_dict(cls, tree):
        '''Parse the model key-value tree described in the module doc.'''

        for key in ("fiber_dim", "dimension", "entries"):
            if key not in tree:
                raise ValueError("model definition misses '" + key + "'")

        mu = int(tree["fiber_dim"])
        d = int(tree["dimension"])
        entries = tree["entries"]

        if len(entries) != mu or any(len(row) != mu for row in entries):
            raise ValueError("entries must form a fiber_dim x fiber_dim array")

        terms = []
        for i in range(mu):
            for j in range(mu):
                for exponent, coef in entries[i][j]:
                    unit = np.zeros((mu, mu), dtype=complex)
                    unit[i, j] = _coefficient(coef)
                    terms.append((exponent, unit))

        periods = tree.get("periods")
        if periods is not None:
            periods = tuple(float(p) for p in periods)

        return cls.from_terms(mu, d, terms,
                              basis=tree.get("basis", "monomial"),
                              periods=periods)

    @classmethod
    def from_file(cls, path):
        '''Load a model from a JSON or YAML file.'''

        with open(path) as handle:
            if path.endswith(".json"):
                tree = json.load(handle)
            else:
                tree = yaml.safe_load(handle)

        return cls.from_dict(tree)

    @classmethod
    def zeros(cls, fiber_dim, dimension):

        return cls(fiber_dim, dimension,
                   np.zeros((0, dimension), dtype=int),
                   np.zeros((0, fiber_dim, fiber_dim), dtype=complex))

    def _mirror(self):
        '''Exponent -> conjugate-transposed coefficient, for the symmetry test.'''

        mirrored = {}
        for e, c in zip(self.exponents, self.coefficients):
            key = tuple(-e) if self.basis == "fourier" else tuple(e)
            mirrored[key] = c.conj().T

        return mirrored

    def is_hermitian(self, tol=1e-14):
        '''Entry-wise symmetry of the polynomial array.'''

        own = {tuple(e): c for e, c in zip(self.exponents, self.coefficients)}
        mirrored = self._mirror()

        for key in set(own) | set(mirrored):
            a = own.get(key, 0)
            b = mirrored.get(key, 0)
            if np.max(np.abs(np.asarray(a) - np.asarray(b))) > tol:
                return False

        return True

    def monomials(self, points):
        '''(N, M) values of the monomials at the given (N, d) points.'''

        points = np.atleast_2d(np.asarray(points, dtype=float))

        if points.shape[1] != self.dimension:
            raise ValueError("points have dimension " + str(points.shape[1]) +
                             ", family has dimension " + str(self.dimension))

        if self.basis == "fourier":
            scale = 2.0 * np.pi / np.asarray(self.periods, dtype=float)
            phase = np.einsum("nd,md->nm", points * scale, self.exponents)
            return np.exp(1j * phase)

        return np.prod(points[:, None, :] ** self.exponents[None, :, :],
                       axis=2)

    def evaluate(self, points):
        '''Exact (N, mu, mu) values at the (N, d) points.'''

        mono = self.monomials(points)
        values = np.einsum("nm,mij->nij", mono, self.coefficients)

        # symmetrize away the last ulp so downstream eigh sees exact hermitian input
        return 0.5 * (values + np.conj(np.swapaxes(values, 1, 2)))

    def derivative(self, axis):
        '''Entry-wise partial derivative along ``axis``.'''

        if axis < 0 or axis >= self.dimension:
            raise ValueError("axis " + str(axis) + " out of range for d=" +
                             str(self.dimension))

        terms = []
        for e, c in zip(self.exponents, self.coefficients):
            if e[axis] == 0:
                continue
            if self.basis == "fourier":
                factor = 1j * e[axis] * 2.0 * np.pi / self.periods[axis]
                terms.append((tuple(e), factor * c))
            else:
                lowered = e.copy()
                lowered[axis] -= 1
                terms.append((tuple(lowered), e[axis] * c))

        if not terms:
            return MatrixPolynomialFamily(
                self.fiber_dim, self.dimension,
                np.zeros((0, self.dimension), dtype=int),
                np.zeros((0, self.fiber_dim, self.fiber_dim), dtype=complex),
                basis=self.basis, periods=self.periods)

        return MatrixPolynomialFamily.from_terms(
            self.fiber_dim, self.dimension, terms,
            basis=self.basis, periods=self.periods)


def derivative_family(fam, axis):
    '''Exact partial derivative of a family along ``axis``.'''

    return fam.derivative(axis)


def builtin_family(name):
    '''
    The two worked examples.

    * example1: H(k) = (k1^2 + k2^2 + k2) Id + k1 (1 k2; k2 -1)
    * example2: H(k) = k2 Id + k1 (1 k2; k2 -1)
    '''

    sz = np.array([[1, 0], [0, -1]])
    sx = np.array([[0, 1], [1, 0]])
    one = np.eye(2)

    if name == "example2":
        terms = [((0, 1), one), ((1, 0), sz), ((1, 1), sx)]
    elif name == "example1":
        terms = [((2, 0), one), ((0, 2), one), ((0, 1), one),
                 ((1, 0), sz), ((1, 1), sx)]
    else:
        raise ValueError("unknown builtin model: " + str(name))

    return MatrixPolynomialFamily.from_terms(2, 2, terms)


# --------------------------------- domain ---------------------------------- #

@dataclass(frozen=True)
class DomainSpec:
    '''
    Base manifold: a box (closed intervals) or a torus (periods).

    Args:
        kind: "box" or "torus".
        bounds: Per-axis ``(lo, hi)``; for a torus hi - lo is the period.
        density: Optional scalar family V (fiber_dim 1); dv = exp(2V) dk.
    '''

    kind: str
    bounds: tuple
    density: MatrixPolynomialFamily = None

    def __post_init__(self):

        if self.kind not in ("box", "torus"):
            raise ValueError("domain kind must be 'box' or 'torus'")

        if len(self.bounds) < 1 or len(self.bounds) > 3:
            raise ValueError("domain dimension must be 1, 2 or 3")

        for lo, hi in self.bounds:
            if not hi > lo:
                raise ValueError("degenerate bounds: " + str((lo, hi)))

        if self.density is not None:
            if self.density.fiber_dim != 1 or \
               self.density.dimension != len(self.bounds):
                raise ValueError("density must be a scalar family on the domain")

    @property
    def dimension(self):
        return len(self.bounds)

    @classmethod
    def from_dict(cls, tree):

        kind = tree.get("kind", "box")
        if kind == "torus":
            bounds = tuple((0.0, float(p)) for p in tree["periods"])
        else:
            bounds = tuple((float(lo), float(hi)) for lo, hi in tree["bounds"])

        density = tree.get("density")
        if density is not None:
            density = MatrixPolynomialFamily.from_dict(
                {"fiber_dim": 1, "dimension": len(bounds),
                 "entries": [[density]]})

        return cls(kind, bounds, density)


@dataclass(frozen=True)
class Grid:
    '''
    Uniform grid over a :class:`DomainSpec`.

    Attributes:
        shape: Points per axis.
        axes: 1-d node coordinates per axis.
        h: Spacing per axis.
        points: (N, d) node coordinates in C order.
    '''

    spec: DomainSpec
    shape: tuple
    axes: tuple = field(repr=False)
    h: tuple
    points: np.ndarray = field(repr=False)

    @property
    def dimension(self):
        return self.spec.dimension

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def periodic(self):
        return self.spec.kind == "torus"

    @property
    def hmax(self):
        return max(self.h)

    def unflatten(self, values):
        values = np.asarray(values)
        return values.reshape(self.shape + values.shape[1:])

    def flatten(self, values):
        values = np.asarray(values)
        return values.reshape((self.size,) + values.shape[self.dimension:])

    def multi_index(self, index):
        return np.unravel_index(index, self.shape)

    def nearest_node(self, point):
        '''Flat index of the node closest to ``point``.'''

        idx = []
        for axis, x in enumerate(np.atleast_1d(point)):
            lo = self.axes[axis][0]
            i = int(np.rint((x - lo) / self.h[axis]))
            if self.periodic:
                i %= self.shape[axis]
            else:
                i = min(max(i, 0), self.shape[axis] - 1)
            idx.append(i)

        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def neighbor(self, index, axis, step):
        '''Flat index of the node ``step`` positions along ``axis``, or -1.'''

        idx = list(self.multi_index(index))
        j = idx[axis] + step
        if self.periodic:
            j %= self.shape[axis]
        elif j < 0 or j >= self.shape[axis]:
            return -1
        idx[axis] = j

        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def shifted_indices(self, axis, step):
        '''
        Flat target index for every node shifted by ``step`` along ``axis``
        (-1 where a box edge is crossed).
        '''

        idx = np.indices(self.shape).reshape(self.dimension, -1)
        j = idx[axis] + step
        if self.periodic:
            j = j % self.shape[axis]
            valid = np.ones(self.size, dtype=bool)
        else:
            valid = (j >= 0) & (j < self.shape[axis])
            j = np.clip(j, 0, self.shape[axis] - 1)
        idx[axis] = j
        flat = np.ravel_multi_index(tuple(idx), self.shape)

        return np.where(valid, flat, -1)

    def edge_distance(self):
        '''Per node, the number of nodes to the nearest box edge.'''

        if self.periodic:
            return np.full(self.size, np.iinfo(np.int64).max)

        idx = np.indices(self.shape).reshape(self.dimension, -1)
        dist = [np.minimum(idx[a], self.shape[a] - 1 - idx[a])
                for a in range(self.dimension)]

        return np.min(dist, axis=0)

    def derivative(self, values, axis, scheme="central4"):
        '''
        Discrete partial derivative of a flat field along ``axis``.

        Torus grids wrap. On a box the stencil falls back to second order
        near the edges (np.gradient, one-sided at the last node).
        '''

        weights = stencil(scheme)
        grid_values = self.unflatten(values)
        h = self.h[axis]

        if self.periodic:
            out = np.zeros_like(grid_values)
            for j, w in weights.items():
                out = out + w * (np.roll(grid_values, -j, axis=axis) -
                                 np.roll(grid_values, j, axis=axis))
            return self.flatten(out / h)

        out = np.gradient(grid_values, h, axis=axis, edge_order=2)

        if scheme == "central4" and self.shape[axis] > 4:
            inner = [slice(None)] * grid_values.ndim
            inner[axis] = slice(2, -2)
            acc = 0
            n = self.shape[axis]
            for j, w in weights.items():
                fwd = [slice(None)] * grid_values.ndim
                bwd = [slice(None)] * grid_values.ndim
                fwd[axis] = slice(2 + j, n - 2 + j)
                bwd[axis] = slice(2 - j, n - 2 - j)
                acc = acc + w * (grid_values[tuple(fwd)] -
                                 grid_values[tuple(bwd)])
            out[tuple(inner)] = acc / h

        return self.flatten(out)

    def gradient(self, values, scheme="central4"):
        '''(d, N, ...) stack of discrete partial derivatives.'''

        return np.stack([self.derivative(values, a, scheme)
                         for a in range(self.dimension)])


def build_grid(spec, n):
    '''
    Uniform grid with ``n`` nodes per axis (an int or one value per axis).

    Box grids include both end points (h = (hi - lo)/(n - 1)); torus grids
    identify them (h = period / n).
    '''

    counts = np.broadcast_to(np.atleast_1d(n), (spec.dimension,))

    if np.any(counts < 4):
        raise ValueError("a grid needs at least 4 points per axis, got " +
                         str(tuple(int(c) for c in counts)))

    axes, h = [], []
    for (lo, hi), count in zip(spec.bounds, counts):
        count = int(count)
        if spec.kind == "torus":
            axis = lo + (hi - lo) * np.arange(count) / count
            step = (hi - lo) / count
        else:
            axis = np.linspace(lo, hi, count)
            step = (hi - lo) / (count - 1)
        axes.append(axis)
        h.append(step)

    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)

    return Grid(spec, tuple(int(c) for c in counts), tuple(axes), tuple(h),
                points)


@dataclass(frozen=True)
class MatrixField:
    '''A sampled k-dependent matrix: one (mu, mu) value per grid node.'''

    grid: Grid
    values: np.ndarray

    def __post_init__(self):

        if self.values.shape[0] != self.grid.size:
            raise ValueError("one value per node is required")

        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix field has non-finite entries")

    @property
    def fiber_dim(self):
        return self.values.shape[-1]

    def hermitian_defect(self):
        return float(np.max(np.abs(
            self.values - np.conj(np.swapaxes(self.values, -1, -2)))))


def sample_family(fam, grid):
    '''Exact evaluation of ``fam`` at every node of ``grid``.'''

    if fam.dimension != grid.dimension:
        raise ValueError("family dimension " + str(fam.dimension) +
                         " does not match grid dimension " +
                         str(grid.dimension))

    return MatrixField(grid, fam.evaluate(grid.points))


class SampledModel:
    '''
    A family sampled on a grid together with its exact first and second
    derivatives, and the density gradient.

    Attributes:
        H: (N, mu, mu) values.
        dH: (d, N, mu, mu) first derivatives.
        d2H: (d, d, N, mu, mu) second derivatives.
        dV: (d, N) gradient of the density weight (zeros when flat).
    '''

    def __init__(self, fam, grid):

        self.family = fam
        self.grid = grid
        self.H = sample_family(fam, grid).values

        d = grid.dimension
        firsts = [fam.derivative(a) for a in range(d)]
        self.dH = np.stack([f.evaluate(grid.points) for f in firsts])
        self.d2H = np.stack([np.stack([firsts[a].derivative(b).evaluate(
            grid.points) for b in range(d)]) for a in range(d)])

        if grid.spec.density is None:
            self.dV = np.zeros((d, grid.size))
        else:
            V = grid.spec.density
            self.dV = np.stack([V.derivative(a).evaluate(grid.points)[:, 0, 0]
                                .real for a in range(d)])

    @property
    def fiber_dim(self):
        return self.family.fiber_dim
