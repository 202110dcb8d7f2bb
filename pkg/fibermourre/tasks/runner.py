'''
runner.py
=========

Overview
--------

Configured runs: stratify -> cover -> connect -> assemble -> verify, in
the naive and/or the modified mode, followed by an optional refinement
study across resolutions. :func:`run` writes every artifact named in
:mod:`fibermourre.tasks.report` and returns a :class:`RunReport` whose
ledger records one outcome per acceptance criterion.

Configuration
-------------

A run is described by one key-value tree (YAML or JSON): ::

  model: example2            # builtin id or an inline model (see domain)
  domain:
    kind: box                # box | torus
    bounds: [[-1, 1], [-1, 1]]
    points: 65               # points per axis of the main run
  resolutions: [33, 65, 129] # refinement study (optional, three or more)
  intervals:
    I: [-0.1, 0.1]
    outer: [-0.5, 0.5]       # I~, threshold free
    window: [-0.1, 0.1]      # Delta of the Mourre certificate
  tolerances: {cluster_tol: 1.0e-8, grad_tol: null, comm_tol: 1.0e-10,
               grad_floor: 0.1, eta: 0.01, slack: null}
  covering: {kind: prescribed, initial_radius: null, kappa: 0.75,
             min_radius: null, max_halvings: 20, region: null}
  mode: both                 # naive | modified | both
  scheme: central4
  j_max: 4
  c_target: 0.5
  ratio: 1.7
  spread: 0.1
  band: 0.25
  outdir: run.dir

Exit codes: 0 when every ledger entry passes (or did not apply), 2 when a
verification failed, 3 when a construction step aborted.

Class and method documentation
------------------------------

'''

import os
import sys
import logging
import itertools
from contextlib import contextmanager
from dataclasses import dataclass, field as dataclass_field

import numpy as np
import pandas as pd

from fibermourre.tasks import oracle
from fibermourre.tasks import report as R
from fibermourre.tasks.conjugate import MAX_ORDER, assemble_conjugate, \
    build_blocks, iterated_ad, spectral_identity_defect, symmetry_defect
from fibermourre.tasks.connection import ball_connections, projector_basis
from fibermourre.tasks.covering import KAPPA, build_bumps, build_covering, \
    build_prescribed_covering, classify_incidence
from fibermourre.tasks.domain import DomainSpec, MatrixPolynomialFamily, \
    SampledModel, SCHEMES, build_grid, builtin_family
from fibermourre.tasks.errors import FiberMourreError, NagyGap, \
    ThresholdInInterval
from fibermourre.tasks.mourre import UNBOUNDED, BOUNDED, Measurement, \
    cross_validate, discretize, discretize_multiplication, flag_growth, \
    measurement_rows, mourre_check, refinement_study
from fibermourre.tasks.spectral import SpectralField, nagy_unitary, \
    operator_norm
from fibermourre.tasks.stratify import stratify

# ------------------------------ Set up logging ------------------------------ #

L = logging.getLogger(__name__)
log_handler = logging.StreamHandler(sys.stdout)
log_handler.setFormatter(
    logging.Formatter('%(asctime)s @tasks.runner: %(message)s'))
log_handler.setLevel(logging.INFO)
L.addHandler(log_handler)
L.setLevel(logging.INFO)


MODES = {"naive": ("naive",), "modified": ("modified",),
         "both": ("naive", "modified")}

CRITERIA = ("thresholds", "mourre_certificate", "boundedness_dichotomy",
            "closed_form_agreement", "nagy_properties", "gamma_basis",
            "partition_identities", "connection_annihilation",
            "symmetry_proxy")

PASS, FAIL, NOT_RUN = "pass", "fail", "not_run"

EXIT_OK, EXIT_VERIFICATION, EXIT_CONSTRUCTION = 0, 2, 3

# largest admissible max |M - M*| of the discretized conjugate operator
HERMITIAN_TOL = 1e-3


# ------------------------------- configuration ------------------------------ #

def _interval(value, name):

    if value is None:
        return None
    if len(value) != 2 or not float(value[0]) < float(value[1]):
        raise ValueError(name + " must be an interval (lo, hi), got " +
                         str(value))

    return (float(value[0]), float(value[1]))


def _positive(value, name, default):

    if value is None:
        return default
    value = float(value)
    if not value > 0:
        raise ValueError(name + " must be positive, got " + str(value))

    return value


@dataclass(frozen=True)
class PipelineConfig:
    '''
    A validated run configuration (see the module doc for the tree).

    Invariants: the closure of I lies in I~; the window lies in the closure
    of I; resolutions ascend and there are none or at least three;
    tolerances are positive.
    '''

    model: str
    family: MatrixPolynomialFamily
    domain: DomainSpec
    points: int
    resolutions: tuple
    interval: tuple
    outer: tuple
    window: tuple
    survey: tuple = None
    cluster_tol: float = 1e-8
    grad_tol: float = None
    comm_tol: float = 1e-10
    grad_floor: float = 0.1
    eta: float = 1e-2
    slack: float = None
    covering: str = "greedy"
    initial_radius: float = None
    kappa: float = KAPPA
    min_radius: float = None
    max_halvings: int = 20
    region: tuple = None
    modes: tuple = ("naive", "modified")
    scheme: str = "central4"
    j_max: int = 4
    c_target: float = 0.5
    ratio: float = 1.7
    spread: float = 0.1
    band: float = 0.25
    strict: bool = False
    selfcheck_samples: int = 200
    seed: int = 0
    outdir: str = "."
    tree: dict = dataclass_field(default=None, repr=False, compare=False)

    @classmethod
    def from_dict(cls, tree):

        tree = dict(tree)
        model = tree.get("model")
        if model is None:
            raise ValueError("the configuration names no model")
        if isinstance(model, str):
            name, family = model, builtin_family(model)
        else:
            name, family = "inline", MatrixPolynomialFamily.from_dict(model)

        domain_tree = tree.get("domain") or {}
        domain = DomainSpec.from_dict(domain_tree)
        if domain.dimension != family.dimension:
            raise ValueError("model and domain dimensions differ")

        resolutions = tuple(int(n) for n in tree.get("resolutions") or ())
        if list(resolutions) != sorted(set(resolutions)):
            raise ValueError("resolutions must ascend: " + str(resolutions))
        if 0 < len(resolutions) < 3:
            raise ValueError("a refinement study needs at least three "
                             "resolutions, got " + str(resolutions))
        points = domain_tree.get("points")
        if points is None:
            if not resolutions:
                raise ValueError("domain.points or resolutions is required")
            points = resolutions[0]

        intervals = tree.get("intervals") or {}
        interval = _interval(intervals.get("I"), "intervals.I")
        outer = _interval(intervals.get("outer"), "intervals.outer")
        if interval is None or outer is None:
            raise ValueError("intervals.I and intervals.outer are required")
        if not (outer[0] < interval[0] and interval[1] < outer[1]):
            raise ValueError("the closure of I must lie inside I~")
        window = _interval(intervals.get("window"), "intervals.window") \
            or interval
        if not (interval[0] <= window[0] and window[1] <= interval[1]):
            raise ValueError("the window must lie in the closure of I")
        survey = _interval(intervals.get("survey"), "intervals.survey")

        tol = tree.get("tolerances") or {}
        cover = tree.get("covering") or {}

        kind = cover.get("kind", "greedy")
        if kind not in ("greedy", "prescribed"):
            raise ValueError("covering.kind must be greedy or prescribed")

        mode = tree.get("mode", "both")
        if mode not in MODES:
            raise ValueError("mode must be one of " + ", ".join(MODES))

        scheme = tree.get("scheme", "central4")
        if scheme not in SCHEMES:
            raise ValueError("scheme must be one of " + ", ".join(SCHEMES))

        j_max = int(tree.get("j_max", 4))
        if not 1 <= j_max <= MAX_ORDER:
            raise ValueError("j_max must lie in 1.." + str(MAX_ORDER))

        band = _positive(tree.get("band"), "band", 0.25)
        if band > 1.0:
            raise ValueError("band must not exceed 1, got " + str(band))

        region = cover.get("region")
        if region is not None:
            region = tuple(_interval(r, "covering.region") for r in region)

        return cls(
            model=name, family=family, domain=domain, points=int(points),
            resolutions=resolutions, interval=interval, outer=outer,
            window=window, survey=survey,
            cluster_tol=_positive(tol.get("cluster_tol"), "cluster_tol", 1e-8),
            grad_tol=_positive(tol.get("grad_tol"), "grad_tol", None),
            comm_tol=_positive(tol.get("comm_tol"), "comm_tol", 1e-10),
            grad_floor=_positive(tol.get("grad_floor"), "grad_floor", 0.1),
            eta=_positive(tol.get("eta"), "eta", 1e-2),
            slack=_positive(tol.get("slack"), "slack", None),
            covering=kind,
            initial_radius=_positive(cover.get("initial_radius"),
                                     "initial_radius", None),
            kappa=_positive(cover.get("kappa"), "kappa", KAPPA),
            min_radius=_positive(cover.get("min_radius"), "min_radius", None),
            max_halvings=int(cover.get("max_halvings", 20)),
            region=region, modes=MODES[mode], scheme=scheme, j_max=j_max,
            c_target=float(tree.get("c_target", 0.5)),
            ratio=_positive(tree.get("ratio"), "ratio", 1.7),
            spread=_positive(tree.get("spread"), "spread", 0.1),
            band=band,
            strict=bool(tree.get("strict", False)),
            selfcheck_samples=int(tree.get("selfcheck_samples", 200)),
            seed=int(tree.get("seed", 0)),
            outdir=str(tree.get("outdir", ".")),
            tree=tree)

    def to_dict(self):
        '''The configuration as given, with the resolved defaults.'''

        tree = dict(self.tree or {})
        tree["intervals"] = {"I": list(self.interval),
                             "outer": list(self.outer),
                             "window": list(self.window)}
        tree["resolved"] = {"points": self.points,
                            "resolutions": list(self.resolutions),
                            "modes": list(self.modes),
                            "kappa": self.kappa,
                            "eta": self.eta,
                            "scheme": self.scheme,
                            "j_max": self.j_max}
        tree.pop("outdir", None)

        return tree


# --------------------------------- the build -------------------------------- #

@dataclass
class Verification:
    '''Everything the verify stage measured for one mode.'''

    mode: str
    reports: list
    H0: object
    A: object
    mourre: object
    cross_validation: float
    symmetry: float
    spectral_identity: tuple
    annihilation: float = None
    oracle_error: float = None


class Build:
    '''
    The objects of one run at one resolution, produced stage by stage.

    Args:
        config: :class:`PipelineConfig`.
        n: Points per axis.
    '''

    def __init__(self, config, n):

        self.config = config
        self.n = n
        self.grid = build_grid(config.domain, n)
        self.model = SampledModel(config.family, self.grid)
        self.field = SpectralField(self.model, config.cluster_tol)
        self.sample = self.strata = self.thresholds = None
        self.covering = self.bumps = self.incidence = None
        self.connections = {}
        self.blocks = {}
        self.conjugates = {}

    def stratify(self, interval=None, check=True):
        '''
        Sample Sigma over I~ (or ``interval``) and detect thresholds.

        Raises:
            ThresholdInInterval: with ``check``, a threshold lies in I~.
        '''

        c = self.config
        interval = c.outer if interval is None else interval
        self.sample, self.strata, self.thresholds = stratify(
            c.family, self.grid, interval, c.cluster_tol, c.grad_tol,
            self.model)

        inside = self.thresholds.within(c.outer)
        if check and inside:
            raise ThresholdInInterval(
                "thresholds " + str(inside) + " lie in I~ = " +
                str(c.outer), values=inside)

        return {"triples": len(self.sample), "strata": len(self.strata),
                "thresholds": [float(v) for v in self.thresholds.values]}

    def cover(self):

        c = self.config
        if c.covering == "prescribed":
            self.covering = build_prescribed_covering(
                c.model, self.field, c.interval, c.outer)
        else:
            self.covering = build_covering(
                self.field, c.interval, c.outer, self.thresholds,
                self.strata, c.initial_radius, c.min_radius,
                c.max_halvings, c.kappa, c.region, c.grad_floor)

        self.bumps = build_bumps(self.covering, c.eta)
        self.incidence = classify_incidence(self.covering, self.field)

        relations = [p.relation for p in self.incidence.pairs]

        return {"kind": self.covering.kind,
                "balls": len(self.covering),
                "windows": len(self.covering.windows()),
                "kernel_nodes": int(len(self.covering.kernel)),
                "certified_nodes": int(np.sum(self.bumps.certified)),
                "partition_defect": self.partition_defect(),
                "window_partition_defect":
                    self.bumps.window_partition_defect(self.field),
                "relations": {r: relations.count(r)
                              for r in ("<", ">", "same")},
                "profile": self.bumps.profile,
                "kappa": self.covering.kappa}

    def partition_defect(self):
        '''max |sum g^2 - 1| over the certified nodes of K_I.'''

        kernel = self.covering.kernel
        kernel = kernel[self.bumps.certified[kernel]]
        if len(kernel) == 0:
            return 0.0
        total = np.sum(self.bumps.values[:, kernel] ** 2, axis=0)

        return float(np.max(np.abs(total - 1.0)))

    def connect(self, mode):

        self.connections[mode] = ball_connections(
            self.covering, self.bumps, self.field, mode)
        skew = max((conn.skew_defect
                    for conn in self.connections[mode].values()),
                   default=0.0)

        return {"connections": len(self.connections[mode]),
                "skew_defect": float(skew)}

    def assemble(self, mode):

        c = self.config
        self.blocks[mode] = build_blocks(self.covering, self.bumps,
                                         self.field, self.connections[mode],
                                         c.grad_floor)
        self.conjugates[mode] = assemble_conjugate(
            self.blocks[mode], self.grid, self.field.fiber_dim)
        A = self.conjugates[mode]

        return {"blocks": len(self.blocks[mode]),
                "principal_norm": A.principal_residual(),
                "zeroth_norm": A.zeroth_norm(),
                "support_nodes": int(np.sum(A.support()))}

    def commutators(self, mode):
        '''Coefficient-level ad^1 .. ad^j_max of iA.'''

        c = self.config
        D = self.conjugates[mode].scale(1j)

        return iterated_ad(D, self.model.H, self.model.dH, c.j_max,
                           c.scheme, c.strict, c.comm_tol)

    def certify(self, mode, reports=None):
        '''Discretize H0 and A and certify the Mourre estimate.'''

        c = self.config
        reports = self.commutators(mode) if reports is None else reports
        H0 = discretize_multiplication(self.grid, self.model.H, c.scheme)
        A = discretize(self.conjugates[mode], c.scheme, self.model.dV,
                       symmetric=True)
        ad1 = discretize_multiplication(self.grid, reports[0].operator.zeroth,
                                        c.scheme)
        certified = np.flatnonzero(self.bumps.certified)
        mourre = mourre_check(H0, ad1, c.window, c.c_target, certified,
                              c.slack, c.cluster_tol)

        return reports, H0, A, mourre

    def verify(self, mode):

        c = self.config
        reports, H0, A, mourre = self.certify(mode)
        op = self.conjugates[mode]

        result = Verification(
            mode=mode, reports=reports, H0=H0, A=A, mourre=mourre,
            cross_validation=cross_validate(reports[0], H0, A.scale(1j),
                                            c.scheme, self.model.dV),
            symmetry=symmetry_defect(op, self.model.dV, c.scheme),
            spectral_identity=spectral_identity_defect(op, self.covering,
                                                       self.field))

        if mode == "modified":
            result.annihilation = self.annihilation_defect(mode)
        if c.model == "example2" and c.covering == "prescribed":
            result.oracle_error = self.oracle_error(mode)

        return result

    def annihilation_defect(self, mode):
        '''max |nabla pi| of every block projector under its connection.'''

        worst = 0.0
        for block in self.blocks[mode]:
            conn = self.connections[mode][block.key]
            defect = conn.annihilation_defect(block.P, block.dP,
                                              self.config.scheme)
            worst = max(worst, float(np.max(defect, initial=0.0)))

        return worst

    def oracle_error(self, mode):
        '''Largest coefficient error of A against its closed form.'''

        points = self.grid.points
        A = self.conjugates[mode]
        principal = np.swapaxes(oracle.oracle_eval(
            "example2", mode + "_principal", points), 0, 1)
        zeroth = oracle.oracle_eval("example2", mode + "_zeroth", points)

        return max(float(np.max(np.abs(A.principal - principal))),
                   float(np.max(np.abs(A.zeroth - zeroth))))

    def measure(self):
        '''Refinement measurements for every configured mode.'''

        out = []
        for mode in self.config.modes:
            self.connect(mode)
            self.assemble(mode)
            reports, H0, A, mourre = self.certify(mode)
            out.append(Measurement(mode, self.n, H0, A, reports, mourre))

        return out


def measure(config, n):
    '''Build every stage at resolution ``n`` and measure all modes.'''

    build = Build(config, n)
    build.stratify()
    build.cover()

    return build.measure()


def refine(config):
    '''The refinement table over ``config.resolutions``.'''

    return refinement_study(lambda n: measure(config, n), config.resolutions,
                            ratio=config.ratio, spread=config.spread,
                            band=config.band)


def resolution_rows(config, n):
    '''Unflagged refinement rows of one resolution (one pipeline job).'''

    return measurement_rows(measure(config, n), band=config.band)


def merge_rows(tables, ratio=1.7, spread=0.1):
    '''Flag the concatenated rows of several resolutions.'''

    return flag_growth(pd.concat(tables, ignore_index=True), ratio, spread)


# -------------------------------- self checks ------------------------------- #

def _random_unitary(rng, mu):

    z = rng.normal(size=(mu, mu)) + 1j * rng.normal(size=(mu, mu))
    q, r = np.linalg.qr(z)

    return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]


def nagy_selfcheck(samples=200, seed=0):
    '''
    Unitarity and conjugation defects of the Nagy unitary over random
    projector pairs with |P2 - P1| <= 0.9, and the NagyGap refusal of a
    pair at distance 1.
    '''

    rng = np.random.default_rng(seed)
    worst = 0.0

    for _ in range(samples):
        mu = int(rng.integers(2, 9))
        rank = int(rng.integers(1, mu))
        Q = _random_unitary(rng, mu)
        P1 = Q[:, :rank] @ Q[:, :rank].conj().T
        X = rng.normal(size=(mu, mu)) + 1j * rng.normal(size=(mu, mu))
        X = 0.5 * (X + X.conj().T)
        X /= operator_norm(X)
        evals, vecs = np.linalg.eigh(X)
        t = 0.4 * rng.uniform()
        U = (vecs * np.exp(1j * t * evals)[None, :]) @ vecs.conj().T
        P2 = U @ P1 @ U.conj().T

        W = nagy_unitary(P1, P2)
        eye = np.eye(mu)
        worst = max(worst,
                    float(np.max(np.abs(W @ W.conj().T - eye))),
                    float(np.max(np.abs(W @ P1 @ W.conj().T - P2))))

    refused = False
    try:
        nagy_unitary(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
    except NagyGap:
        refused = True

    return {"samples": samples, "defect": worst, "gap_refused": refused,
            "passed": bool(worst <= 1e-11 and refused)}


def basis_selfcheck(samples=200, seed=0):
    '''
    Projector bases of random commuting families (diagonal in a random
    unitary frame) against brute-force enumeration of all products.
    '''

    rng = np.random.default_rng(seed)
    annihilation = reconstruction = 0.0
    mismatches = 0

    for _ in range(samples):
        mu = int(rng.integers(2, 7))
        count = int(rng.integers(1, 5))
        Q = _random_unitary(rng, mu)
        unit_diag = (rng.uniform(size=mu) < 0.8).astype(float)
        unit_diag[0] = 1.0
        diags = [(rng.uniform(size=mu) < 0.5) * unit_diag
                 for _ in range(count)]

        def lift(d):
            return (Q * d[None, :]) @ Q.conj().T

        basis = projector_basis([lift(d) for d in diags], lift(unit_diag))

        members = [P[0] for P in basis.projectors]
        for a, b in itertools.combinations(range(len(members)), 2):
            annihilation = max(annihilation, float(np.max(np.abs(
                members[a] @ members[b]))))
        for g, d in enumerate(diags):
            reconstruction = max(reconstruction, float(np.max(np.abs(
                basis.reconstruct(g)[0] - lift(d)))))

        expected = set()
        for signs in itertools.product((True, False), repeat=count):
            atom = unit_diag.copy()
            for take, d in zip(signs, diags):
                atom = atom * (d if take else 1.0 - d)
            if np.any(atom):
                expected.add(tuple(atom.astype(int)))
        found = {tuple(np.rint(np.diag(Q.conj().T @ P @ Q).real).astype(int))
                 for P in members}
        mismatches += int(found != expected)

    return {"samples": samples, "annihilation": annihilation,
            "reconstruction": reconstruction, "mismatches": mismatches,
            "passed": bool(annihilation <= 1e-12 and
                           reconstruction <= 1e-12 and mismatches == 0)}


# ---------------------------------- reports --------------------------------- #

@dataclass
class RunReport:
    '''
    Stage summaries, sub-reports and the ledger of one run.

    Attributes:
        stages: stage name -> summary (in execution order).
        ledger: criterion id -> {"status": pass|fail|not_run, ...}.
        error: The construction error that aborted the run, if any.
        artifacts: artifact name -> file name in the output directory.
    '''

    config: PipelineConfig
    stages: dict = dataclass_field(default_factory=dict)
    verifications: dict = dataclass_field(default_factory=dict)
    refinement: pd.DataFrame = None
    ledger: dict = dataclass_field(default_factory=dict)
    error: dict = None
    artifacts: dict = dataclass_field(default_factory=dict)

    @contextmanager
    def stage(self, name):
        '''Record a stage; errors leave with the stage name attached.'''

        L.info("stage %s" % name)
        try:
            yield self.stages.setdefault(name, {})
        except FiberMourreError as err:
            err.stage = name
            self.stages[name]["error"] = type(err).__name__
            raise

    @property
    def exit_code(self):

        if self.error is not None:
            return EXIT_CONSTRUCTION
        if any(entry["status"] == FAIL for entry in self.ledger.values()):
            return EXIT_VERIFICATION

        return EXIT_OK

    def record(self, criterion, status, **detail):

        if criterion not in CRITERIA:
            raise ValueError("unknown criterion: " + criterion)
        self.ledger[criterion] = {"status": status, **detail}

    def to_dict(self):

        return {"config": self.config.to_dict(),
                "stages": self.stages,
                "mourre": {m: v.mourre.to_dict()
                           for m, v in self.verifications.items()},
                "ledger": {c: self.ledger.get(c, {"status": NOT_RUN})
                           for c in CRITERIA},
                "error": self.error,
                "exit_code": self.exit_code,
                "artifacts": self.artifacts}


def _status(ok):
    return PASS if ok else FAIL


def _ledger(report, build):
    '''Fill the ledger from the stages that ran.'''

    c = report.config
    h = build.grid.hmax
    ver = report.verifications

    expected = expected_thresholds(c.model, build.grid, c.outer)
    detected = [float(v) for v in build.thresholds.values]
    if expected is None:
        report.record("thresholds", NOT_RUN, values=detected,
                      reason="no closed form for model " + c.model)
    else:
        report.record("thresholds",
                      _status(_matched(detected, expected, 2 * h) and
                              _matched(expected, detected, 2 * h)),
                      values=detected, expected=expected,
                      unresolved=[float(v)
                                  for v in build.thresholds.unresolved],
                      outer=list(c.outer), tolerance=2 * h)

    report.record("mourre_certificate",
                  _status(all(v.mourre.passed for v in ver.values())),
                  c={m: v.mourre.c for m, v in ver.items()},
                  c_target=c.c_target)

    errors = {m: v.oracle_error for m, v in ver.items()
              if v.oracle_error is not None}
    if errors:
        report.record("closed_form_agreement",
                      _status(max(errors.values()) <= 5 * h ** 2),
                      error=errors, tolerance=5 * h ** 2)
    else:
        report.record("closed_form_agreement", NOT_RUN,
                      reason="no closed form for this configuration")

    nagy = nagy_selfcheck(c.selfcheck_samples, c.seed)
    report.record("nagy_properties", _status(nagy.pop("passed")), **nagy)
    basis = basis_selfcheck(c.selfcheck_samples, c.seed)
    report.record("gamma_basis", _status(basis.pop("passed")), **basis)

    identity = [v.spectral_identity for v in ver.values()
                if v.spectral_identity is not None]
    identity = max((max(pair) for pair in identity), default=None)
    partition = build.partition_defect()
    report.record("partition_identities",
                  _status(partition <= 1e-12 and
                          (identity is None or identity <= 1e-8)),
                  partition_defect=partition, spectral_identity=identity)

    if "modified" in ver:
        defect = ver["modified"].annihilation
        report.record("connection_annihilation",
                      _status(defect <= 5 * h ** 2), defect=defect,
                      tolerance=5 * h ** 2)
    else:
        report.record("connection_annihilation", NOT_RUN,
                      reason="modified mode not run")

    table = report.refinement
    defects = {m: v.A.hermitian_defect for m, v in ver.items()}
    skew = {m: v.A.skew_residual for m, v in ver.items()}
    if table is not None:
        by_resolution = table.groupby("resolution")
        defects["refinement"] = by_resolution["hermitian_defect"].max() \
            .to_dict()
        skew["refinement"] = by_resolution["skew_residual"].max().to_dict()
    worst = max(_flat_values(defects), default=0.0)
    report.record("symmetry_proxy", _status(worst <= HERMITIAN_TOL),
                  hermitian_defect=defects, tolerance=HERMITIAN_TOL,
                  skew_residual=skew)

    if table is None:
        report.record("boundedness_dichotomy", NOT_RUN,
                      reason="no refinement study")
        return

    if set(table["mode"]) != {"naive", "modified"}:
        report.record("boundedness_dichotomy", NOT_RUN,
                      reason="needs both modes")
        return

    naive = table[(table["mode"] == "naive") & (table["order"] == 2)]
    modified = table[table["mode"] == "modified"]
    ok = bool(len(naive)) and bool(np.all(naive["flag"] == UNBOUNDED)) and \
        bool(np.all(modified["flag"] == BOUNDED))
    detail = {}
    if c.model == "example2":
        floor = oracle.oracle_commutator_bounds("example2")["naive_ad2_floor"]
        ok = ok and bool(np.all(naive["coef_principal_residual"] >=
                                0.9 * floor))
        detail["naive_ad2_floor"] = floor
    flags = table.groupby(["mode", "order"])["flag"].first()
    report.record("boundedness_dichotomy", _status(ok),
                  evidence=("divergent, consistent with unbounded naive "
                            "commutators" if ok else "inconclusive"),
                  flags={m + "_" + str(j): f for (m, j), f in flags.items()},
                  **detail)


def _flat_values(tree):

    for value in tree.values():
        if isinstance(value, dict):
            yield from _flat_values(value)
        else:
            yield float(value)


def _matched(values, targets, tol):
    '''Every value lies within ``tol`` of some target.'''

    targets = np.asarray(targets, dtype=float)
    if len(targets) == 0:
        return len(values) == 0

    return all(np.min(np.abs(targets - v)) <= tol for v in values)


def expected_thresholds(model, grid, interval):
    '''
    Closed-form thresholds of a worked example whose critical points lie
    in the domain and whose values lie in ``interval``, or None for a
    model without closed forms.
    '''

    if model not in oracle.MODELS:
        return None

    values = []
    for point in oracle.oracle_eval(model, "critical_points", None):
        inside = grid.periodic or all(
            lo <= x <= hi for x, (lo, hi) in zip(point, grid.spec.bounds))
        value = float(oracle.oracle_eval(model, "lambda_minus", point))
        if inside and interval[0] < value < interval[1]:
            values.append(value)

    return sorted({round(v, 12) for v in values})


def _write(report, build):

    outdir = report.config.outdir
    os.makedirs(outdir, exist_ok=True)
    files = R.ARTIFACTS

    def put(name):
        report.artifacts[name] = files[name]
        return os.path.join(outdir, files[name])

    if build is not None and build.sample is not None:
        R.write_table(R.strata_table(build.sample, build.strata),
                      put("strata"))
        R.write_json(build.thresholds.to_dict(), put("thresholds"))

    if build is not None and build.bumps is not None:
        R.write_json(R.covering_dump(build.covering, build.bumps),
                     put("covering"))
        R.write_table(R.incidence_table(build.incidence), put("overlaps"))

    if report.verifications:
        R.write_table(R.commutator_table(
            {m: v.reports for m, v in report.verifications.items()}),
            put("commutators"))
        R.write_json({m: v.mourre.to_dict()
                      for m, v in report.verifications.items()},
                     put("mourre"))

    if report.refinement is not None:
        R.write_table(report.refinement, put("refinement"))

    report.artifacts["report"] = files["report"]
    R.write_json(report.to_dict(), os.path.join(outdir, files["report"]))


def run(config, write=True):
    '''
    Execute a configured run.

    Construction errors do not propagate: the run stops, the error is
    recorded with its stage and context and the exit code becomes 3.

    Returns:
        :class:`RunReport`.
    '''

    if not isinstance(config, PipelineConfig):
        config = PipelineConfig.from_dict(config)

    report = RunReport(config)
    build = None

    try:
        build = Build(config, config.points)

        with report.stage("stratify") as summary:
            summary.update(build.stratify())

        with report.stage("cover") as summary:
            summary.update(build.cover())

        for mode in config.modes:
            with report.stage("connect_" + mode) as summary:
                summary.update(build.connect(mode))
            with report.stage("assemble_" + mode) as summary:
                summary.update(build.assemble(mode))
            with report.stage("verify_" + mode) as summary:
                ver = build.verify(mode)
                report.verifications[mode] = ver
                summary.update({
                    "mourre_c": ver.mourre.c,
                    "mourre_passed": ver.mourre.passed,
                    "cross_validation": ver.cross_validation,
                    "symmetry_defect": ver.symmetry,
                    "hermitian_defect": ver.A.hermitian_defect,
                    "spectral_identity": ver.spectral_identity,
                    "orders": [r.to_dict() for r in ver.reports]})

        if config.resolutions:
            with report.stage("refine") as summary:
                report.refinement = refine(config)
                summary["rows"] = len(report.refinement)

        _ledger(report, build)

    except FiberMourreError as err:
        report.error = {"stage": getattr(err, "stage", None),
                        "type": type(err).__name__,
                        "message": str(err),
                        "context": R.plain(err.context)}
        L.error("run aborted in stage %s: %s" % (report.error["stage"], err))

    if write:
        _write(report, build)

    L.info("run finished with exit code %i" % report.exit_code)

    return report


def run_strata(config, write=True):
    '''
    Stratify over the survey interval (default I~) without aborting on
    thresholds; writes strata.csv and thresholds.json.
    '''

    if not isinstance(config, PipelineConfig):
        config = PipelineConfig.from_dict(config)

    build = Build(config, config.points)
    build.stratify(config.survey, check=False)

    report = RunReport(config)
    report.stages["stratify"] = {"thresholds": [
        float(v) for v in build.thresholds.values]}
    if write:
        _write(report, build)

    return report


# --------------------------------- examples --------------------------------- #

def example_config(example, quick=False, outdir=None):
    '''The configuration reproducing a worked example.'''

    if example == 2:
        tree = {"model": "example2",
                "domain": {"kind": "box", "bounds": [[-1, 1], [-1, 1]],
                           "points": 65},
                "resolutions": [33, 65, 129],
                "intervals": {"I": [-0.1, 0.1], "outer": [-0.5, 0.5],
                              "window": [-0.1, 0.1]},
                "covering": {"kind": "prescribed"},
                "mode": "both",
                "j_max": 2 if quick else 4}
    elif example == 1:
        # the level sets of I reach |k1| = 2 and k2 = -2.2; I~ stays clear
        # of both thresholds
        tree = {"model": "example1",
                "domain": {"kind": "box", "bounds": [[-2.5, 2.5], [-2.5, 2.5]],
                           "points": 65 if quick else 129},
                "intervals": {"I": [0.9, 1.1], "outer": [0.0, 1.6],
                              "window": [0.9, 1.1]},
                "covering": {"kind": "greedy"},
                "mode": "modified",
                "j_max": 2}
    else:
        raise ValueError("unknown example: " + str(example))

    tree["outdir"] = outdir or "example%i.dir" % example

    return PipelineConfig.from_dict(tree)
