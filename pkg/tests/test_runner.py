'''tests for run configuration, self checks and whole runs'''

import os

import numpy as np
import pandas as pd
import pytest

from fibermourre.tasks import domain, mourre, report, runner
from fibermourre.tasks.errors import FiberMourreError, MissingStage


SCALAR_MODEL = {"fiber_dim": 1, "dimension": 2,
                "entries": [[[[[1, 0], 1.0], [[0, 2], 0.25]]]]}


def config_tree(**changes):

    tree = {"model": "example2",
            "domain": {"kind": "box", "bounds": [[-1, 1], [-1, 1]],
                       "points": 33},
            "intervals": {"I": [-0.1, 0.1], "outer": [-0.5, 0.5]},
            "covering": {"kind": "prescribed"},
            "mode": "both",
            "j_max": 2,
            "selfcheck_samples": 20}
    tree.update(changes)

    return tree


def test_config_defaults():

    config = runner.PipelineConfig.from_dict(config_tree())

    assert config.model == "example2"
    assert config.points == 33
    assert config.window == config.interval == (-0.1, 0.1)
    assert config.modes == ("naive", "modified")
    assert config.scheme == "central4"
    assert config.grad_tol is None

    tree = config.to_dict()
    assert tree["resolved"]["modes"] == ["naive", "modified"]
    assert "outdir" not in tree


def test_inline_model():

    config = runner.PipelineConfig.from_dict(config_tree(
        model=SCALAR_MODEL, covering={"kind": "greedy",
                                      "region": [[-0.6, 0.6], [-0.6, 0.6]]}))

    assert config.model == "inline"
    assert config.family.fiber_dim == 1
    assert config.region == ((-0.6, 0.6), (-0.6, 0.6))


def test_points_default_to_the_coarsest_resolution():

    config = runner.PipelineConfig.from_dict(config_tree(
        domain={"kind": "box", "bounds": [[-1, 1], [-1, 1]]},
        resolutions=[17, 33, 65]))

    assert config.points == 17
    assert config.resolutions == (17, 33, 65)


@pytest.mark.parametrize("changes", [
    {"model": None},
    {"domain": {"kind": "box", "bounds": [[-1, 1]], "points": 9}},
    {"domain": {"kind": "box", "bounds": [[-1, 1], [-1, 1]]}},
    {"resolutions": [65, 33]},
    {"resolutions": [33, 65]},
    {"spread": 0.0},
    {"band": 1.5},
    {"intervals": {"I": [-0.1, 0.1]}},
    {"intervals": {"I": [-0.1, 0.1], "outer": [-0.1, 0.5]}},
    {"intervals": {"I": [0.1, -0.1], "outer": [-0.5, 0.5]}},
    {"intervals": {"I": [-0.1, 0.1], "outer": [-0.5, 0.5],
                   "window": [-0.2, 0.0]}},
    {"covering": {"kind": "voronoi"}},
    {"mode": "all"},
    {"scheme": "upwind"},
    {"j_max": 7},
    {"tolerances": {"cluster_tol": 0.0}},
    {"ratio": -1.0}])
def test_invalid_configurations(changes):

    with pytest.raises(ValueError):
        runner.PipelineConfig.from_dict(config_tree(**changes))


def test_example_configurations():

    quick = runner.example_config(2, quick=True, outdir="x.dir")
    full = runner.example_config(1)

    assert quick.resolutions == (33, 65, 129)
    assert quick.j_max == 2
    assert quick.outdir == "x.dir"
    assert full.covering == "greedy"
    assert full.region is None
    assert full.modes == ("modified",)
    assert full.interval == full.window == (0.9, 1.1)
    assert full.outer == (0.0, 1.6)
    assert full.outdir == "example1.dir"

    with pytest.raises(ValueError):
        runner.example_config(3)


def test_nagy_selfcheck():

    result = runner.nagy_selfcheck(samples=25, seed=3)

    assert result["passed"]
    assert result["gap_refused"]
    assert result["defect"] < 1e-11


def test_basis_selfcheck():

    result = runner.basis_selfcheck(samples=25, seed=3)

    assert result["passed"]
    assert result["mismatches"] == 0


def test_ledger_rejects_unknown_criteria():

    rep = runner.RunReport(runner.PipelineConfig.from_dict(config_tree()))

    with pytest.raises(ValueError):
        rep.record("speed", runner.PASS)


def test_exit_codes():

    rep = runner.RunReport(runner.PipelineConfig.from_dict(config_tree()))
    assert rep.exit_code == runner.EXIT_OK

    rep.record("thresholds", runner.PASS)
    rep.record("symmetry_proxy", runner.FAIL)
    assert rep.exit_code == runner.EXIT_VERIFICATION

    rep.error = {"stage": "cover"}
    assert rep.exit_code == runner.EXIT_CONSTRUCTION


def test_stage_errors_carry_the_stage():

    rep = runner.RunReport(runner.PipelineConfig.from_dict(config_tree()))

    with pytest.raises(FiberMourreError) as err:
        with rep.stage("cover"):
            raise FiberMourreError("no balls")

    assert err.value.stage == "cover"
    assert rep.stages["cover"]["error"] == "FiberMourreError"


@pytest.mark.parametrize("model,interval,expected", [
    ("example1", (-1.0, 0.5), [-7.0 / 12.0, -0.25]),
    ("example1", (-0.5, 0.5), [-0.25]),
    ("example1", (0.9, 1.1), []),
    ("example2", (-1.0, 1.0), [])])
def test_expected_thresholds(model, interval, expected):

    grid = domain.build_grid(
        domain.DomainSpec("box", ((-2.0, 2.0), (-2.0, 2.0))), 17)

    np.testing.assert_allclose(
        runner.expected_thresholds(model, grid, interval), expected)


def test_expected_thresholds_need_a_closed_form():

    grid = domain.build_grid(
        domain.DomainSpec("box", ((-1.0, 1.0), (-1.0, 1.0))), 9)

    assert runner.expected_thresholds("inline", grid, (-1.0, 1.0)) is None


def test_threshold_matching():

    assert runner._matched([-0.26], [-0.25], 0.02)
    assert not runner._matched([-0.26, 0.4], [-0.25], 0.02)
    # a detection where none is expected
    assert not runner._matched([0.1], [], 0.02)
    assert runner._matched([], [], 0.02)
    assert runner._matched([], [-0.25], 0.02)


def test_merge_rows_flags_growth():

    first = pd.DataFrame({"resolution": [33], "mode": ["naive"],
                          "order": [2], "matrix_norm": [1.0]})
    second = pd.DataFrame({"resolution": [65], "mode": ["naive"],
                           "order": [2], "matrix_norm": [2.5]})

    table = runner.merge_rows([second, first])

    assert list(table["resolution"]) == [33, 65]
    assert set(table["flag"]) == {mourre.UNBOUNDED}


@pytest.fixture(scope="module")
def example2_run(tmp_path_factory):

    outdir = str(tmp_path_factory.mktemp("example2"))
    return runner.run(config_tree(outdir=outdir)), outdir


def test_run_writes_every_artifact(example2_run):

    rep, outdir = example2_run

    assert rep.exit_code != runner.EXIT_CONSTRUCTION
    for name in ("strata", "thresholds", "covering", "overlaps",
                 "commutators", "mourre", "report"):
        assert os.path.exists(os.path.join(outdir, rep.artifacts[name]))
    assert "refinement" not in rep.artifacts

    tree = report.read_json(os.path.join(outdir, "report.json"))
    assert set(tree["ledger"]) == set(runner.CRITERIA)
    assert tree["exit_code"] == rep.exit_code
    assert tree["ledger"]["boundedness_dichotomy"]["status"] == \
        runner.NOT_RUN


def test_run_stages_and_checks(example2_run):

    rep, _ = example2_run

    assert list(rep.stages) == [
        "stratify", "cover", "connect_naive", "assemble_naive",
        "verify_naive", "connect_modified", "assemble_modified",
        "verify_modified"]
    assert rep.stages["stratify"]["thresholds"] == []
    assert rep.stages["cover"]["balls"] == 3
    assert rep.stages["cover"]["relations"]["<"] == 4
    assert rep.ledger["thresholds"]["status"] == runner.PASS
    assert rep.ledger["closed_form_agreement"]["status"] == runner.PASS
    assert rep.ledger["nagy_properties"]["status"] == runner.PASS
    assert rep.ledger["gamma_basis"]["status"] == runner.PASS
    for mode in ("naive", "modified"):
        assert rep.verifications[mode].oracle_error < 1e-10
        assert len(rep.verifications[mode].reports) == 2


def test_run_symmetry_and_spectral_identity(example2_run):

    rep, _ = example2_run

    assert rep.ledger["symmetry_proxy"]["status"] == runner.PASS
    assert rep.ledger["thresholds"]["expected"] == []
    identity = rep.ledger["partition_identities"]["spectral_identity"]
    assert identity is not None
    assert identity <= 1e-8
    assert rep.ledger["partition_identities"]["status"] == runner.PASS
    for mode in ("naive", "modified"):
        ver = rep.verifications[mode]
        assert ver.spectral_identity is not None
        assert ver.A.hermitian_defect <= runner.HERMITIAN_TOL
        assert rep.ledger["symmetry_proxy"]["skew_residual"][mode] == \
            ver.A.skew_residual


def test_figures_from_a_run(example2_run):

    rep, outdir = example2_run

    path = report.emit_figure_data(os.path.join(outdir, "report.json"),
                                   "supports")

    assert len(pd.read_csv(path)) == 3
    with pytest.raises(MissingStage):
        report.emit_figure_data(rep.to_dict(), "normtable", outdir)


def test_construction_error_stops_the_run(tmp_path):

    rep = runner.run(config_tree(model=SCALAR_MODEL, outdir=str(tmp_path)))

    assert rep.exit_code == runner.EXIT_CONSTRUCTION
    assert rep.error["stage"] == "cover"
    assert rep.error["type"] == "UnsupportedModel"
    tree = report.read_json(str(tmp_path / "report.json"))
    assert tree["exit_code"] == 3
    assert "strata" in tree["artifacts"]
    assert "covering" not in tree["artifacts"]


def test_survey_finds_the_thresholds_of_example1(tmp_path):

    tree = {"model": "example1",
            "domain": {"kind": "box", "bounds": [[-2, 2], [-2, 2]],
                       "points": 65},
            "intervals": {"I": [0.95, 1.05], "outer": [0.8, 1.2],
                          "survey": [-1.0, 0.5]},
            "outdir": str(tmp_path)}

    rep = runner.run_strata(tree)

    values = np.sort(rep.stages["stratify"]["thresholds"])
    np.testing.assert_allclose(values, [-7.0 / 12.0, -0.25], atol=0.02)
    assert os.path.exists(str(tmp_path / "thresholds.json"))
    assert os.path.exists(str(tmp_path / "strata.csv"))


def test_example1_quick_run(tmp_path):

    rep = runner.run(runner.example_config(1, quick=True,
                                           outdir=str(tmp_path)))

    assert rep.error is None
    assert rep.stages["stratify"]["thresholds"] == []
    assert rep.ledger["thresholds"]["status"] == runner.PASS
    assert rep.ledger["thresholds"]["expected"] == []
    assert rep.ledger["mourre_certificate"]["status"] == runner.PASS
    assert rep.ledger["symmetry_proxy"]["status"] == runner.PASS
    assert rep.stages["cover"]["balls"] > 0

