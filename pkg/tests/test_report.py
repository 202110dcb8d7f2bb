'''tests for run artifacts and figure data'''

import os

import numpy as np
import pandas as pd
import pytest

from fibermourre.tasks import conjugate, domain, report, stratify
from fibermourre.tasks.errors import MissingStage


def test_plain_converts_numpy_values():

    tree = report.plain({"a": np.arange(3), 1: (np.float64(0.5), np.nan),
                         "b": np.bool_(True), "c": 2 + 1j})

    assert tree == {"a": [0, 1, 2], "1": [0.5, "nan"], "b": True,
                    "c": [2.0, 1.0]}


def test_json_files_are_stable(tmp_path):

    first, second = str(tmp_path / "a.json"), str(tmp_path / "b.json")

    report.write_json({"b": np.float64(1.0), "a": [1, 2]}, first)
    report.write_json({"a": [1, 2], "b": 1.0}, second)

    with open(first) as a, open(second) as b:
        assert a.read() == b.read()
    assert report.read_json(first) == {"a": [1, 2], "b": 1.0}


def test_tables_use_twelve_significant_digits(tmp_path):

    path = str(tmp_path / "t.csv")

    report.write_table(pd.DataFrame({"x": [1.0 / 3.0]}), path)

    with open(path) as handle:
        assert handle.read().splitlines() == ["x", "0.333333333333"]


def test_strata_table():

    spec = domain.DomainSpec("box", ((-1.0, 1.0), (-1.0, 1.0)))
    grid = domain.build_grid(spec, 17)
    sample, strata, _ = stratify.stratify(domain.builtin_family("example2"),
                                          grid, (-0.5, 0.5))

    table = report.strata_table(sample, strata)

    assert list(table.columns) == ["node", "k1", "k2", "value",
                                   "multiplicity", "stratum", "dimension",
                                   "rank_zero"]
    assert len(table) == len(sample)
    assert {s.id for s in strata} <= set(table["stratum"])
    assert np.all(np.abs(table["value"]) <= 0.5)


def test_commutator_table(tmp_path):

    spec = domain.DomainSpec("torus", ((0.0, 2 * np.pi),))
    grid = domain.build_grid(spec, 16)
    D = conjugate.FirstOrderOperator.zeros(grid, 1)
    D.principal[0] = 1.0
    H = np.cos(grid.points[:, 0])[:, None, None]

    table = report.commutator_table(
        {"naive": conjugate.iterated_ad(D, H, j_max=2),
         "modified": conjugate.iterated_ad(D, H, j_max=1)})

    assert list(table["mode"]) == ["modified", "naive", "naive"]
    assert list(table["order"]) == [1, 1, 2]
    assert table["support_nodes"].max() <= 16


@pytest.fixture
def finished_run(tmp_path):
    '''The artifacts of a run, written by hand.'''

    outdir = str(tmp_path)
    pd.DataFrame({"node": [0, 1, 2], "k1": [0.0, 0.1, 0.9],
                  "k2": [0.0, 0.0, 0.0], "value": [0.0, 0.2, 0.8],
                  "multiplicity": [2, 1, 1], "stratum": [0, 1, 1],
                  "dimension": [1, 2, 2], "rank_zero": [False] * 3}) \
        .to_csv(os.path.join(outdir, "strata.csv"), index=False)
    pd.DataFrame({"resolution": [65, 33], "mode": ["naive"] * 2,
                  "order": [2, 2], "matrix_norm": [2.0, 1.0]}) \
        .to_csv(os.path.join(outdir, "refinement.csv"), index=False)
    report.write_json({"kappa": 2.0, "patches": [
        {"index": 0, "center": [0.0, 0.5], "radius": 0.25, "nodes": 12,
         "windows": [{"interval": [-0.5, 0.5]}]},
        {"index": 1, "center": None, "radius": None, "nodes": 40,
         "windows": [{"indices": [0, 1]}]}]},
        os.path.join(outdir, "covering.json"))

    tree = {"outdir": outdir,
            "config": {"intervals": {"I": [-0.1, 0.3]}},
            "artifacts": {"strata": "strata.csv",
                          "refinement": "refinement.csv",
                          "covering": "covering.json"}}
    report.write_json(tree, os.path.join(outdir, "report.json"))

    return tree


def test_normtable_figure(finished_run):

    path = report.emit_figure_data(finished_run, "normtable")

    table = pd.read_csv(path)
    assert os.path.basename(path) == "figure_normtable.csv"
    assert list(table["resolution"]) == [33, 65]


def test_levelsets_figure_from_report_file(finished_run):

    path = report.emit_figure_data(
        os.path.join(finished_run["outdir"], "report.json"), "levelsets")

    table = pd.read_csv(path)
    assert list(table.columns) == ["k1", "k2", "value", "stratum"]
    assert list(table["value"]) == [0.0, 0.2]


def test_strata_figure(finished_run):

    table = pd.read_csv(report.emit_figure_data(finished_run, "strata"))

    assert list(table.columns) == ["k1", "k2", "multiplicity", "stratum",
                                   "rank_zero"]


def test_supports_figure(finished_run):

    table = pd.read_csv(report.emit_figure_data(finished_run, "supports"))

    assert list(table["patch"]) == [0, 1]
    assert table.loc[0, "bump_radius"] == 0.5
    assert table.loc[0, "windows"] == "-0.5:0.5"
    assert table.loc[1, "windows"] == "0:1"
    assert np.isnan(table.loc[1, "radius"])


def test_figure_of_a_stage_that_did_not_run(finished_run):

    del finished_run["artifacts"]["refinement"]

    with pytest.raises(MissingStage) as err:
        report.emit_figure_data(finished_run, "normtable")

    assert err.value.stage == "refinement"


def test_figure_of_a_missing_file(finished_run):

    os.remove(os.path.join(finished_run["outdir"], "strata.csv"))

    with pytest.raises(MissingStage):
        report.emit_figure_data(finished_run, "strata")


def test_unknown_figure(finished_run):

    with pytest.raises(ValueError):
        report.emit_figure_data(finished_run, "spectrum")
