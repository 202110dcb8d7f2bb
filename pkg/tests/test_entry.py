'''tests for the fibermourre command line'''

import os

import pandas as pd
import pytest
import yaml

from fibermourre import entry
from fibermourre.tasks import report


def test_help_lists_the_pipelines(capsys):

    assert entry.main(["fibermourre"]) == 0

    out = capsys.readouterr().out
    assert "mourre" in out
    assert "refinement" in out


def test_unknown_command(capsys):

    assert entry.main(["fibermourre", "plot"]) == 1
    assert "unknown command" in capsys.readouterr().err


def test_columns():

    assert entry.printListInColumns([], 3) == ""
    assert entry.printListInColumns(["a", "bb", "c", "d"], 2).splitlines() \
        == ["a     c    ", "bb    d    "]


def test_figures_need_a_choice():

    with pytest.raises(SystemExit):
        entry.parser().parse_args(["figures", "--report", "r.json",
                                   "--which", "spectrum"])


def test_run_reports_a_construction_error(tmp_path):

    config = tmp_path / "run.yml"
    config.write_text(yaml.dump({
        "model": {"fiber_dim": 1, "dimension": 2,
                  "entries": [[[[[1, 0], 1.0], [[0, 2], 0.25]]]]},
        "domain": {"kind": "box", "bounds": [[-1, 1], [-1, 1]],
                   "points": 33},
        "intervals": {"I": [-0.1, 0.1], "outer": [-0.5, 0.5]},
        "covering": {"kind": "prescribed"},
        "selfcheck_samples": 5}))
    outdir = str(tmp_path / "out")

    code = entry.main(["fibermourre", "run", "--config", str(config),
                       "--outdir", outdir])

    assert code == 3
    tree = report.read_json(os.path.join(outdir, "report.json"))
    assert tree["error"]["type"] == "UnsupportedModel"


def test_figures_command(tmp_path, capsys):

    pd.DataFrame({"k1": [0.0, 0.5], "value": [0.0, 0.5],
                  "multiplicity": [1, 1], "stratum": [0, 0],
                  "rank_zero": [False, False]}) \
        .to_csv(str(tmp_path / "strata.csv"), index=False)
    report.write_json({"artifacts": {"strata": "strata.csv"}},
                      str(tmp_path / "report.json"))

    code = entry.main(["fibermourre", "figures",
                       "--report", str(tmp_path / "report.json"),
                       "--which", "strata"])

    assert code == 0
    assert os.path.exists(str(tmp_path / "figure_strata.csv"))
    assert entry.main(["fibermourre", "figures",
                       "--report", str(tmp_path / "report.json"),
                       "--which", "normtable"]) == 3
