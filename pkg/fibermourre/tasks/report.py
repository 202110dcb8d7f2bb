'''
report.py
=========

Overview
--------

Tables and files written by a run, and the plot-ready figure data derived
from them.

Artifacts (relative to the output directory):

* ``strata.csv``: one row per sampled (node, eigenvalue cluster) with
  columns node, k1..kd, value, multiplicity, stratum, dimension, rank_zero.
* ``thresholds.json``: the detected critical values.
* ``covering.json``: balls, windows and the bump profile.
* ``overlaps.csv``: incidence of intersecting windows (m, n, m_prime,
  n_prime, relation, nodes).
* ``commutators.csv``: coefficient-level norms per mode and order.
* ``mourre.json``: the Mourre certificates per mode.
* ``refinement.csv``: the refinement table with its flags.
* ``report.json``: the run report.

CSV files are written with ``%.12g`` floats and JSON with sorted keys, so
identical runs give identical files.

Figures
-------

:func:`emit_figure_data` writes ``figure_<name>.csv`` next to the report:

* strata: k1..kd, multiplicity, stratum, rank_zero per sampled point.
* levelsets: k1..kd, value, stratum for points with |lambda - lambda0| <=
  delta, lambda0 and delta being the centre and half width of I.
* supports: patch, k1..kd (centre), radius, bump_radius, windows, nodes.
* normtable: the refinement table sorted by mode, order and resolution.

Class and method documentation
------------------------------

'''

import os
import json

import numpy as np
import pandas as pd

from fibermourre.tasks.errors import MissingStage


ARTIFACTS = {"strata": "strata.csv",
             "thresholds": "thresholds.json",
             "covering": "covering.json",
             "overlaps": "overlaps.csv",
             "commutators": "commutators.csv",
             "mourre": "mourre.json",
             "refinement": "refinement.csv",
             "report": "report.json"}

FIGURES = ("strata", "levelsets", "supports", "normtable")

FLOAT_FORMAT = "%.12g"


# ---------------------------------- writing --------------------------------- #

def plain(value):
    '''JSON-ready copy of nested numpy values.'''

    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    if isinstance(value, complex):
        return [value.real, value.imag]

    return value


def write_json(tree, path):

    with open(path, "w") as handle:
        json.dump(plain(tree), handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path):

    with open(path) as handle:
        return json.load(handle)


def write_table(table, path):

    table.to_csv(path, index=False, float_format=FLOAT_FORMAT)


# ---------------------------------- tables ---------------------------------- #

def _coordinates(grid, nodes):

    points = grid.points[nodes]
    return {"k" + str(a + 1): points[:, a] for a in range(grid.dimension)}


def strata_table(sample, strata):
    '''One row per sampled triple, with the stratum it belongs to.'''

    grid = sample.grid
    stratum = np.full(len(sample), -1)
    dimension = np.full(len(sample), -1)
    rank_zero = np.zeros(len(sample), dtype=bool)

    for s in strata:
        stratum[s.members] = s.id
        dimension[s.members] = s.dimension
        rank_zero[s.members] = s.rank_zero

    table = pd.DataFrame({"node": sample.nodes,
                          **_coordinates(grid, sample.nodes),
                          "value": sample.values,
                          "multiplicity": sample.multiplicities,
                          "stratum": stratum,
                          "dimension": dimension,
                          "rank_zero": rank_zero})

    return table.sort_values(["stratum", "node", "value"]) \
        .reset_index(drop=True)


def incidence_table(incidence):

    return pd.DataFrame(incidence.to_rows(),
                        columns=["m", "n", "m_prime", "n_prime", "relation",
                                 "nodes"])


def commutator_table(reports_by_mode):
    '''Coefficient-level norms, one row per (mode, order).'''

    rows = []
    for mode in sorted(reports_by_mode):
        for report in reports_by_mode[mode]:
            rows.append({"mode": mode, **report.to_dict()})

    return pd.DataFrame(rows, columns=[
        "mode", "order", "principal_residual", "zeroth_norm",
        "second_order_residual", "support_nodes"])


def covering_dump(covering, bumps):

    tree = covering.to_dict()
    tree["profile"] = bumps.profile
    tree["certified_nodes"] = int(np.sum(bumps.certified))
    tree["partition_defect"] = bumps.partition_defect()

    return tree


# ---------------------------------- figures --------------------------------- #

def _artifact(tree, outdir, name):

    files = tree.get("artifacts", {})
    if name not in files:
        raise MissingStage("the run wrote no " + name + " artifact",
                           stage=name)

    path = os.path.join(outdir, files[name])
    if not os.path.exists(path):
        raise MissingStage("missing artifact " + path, stage=name)

    return path


def _coordinate_columns(table):
    return [c for c in table.columns if c.startswith("k") and c[1:].isdigit()]


def _strata_figure(tree, outdir):

    table = pd.read_csv(_artifact(tree, outdir, "strata"))
    columns = _coordinate_columns(table) + ["multiplicity", "stratum",
                                            "rank_zero"]

    return table[columns]


def _levelsets_figure(tree, outdir):

    table = pd.read_csv(_artifact(tree, outdir, "strata"))
    lo, hi = tree["config"]["intervals"]["I"]
    centre, delta = 0.5 * (lo + hi), 0.5 * (hi - lo)
    near = np.abs(table["value"] - centre) <= delta

    return table.loc[near, _coordinate_columns(table) +
                     ["value", "stratum"]].reset_index(drop=True)


def _supports_figure(tree, outdir):

    covering = read_json(_artifact(tree, outdir, "covering"))
    kappa = covering["kappa"]
    rows = []

    for patch in covering["patches"]:
        centre = patch["center"] or []
        row = {"patch": patch["index"]}
        row.update({"k" + str(a + 1): x for a, x in enumerate(centre)})
        radius = patch["radius"]
        row["radius"] = radius
        row["bump_radius"] = None if radius is None else kappa * radius
        row["windows"] = ";".join(
            ":".join(str(v) for v in w.get("interval", w.get("indices", [])))
            for w in patch["windows"])
        row["nodes"] = patch["nodes"]
        rows.append(row)

    return pd.DataFrame(rows)


def _normtable_figure(tree, outdir):

    table = pd.read_csv(_artifact(tree, outdir, "refinement"))

    return table.sort_values(["mode", "order", "resolution"]) \
        .reset_index(drop=True)


def emit_figure_data(report, figure, outdir=None):
    '''
    Write ``figure_<figure>.csv`` from the artifacts of a run.

    Args:
        report: Path to a ``report.json`` or the loaded report tree.
        figure: One of :data:`FIGURES`.
        outdir: Directory of the artifacts (default: the report's).

    Returns:
        Path of the written file.

    Raises:
        MissingStage: the stage the figure needs did not run.
    '''

    if figure not in FIGURES:
        raise ValueError("unknown figure: " + str(figure) + ", choose from " +
                         ", ".join(FIGURES))

    if isinstance(report, str):
        outdir = os.path.dirname(os.path.abspath(report)) \
            if outdir is None else outdir
        tree = read_json(report)
    else:
        tree = report
        outdir = tree.get("outdir", ".") if outdir is None else outdir

    builders = {"strata": _strata_figure,
                "levelsets": _levelsets_figure,
                "supports": _supports_figure,
                "normtable": _normtable_figure}

    table = builders[figure](tree, outdir)
    path = os.path.join(outdir, "figure_" + figure + ".csv")
    write_table(table, path)

    return path
