"""=======================
Pipeline refinement.py
=======================

Overview
--------

This pipeline repeats the construction of a configured run at each grid
resolution, one job per resolution, and merges the matrix-level norms of
the iterated commutators into the refinement table. A (mode, order) group
whose norm grows by at least ``ratio`` at every refinement is flagged
UNBOUNDED, one whose norms stay within ``spread`` of each other BOUNDED,
anything else UNRESOLVED. At least three resolutions are required.

Grid-level stability is evidence, not proof: the flags read "consistent
with bounded" and "divergent, consistent with unbounded".


Configuration
-------------

The pipeline requires a configured :file:`pipeline_refinement.yml` file.

A default configuration file can be generated by executing: ::

   fibermourre refinement config


Output files
------------

#. refinement.dir/n<points>.csv: unflagged rows per resolution
#. refinement.dir/refinement.csv: the merged, flagged table
#. refinement.dir/flags.json: the flag of every (mode, order)
#. the refinement table in the csvdb sqlite database


Code
====

"""
from ruffus import *

import sys
import os

import pandas as pd

from cgatcore import experiment as E
from cgatcore import pipeline as P
import cgatcore.iotools as IOTools

# import local pipeline utility functions
import fibermourre.tasks as T
import fibermourre.tasks.runner as runner
import fibermourre.tasks.report as report

# ----------------------- < pipeline configuration > ------------------------ #

# Override function to collect config files
P.control.write_config_files = T.write_config_files

# load options from the yml file
P.parameters.HAVE_INITIALIZED = False
PARAMETER_FILE = T.get_parameter_file(__file__)
PARAMS = P.get_parameters(PARAMETER_FILE)

RUN = T.load_config(PARAMETER_FILE)["run"]
CONFIG = runner.PipelineConfig.from_dict(dict(RUN, outdir="refinement.dir"))


# ---------------------- < specific pipeline tasks > ------------------------ #

def resolution_jobs():

    for n in CONFIG.resolutions:
        yield [None, os.path.join("refinement.dir",
                                  "n" + str(n) + ".sentinel")]


@follows(mkdir("refinement.dir"))
@files(resolution_jobs)
def measure(infile, outfile):
    '''
    Build and measure every mode at one resolution.
    '''

    t = T.setup(infile, outfile, PARAMS,
                memory=PARAMS["resources_memory"])

    n = int(os.path.basename(outfile)[1:-len(".sentinel")])
    rows = runner.resolution_rows(CONFIG, n)
    report.write_table(rows, t.out_file + ".csv")

    IOTools.touch_file(outfile)


@merge(measure, "refinement.dir/refinement.sentinel")
def flag(infiles, outfile):
    '''
    Merge the resolutions and flag divergent growth.
    '''

    tables = [pd.read_csv(x.replace(".sentinel", ".csv")) for x in infiles]
    table = runner.merge_rows(tables, CONFIG.ratio, CONFIG.spread)

    out_file = outfile.replace(".sentinel", ".csv")
    report.write_table(table, out_file)

    flags = {"%s_ad%i" % key: group["flag"].iloc[0]
             for key, group in table.groupby(["mode", "order"])}
    report.write_json(flags, os.path.join("refinement.dir", "flags.json"))

    for key, value in sorted(flags.items()):
        E.info("%s: %s" % (key, value))

    IOTools.touch_file(outfile)


@transform(flag, suffix(".sentinel"), ".load")
def loadRefinement(infile, outfile):
    '''
    Load the refinement table into the project database.
    '''

    P.load(infile.replace(".sentinel", ".csv"), outfile,
           options="--separator=,")


@follows(loadRefinement)
@files(flag, "refinement.dir/api.sentinel")
def register(infile, outfile):
    '''
    Register the refinement table on the api.
    '''

    x = T.api("refinement")
    x.define_dataset(analysis_name="norms",
                     analysis_description="commutator norms across "
                                          "resolutions",
                     file_set={
                         "table": {"path": infile.replace(".sentinel",
                                                          ".csv"),
                                   "format": "csv",
                                   "description": "refinement table"},
                         "flags": {"path": "refinement.dir/flags.json",
                                   "format": "json",
                                   "description": "growth flags"}})
    x.register_dataset()

    IOTools.touch_file(outfile)


# --------------------- < generic pipeline tasks > -------------------------- #

@follows(register)
def full():
    pass


def main(argv=None):
    if argv is None:
        argv = sys.argv
    P.main(argv)


if __name__ == "__main__":
    sys.exit(P.main(sys.argv))
