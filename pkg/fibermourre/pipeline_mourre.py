"""===================
Pipeline mourre.py
===================

Overview
--------

This pipeline builds the conjugate operator of an analytically fibered
operator for one configuration and certifies its Mourre estimate. It runs
the stages stratify, cover, connect, assemble and verify (naive and/or
modified mode) and publishes the artifacts.


Configuration
-------------

The pipeline requires a configured :file:`pipeline_mourre.yml` file.

A default configuration file can be generated by executing: ::

   fibermourre mourre config

The ``run`` section is a run configuration as described in
:mod:`fibermourre.tasks.runner`.


Inputs
------

None beyond the configuration: the model is a builtin example or an
inline matrix polynomial.


Output files
------------

#. strata.dir: a threshold survey (strata.csv, thresholds.json)
#. run.dir: the artifacts of the run (covering, commutator tables, Mourre
   certificates, report.json) and the figure data
#. a csvdb sqlite database with the strata, overlap, commutator and
   refinement tables
#. oracle.dir (example2 only): the closed-form commutator floors and the
   profile of the naive second commutator
#. the "api" endpoint with the registered certificate


Code
====

"""
from ruffus import *

import sys
import os
import json
from pathlib import Path

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

# set the location of the code directory
PARAMS["fibermourre_code_dir"] = Path(__file__).parents[1]


def run_config(outdir):
    '''The configured run, writing into ``outdir``.'''

    return runner.PipelineConfig.from_dict(dict(RUN, outdir=outdir))


# ---------------------- < specific pipeline tasks > ------------------------ #

@follows(mkdir("strata.dir"))
@files(None, "strata.dir/strata.sentinel")
def survey(infile, outfile):
    '''
    Survey the strata and thresholds over I~ without aborting.
    '''

    t = T.setup(infile, outfile, PARAMS,
                memory=PARAMS["resources_memory"])

    result = runner.run_strata(run_config(t.outdir))

    E.info("thresholds found: %s" % result.stages["stratify"]["thresholds"])

    IOTools.touch_file(outfile)


@follows(survey, mkdir("run.dir"))
@files(None, "run.dir/run.sentinel")
def certify(infile, outfile):
    '''
    Stratify, cover, connect, assemble and verify.
    '''

    t = T.setup(infile, outfile, PARAMS,
                memory=PARAMS["resources_memory"])

    result = runner.run(run_config(t.outdir))

    if result.exit_code == runner.EXIT_CONSTRUCTION:
        raise ValueError("construction aborted: " + json.dumps(result.error))

    if result.exit_code == runner.EXIT_VERIFICATION:
        failed = [c for c, entry in result.ledger.items()
                  if entry["status"] == runner.FAIL]
        E.warn("verification failed: " + ", ".join(failed))

    IOTools.touch_file(outfile)


def figure_jobs():

    for name in report.FIGURES:
        if name == "normtable" and len(RUN.get("resolutions") or []) < 3:
            continue
        yield ["run.dir/run.sentinel", "run.dir/figure_" + name + ".sentinel"]


@follows(certify)
@files(figure_jobs)
def figures(infile, outfile):
    '''
    Plot-ready figure data from the run artifacts.
    '''

    t = T.setup(infile, outfile, PARAMS)

    name = os.path.basename(outfile)[len("figure_"):-len(".sentinel")]
    report_file = os.path.join(t.outdir, report.ARTIFACTS["report"])

    statement = '''python %(fibermourre_code_dir)s/python/emit_figure_data.py
                   --report=%(report_file)s
                   --which=%(name)s
                   &> %(log_file)s
                ''' % dict(PARAMS, **t.var, **locals())

    P.run(statement, **t.resources)

    IOTools.touch_file(outfile)


@active_if(RUN.get("model") == "example2")
@follows(mkdir("oracle.dir"))
@files(None, "oracle.dir/bounds.sentinel")
def oracleBounds(infile, outfile):
    '''
    Closed-form floors of the example 2 commutators and the profile of the
    naive second commutator along k1.
    '''

    t = T.setup(infile, outfile, PARAMS)

    statement = '''python %(fibermourre_code_dir)s/python/oracle_bounds.py
                   --model=example2
                   --profile=%(out_file)s.csv
                   --outfile=%(out_file)s.json
                   &> %(log_file)s
                ''' % dict(PARAMS, **t.var, **locals())

    P.run(statement, **t.resources)

    IOTools.touch_file(outfile)


TABLES = ("strata", "overlaps", "commutators", "refinement")


def load_jobs():

    for name in TABLES:
        yield ["run.dir/run.sentinel", "run.dir/" + name + ".load"]


@jobs_limit(1)
@follows(certify)
@files(load_jobs)
def loadTables(infile, outfile):
    '''
    Load the run tables into the project database.
    '''

    table = outfile.replace(".load", ".csv")

    if not os.path.exists(table):
        E.warn("no %s written by this run" % table)
        IOTools.touch_file(outfile)
        return

    P.load(table, outfile, options="--separator=,")


@follows(loadTables, figures, oracleBounds)
@files("run.dir/run.sentinel", "api.sentinel")
def register(infile, outfile):
    '''
    Register the certificate and the run report on the api.
    '''

    file_set = {}
    for name in ("mourre", "report", "covering"):
        path = os.path.join("run.dir", report.ARTIFACTS[name])
        if os.path.exists(path):
            file_set[name] = {"path": path,
                              "format": "json",
                              "description": name + " of the run"}

    x = T.api("mourre")
    x.define_dataset(analysis_name="certificate",
                     analysis_description="Mourre certificates and the run "
                                          "report",
                     data_id=str(RUN.get("model") if isinstance(
                         RUN.get("model"), str) else "inline"),
                     file_set=file_set)
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
