'''
fibermourre.py - conjugate operators for analytically fibered operators
=======================================================================

Direct commands::

    fibermourre run --config <path>
    fibermourre example --id {1|2} [--quick]
    fibermourre strata --config <path>
    fibermourre figures --report <path> --which {strata|levelsets|supports|normtable}

Exit codes: 0 all-pass, 2 verification failure, 3 construction abort.

To use a pipeline, type::

    fibermourre <pipeline> [config|make|show] [pipeline options]

For this message and a list of available pipelines type::

    fibermourre --help

The thread count is read from the FIBERMOURRE_THREADS environment
variable.
'''

import os
import sys
import re
import glob
import argparse
import importlib.util

COMMANDS = ("run", "example", "strata", "figures")


def printListInColumns(names, ncolumns):
    '''output list *names* in *ncolumns*.'''

    if len(names) == 0:
        return ""

    max_width = max([len(x) for x in names]) + 3
    n = -(-len(names) // ncolumns)

    columns = [names[x * n:x * n + n] for x in range(ncolumns)]
    for column in columns:
        column.extend([''] * (n - len(column)))

    pattern = ' '.join(['%-' + str(max_width) + 's'] * ncolumns)

    return '\n'.join([pattern % row for row in zip(*columns)])


def pipelines(path):

    found = glob.glob(os.path.join(path, "pipeline_*.py"))

    return sorted([os.path.basename(x)[len("pipeline_"):-len(".py")]
                   for x in found])


def parser():

    p = argparse.ArgumentParser(prog="fibermourre",
                                description=__doc__.split("\n")[1])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a configured run")
    run.add_argument("--config", required=True,
                     help="run configuration (YAML or JSON)")
    run.add_argument("--outdir", default=None,
                     help="override the configured output directory")

    example = sub.add_parser("example", help="reproduce a worked example")
    example.add_argument("--id", type=int, choices=(1, 2), required=True)
    example.add_argument("--quick", action="store_true",
                         help="coarser grids and fewer orders")
    example.add_argument("--outdir", default=None)

    strata = sub.add_parser("strata", help="survey strata and thresholds")
    strata.add_argument("--config", required=True)
    strata.add_argument("--outdir", default=None)

    figures = sub.add_parser("figures", help="emit plot-ready figure data")
    figures.add_argument("--report", required=True,
                         help="report.json of a run")
    figures.add_argument("--which", required=True,
                         choices=("strata", "levelsets", "supports",
                                  "normtable"))

    return p


def command(argv):
    '''Run one direct command, returning the exit code.'''

    import fibermourre.tasks as T
    T.configure_threads()

    from fibermourre.tasks import report, runner
    from fibermourre.tasks.errors import FiberMourreError

    args = parser().parse_args(argv)

    try:
        if args.command == "figures":
            path = report.emit_figure_data(args.report, args.which)
            print(path)
            return runner.EXIT_OK

        if args.command == "example":
            config = runner.example_config(args.id, args.quick, args.outdir)
        else:
            tree = T.load_config(args.config)
            if args.outdir is not None:
                tree["outdir"] = args.outdir
            config = runner.PipelineConfig.from_dict(tree)

        if args.command == "strata":
            runner.run_strata(config)
            return runner.EXIT_OK

        return runner.run(config).exit_code

    except FiberMourreError as err:
        sys.stderr.write("fibermourre: %s: %s\n" % (type(err).__name__, err))
        return runner.EXIT_CONSTRUCTION


def main(argv=None):

    argv = sys.argv if argv is None else argv

    path = os.path.abspath(os.path.dirname(__file__))

    if len(argv) == 1 or argv[1] in ("--help", "-h"):
        print(globals()["__doc__"])
        print("The list of available pipelines are:\n")
        print("{}\n".format(printListInColumns(pipelines(path), 3)))
        return 0

    if argv[1] in COMMANDS:
        return command(argv[1:])

    name = "pipeline_{}".format(re.sub("-", "_", argv[1]))
    location = os.path.join(path, name + ".py")
    if not os.path.exists(location):
        sys.stderr.write("fibermourre: unknown command or pipeline: %s\n" %
                         argv[1])
        return 1

    import fibermourre.tasks as T
    T.configure_threads()

    # remove 'fibermourre' from sys.argv
    del sys.argv[0]

    # specify a named logfile
    sys.argv.append("--pipeline-logfile=" + name + ".log")

    spec = importlib.util.spec_from_file_location(name, location)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)

    return module.main(sys.argv)


if __name__ == "__main__":
    sys.exit(main())
