import os
import argparse
import logging
import sys

from fibermourre.tasks import report

# <------------------------------ Logging ------------------------------------>

L = logging.getLogger(__name__)
log_handler = logging.StreamHandler(sys.stdout)
log_handler.setFormatter(logging.Formatter('%(asctime)s %(message)s'))
log_handler.setLevel(logging.INFO)
L.addHandler(log_handler)
L.setLevel(logging.INFO)

# <------------------------------ Arguments ---------------------------------->

L.info("parsing arguments")

parser = argparse.ArgumentParser()
parser.add_argument("--report", default=None, type=str,
                    help="report.json written by a fibermourre run")
parser.add_argument("--which", default="all", type=str,
                    help=("comma separated figures among " +
                          ",".join(report.FIGURES) + ", or all"))
parser.add_argument("--outdir", default=None, type=str,
                    help="output directory (default: next to the report)")

args = parser.parse_args()

L.info("Running with arguments:")
print(args)

# <--------------------------- Sanity checks(s) ------------------------------>

if args.report is None:
    raise ValueError("a run report must be given")

if not os.path.exists(args.report):
    raise ValueError("report: " + args.report + " does not exist")

figures = report.FIGURES if args.which == "all" else args.which.split(",")

for name in figures:
    if name not in report.FIGURES:
        raise ValueError("unknown figure: " + name)

# <------------------------------ Emit the data ------------------------------>

tree = report.read_json(args.report)
outdir = args.outdir or os.path.dirname(os.path.abspath(args.report))
artifacts = os.path.dirname(os.path.abspath(args.report))

for name in figures:

    if name == "normtable" and "refinement" not in tree.get("artifacts", {}):
        L.info("skipping normtable: the run has no refinement study")
        continue

    path = report.emit_figure_data(tree, name, artifacts)

    if outdir != artifacts:
        target = os.path.join(outdir, os.path.basename(path))
        os.replace(path, target)
        path = target

    L.info("written " + path)

L.info("complete")
