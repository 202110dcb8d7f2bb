import os
import argparse
import logging
import sys
import json

import numpy as np
import pandas as pd

from fibermourre.tasks import oracle

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
parser.add_argument("--model", default="example2", type=str,
                    help="the worked example (only example2 has bounds)")
parser.add_argument("--samples", default=100001, type=int,
                    help="points of the k1 scan")
parser.add_argument("--span", default=1.0, type=float,
                    help="the scan covers k1 in [-span, span]")
parser.add_argument("--profile", default=None, type=str,
                    help=("optional csv of the naive ad^2 principal norm "
                          "along the scan"))
parser.add_argument("--outfile", default=None, type=str,
                    help="name of the json outfile")

args = parser.parse_args()

L.info("Running with arguments:")
print(args)

# <--------------------------- Sanity checks(s) ------------------------------>

if args.outfile is None:
    raise ValueError("an outfile must be given")

if args.samples < 3:
    raise ValueError("the scan needs at least 3 samples")

if args.profile is not None and os.path.dirname(args.profile) and \
        not os.path.exists(os.path.dirname(args.profile)):
    raise ValueError("profile directory does not exist")

# <----------------------------- Compute bounds ------------------------------>

L.info("scanning the closed-form commutators")

bounds = oracle.oracle_commutator_bounds(args.model, args.samples, args.span)

with open(args.outfile, "w") as handle:
    json.dump(bounds, handle, indent=2, sort_keys=True)

if args.profile is not None:

    k1 = np.linspace(-args.span, args.span, args.samples)
    points = np.stack([k1, np.zeros_like(k1)], axis=1)
    principal = oracle.naive_second_principal(points, envelope=False)
    norms = np.max(np.linalg.norm(principal, ord=2, axis=(-2, -1)), axis=0)

    pd.DataFrame({"k1": k1, "naive_ad2_principal": norms}).to_csv(
        args.profile, index=False, float_format="%.12g")

L.info("mourre floor %(mourre_floor)g, naive ad2 floor %(naive_ad2_floor)g "
       "at k1 = %(naive_ad2_argmax)g" % bounds)

L.info("complete")
