'''
tasks
=====

The :mod:`tasks` package holds the fibermourre library and the helpers of
the pipeline tasks.

Core components:

* `parameters`_
* `setup`_
* `api`_

Library:

* `domain`_, `spectral`_, `profiles`_: grids, matrix families, spectral
  projectors and smooth profiles
* `stratify`_: strata of the characteristic variety and thresholds
* `covering`_: balls, windows, bumps and their incidence
* `connection`_: trivial, adiabatic and glued connections
* `conjugate`_: the conjugate operator and its commutators
* `mourre`_: sparse discretization, Mourre certificate, refinement
* `oracle`_: closed forms of the worked examples
* `runner`_, `report`_: configured runs and their artifacts

'''


# import core submodules into top-level namespace

from fibermourre.tasks.setup import *
from fibermourre.tasks.parameters import *
from fibermourre.tasks.api import *
