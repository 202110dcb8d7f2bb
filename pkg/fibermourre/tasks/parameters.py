'''
parameters.py
=============

Overview
--------

Helpers for the pipeline and run configurations.

* :func:`write_config_files` copies the packaged default
  ``yaml/pipeline_<name>.yml`` into the working directory.
* :func:`get_parameter_file` chooses the yml a pipeline reads its PARAMS
  from (the local copy for ``make``, the packaged default otherwise).
* :func:`load_config` reads a run configuration. YAML is a superset of
  JSON, so both formats load through ``yaml.safe_load``.

Functions
---------

'''

import os
import sys
import shutil
import logging
from pathlib import Path

import yaml

# ------------------------------ Set up logging ------------------------------ #

L = logging.getLogger(__name__)
log_handler = logging.StreamHandler(sys.stdout)
log_handler.setFormatter(
    logging.Formatter('%(asctime)s @tasks.parameters: %(message)s'))
log_handler.setLevel(logging.INFO)
L.addHandler(log_handler)
L.setLevel(logging.INFO)


# --------------------------------- Functions -------------------------------- #

def _default_yml(pipeline_path):

    pipeline_name = os.path.basename(pipeline_path)

    return os.path.join(os.path.dirname(os.path.abspath(pipeline_path)),
                        "yaml", pipeline_name.replace(".py", ".yml"))


def write_config_files(pipeline_path, general_path):
    '''
    Copy the default configuration file fibermourre/yaml/pipeline_[name].yml
    into the working directory (an existing local copy is kept).
    '''

    pipeline_name = os.path.basename(pipeline_path)
    dest = os.path.splitext(pipeline_name)[0] + ".yml"
    src = os.path.join(Path(pipeline_path).parents[0], "yaml", dest)

    if os.path.exists(dest):
        L.warning("file `%s` already exists - skipped" % dest)
        return

    if not os.path.exists(src):
        raise ValueError("default config file `%s` not found" % src)

    shutil.copyfile(src, dest)
    L.info("created new configuration file `%s` " % dest)


def get_parameter_file(pipeline_path, argv=None):
    '''
    Return the local yml file if the pipeline is being executed, otherwise
    the packaged default. A local file is mandatory for ``make``.
    '''

    argv = sys.argv if argv is None else argv
    pipeline_name = os.path.basename(pipeline_path)
    default = _default_yml(pipeline_path)

    if len(argv) > 1 and argv[1] == "make":

        yml_file = pipeline_name.replace(".py", ".yml")
        L.info("Using local yml file: " + yml_file)

        if not os.path.exists(yml_file):
            cmd = pipeline_name.replace("pipeline_", "").split(".")[0]
            raise ValueError('local configuration file missing. Please run '
                             '"fibermourre ' + cmd + ' config" to check '
                             'out a local copy of the default file')
        return yml_file

    if len(argv) > 1 and argv[1] not in ("config", "show", "-M", "-b", "-T"):
        raise ValueError('pipeline command not recognised: ' + argv[1])

    # config/show, the sphinx autodoc import (-M) and readthedocs (-b, -T)
    L.info("Using the default configuration file")
    if not os.path.exists(default):
        raise ValueError("default configuration file missing: " + default)

    return default


def load_config(path):
    '''Read a YAML or JSON configuration into a key-value tree.'''

    with open(path) as handle:
        tree = yaml.safe_load(handle)

    if not isinstance(tree, dict):
        raise ValueError("configuration " + path + " is not a key-value tree")

    return tree
