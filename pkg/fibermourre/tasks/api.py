'''
api.py
======

Overview
--------

Pipelines publish their outputs through a common service endpoint: the
folder "api", into which the artifacts of a run are symlinked next to a
``manifest.yml`` describing them.

Registered datasets live at: ::

  api/pipeline.name/analysis_name/[data_subset/][data_id/]

For example, pipeline_mourre registers the certificate of each run: ::

  import fibermourre.tasks.api as api

  file_set = {"mourre": {"path": "run.dir/mourre.json",
                         "format": "json",
                         "description": "Mourre certificates per mode"}}

  x = api.api("mourre")
  x.define_dataset(analysis_name="certificate",
                   analysis_description="Mourre certificates",
                   data_id="example2",
                   file_set=file_set)
  x.register_dataset()

Class and method documentation
------------------------------

'''

import os
import re
import copy
import shutil

import yaml


class api():
    '''
    Define and register datasets on the fibermourre api.

    .. note:: pipeline names are sanitised to replace spaces, underscores
       and hyphens with periods.
    '''

    def __init__(self, pipeline=None, endpoint="api"):

        if pipeline is None or pipeline == "":
            raise ValueError("a pipeline name must be specified")

        self.pipeline = re.sub(r"[ \-_]", ".", pipeline)
        self.endpoint = endpoint
        self.dataset_defined = False

    def define_dataset(self, analysis_name=None, analysis_description=None,
                       data_subset=None, data_id=None, file_set=None):
        '''
        Define the dataset. ``file_set`` maps arbitrary names to
        ``{"path": ..., "format": ..., "description": ...}`` entries (an
        optional "link_name" renames the link).
        '''

        if analysis_name is None:
            raise ValueError("The analysis name must be specified")

        if analysis_description is None:
            raise ValueError("The analysis description must be specified")

        if not file_set:
            raise ValueError("The file_set must be specified")

        for name, entry in file_set.items():
            if not os.path.exists(entry["path"]):
                raise ValueError("file_set file : " + name + " does not "
                                 "exist at path: " + entry["path"])

        self.analysis_name = analysis_name
        self.analysis_description = analysis_description
        self.data_subset = data_subset
        self.data_id = data_id
        self.file_set = file_set
        self.dataset_defined = True

    def location(self):
        '''The endpoint folder of the defined dataset.'''

        parts = [self.endpoint, self.pipeline, self.analysis_name]
        parts += [p for p in (self.data_subset, self.data_id) if p is not None]

        return os.path.join(*parts)

    def register_dataset(self):
        '''
        Link the dataset into the endpoint: (1) recreate its folder, (2)
        write the manifest.yml, (3) symlink the files.
        '''

        if not self.dataset_defined:
            raise ValueError("A dataset must be defined (define_dataset) "
                             "before register_dataset is called")

        target = self.location()
        if os.path.exists(target):
            shutil.rmtree(target)
        os.makedirs(target)

        files = copy.deepcopy(self.file_set)
        for entry in files.values():
            entry["path"] = os.path.basename(entry["path"])

        manifest = {"pipeline": self.pipeline,
                    "analysis": self.analysis_name,
                    "analysis_description": self.analysis_description,
                    "data_subset": self.data_subset,
                    "identifier": self.data_id,
                    "files": files}

        with open(os.path.join(target, "manifest.yml"), "w") as yml:
            yaml.dump(manifest, yml, allow_unicode=True)

        for entry in self.file_set.values():
            source = os.path.abspath(entry["path"])
            link = os.path.join(target, entry.get(
                "link_name", os.path.basename(entry["path"])))
            os.symlink(os.path.relpath(source, os.path.dirname(link)), link)

        return target

    def reset_endpoint(self):
        '''Remove everything registered by this pipeline.'''

        location = os.path.join(self.endpoint, self.pipeline)
        if os.path.exists(location):
            shutil.rmtree(location)
