# Sphinx configuration of the fibermourre documentation.
#
# Options not set here keep the Sphinx defaults, see
# https://www.sphinx-doc.org/en/master/usage/configuration.html

# -- Path setup --------------------------------------------------------------

import os
import sys
import sphinx_rtd_theme

# the package for autodoc, the pipeline scripts for their module pages
sys.path.insert(0, os.path.abspath('..'))
sys.path.insert(1, os.path.abspath('../fibermourre'))

import version as fibermourre_version  # noqa: E402

# -- Project information -----------------------------------------------------

project = 'fibermourre'
copyright = '2026, fibermourre developers'
author = 'fibermourre developers'

version = '.'.join(fibermourre_version.__version__.split('.')[:2])
release = fibermourre_version.__version__


# -- General configuration ---------------------------------------------------

# numpy style docstrings (napoleon), the operator formulas of the module
# overviews (mathjax) and links into the numerical stack (intersphinx)
extensions = ["sphinx.ext.napoleon",
              'sphinx.ext.autodoc',
              'sphinx.ext.mathjax',
              'sphinx.ext.intersphinx',
              'sphinx.ext.viewcode',
              'sphinx_rtd_theme']

autodoc_default_options = {
        'member-order': 'bysource',
        'exclude-members': '__weakref__'
    }

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable', None),
    'scipy': ('https://docs.scipy.org/doc/scipy', None),
    'pandas': ('https://pandas.pydata.org/docs', None)}

templates_path = ['_templates']

exclude_patterns = ['_build', 'Thumbs.db', '.DS_Store']


# -- Options for HTML output -------------------------------------------------

html_theme = "sphinx_rtd_theme"
html_title = "fibermourre " + release
html_static_path = ['_static']

# -- Options for Latex output -------------------------------------------------

latex_documents = [
    ('index', 'fibermourre.tex', 'fibermourre documentation',
     author, 'manual')]

latex_elements = {
      'extraclassoptions': 'openany,oneside'
    }
