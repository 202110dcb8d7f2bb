'''test_style - coding style of the fibermourre code
===================================================

Purpose
-------

Runs pycodestyle on the package, the scripts and the tests::

   pytest tests/test_style.py

'''
import glob
import os

import pycodestyle
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# DIRECTORIES to examine for python modules/scripts
EXPRESSIONS = (
    ('tests', 'tests/*.py'),
    ('package', 'fibermourre/*.py'),
    ('tasks', 'fibermourre/tasks/*.py'),
    ('scripts', 'python/*.py'))


# Codes to ignore in the pycodestyle BaseReport
IGNORE = set(('E101',  # indentation contains mixed spaces and tabs
              'E201',  # whitespace after '('
              'E202',  # whitespace before ')'
              'E122',  # continuation line missing indentation or outdented
              'E265',  # block comment should start with '# '
              'E501',  # line too long (82 > 79 characters)
              'E502',  # the backslash is redundant between brackets
              'E731',  # do not assign a lambda expression, use a def
              'W191',
              'W291',
              'W293',
              'W391',
              'W503',  # line break before binary operator
              'W504',  # line break after binary operator
              'W601',
              'W602',
              'F403',
              'files',
              'directories',
              'physical lines',
              'logical lines',))


def collect():

    found = []
    for label, expression in EXPRESSIONS:
        files = sorted(glob.glob(os.path.join(ROOT, expression)))
        found.extend(f for f in files if not os.path.isdir(f))

    return found


@pytest.mark.parametrize("filename", collect(),
                         ids=lambda f: os.path.relpath(f, ROOT))
def test_style(filename):
    '''pep8 style of one module or script'''

    p = pycodestyle.StyleGuide(quiet=True)
    report = p.check_files([filename])

    # count errors/warning excluding
    # those to ignore
    found = ['%s:%i' % (x, y) for x, y
             in report.counters.items() if x not in IGNORE]
    total = sum(y for x, y in report.counters.items() if x not in IGNORE)

    assert total == 0, \
        'pep8 style violations: {}'.format(','.join(found))
