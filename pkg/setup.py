import sys
from setuptools import setup, find_packages

########################################################################
########################################################################
# collect version
sys.path.insert(0, "fibermourre")
import version

version = version.__version__

###############################################################
###############################################################
# Define dependencies
#
major, minor1, minor2, s, tmp = sys.version_info

if major < 3 or (major == 3 and minor1 < 8):
    raise SystemExit("""Requires Python 3.8 or later.""")

fibermourre_packages = find_packages(exclude=["tests", "tests.*"])

with open("requirements.txt") as handle:
    install_requires = [x.strip() for x in handle
                        if x.strip() and not x.startswith("#")]

##########################################################
##########################################################
# Classifiers
classifiers = """
Development Status :: 3 - Alpha
Intended Audience :: Science/Research
Intended Audience :: Developers
License :: OSI Approved
Programming Language :: Python
Topic :: Scientific/Engineering :: Mathematics
Topic :: Scientific/Engineering :: Physics
Operating System :: POSIX
Operating System :: Unix
Operating System :: MacOS
"""

setup(
    # package information
    name='fibermourre',
    version=version,
    description='fibermourre: conjugate operators and Mourre estimates '
                'for analytically fibered operators',
    license="MIT",
    platforms=["any"],
    keywords="spectral theory, Mourre estimate, conjugate operator",
    long_description='''fibermourre : builds the corrected conjugate
operator of an analytically fibered operator with matrix fibers, certifies
its Mourre estimate and checks the boundedness of its iterated
commutators''',
    classifiers=[_f for _f in classifiers.split("\n") if _f],
    url="",
    # package contents
    packages=fibermourre_packages,
    package_data={"fibermourre": ["yaml/*.yml"]},
    include_package_data=True,
    install_requires=install_requires,
    entry_points={
        "console_scripts": ["fibermourre = fibermourre.entry:main"]
    },
    # other options
    zip_safe=False,
    test_suite="tests",
)
