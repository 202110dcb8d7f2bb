'''fibermourre: conjugate operators for analytically fibered operators.'''

from fibermourre.version import __version__
