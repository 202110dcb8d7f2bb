'''
errors.py
=========

Overview
--------

Exceptions raised by the construction and verification stages. They all
derive from :class:`FiberMourreError` (itself a ``ValueError``) so callers
can treat any of them as a sanity-check failure, while the runner maps them
to a stage and an exit code.

Class and method documentation
------------------------------

'''


class FiberMourreError(ValueError):
    '''
    Base class. Keyword arguments are stored as attributes so that reports
    can carry the offending node, pair or value.
    '''

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context
        for key, value in context.items():
            setattr(self, key, value)


class BoundaryCollision(FiberMourreError):
    '''An eigenvalue cluster sits within cluster_tol of an interval end.'''


class NagyGap(FiberMourreError):
    '''Two projectors are too far apart (norm of difference >= 1).'''


class NonCommuting(FiberMourreError):
    '''Projector generators do not commute at some node.'''


class NonCommutingPrincipal(FiberMourreError):
    '''Principal parts of two first-order operators do not commute.'''


class ThresholdInInterval(FiberMourreError):
    '''The outer interval contains detected thresholds.'''


class NoConvergence(FiberMourreError):
    '''Greedy radius halving failed at a sample point.'''


class CoverageGap(FiberMourreError):
    '''The bump profiles vanish at a sample of K_I.'''


class AbsorptionViolation(FiberMourreError):
    '''Interval projectors of overlapping balls are not nested.'''


class PartitionGap(FiberMourreError):
    '''The squared Theta partition does not sum to one.'''


class IncompleteFamily(FiberMourreError):
    '''A projector family does not resolve the identity.'''


class FlatDirection(FiberMourreError):
    '''The mean eigenvalue gradient falls below the floor.'''


class SupportTouchesBoundary(FiberMourreError):
    '''Operator coefficients reach the stencil band of a box boundary.'''


class MissingStage(FiberMourreError):
    '''A report lacks the stage a figure is built from.'''


class UnknownQuantity(FiberMourreError):
    '''Oracle quantity not in the enumerated set.'''


class UnsupportedModel(FiberMourreError):
    '''Oracle requested for a model without closed forms.'''
