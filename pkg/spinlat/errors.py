# -*- coding: utf-8 -*-
""" Exceptions raised by spinlat.

The classes derive from builtin exceptions as well, so code that
catches ValueError or RuntimeError keeps working.
The command line maps them onto exit codes, see :mod:`spinlat.__main__`.
"""


class SpinlatError(Exception):
    """ Base class of all spinlat exceptions. """

    exit_code = 1


class ConfigurationError(SpinlatError, ValueError):
    """ Invalid configuration or invalid model parameters. """

    exit_code = 2


class ContractError(SpinlatError, RuntimeError):
    """ A runtime contract of an operation was violated. """

    exit_code = 3


class RateBoundError(ContractError):
    """ The clock rate lambda is smaller than twice the largest flip rate. """


class SizeLimitError(ContractError):
    """ A system is too large for exact enumeration. """


class DependenceCapExceeded(ContractError):
    """ The exact dependence computation grew beyond its cap. """


class CoverageError(ContractError):
    """ An arrival stream does not cover the requested space-time window. """


class GeometryMismatchError(ContractError):
    """ Configuration, rates and stream live on different geometries. """


class FitError(ContractError):
    """ A decay fit is underdetermined or has censored interior points. """


class ConvergenceError(ContractError):
    """ A truncated series did not settle before the largest truncation. """


class CouplingIdentityError(SpinlatError, AssertionError):
    """ A per-realization identity failed, which certifies a bug. """

    exit_code = 1
