"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class PlcError(Exception):
    """Base class for all errors raised by :mod:`plcmix`."""


class ParameterDomainError(PlcError, ValueError):
    """A parameter lies outside its family's domain (e.g. a non-positive scale)."""


class SampleError(PlcError, ValueError):
    """A sample violates the preconditions (N >= 2, finite values)."""


class DegenerateSampleError(SampleError):
    """The sample has zero variance, so the null MLE does not exist."""


class NumericOverflowError(PlcError, ArithmeticError):
    """A likelihood accumulation produced a non-finite value."""


class ComponentCollapse(PlcError):
    """An EM step left one component with (numerically) zero weight."""


class AssumptionViolation(PlcError):
    """The standing assumptions of the limit theorem do not hold."""


class SimulationIntegrityError(PlcError):
    """Too many Monte Carlo replications had to be redrawn."""
