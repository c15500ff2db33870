"""Exception hierarchy.

``ConfigError`` subclasses map to CLI exit code 2, ``NumericalError``
subclasses to exit code 3.
"""


class ArealInterpError(Exception):
    pass


class ConfigError(ArealInterpError):
    pass


class NumericalError(ArealInterpError):
    pass


# geometry
class OutOfBoundsError(ConfigError):
    pass


class EmptyZoneError(ConfigError):
    pass


class DuplicateZoneError(ConfigError):
    pass


class RegionMismatchError(ConfigError):
    pass


class NotAPartitionError(ConfigError):
    pass


class NotNestedError(ConfigError):
    pass


class TargetStraddlesControlError(NotNestedError):
    pass


# model / field
class DegenerateModelError(ConfigError):
    pass


class AllZeroError(NumericalError):
    pass


class ZeroAuxiliaryError(NumericalError):
    pass


class ZeroExpectationError(NumericalError):
    pass


# regression
class NonpositiveMeanError(NumericalError):
    pass


class NotIdentifiableError(NumericalError):
    pass


class UnconvergedFitError(NumericalError):
    pass


class ZeroFittedDenominatorError(NumericalError):
    pass


class SingularInformationError(NumericalError):
    pass
