"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes, so every error raised on purpose
derives from one of the three families below.
"""


class SkewDPMError(Exception):
    """Base class for all package errors."""


class ConfigError(SkewDPMError, ValueError):
    """Invalid argument, configuration key or parameter value (exit code 2)."""


class DataFormatError(SkewDPMError, ValueError):
    """Malformed or unsupported input/output file (exit code 3)."""


class NumericalError(SkewDPMError, ArithmeticError):
    """Numerical failure during estimation or sampling (exit code 4)."""


# --- numerical family -------------------------------------------------------

class NotPositiveDefiniteError(NumericalError):
    """Matrix failed the SPD / conditioning check."""


class NumericalDomainError(NumericalError):
    """Inputs are outside the domain where a formula is defined."""


class DegenerateSliceError(NumericalError):
    """Stick extension in the slice sampler exceeded the atom cap."""


class ChainFailureError(NumericalError):
    """The chain produced a non-finite log density."""

    def __init__(self, iteration, message="non-finite log density"):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


class DegenerateSampleError(NumericalError):
    """Estimator input has no spread (e.g. all draws equal)."""


class ConstraintError(NumericalError):
    """A constrained estimating equation has no admissible root."""


class ComponentCollapseError(NumericalError):
    """An EM component lost all of its responsibility mass."""


class UndefinedMetricError(SkewDPMError, ValueError):
    """Requested metric is undefined for the given partitions."""


# --- data format family -----------------------------------------------------

class ParseError(DataFormatError):
    """Text input could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FcsFormatError(DataFormatError):
    """FCS file is truncated or internally inconsistent."""


class UnsupportedFeatureError(DataFormatError):
    """FCS feature outside the supported subset; names the keyword."""

    def __init__(self, keyword, value):
        super().__init__(f"unsupported {keyword}={value!r}")
        self.keyword = keyword
        self.value = value


class CorruptResultsError(DataFormatError):
    """Stored results failed their integrity check."""
