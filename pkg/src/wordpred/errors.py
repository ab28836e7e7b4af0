"""Exception types shared across the package."""


class WordpredError(Exception):
    """Base class for all package-specific errors."""


class ParseError(WordpredError):
    """A data file could not be parsed; message names the offending line."""


class IntegrityError(WordpredError):
    """Parsed data violates a structural invariant (duplicates, bad values)."""


class ResolutionError(WordpredError):
    """A referenced context does not resolve against the stimulus corpus."""


class MissingContextError(WordpredError):
    """A lookup was made for a context with no stored responses."""


class TokenizationError(WordpredError):
    """A word has no segmentation under the active vocabulary."""


class FormatError(WordpredError):
    """A binary/record file has a bad magic number, version, or structure."""


class CoverageError(WordpredError):
    """A replayed provider was asked for a prefix absent from its dump."""


class DesignError(WordpredError):
    """A regression design matrix is rank deficient or otherwise unusable."""


class ConvergenceError(WordpredError):
    """An iterative fit exceeded its iteration budget."""


class PlanError(WordpredError):
    """A cross-validation plan could not be constructed."""


class DegenerateThresholdError(WordpredError):
    """A frequency threshold left the frequent-token set empty."""


class ConfigurationError(WordpredError):
    """An experiment configuration references missing inputs."""


class UnsupportedDatasetError(WordpredError):
    """The requested analysis needs data the supplied dataset lacks."""


class OutputError(WordpredError):
    """A report or chart could not be written."""
