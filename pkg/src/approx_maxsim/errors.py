"""Exception types raised across the package."""


class FormatError(ValueError):
    """A binary or text file does not match its declared layout."""


class OutOfRange(IndexError):
    pass


class TooFewPoints(ValueError):
    """Not enough training points for the requested number of centroids."""


class CorruptCode(ValueError):
    pass


class NotRankable(ValueError):
    """An unordered candidate set was used where a ranking is required."""


class DimError(ValueError):
    pass


class CorpusMismatch(KeyError):
    pass


class Undefined(ValueError):
    """A statistic is undefined for the given input (e.g. fewer than two items)."""


class PairingError(ValueError):
    pass
