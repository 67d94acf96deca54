"""Domain error hierarchy shared across the toolkit."""


class ForamsliceError(Exception):
    """Base class for all domain errors."""


# --- volume parsing / loading ---

class BadMagic(ForamsliceError):
    pass


class UnsupportedDatatype(ForamsliceError):
    pass


class TruncatedHeader(ForamsliceError):
    pass


class SizeMismatch(ForamsliceError):
    pass


class IndexOutOfRange(ForamsliceError):
    pass


class ManifestError(ForamsliceError):
    pass


# --- preprocessing / metrics ---

class DegenerateImage(ForamsliceError):
    pass


class EmptyForeground(ForamsliceError):
    pass


class EmptyMask(ForamsliceError):
    pass


class ShapeMismatch(ForamsliceError):
    pass


class TooSmall(ForamsliceError):
    pass


class ConstantInput(ForamsliceError):
    pass


# --- curation / evaluation ---

class ZeroMean(ForamsliceError):
    pass


class EmptyInput(ForamsliceError):
    pass


# --- matching ---

class EmptyCorpus(ForamsliceError):
    pass


class CorruptIndex(ForamsliceError):
    pass


# --- classification providers ---

class ProviderUnavailable(ForamsliceError):
    pass


class ContractViolation(ForamsliceError):
    pass


class MissingProvider(ForamsliceError):
    pass
