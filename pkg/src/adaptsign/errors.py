"""Exception types raised across the package."""


class AdaptSignError(Exception):
    """Base class for all package errors."""


class DimensionError(AdaptSignError, ValueError):
    pass


class ConfigError(AdaptSignError, ValueError):
    pass


class UsageError(AdaptSignError, ValueError):
    pass


class EmptyInputError(AdaptSignError, ValueError):
    pass


class SequenceTooShortError(AdaptSignError, ValueError):
    pass


class LabelError(AdaptSignError, ValueError):
    pass


class OracleSizeError(AdaptSignError, ValueError):
    pass


class UndefinedWERError(AdaptSignError, ValueError):
    pass


class CompatibilityError(AdaptSignError, ValueError):
    pass


class DataConfigError(AdaptSignError, ValueError):
    pass
