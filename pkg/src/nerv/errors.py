"""Exception hierarchy shared by every stage of the codec."""


class NervError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfigError(NervError, ValueError):
    pass


class ShapeError(NervError, ValueError):
    pass


class DomainError(NervError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class DataError(NervError, ValueError):
    pass


class TrainingDivergedError(NervError, RuntimeError):
    pass


class FormatError(NervError):
    """Base class for problems reading a ``.nrv`` stream."""


class NotANervFileError(FormatError):
    pass


class VersionError(FormatError):
    pass


class CorruptStreamError(FormatError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
