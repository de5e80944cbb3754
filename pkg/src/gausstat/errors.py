class GaussStatError(Exception):
    """Base class for errors raised by this package."""


class ZeroMomentum(GaussStatError):
    pass


class InfeasibleEnergy(GaussStatError):
    pass


class MaxReflections(GaussStatError):
    pass


class PackingFailure(GaussStatError):
    pass


class DegenerateFrame(GaussStatError):
    pass


class TooShort(GaussStatError):
    pass


class TransientNotEnded(GaussStatError):
    pass


class ParseError(GaussStatError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ValidationError(GaussStatError):
    pass
