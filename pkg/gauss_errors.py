class GaussKitError(Exception):
    """Base class for every error raised by the kit."""


class DiskDomainError(GaussKitError, ValueError):
    pass


class ConstructionError(GaussKitError):
    pass


class ConfigError(GaussKitError, ValueError):
    pass


class MeshMismatchError(GaussKitError):
    pass


class MissingInputError(GaussKitError):
    pass


class FoldProximityError(GaussKitError):
    """Raised when the Newton matrix is numerically singular."""

    def __init__(self, t, message=None):
        self.t = t
        super().__init__(
            message
            or f"Linearized operator singular near t={t:.8g}; "
            f"switch to arclength continuation"
        )


class ContinuationAbort(GaussKitError):
    """Continuation gave up; the partial branch travels with the error."""

    def __init__(self, message, branch):
        self.branch = branch
        super().__init__(message)


class MountainPassError(GaussKitError):
    pass
