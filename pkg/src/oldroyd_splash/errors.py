"""Exception hierarchy shared across the package."""


class SplashError(Exception):
    """Base class for all package errors."""


class ParamError(SplashError, ValueError):
    """A parameter violates its documented invariant."""

    def __init__(self, message, pointer=None):
        self.pointer = pointer
        if pointer:
            message = f"{pointer}: {message}"
        super().__init__(message)


class ConfigError(SplashError, ValueError):
    """A scenario document is missing or does not follow the schema."""

    def __init__(self, message, pointer=None):
        self.pointer = pointer
        if pointer:
            message = f"{pointer}: {message}"
        super().__init__(message)


class GeometryError(SplashError, ValueError):
    pass


class OutOfDomain(SplashError, ValueError):
    pass


class BranchCutError(SplashError, ValueError):
    pass


class SingularJacobian(SplashError, ArithmeticError):
    pass


class MeshFoldError(SplashError, ArithmeticError):
    pass


class SolverError(SplashError, RuntimeError):
    def __init__(self, message, condition=None):
        self.condition = condition
        if condition is not None:
            message = f"{message} (condition estimate {condition:.3e})"
        super().__init__(message)


class CompatibilityError(SplashError, ValueError):
    pass


class ShapeError(SplashError, ValueError):
    pass


class PreconditionError(SplashError, ValueError):
    pass


class NoContraction(SplashError, RuntimeError):
    """Picard iteration failed to contract; ``report`` holds the ratios."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)
