"""Exception hierarchy shared by all modules."""


class LcfError(Exception):
    """Base class for errors raised by lcfpof."""


class ValidationError(LcfError, ValueError):
    """Input data violates a documented invariant."""


class ModelFormatError(ValidationError):
    """Malformed model, material, specimen or config file."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class NonManifoldError(ValidationError):
    """A face key is shared by more than two elements."""


class DegenerateFaceError(ValidationError):
    """Quadrature hit a collapsed or inverted face."""


class ComputationError(LcfError, RuntimeError):
    """A numerical procedure could not produce a valid result."""


class OutOfRangeError(ComputationError):
    """Strain amplitude outside the strain window spanned by [N_min, N_max]."""


class ConvergenceError(ComputationError):
    """An iterative solver or optimizer failed to converge."""

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics or {}
