"""Exception hierarchy shared by the simulator, the analysis code and the CLI."""


class StabilityLabError(Exception):
    """Base class for all package errors."""


class InvalidParameter(StabilityLabError, ValueError):
    pass


class FluxOutOfRange(StabilityLabError, ValueError):
    pass


class GridUnreachable(StabilityLabError, ValueError):
    pass


class DegenerateMap(StabilityLabError, ValueError):
    pass


class DimensionMismatch(StabilityLabError, ValueError):
    pass


class InsufficientReplicas(StabilityLabError, ValueError):
    pass


class DegenerateCalibration(StabilityLabError, ValueError):
    pass


class InsufficientPoints(StabilityLabError, ValueError):
    pass


class ConvergenceFailure(StabilityLabError, RuntimeError):
    """A nonlinear fit did not converge.

    ``nfev`` and ``message`` carry the optimizer diagnostics when available.
    """

    def __init__(self, message, nfev=None):
        super().__init__(message)
        self.nfev = nfev


class NonPositiveT1(StabilityLabError, ValueError):
    pass


class EmptySession(StabilityLabError, ValueError):
    pass


class InsufficientSpan(StabilityLabError, ValueError):
    pass


class ConfigError(StabilityLabError, ValueError):
    """Malformed configuration document.

    ``path`` is the dotted key path, ``line`` the 1-based source line if known.
    """

    def __init__(self, message, path="", line=None):
        self.path = path
        self.line = line
        where = path or "<root>"
        if line is not None:
            where = f"line {line}: {where}"
        super().__init__(f"{where}: {message}")


class FileFormatError(StabilityLabError, ValueError):
    pass
