"""Exception types raised across the package."""


class ReconstructionError(Exception):
    """Base class for all package errors."""


class BehindCameraError(ReconstructionError, ValueError):
    """A point lies at or behind the camera plane."""


class UndistortionError(ReconstructionError, ArithmeticError):
    """Fixed-point inversion of the radial distortion failed to converge."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class InsufficientViewsError(ReconstructionError, ValueError):
    pass


class DegenerateGeometryError(ReconstructionError, ArithmeticError):
    pass


class EmptyInputError(ReconstructionError, ValueError):
    pass


class UndefinedLossError(ReconstructionError, ValueError):
    pass


class NonFiniteLossError(ReconstructionError, ArithmeticError):
    pass


class DivergenceError(ReconstructionError, ArithmeticError):
    def __init__(self, step, value):
        super().__init__(f"loss became non-finite ({value}) at step {step}")
        self.step = step
        self.value = value


class InsufficientDataError(ReconstructionError, ValueError):
    pass


class NoCandidatesError(ReconstructionError, ValueError):
    pass


class ValidationError(ReconstructionError, ValueError):
    """Malformed input file or configuration."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line
