"""Exception types shared across the package."""


class MeppFlowError(Exception):
    """Base class for all package errors."""


class GridMismatchError(MeppFlowError):
    """Operands live on different grids."""


class DomainError(MeppFlowError):
    """A state or parameter violates an operation's admissibility domain
    (nonpositive density under a logarithm, negative mobility, non-SPD
    resistivity block, ...). Carries the offending cell/face index when
    one exists."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class RangeError(MeppFlowError):
    """A vector lies outside the range of the metric operator (for example
    a conserved component with nonzero mean)."""


class StepRejected(MeppFlowError):
    """A time step produced an inadmissible state. Carries the offending
    cell so the caller can decide whether to halve the step."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class ModelError(MeppFlowError):
    """Structured diagnostic from the model-file parser or validator."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            loc = f"line {line}" + (f", col {col}" if col is not None else "")
            message = f"{loc}: {message}"
        super().__init__(message)
