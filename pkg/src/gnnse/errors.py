"""Exception types raised across the package."""


class ParseError(ValueError):
    """Malformed network, placement or dataset text."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ValueError):
    """Structurally invalid network (dangling references, islands, ...)."""


class DivergenceError(RuntimeError):
    """Newton-Raphson power flow did not reach the tolerance."""

    def __init__(self, message, mismatch, iterations):
        self.mismatch = mismatch
        self.iterations = iterations
        super().__init__(f"{message} (max mismatch {mismatch:.3e} after {iterations} iterations)")


class SingularityError(ArithmeticError):
    """Singular system: unobservable WLS problem or singular power flow Jacobian."""

    def __init__(self, message, rank=None, expected=None):
        self.rank = rank
        self.expected = expected
        if rank is not None:
            message = f"{message} (rank {rank} of {expected})"
        super().__init__(message)


class NumericError(FloatingPointError):
    """Non-finite loss or gradient during training."""

    def __init__(self, message, graph_index=None):
        self.graph_index = graph_index
        if graph_index is not None:
            message = f"{message} (graph {graph_index})"
        super().__init__(message)
