"""Exception types raised across the package."""


class KpcaAttnError(Exception):
    """Base class for all errors raised by kpca_attn."""


class ShapeError(KpcaAttnError, ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(KpcaAttnError, ValueError):
    """A matrix holds NaN or Inf entries."""


class AsymmetryError(KpcaAttnError, ValueError):
    """A matrix that must be symmetric is not."""

    def __init__(self, max_deviation):
        self.max_deviation = float(max_deviation)
        super().__init__(
            f"matrix is not symmetric: max |a_ij - a_ji| = {self.max_deviation:.3e}"
        )


class ConvergenceError(KpcaAttnError, RuntimeError):
    """An iterative routine stopped without converging."""

    def __init__(self, message, iterations=None):
        self.iterations = iterations
        super().__init__(message)


class DegenerateScalingError(KpcaAttnError, ValueError):
    """A normalizer (g-scaling, l1 norm) vanished or went negative."""


class InsufficientEigenpairsError(KpcaAttnError, ValueError):
    """Fewer usable eigenpairs than requested components."""

    def __init__(self, requested, usable):
        self.requested = int(requested)
        self.usable = int(usable)
        super().__init__(
            f"requested {self.requested} components but only {self.usable} "
            "eigenvalues lie above the floor"
        )


class MatrixFormatError(KpcaAttnError, ValueError):
    """A matrix CSV file could not be parsed."""

    def __init__(self, path, line, reason):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {reason}")
