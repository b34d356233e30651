"""Exception hierarchy.

Every failure raised by the library derives from :class:`SkafError`. The
CLI maps the three broad families (configuration, data, numeric) onto
distinct exit codes.
"""


class SkafError(Exception):
    """Base class for all library errors."""


class ConfigError(SkafError, ValueError):
    """Invalid configuration or parameter value."""


class DataError(SkafError, ValueError):
    """Malformed or inconsistent input data."""


class NumericError(SkafError, ArithmeticError):
    """A numerical procedure failed."""


class DimensionMismatch(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class EmptyStream(DataError):
    pass


class FormatError(DataError):
    """A binary file has the wrong magic, version, size or checksum."""


class DegenerateSample(DataError):
    pass


class DegenerateTruth(DataError):
    pass


class ZeroSpectrum(NumericError):
    pass


class ProblemTooLargeForNaive(ConfigError):
    def __init__(self, n, limit):
        super().__init__(
            f"naive KAF would form a {n}x{n} kernel matrix; limit is n <= {limit}"
        )
        self.n = n
        self.limit = limit


class SVDConvergenceFailure(NumericError):
    def __init__(self, shape, detail):
        super().__init__(f"SVD of a {shape[0]}x{shape[1]} matrix did not converge: {detail}")
        self.shape = shape
        self.detail = detail


class PositiveDefinitenessFailure(NumericError):
    """Cholesky met a pivot that is not safely positive.

    ``pivot`` is the zero-based index of the offending diagonal position.
    """

    def __init__(self, pivot, value=None):
        msg = f"non-positive pivot at index {pivot}"
        if value is not None:
            msg += f" (value {value:.3e})"
        super().__init__(msg)
        self.pivot = pivot
        self.value = value


class SingularTriangularFailure(NumericError):
    def __init__(self, index, value):
        super().__init__(f"triangular factor has near-zero diagonal {value:.3e} at index {index}")
        self.index = index
        self.value = value


class NystromFailure(NumericError):
    def __init__(self, shifts, pivot):
        super().__init__(
            "randomized Nystrom Cholesky failed for every shift tried "
            f"({', '.join(f'{v:.3e}' for v in shifts)}); last bad pivot {pivot}"
        )
        self.shifts = list(shifts)
        self.pivot = pivot


class BlowUp(NumericError):
    """Integration produced a non-finite state."""

    def __init__(self, step, state):
        super().__init__(f"non-finite state after step {step}")
        self.step = step
        self.state = state
