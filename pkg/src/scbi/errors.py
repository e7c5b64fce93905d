"""Exception hierarchy. Every domain error is a ``ScbiError``."""


class ScbiError(ValueError):
    pass


class DegenerateVector(ScbiError):
    pass


class SupportMismatch(ScbiError):
    pass


class DimensionMismatch(ScbiError):
    pass


class InvalidMatrix(ScbiError):
    pass


class BoundaryPrior(ScbiError):
    """A prior with a zero entry where the computation divides by it."""


class NonConvergence(ScbiError):
    def __init__(self, message: str, final_error: float, iterations: int):
        super().__init__(message)
        self.final_error = final_error
        self.iterations = iterations


class TooManyAtoms(ScbiError):
    pass
