"""Exception hierarchy shared by all spdpool modules."""


class SpdPoolError(Exception):
    pass


class InputError(SpdPoolError, ValueError):
    """Malformed input: wrong shape, non-finite entries, bad labels."""


class DomainError(SpdPoolError, ValueError):
    """Input outside the domain of a matrix function (e.g. log of a singular matrix)."""


class ConfigurationError(SpdPoolError, ValueError):
    pass


class NumericalError(SpdPoolError, ArithmeticError):
    """A numerical procedure failed (no convergence, singular intermediate, NaN)."""


class SingularError(NumericalError):
    pass


class PreconditionError(NumericalError):
    pass


class TrainingDiverged(NumericalError):
    def __init__(self, epoch, loss):
        super().__init__(f"training diverged at epoch {epoch}: loss = {loss}")
        self.epoch = epoch
        self.loss = loss
