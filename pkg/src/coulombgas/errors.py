"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class CollisionError(DomainError):
    """Two particles of a configuration coincide.

    Attributes
    ----------
    pair:
        Indices ``(i, j)`` of the first coincident pair found.
    """

    def __init__(self, i: int, j: int, message: str | None = None):
        self.pair = (int(i), int(j))
        super().__init__(message or f"particles {i} and {j} coincide")


class SimulationBlowup(RuntimeError):
    """The integrator produced a non-finite state."""


class ConditioningWarning(RuntimeWarning):
    """A quantity that is nonnegative in exact arithmetic came out negative."""
