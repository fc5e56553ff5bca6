"""Exception types shared across the package."""


class InputDomainError(ValueError):
    """An argument violates an operation's precondition."""


class SingularPotentialError(ArithmeticError):
    """A pair of bodies is too close for the potential to be evaluated."""

    def __init__(self, pair: tuple[int, int], separation: float):
        self.pair = pair
        self.separation = separation
        super().__init__(f"singular potential: bodies {pair} at separation {separation:.3g}")


class CollisionObstructionError(RuntimeError):
    """No collision-free path could be found between two configurations."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested accuracy."""


class BoundUnavailableError(RuntimeError):
    """An analytic bound does not apply to the given input."""
