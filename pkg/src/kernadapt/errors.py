"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid arguments, shapes, or file contents."""


class NumericalError(ArithmeticError):
    """A factorization, quadrature, or optimization could not produce a result."""
