class CpsLabError(Exception):
    """Base class for toolkit errors."""


class ParameterError(CpsLabError, ValueError):
    pass


class ConfigurationError(CpsLabError):
    pass


class NumericalError(CpsLabError, ArithmeticError):
    pass


class ContractError(CpsLabError):
    """Inputs that do not belong together (e.g. a ladder from another path)."""


class SpecViolation(CpsLabError):
    pass


class DegenerateEnsembleError(CpsLabError):
    pass
