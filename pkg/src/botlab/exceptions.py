"""Exception hierarchy shared by all modules."""


class BotlabError(Exception):
    """Base class; the CLI turns these into a machine-readable error line."""

    code = "error"


class ConfigurationError(BotlabError, ValueError):
    code = "configuration"


class SingularGeometryError(BotlabError, ArithmeticError):
    """Target position coincides with the observer position."""

    code = "singular_geometry"


class ObservabilityError(BotlabError, ArithmeticError):
    """Regression information matrix is numerically singular."""

    code = "observability"

    def __init__(self, message, condition_number=float("inf")):
        super().__init__(message)
        self.condition_number = condition_number
