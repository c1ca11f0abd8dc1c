"""Exception types shared across the package."""


class SctlabError(Exception):
    """Base class for errors raised by this package."""


class DiffeoViolation(SctlabError):
    """Coupling strength pushes the mean-field map out of the diffeomorphism regime."""


class NonConvergence(SctlabError):
    """An iteration failed to reach its tolerance within the allowed steps."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class ConeMembershipError(SctlabError):
    """Function fails the positivity or log-Lipschitz requirement of the cone."""


class SingularSystem(SctlabError):
    """The restricted response system is numerically singular."""


class Inadmissible(SctlabError):
    """Derivative-control constants cannot be closed at this coupling strength."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ConfigError(SctlabError):
    """Invalid experiment configuration; the message names the offending key."""
