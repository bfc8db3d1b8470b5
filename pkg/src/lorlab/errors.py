"""Exception types shared across lorlab."""


class LorlabError(Exception):
    """Base class for all lorlab errors."""


class UsageError(LorlabError, ValueError):
    """Bad arguments: mismatched dimensions, unknown names, invalid config."""


class DomainError(LorlabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SignatureError(LorlabError):
    """A metric failed the Lorentzian signature check."""


class ConditioningWarning(UserWarning):
    """Result is finite but numerically ill-conditioned (e.g. near the light cone)."""


class TruncationWarning(UserWarning):
    """Part of a requested parameter range fell outside the chart and was dropped."""
