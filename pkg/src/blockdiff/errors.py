"""Shared exception types.

Exit-code mapping in the CLI: ContractViolation and ParseError are user
errors (exit 1), NumericFault is a numeric fault (exit 2).
"""


class ContractViolation(ValueError):
    """An argument or state violates a documented precondition or invariant."""


class ShapeMismatch(ContractViolation):
    """Operand shapes do not conform; the message names both shapes."""


class NumericFault(ArithmeticError):
    """A numeric operation produced NaN/Inf or failed to converge."""


class ParseError(ValueError):
    """A file could not be parsed; the message names the offending line."""
