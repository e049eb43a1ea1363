"""Exception hierarchy shared by all modules.

Usage errors (bad input text, bad config) derive from ``UsageError``; anything
raised while computing derives from ``NumericalError``.  The CLI maps the two
families to exit codes 1 and 2.
"""

from __future__ import annotations


class GeophaseError(Exception):
    """Root of the package's exceptions."""

    code = "error"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class UsageError(GeophaseError, ValueError):
    code = "usage_error"


class NumericalError(GeophaseError, ArithmeticError):
    code = "numerical_error"


# --- expressions -----------------------------------------------------------

class ParseError(UsageError):
    code = "parse_error"

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at offset {position}")
        self.position = position

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["position"] = self.position
        return d


class UnknownFunctionError(ParseError):
    code = "unknown_function"


class EvaluationError(NumericalError):
    code = "evaluation_error"


class UnboundParameterError(EvaluationError):
    code = "unbound_parameter"


class DomainError(EvaluationError):
    code = "domain_error"


class NonDifferentiableError(EvaluationError):
    code = "non_differentiable"


# --- models / config -------------------------------------------------------

class ModelError(UsageError):
    code = "model_error"


class ConfigError(UsageError):
    code = "config_error"

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer}: {message}" if pointer else message)
        self.pointer = pointer

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["pointer"] = self.pointer
        return d


# --- geometry --------------------------------------------------------------

class OnStringError(NumericalError):
    """Point lies in the numerical band around a Dirac string (gauge singularity)."""

    code = "on_string"


class DegeneracyError(NumericalError):
    """Point lies on (or numerically at) the degeneracy set ||e|| = 0."""

    code = "at_degeneracy"


class LoopTouchesStringError(NumericalError):
    code = "loop_touches_string"


class QuadratureError(NumericalError):
    code = "tolerance_not_reached"


class AmbiguousHemisphereError(NumericalError):
    code = "ambiguous_hemisphere"


class WindingError(NumericalError):
    code = "winding_error"


class MethodError(NumericalError):
    """Wraps a failure with the name of the charge method that raised it."""

    code = "method_failure"

    def __init__(self, method: str, cause: GeophaseError):
        super().__init__(f"{method}: {cause}")
        self.method = method
        self.cause = cause

    def to_dict(self) -> dict:
        d = self.cause.to_dict()
        d["method"] = self.method
        d["message"] = str(self)
        return d
