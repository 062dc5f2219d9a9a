# -*- coding: utf-8 -*-
"""Error types raised by the library and the exit codes the CLI maps them to. See README.md."""

from typing import Any, Dict, Optional, Tuple

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2


class SmctrlError(Exception):
    """Base class for every error raised by smctrl."""

    exit_code = EXIT_VALIDATION
    category = "error"

    def to_dict(self) -> Dict[str, Any]:
        return {"category": self.category, "message": str(self)}


class InvalidModelError(SmctrlError):
    """A model or problem document failed validation at `path`."""

    category = "validation"

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)

    def to_dict(self) -> Dict[str, Any]:
        return {"category": self.category, "path": self.path, "message": self.message}


class DomainError(SmctrlError, ValueError):
    """Argument outside the domain of an operation (unknown state, time out of range, off-grid)."""

    category = "domain"


class ConfigurationError(SmctrlError, ValueError):
    """Inconsistent numeric configuration (dt not dividing T, beta too small, empty action set)."""

    category = "configuration"


class ContractViolationError(SmctrlError):
    """A user-supplied function broke its declared contract."""

    category = "contract"


class NumericalError(SmctrlError, ArithmeticError):
    """Non-finite value produced while stepping; `location` is the (i, x, j) grid node."""

    exit_code = EXIT_NUMERICAL
    category = "numerical"

    def __init__(self, message: str, location: Optional[Tuple[int, int, int]] = None):
        self.location = location
        super().__init__(message if location is None else f"{message} at node {location}")

    def to_dict(self) -> Dict[str, Any]:
        result = super().to_dict()
        if self.location is not None:
            result["location"] = list(self.location)
        return result


class NonConvergenceError(NumericalError):
    """Picard iteration hit max_iter before the distance fell below tol."""

    category = "non_convergence"

    def __init__(self, final_distance: float, iterations: int):
        self.final_distance = final_distance
        self.iterations = iterations
        super().__init__(
            f"no convergence after {iterations} iterations (last distance {final_distance:.3e})"
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "category": self.category,
            "message": str(self),
            "final_distance": self.final_distance,
            "iterations": self.iterations,
        }


class QuadratureError(NumericalError):
    """Adaptive quadrature could not reach the requested tolerance."""

    category = "quadrature"

    def __init__(self, achieved: float, requested: float, detail: Optional[str] = None):
        self.achieved = achieved
        self.requested = requested
        self.detail = detail
        message = f"quadrature error estimate {achieved:.3e} against tolerance {requested:.1e}"
        super().__init__(message if detail is None else f"{message}: {detail}")
