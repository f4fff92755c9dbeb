# src/utils/Errors.py
"""
Error hierarchy of the potflow package.

Every error carries a human readable ``detail`` and the process ``exit_code``
the command-line handlers return when the error escapes a command.
"""
from typing import Any, Optional


class PotflowError(Exception):
    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code


# --- Geometry ---
class GeometryError(PotflowError):
    pass


class UnboundedDomain(GeometryError):
    pass


class EmptyDomain(GeometryError):
    pass


class OpenLoop(GeometryError):
    pass


class DegenerateCell(GeometryError):
    pass


class NumericallyUnstableProjection(GeometryError):
    pass


class EvaluationFailed(GeometryError):
    pass


# --- Solver ---
class SolverError(PotflowError):
    pass


class InitFailure(SolverError):
    pass


class DampingStall(SolverError):
    pass


class OtNonConvergence(SolverError):
    exit_code = 3

    def __init__(self, detail: str, state: Any = None):
        super().__init__(detail)
        self.state = state


# --- Renderer ---
class RenderError(PotflowError):
    pass


class TraversalLoop(RenderError):
    pass


class RejectionStall(RenderError):
    pass


# --- I/O ---
class ConfigError(PotflowError):
    exit_code = 2


class FrameError(PotflowError):
    pass


class MagicError(FrameError):
    pass


class VersionError(FrameError):
    pass


class CrcError(FrameError):
    pass


class ValidationFailure(PotflowError):
    exit_code = 4
