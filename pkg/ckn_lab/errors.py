"""Exception types shared across the laboratory.

Every error carries a stable machine ``code`` next to its human message so the
CLI can map failures to exit codes without string matching.
"""

from __future__ import annotations

from typing import Any


class LabError(Exception):
    """Base error for all ckn-lab failures."""

    code = "lab_error"

    def __init__(self, message: str, code: str = ""):
        super().__init__(message)
        if code:
            self.code = code


class RejectedInputError(LabError, ValueError):
    """Input lattices, grids or sample sets that cannot be processed."""

    code = "rejected_input"


class ExponentConditionError(RejectedInputError):
    """Weighted interpolation exponents violate one of the admissibility conditions."""

    code = "exponent_condition"

    def __init__(self, message: str, condition: str):
        super().__init__(f"condition {condition} failed: {message}")
        self.condition = condition


class PreconditionError(LabError, ValueError):
    """An operation was called on data violating its documented precondition."""

    code = "precondition"


class RangeError(LabError, ValueError):
    """Times or cylinders outside the trajectory range or the box."""

    code = "range"


class OracleTooLargeError(LabError):
    """The brute-force pressure oracle refuses grids above its cap."""

    code = "oracle_too_large"

    def __init__(self, n_per_axis: int, cap: int):
        super().__init__(
            f"pressure oracle is capped at n_per_axis <= {cap}, got {n_per_axis}"
        )
        self.n_per_axis = n_per_axis
        self.cap = cap


class SnapshotFormatError(LabError):
    """Malformed snapshot file."""

    code = "snapshot_format"

    def __init__(
        self,
        message: str,
        *,
        offset: int,
        expected: int | None = None,
        actual: int | None = None,
    ):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
        self.expected = expected
        self.actual = actual


class SolverError(LabError):
    """Base class for time-stepping failures.

    ``partial`` holds the trajectory integrated before the failure, if any.
    """

    code = "solver"

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


class StepRejectedError(SolverError):
    """The CFL check failed before a step."""

    code = "step_rejected"

    def __init__(self, message: str, max_speed: float, partial: Any = None):
        super().__init__(message, partial)
        self.max_speed = max_speed


class BlowUpError(SolverError):
    """Non-finite values appeared in the integration state."""

    code = "blowup"

    def __init__(self, message: str, last_valid_time: float, partial: Any = None):
        super().__init__(message, partial)
        self.last_valid_time = last_valid_time


class ConfigError(LabError):
    """Invalid run configuration; the message names the offending key."""

    code = "config"

    def __init__(self, message: str, key: str = ""):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key
