#!/usr/bin/env python3
"""
Error types for the Gaussian proper agnostic learner
Each pipeline stage raises one of these so the CLI can map failures to exit codes
"""

from typing import Any, Optional


class LearnerError(Exception):
    """Base class for all learner failures"""

    exit_code = 1

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.stage = stage
        self.partial_report: Optional[Any] = None


class InputError(LearnerError, ValueError):
    """Bad parameters, dimension mismatches and guarded requests"""

    exit_code = 4


class DatasetParseError(InputError):
    """Malformed dataset file"""

    def __init__(self, message: str, line_number: Optional[int] = None, stage: Optional[str] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message, stage=stage)
        self.line_number = line_number


class ResourceBudgetError(LearnerError):
    """An enumeration or iteration budget would be exceeded"""

    exit_code = 3

    def __init__(self, message: str, best_so_far: Any = None, stage: Optional[str] = None):
        super().__init__(message, stage=stage)
        self.best_so_far = best_so_far


class CertificationError(LearnerError):
    """Solver could not certify the requested tolerance within its budget"""

    exit_code = 3

    def __init__(self, message: str, result: Any = None, stage: Optional[str] = None):
        super().__init__(message, stage=stage)
        self.result = result


class GuaranteeError(LearnerError, AssertionError):
    """A run-time invariant failed (dimension bound, PSD input, guarantee check)"""

    exit_code = 2
