"""Exception hierarchy shared by every module.

Each error carries enough context to be mapped to a CLI exit code: config
problems exit with 2, simulation problems with 3, I/O problems with 4.
"""

from __future__ import annotations


class DistRLError(Exception):
    """Base class for all errors raised by the package."""

    exit_code = 3


class DimensionMismatch(DistRLError, ValueError):
    pass


class RankDeficient(DistRLError, ValueError):
    """A design matrix does not have full column rank.

    ``arm`` and ``machine`` are filled in by callers that know which local
    problem failed.
    """

    def __init__(self, message: str, *, arm: int | None = None, machine: int | None = None):
        self.detail = message
        self.arm = arm
        self.machine = machine
        parts = [message]
        if arm is not None:
            parts.append(f"(arm {arm})")
        if machine is not None:
            parts.append(f"(machine {machine})")
        super().__init__(" ".join(parts))

    def with_machine(self, machine: int) -> "RankDeficient":
        return RankDeficient(self.detail, arm=self.arm, machine=machine)


class NotSymmetric(DistRLError, ValueError):
    pass


class NotADistribution(DistRLError, ValueError):
    pass


class InvalidQuantizer(DistRLError, ValueError):
    pass


class NotDivisible(DistRLError, ValueError):
    pass


class BadLambda(DistRLError, ValueError):
    pass


class BadDims(DistRLError, ValueError):
    pass


class DeltaTooLarge(DistRLError, ValueError):
    pass


class GammaTooLarge(DistRLError, ValueError):
    pass


class ZeroVector(DistRLError, ValueError):
    pass


class UnvisitedState(DistRLError, ValueError):
    pass


class BadParams(DistRLError, ValueError):
    exit_code = 2


class BadAxis(DistRLError, ValueError):
    exit_code = 2


class BudgetTooSmall(DistRLError, ValueError):
    pass


class MachineError(DistRLError):
    """A local estimator failed on one machine; wraps the original error."""

    def __init__(self, machine: int, cause: Exception):
        self.machine = machine
        self.cause = cause
        super().__init__(f"machine {machine}: {cause}")


class ConfigSyntaxError(DistRLError):
    exit_code = 2

    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"{message} (line {line}, column {column})")


class ConfigValidationError(DistRLError):
    """All validation problems found in a config, not just the first."""

    exit_code = 2

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        lines = [f"{path}: {msg}" for path, msg in errors]
        super().__init__("invalid config:\n  " + "\n  ".join(lines))
